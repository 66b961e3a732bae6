#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "deltalag/losses.hpp"
#include "deltalag/marketdata.hpp"
#include "deltalag/model.hpp"
#include "deltalag/params.hpp"
#include "deltalag/statbaselines.hpp"

namespace deltalag {

struct TrainConfig {
  std::size_t epochs = 100;
  AdamConfig adam;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  LossKind loss = LossKind::kMonotonic;
  bool shuffle = true;
  LossOptions loss_options;
};

void validate(const TrainConfig& cfg);

// Tracks the best validation score; `update` returns true once `patience`
// consecutive epochs have failed to improve on it.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}
  bool update(double score);
  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t since_best_ = 0;
  bool improved_ = false;
  bool first_ = true;
  double best_ = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_ic = 0.0;    // NaN when no validation date had a defined IC
  bool is_best = false;
  std::size_t train_dates = 0;
  std::size_t skipped_dates = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based, 0 when none
};

// Source of frozen assignments for the correlation-graph baselines.
struct GraphSource {
  GraphSchedule* schedule = nullptr;
  GraphMode mode = GraphMode::kLagAll;
};

struct TrainHooks {
  // Called with every forecast date passed to the model.
  std::function<void(std::size_t)> on_forward;
  // Called after each epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ParamSet params;  // parameters of the best epoch
  TrainHistory history;
};

// Mean daily IC of the model over the forecast dates of `range`; NaN when undefined.
double mean_ic(const ModelConfig& model, ParamSet& params, const FeaturePanel& panel, const DateRange& range,
               const GraphSource& graph = {}, const TrainHooks& hooks = {});

TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const FeaturePanel& panel, const Splits& splits,
                  ParamSet initial, const GraphSource& graph = {}, const TrainHooks& hooks = {});

// Forward pass for one date, routed through the graph source when the variant needs it.
CrossSection run_forward(Tape& tape, const ModelConfig& model, ParamSet& params, const FeaturePanel& panel,
                         std::size_t t, const GraphSource& graph);

// CSV `epoch,train_loss,val_ic,is_best`.
void write_history(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace deltalag
