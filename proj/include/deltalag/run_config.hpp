#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deltalag/marketdata.hpp"
#include "deltalag/model.hpp"
#include "deltalag/statbaselines.hpp"
#include "deltalag/synthetic.hpp"
#include "deltalag/training.hpp"

namespace deltalag {

// Split boundaries either as dates or as label-day counts.
struct SplitSpec {
  std::optional<Date> train_end;
  std::optional<Date> val_end;
  std::optional<std::size_t> train_days;
  std::optional<std::size_t> val_days;
};

struct EvalConfig {
  std::size_t graph_window = kGraphWindow;
  std::size_t graph_refresh = kGraphRefresh;
  std::size_t graph_lag_max = 10;
  std::optional<Date> freeze_graph_at;
};

struct Seeds {
  std::uint64_t data = 0;
  std::uint64_t init = 0;
  std::uint64_t shuffle = 0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  Seeds seeds;
  std::vector<std::string> data_paths;
  std::optional<SyntheticSpec> synthetic;
  FeatureMode features = FeatureMode::kFull;
  SplitSpec split;
  ModelConfig model;
  std::string variant = "deltalag";  // model variant or corrgraph-lag1 / corrgraph-lagall
  LossKind loss = LossKind::kMonotonic;
  TrainConfig train;
  EvalConfig eval;
  std::string output_dir = "out";
};

// Named sub-seed derived from the master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Parses and validates; unknown keys are rejected. Missing sub-seeds are derived.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
// Every field materialized.
nlohmann::ordered_json to_json(const RunConfig& cfg);
void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& path);

// Sets a new master seed and re-derives every sub-seed, including the synthetic one.
void override_seed(RunConfig& cfg, std::uint64_t seed);
void override_variant(RunConfig& cfg, const std::string& variant);

// Model variant and graph mode implied by `cfg.variant`.
Variant model_variant(const std::string& variant);
std::optional<GraphMode> graph_mode(const std::string& variant);

struct PreparedData {
  FeaturePanel panel;  // normalized
  Splits splits;
  std::optional<GroundTruth> truth;
  std::optional<SyntheticMarket> market;
  std::vector<std::size_t> invalid_days;
};

// Loads or generates bars, computes and normalizes features, and resolves splits.
PreparedData prepare_data(const RunConfig& cfg);
Splits resolve_splits(const RunConfig& cfg, const FeaturePanel& panel);

}  // namespace deltalag
