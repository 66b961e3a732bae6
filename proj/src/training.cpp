#include "deltalag/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "deltalag/errors.hpp"
#include "deltalag/evaluation.hpp"
#include "deltalag/format.hpp"

namespace deltalag {

void validate(const TrainConfig& cfg) {
  if (cfg.patience < 1) throw ConfigError("train: patience must be at least 1");
  if (!(cfg.adam.lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be at least 1");
  if (!(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0 && cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0)) {
    throw ConfigError("train: adam betas must lie in [0, 1)");
  }
  if (!(cfg.adam.eps > 0.0)) throw ConfigError("train: adam eps must be positive");
}

bool EarlyStopper::update(double score) {
  if (std::isnan(score)) score = -std::numeric_limits<double>::infinity();
  improved_ = first_ || score > best_;
  first_ = false;
  if (improved_) {
    best_ = score;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

CrossSection run_forward(Tape& tape, const ModelConfig& model, ParamSet& params, const FeaturePanel& panel,
                         std::size_t t, const GraphSource& graph) {
  if (model.variant == Variant::kFrozenGraph) {
    if (!graph.schedule) throw ConfigError("correlation-graph variant needs a graph schedule");
    const AssignmentMap assignments = graph.schedule->assignments_for(t, model.k, graph.mode);
    return predict_from_graph(tape, model, params, panel, t, assignments);
  }
  return forward_cross_section(tape, model, params, panel, t);
}

double mean_ic(const ModelConfig& model, ParamSet& params, const FeaturePanel& panel, const DateRange& range,
               const GraphSource& graph, const TrainHooks& hooks) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t : Splits::forecast_dates(range)) {
    if (hooks.on_forward) hooks.on_forward(t);
    Tape tape(false);
    CrossSection cs = run_forward(tape, model, params, panel, t, graph);
    if (cs.targets.size() < 2) continue;
    const auto ic = daily_ic(cs.predictions.value().values(), cs.labels.values());
    if (!ic) continue;
    sum += *ic;
    ++count;
  }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const FeaturePanel& panel, const Splits& splits,
                  ParamSet initial, const GraphSource& graph, const TrainHooks& hooks) {
  validate(cfg);
  validate(model, panel.stocks());
  check_params(model, initial);
  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 pair_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  TrainResult result{initial, {}};
  ParamSet params = std::move(initial);
  AdamState adam(cfg.adam);
  std::vector<std::size_t> dates = Splits::forecast_dates(splits.train);
  if (dates.empty()) throw TrainingError("no training dates");

  EarlyStopper stopper(cfg.patience);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(dates.begin(), dates.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    for (std::size_t t : dates) {
      if (hooks.on_forward) hooks.on_forward(t);
      Tape tape(true);
      CrossSection cs = run_forward(tape, model, params, panel, t, graph);
      if (cs.targets.size() < 2) {
        ++rec.skipped_dates;
        continue;
      }
      auto loss = cross_section_loss(cfg.loss, cs.predictions, cs.labels, cfg.loss_options, &pair_rng);
      if (!loss) {
        ++rec.skipped_dates;
        continue;
      }
      const double value = loss->value().item();
      if (!std::isfinite(value)) throw TrainingError("non-finite loss on date " + panel.dates()[t].iso());
      tape.backward(*loss);
      adam_step(params, adam);
      loss_sum += value;
      ++rec.train_dates;
    }
    if (rec.train_dates == 0) {
      throw TrainingError("every training date was skipped (" + std::to_string(rec.skipped_dates) +
                          " dates lacked two valid targets or a defined loss)");
    }
    rec.train_loss = loss_sum / static_cast<double>(rec.train_dates);
    rec.val_ic = mean_ic(model, params, panel, splits.validation, graph, hooks);
    const bool stop = stopper.update(rec.val_ic);
    if (stopper.improved()) {
      rec.is_best = true;
      result.params = params;
      result.history.best_epoch = epoch;
      for (EpochRecord& e : result.history.epochs) e.is_best = false;
    }
    result.history.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (stop) break;
  }
  result.params.zero_grad();
  return result;
}

void write_history(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "epoch,train_loss,val_ic,is_best\n";
  for (const EpochRecord& e : history.epochs) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_ic) << ','
        << (e.is_best ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace deltalag
