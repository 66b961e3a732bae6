#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "deltalag/errors.hpp"
#include "deltalag/evaluation.hpp"
#include "deltalag/format.hpp"
#include "deltalag/model.hpp"
#include "deltalag/params.hpp"
#include "deltalag/report.hpp"
#include "deltalag/run_config.hpp"
#include "deltalag/statbaselines.hpp"
#include "deltalag/synthetic.hpp"
#include "deltalag/training.hpp"

namespace fs = std::filesystem;
using namespace deltalag;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

constexpr std::size_t kGradcheckMaxStocks = 10;
constexpr std::size_t kGradcheckMaxWindow = 12;
constexpr double kGradcheckTolerance = 1e-4;

struct Options {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::string fault = "none";
  std::string assignments;
};

RunConfig load(const Options& o) {
  RunConfig cfg = load_run_config(o.config);
  if (o.seed) override_seed(cfg, *o.seed);
  if (!o.variant.empty()) override_variant(cfg, o.variant);
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
  return dir;
}

std::optional<GraphSchedule> make_schedule(const RunConfig& cfg, const FeaturePanel& panel) {
  if (!graph_mode(cfg.variant)) return std::nullopt;
  std::optional<std::size_t> freeze;
  if (cfg.eval.freeze_graph_at) {
    freeze = panel.date_index_at_or_before(*cfg.eval.freeze_graph_at);
    if (!freeze) throw ConfigError("freeze_graph_at precedes the data");
  }
  return GraphSchedule(panel, cfg.eval.graph_lag_max, cfg.eval.graph_window, cfg.eval.graph_refresh, freeze);
}

int cmd_gen_data(const Options& o) {
  RunConfig cfg = load(o);
  if (!cfg.synthetic) throw ConfigError("gen-data needs a 'synthetic' section");
  const SyntheticMarket m = generate_synthetic(*cfg.synthetic);
  const fs::path dir = output_dir(cfg);
  write_ohlcv(m.bars, dir / "ohlcv.csv");
  write_ground_truth(m.truth.regimes.front().map, dir / "ground_truth.csv");
  if (m.truth.regimes.size() > 1) write_ground_truth(m.truth.regimes[1].map, dir / "ground_truth_shift.csv");
  write_resolved_config(cfg, dir / "resolved_config.json");
  std::cout << "wrote " << m.tickers.size() << " tickers x " << m.dates.size() << " days to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_train(const Options& o) {
  RunConfig cfg = load(o);
  PreparedData data = prepare_data(cfg);
  validate(cfg.model, data.panel.stocks());
  const fs::path dir = output_dir(cfg);
  std::mt19937_64 init_rng(cfg.seeds.init);
  ParamSet params = init_params(cfg.model, init_rng);
  std::optional<GraphSchedule> schedule = make_schedule(cfg, data.panel);
  GraphSource graph;
  if (schedule) graph = {&*schedule, *graph_mode(cfg.variant)};
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " train_loss " << format_double(e.train_loss) << " val_ic "
              << format_double(e.val_ic) << (e.is_best ? " *" : "") << '\n';
  };
  TrainResult result = train(cfg.model, cfg.train, data.panel, data.splits, std::move(params), graph, hooks);
  save_checkpoint(result.params, dir / "checkpoint.bin");
  write_history(result.history, dir / "history.csv");
  write_resolved_config(cfg, dir / "resolved_config.json");
  if (schedule) write_graph_cache(schedule->cache(), data.panel, dir / "graph_cache.csv");
  std::cout << "best epoch " << result.history.best_epoch << " of " << result.history.epochs.size() << '\n';
  return kExitOk;
}

int cmd_backtest(const Options& o) {
  RunConfig cfg = load(o);
  PreparedData data = prepare_data(cfg);
  const fs::path dir = output_dir(cfg);
  const fs::path ckpt = o.checkpoint.empty() ? dir / "checkpoint.bin" : fs::path(o.checkpoint);
  if (!fs::exists(ckpt)) throw IoError("checkpoint '" + ckpt.string() + "' does not exist");
  std::mt19937_64 init_rng(cfg.seeds.init);
  ParamSet params = init_params(cfg.model, init_rng);
  try {
    load_checkpoint_into(params, ckpt);
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("checkpoint does not match the model config: ") + e.what());
  }
  std::optional<GraphSchedule> schedule = make_schedule(cfg, data.panel);
  GraphSource graph;
  if (schedule) graph = {&*schedule, *graph_mode(cfg.variant)};
  const BacktestReport report = run_backtest(cfg.model, params, data.panel, data.splits.test, graph,
                                             data.truth ? &*data.truth : nullptr);
  write_report(report, data.panel, dir);
  write_resolved_config(cfg, dir / "resolved_config.json");
  std::cout << "ic_mean " << format_double(report.ic_mean) << " ar " << format_double(report.ar) << " sr "
            << (report.sr ? format_double(*report.sr) : std::string("missing")) << '\n';
  return kExitOk;
}

int cmd_gradcheck(const Options& o) {
  RunConfig cfg = load(o);
  PreparedData data = prepare_data(cfg);
  if (data.panel.stocks() > kGradcheckMaxStocks || cfg.model.window > kGradcheckMaxWindow) {
    std::cerr << "gradcheck refuses configs beyond |S| <= " << kGradcheckMaxStocks << " and L <= "
              << kGradcheckMaxWindow << " (got |S| = " << data.panel.stocks() << ", L = " << cfg.model.window
              << ")\n";
    return kExitUsage;
  }
  if (o.fault == "tanh") {
    fault::inject(fault::Kind::kTanhAdjoint);
  } else if (o.fault == "matmul") {
    fault::inject(fault::Kind::kMatmulRhsAdjoint);
  } else if (o.fault != "none") {
    throw ConfigError("unknown fault '" + o.fault + "' (expected none, tanh or matmul)");
  }
  std::mt19937_64 init_rng(cfg.seeds.init);
  ParamSet params = init_params(cfg.model, init_rng);
  std::optional<GraphSchedule> schedule = make_schedule(cfg, data.panel);
  GraphSource graph;
  if (schedule) graph = {&*schedule, *graph_mode(cfg.variant)};

  // First training date with a usable cross-section; its selection is frozen.
  std::optional<std::size_t> date;
  AssignmentMap frozen, graph_assignments;
  for (std::size_t t : Splits::forecast_dates(data.splits.train)) {
    Tape probe(false);
    CrossSection cs = run_forward(probe, cfg.model, params, data.panel, t, graph);
    if (cs.targets.size() < 2) continue;
    date = t;
    for (const LeadLagAssignment& a : cs.assignments) frozen[a.target] = a;
    if (schedule) graph_assignments = schedule->assignments_for(t, cfg.model.k, graph.mode);
    break;
  }
  if (!date) throw DataError("gradcheck found no date with two valid targets");
  ForwardOptions options;
  if (uses_attention(cfg.model)) options.frozen_positions = &frozen;
  if (schedule) options.graph = &graph_assignments;
  const LossFn f = [&](Tape& tape, ParamSet& p) {
    CrossSection cs = forward_cross_section(tape, cfg.model, p, data.panel, *date, options);
    auto loss = cross_section_loss(cfg.loss, cs.predictions, cs.labels);
    if (!loss) throw DataError("loss undefined on the gradcheck date");
    return *loss;
  };
  const GradCheckResult r = grad_check(f, params);
  fault::inject(fault::Kind::kNone);
  const bool pass = r.max_rel_error <= kGradcheckTolerance;
  std::cout << "max_rel_error " << r.max_rel_error << " (" << r.worst_param << "[" << r.worst_index
            << "], analytic " << r.analytic << ", numeric " << r.numeric << ", " << r.checked
            << " entries) " << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitOk : kExitInternal;
}

int cmd_analyze(const Options& o) {
  const std::vector<AssignmentRecord> records = read_assignments(o.assignments);
  const fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  const auto hist = lag_histogram(records);
  const Concentration c = leader_concentration(records);
  write_lag_histogram(hist, dir / "lag_histogram.csv");
  write_concentration(c, dir / "concentration.csv");
  std::cout << "records " << records.size() << " mean_unique_leaders " << format_double(c.mean_unique)
            << " mean_unique_rank1_leaders " << format_double(c.mean_unique_rank1) << '\n';
  for (const auto& [lag, share] : hist) std::cout << "lag " << lag << " share " << format_double(share) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lead-lag detection and cross-sectional return ranking"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "run configuration (JSON)");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "master seed override");
  };
  auto* gen = app.add_subcommand("gen-data", "write a synthetic OHLCV panel and its ground truth");
  add_common(gen, true);
  auto* tr = app.add_subcommand("train", "train a model and write checkpoint and history");
  add_common(tr, true);
  tr->add_option("--variant", o.variant, "deltalag|lag1net|selflagnet|selflag1|corrgraph-lag1|corrgraph-lagall");
  auto* bt = app.add_subcommand("backtest", "evaluate a checkpoint on the test range");
  add_common(bt, true);
  bt->add_option("--checkpoint", o.checkpoint, "checkpoint file (default <out>/checkpoint.bin)");
  bt->add_option("--variant", o.variant, "model variant");
  auto* gc = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_common(gc, true);
  gc->add_option("--variant", o.variant, "model variant");
  gc->add_option("--fault", o.fault, "inject a wrong adjoint: none|tanh|matmul");
  auto* an = app.add_subcommand("analyze", "lag histogram and leader concentration of an assignment dump");
  an->add_option("assignments", o.assignments, "assignment dump CSV")->required()->check(CLI::ExistingFile);
  an->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (tr->parsed()) return cmd_train(o);
    if (bt->parsed()) return cmd_backtest(o);
    if (gc->parsed()) return cmd_gradcheck(o);
    if (an->parsed()) return cmd_analyze(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}
