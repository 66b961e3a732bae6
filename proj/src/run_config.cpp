#include "deltalag/run_config.hpp"

#include <fstream>
#include <set>

#include "deltalag/errors.hpp"

namespace deltalag {

namespace {

using json = nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.count(item.key())) throw ConfigError("config: unknown key '" + where + "." + item.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::optional<Date> read_date(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return Date::parse(j.at(key).get<std::string>());
  } catch (const ParseError& e) {
    throw ConfigError(std::string("config: invalid date for '") + key + "': " + e.what());
  }
}

SyntheticSpec parse_synthetic(const json& j) {
  check_keys(j, "synthetic", {"n_stocks", "n_days", "n_leaders", "lag_min", "lag_max", "signal_coef", "noise_sd",
                              "leader_sd", "seed", "shift_day"});
  SyntheticSpec s;
  read(j, "n_stocks", s.n_stocks);
  read(j, "n_days", s.n_days);
  read(j, "n_leaders", s.n_leaders);
  read(j, "lag_min", s.lag_min);
  read(j, "lag_max", s.lag_max);
  read(j, "signal_coef", s.signal_coef);
  read(j, "noise_sd", s.noise_sd);
  read(j, "leader_sd", s.leader_sd);
  read(j, "seed", s.seed);
  if (j.contains("shift_day") && !j.at("shift_day").is_null()) s.shift_day = j.at("shift_day").get<std::size_t>();
  return s;
}

std::string feature_mode_name(FeatureMode m) { return m == FeatureMode::kFull ? "full" : "return_only"; }

FeatureMode parse_feature_mode(const std::string& s) {
  if (s == "full") return FeatureMode::kFull;
  if (s == "return_only") return FeatureMode::kReturnOnly;
  throw ConfigError("config: features must be 'full' or 'return_only'");
}

RunConfig parse_impl(const json& j) {
  check_keys(j, "config", {"seed", "seeds", "data", "synthetic", "features", "split", "model", "variant", "loss",
                           "train", "eval", "output_dir"});
  RunConfig cfg;
  read(j, "seed", cfg.seed);
  cfg.seeds = {derive_seed(cfg.seed, 1), derive_seed(cfg.seed, 2), derive_seed(cfg.seed, 3)};
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    check_keys(s, "seeds", {"data", "init", "shuffle"});
    read(s, "data", cfg.seeds.data);
    read(s, "init", cfg.seeds.init);
    read(s, "shuffle", cfg.seeds.shuffle);
  }

  const bool has_data = j.contains("data");
  const bool has_synth = j.contains("synthetic");
  if (has_data == has_synth) throw ConfigError("config: exactly one of 'data' and 'synthetic' is required");
  if (has_data) {
    const json& d = j.at("data");
    check_keys(d, "data", {"paths"});
    cfg.data_paths = d.at("paths").get<std::vector<std::string>>();
    if (cfg.data_paths.empty()) throw ConfigError("config: data.paths is empty");
  } else {
    cfg.synthetic = parse_synthetic(j.at("synthetic"));
    if (!j.at("synthetic").contains("seed")) cfg.synthetic->seed = cfg.seeds.data;
    validate(*cfg.synthetic);
  }

  if (j.contains("features")) cfg.features = parse_feature_mode(j.at("features").get<std::string>());

  if (j.contains("split")) {
    const json& s = j.at("split");
    check_keys(s, "split", {"train_end", "val_end", "train_days", "val_days"});
    cfg.split.train_end = read_date(s, "train_end");
    cfg.split.val_end = read_date(s, "val_end");
    if (s.contains("train_days") && !s.at("train_days").is_null()) cfg.split.train_days = s.at("train_days").get<std::size_t>();
    if (s.contains("val_days") && !s.at("val_days").is_null()) cfg.split.val_days = s.at("val_days").get<std::size_t>();
  }
  const bool by_date = cfg.split.train_end || cfg.split.val_end;
  const bool by_count = cfg.split.train_days || cfg.split.val_days;
  if (by_date == by_count) throw ConfigError("config: split needs either train_end/val_end or train_days/val_days");
  if (by_date && !(cfg.split.train_end && cfg.split.val_end)) throw ConfigError("config: split needs both dates");
  if (by_count && !(cfg.split.train_days && cfg.split.val_days)) throw ConfigError("config: split needs both counts");

  if (j.contains("variant")) cfg.variant = j.at("variant").get<std::string>();
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model", {"window", "lag_max", "hidden", "k", "feature_mode", "mlp_hidden"});
    read(m, "window", cfg.model.window);
    read(m, "lag_max", cfg.model.lag_max);
    read(m, "hidden", cfg.model.hidden);
    read(m, "k", cfg.model.k);
    if (m.contains("feature_mode")) cfg.model.signal = parse_signal_mode(m.at("feature_mode").get<std::string>());
    read(m, "mlp_hidden", cfg.model.mlp_hidden);
  }
  cfg.model.features = cfg.features == FeatureMode::kFull ? kFullFeatureCount : 1;
  cfg.model.variant = model_variant(cfg.variant);
  validate(cfg.model, cfg.synthetic ? std::optional<std::size_t>(cfg.synthetic->n_stocks) : std::nullopt);

  if (j.contains("loss")) cfg.loss = parse_loss(j.at("loss").get<std::string>());
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train", {"epochs", "lr", "beta1", "beta2", "eps", "patience", "shuffle", "pair_cap", "pair_samples"});
    read(t, "epochs", cfg.train.epochs);
    read(t, "lr", cfg.train.adam.lr);
    read(t, "beta1", cfg.train.adam.beta1);
    read(t, "beta2", cfg.train.adam.beta2);
    read(t, "eps", cfg.train.adam.eps);
    read(t, "patience", cfg.train.patience);
    read(t, "shuffle", cfg.train.shuffle);
    read(t, "pair_cap", cfg.train.loss_options.pair_cap);
    read(t, "pair_samples", cfg.train.loss_options.pair_samples);
  }
  cfg.train.loss = cfg.loss;
  cfg.train.seed = cfg.seeds.shuffle;
  validate(cfg.train);

  cfg.eval.graph_lag_max = cfg.model.lag_max;
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, "eval", {"graph_window", "graph_refresh", "graph_lag_max", "freeze_graph_at"});
    read(e, "graph_window", cfg.eval.graph_window);
    read(e, "graph_refresh", cfg.eval.graph_refresh);
    read(e, "graph_lag_max", cfg.eval.graph_lag_max);
    cfg.eval.freeze_graph_at = read_date(e, "freeze_graph_at");
  }
  if (cfg.eval.graph_window < 2 || cfg.eval.graph_refresh < 1 || cfg.eval.graph_lag_max < 1) {
    throw ConfigError("config: eval graph settings must be positive (window >= 2)");
  }
  read(j, "output_dir", cfg.output_dir);
  return cfg;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the (seed, stream) pair.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Variant model_variant(const std::string& variant) {
  if (variant == "corrgraph-lag1" || variant == "corrgraph-lagall") return Variant::kFrozenGraph;
  if (variant == "frozengraph") throw ConfigError("variant 'frozengraph' is internal; use corrgraph-lag1 or corrgraph-lagall");
  return parse_variant(variant);
}

std::optional<GraphMode> graph_mode(const std::string& variant) {
  if (variant == "corrgraph-lag1") return GraphMode::kLag1;
  if (variant == "corrgraph-lagall") return GraphMode::kLagAll;
  return std::nullopt;
}

RunConfig parse_run_config(const json& j) {
  try {
    return parse_impl(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["seeds"] = {{"data", cfg.seeds.data}, {"init", cfg.seeds.init}, {"shuffle", cfg.seeds.shuffle}};
  if (cfg.synthetic) {
    const SyntheticSpec& s = *cfg.synthetic;
    nlohmann::ordered_json js;
    js["n_stocks"] = s.n_stocks;
    js["n_days"] = s.n_days;
    js["n_leaders"] = s.n_leaders;
    js["lag_min"] = s.lag_min;
    js["lag_max"] = s.lag_max;
    js["signal_coef"] = s.signal_coef;
    js["noise_sd"] = s.noise_sd;
    js["leader_sd"] = s.leader_sd;
    js["seed"] = s.seed;
    js["shift_day"] = s.shift_day ? nlohmann::ordered_json(*s.shift_day) : nlohmann::ordered_json(nullptr);
    j["synthetic"] = js;
  } else {
    j["data"] = {{"paths", cfg.data_paths}};
  }
  j["features"] = feature_mode_name(cfg.features);
  nlohmann::ordered_json split;
  if (cfg.split.train_end) {
    split["train_end"] = cfg.split.train_end->iso();
    split["val_end"] = cfg.split.val_end->iso();
  } else {
    split["train_days"] = *cfg.split.train_days;
    split["val_days"] = *cfg.split.val_days;
  }
  j["split"] = split;
  j["model"] = {{"window", cfg.model.window},   {"lag_max", cfg.model.lag_max},
                {"hidden", cfg.model.hidden},   {"k", cfg.model.k},
                {"feature_mode", to_string(cfg.model.signal)}, {"mlp_hidden", cfg.model.mlp_hidden}};
  j["variant"] = cfg.variant;
  j["loss"] = to_string(cfg.loss);
  j["train"] = {{"epochs", cfg.train.epochs},
                {"lr", cfg.train.adam.lr},
                {"beta1", cfg.train.adam.beta1},
                {"beta2", cfg.train.adam.beta2},
                {"eps", cfg.train.adam.eps},
                {"patience", cfg.train.patience},
                {"shuffle", cfg.train.shuffle},
                {"pair_cap", cfg.train.loss_options.pair_cap},
                {"pair_samples", cfg.train.loss_options.pair_samples}};
  j["eval"] = {{"graph_window", cfg.eval.graph_window},
               {"graph_refresh", cfg.eval.graph_refresh},
               {"graph_lag_max", cfg.eval.graph_lag_max},
               {"freeze_graph_at", cfg.eval.freeze_graph_at ? nlohmann::ordered_json(cfg.eval.freeze_graph_at->iso())
                                                            : nlohmann::ordered_json(nullptr)}};
  j["output_dir"] = cfg.output_dir;
  return j;
}

void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void override_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.seeds = {derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3)};
  if (cfg.synthetic) cfg.synthetic->seed = cfg.seeds.data;
  cfg.train.seed = cfg.seeds.shuffle;
}

void override_variant(RunConfig& cfg, const std::string& variant) {
  cfg.model.variant = model_variant(variant);
  cfg.variant = variant;
  validate(cfg.model, cfg.synthetic ? std::optional<std::size_t>(cfg.synthetic->n_stocks) : std::nullopt);
}

Splits resolve_splits(const RunConfig& cfg, const FeaturePanel& panel) {
  if (cfg.split.train_end) return split(panel, *cfg.split.train_end, *cfg.split.val_end);
  const std::size_t tr = *cfg.split.train_days;
  const std::size_t va = *cfg.split.val_days;
  if (tr == 0 || va == 0) throw ConfigError("split: train_days and val_days must be positive");
  return split_at(panel.days(), tr - 1, tr + va - 1);
}

PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData out;
  BarSeries bars;
  if (cfg.synthetic) {
    out.market = generate_synthetic(*cfg.synthetic);
    out.truth = out.market->truth;
    bars = out.market->bars;
  } else {
    std::vector<std::filesystem::path> paths;
    for (const std::string& p : cfg.data_paths) {
      if (!std::filesystem::exists(p)) throw IoError("data file '" + p + "' does not exist");
      paths.emplace_back(p);
    }
    bars = load_ohlcv(paths);
  }
  NormalizeResult norm = normalize(compute_features(bars, cfg.features));
  out.panel = std::move(norm.panel);
  out.invalid_days = std::move(norm.invalid_days);
  out.splits = resolve_splits(cfg, out.panel);
  return out;
}

}  // namespace deltalag
