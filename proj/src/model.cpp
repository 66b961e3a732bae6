#include "deltalag/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "deltalag/encoder.hpp"
#include "deltalag/errors.hpp"
#include "deltalag/format.hpp"

namespace deltalag {

namespace {

struct NamedShape {
  std::string name;
  std::size_t rows;
  std::size_t cols;
};

std::vector<NamedShape> expected_shapes(const ModelConfig& cfg) {
  std::vector<NamedShape> out;
  const std::size_t n = cfg.hidden;
  if (uses_encoder(cfg)) {
    out.push_back({EncoderNames::kInput, cfg.features, 4 * n});
    out.push_back({EncoderNames::kHidden, n, 4 * n});
    out.push_back({EncoderNames::kBias, 1, 4 * n});
  }
  if (uses_attention(cfg)) {
    out.push_back({AttentionNames::kQuery, n, n});
    out.push_back({AttentionNames::kKey, n, n});
  }
  std::size_t in = signal_size(cfg);
  for (std::size_t i = 0; i < cfg.mlp_hidden.size(); ++i) {
    out.push_back({mlp_weight_name(i), in, cfg.mlp_hidden[i]});
    out.push_back({mlp_bias_name(i), 1, cfg.mlp_hidden[i]});
    in = cfg.mlp_hidden[i];
  }
  out.push_back({mlp_weight_name(cfg.mlp_hidden.size()), in, 1});
  out.push_back({mlp_bias_name(cfg.mlp_hidden.size()), 1, 1});
  return out;
}

// Number of key rows per stock for the attention variants.
std::size_t key_count(const ModelConfig& cfg) {
  return cfg.variant == Variant::kLag1Net ? 1 : cfg.lag_max;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kDeltaLag: return "deltalag";
    case Variant::kLag1Net: return "lag1net";
    case Variant::kSelfLagNet: return "selflagnet";
    case Variant::kSelfLag1: return "selflag1";
    case Variant::kFrozenGraph: return "frozengraph";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::kDeltaLag, Variant::kLag1Net, Variant::kSelfLagNet, Variant::kSelfLag1,
                    Variant::kFrozenGraph}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown model variant '" + name + "'");
}

std::string to_string(SignalMode m) { return m == SignalMode::kRaw ? "raw" : "embedding"; }

SignalMode parse_signal_mode(const std::string& name) {
  if (name == "raw") return SignalMode::kRaw;
  if (name == "embedding") return SignalMode::kEmbedding;
  throw ConfigError("unknown feature_mode '" + name + "' (expected raw or embedding)");
}

bool uses_encoder(const ModelConfig& cfg) {
  return cfg.variant == Variant::kDeltaLag || cfg.variant == Variant::kLag1Net ||
         cfg.variant == Variant::kSelfLagNet;
}

bool uses_attention(const ModelConfig& cfg) { return uses_encoder(cfg); }

std::size_t signal_size(const ModelConfig& cfg) {
  return cfg.signal == SignalMode::kEmbedding ? cfg.hidden : cfg.features;
}

void validate(const ModelConfig& cfg, std::optional<std::size_t> stocks) {
  if (cfg.window == 0) throw ConfigError("model: window must be positive");
  if (cfg.lag_max < 1 || cfg.lag_max > cfg.window) {
    throw ConfigError("model: lag_max must satisfy 1 <= lag_max <= window");
  }
  if (cfg.k < 1) throw ConfigError("model: k must be at least 1");
  if (cfg.hidden == 0 || cfg.features == 0) throw ConfigError("model: hidden and features must be positive");
  for (std::size_t h : cfg.mlp_hidden) {
    if (h == 0) throw ConfigError("model: mlp layer sizes must be positive");
  }
  if (cfg.signal == SignalMode::kEmbedding && !uses_encoder(cfg)) {
    throw ConfigError("model: embedding feature_mode needs an attention variant");
  }
  if (cfg.variant == Variant::kSelfLagNet && cfg.k > cfg.lag_max) {
    throw ConfigError("model: selflagnet needs k <= lag_max");
  }
  if (stocks && cfg.variant == Variant::kDeltaLag && cfg.k > (*stocks - 1) * cfg.lag_max) {
    throw ConfigError("model: k exceeds (|S|-1) * lag_max");
  }
  if (stocks && cfg.variant == Variant::kLag1Net && cfg.k > *stocks - 1) {
    throw ConfigError("model: k exceeds |S|-1 for lag1net");
  }
}

std::string mlp_weight_name(std::size_t layer) { return "mlp.w" + std::to_string(layer); }
std::string mlp_bias_name(std::size_t layer) { return "mlp.b" + std::to_string(layer); }

ParamSet init_params(const ModelConfig& cfg, std::mt19937_64& rng) {
  validate(cfg);
  ParamSet params;
  if (uses_encoder(cfg)) init_encoder(params, cfg.features, cfg.hidden, rng);
  if (uses_attention(cfg)) {
    params.add(AttentionNames::kQuery, xavier_uniform(cfg.hidden, cfg.hidden, rng));
    params.add(AttentionNames::kKey, xavier_uniform(cfg.hidden, cfg.hidden, rng));
  }
  std::size_t in = signal_size(cfg);
  for (std::size_t i = 0; i <= cfg.mlp_hidden.size(); ++i) {
    const std::size_t out = i < cfg.mlp_hidden.size() ? cfg.mlp_hidden[i] : 1;
    params.add(mlp_weight_name(i), xavier_uniform(in, out, rng));
    params.add(mlp_bias_name(i), Array(1, out));
    in = out;
  }
  return params;
}

void check_params(const ModelConfig& cfg, const ParamSet& params) {
  const auto shapes = expected_shapes(cfg);
  for (const NamedShape& s : shapes) {
    if (!params.contains(s.name)) throw DimensionError("parameter '" + s.name + "' missing");
    const Array& v = params.value(s.name);
    if (v.rows() != s.rows || v.cols() != s.cols) {
      throw DimensionError("parameter '" + s.name + "' has shape " + shape_string(v) + ", config needs " +
                           std::to_string(s.rows) + "x" + std::to_string(s.cols));
    }
  }
  for (const auto& e : params.entries()) {
    bool known = false;
    for (const NamedShape& s : shapes) known = known || s.name == e.name;
    if (!known) throw DimensionError("parameter '" + e.name + "' not used by this configuration");
  }
}

std::vector<SelectedPosition> topk_positions(const Array& scores, std::size_t k) {
  struct Entry {
    double value;
    std::size_t row;
    std::size_t col;
  };
  std::vector<Entry> entries;
  entries.reserve(scores.size());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      const double v = scores(r, c);
      if (std::isfinite(v)) entries.push_back({v, r, c});
    }
  }
  const std::size_t take = std::min(k, entries.size());
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(take), entries.end(),
                    [](const Entry& a, const Entry& b) {
                      if (a.value != b.value) return a.value > b.value;
                      if (a.row != b.row) return a.row < b.row;
                      return a.col < b.col;
                    });
  std::vector<SelectedPosition> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({entries[i].row, entries[i].col});
  return out;
}

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> w(scores.size());
  if (scores.empty()) return w;
  const double top = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(scores[i] - top);
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

LeadLagAssignment topk_select(const AttentionMatrix& a, std::size_t k) {
  if (a.candidates.size() != a.scores.rows()) {
    throw DimensionError("attention matrix has " + std::to_string(a.scores.rows()) + " rows for " +
                         std::to_string(a.candidates.size()) + " candidates");
  }
  LeadLagAssignment out{a.target, a.date, {}, {}};
  std::vector<double> s;
  for (const SelectedPosition& p : topk_positions(a.scores, k)) {
    out.picks.push_back({a.candidates[p.row], a.lag_of_column(p.col), a.scores(p.row, p.col)});
    s.push_back(a.scores(p.row, p.col));
  }
  out.weights = softmax(s);
  return out;
}

Var make_query(Var embeddings, Var w_query) {
  return ops::matmul(ops::slice_rows(embeddings, embeddings.rows() - 1, 1), w_query);
}

Var make_keys(Var embeddings, Var w_key, std::size_t lag_max) {
  if (lag_max == 0 || lag_max > embeddings.rows()) {
    throw DimensionError("make_keys: lag_max " + std::to_string(lag_max) + " for " +
                         std::to_string(embeddings.rows()) + " embedding rows");
  }
  return ops::matmul(ops::slice_rows(embeddings, embeddings.rows() - lag_max, lag_max), w_key);
}

Var attention_scores(Var query, std::span<const Var> keys) {
  if (keys.empty()) throw DimensionError("attention_scores: no candidates");
  std::vector<Var> rows;
  rows.reserve(keys.size());
  for (const Var& k : keys) {
    if (k.rows() != keys.front().rows()) throw DimensionError("attention_scores: key shapes differ");
    rows.push_back(ops::matmul_nt(query, k));
  }
  return ops::concat_rows(rows);
}

Var aggregate_signal(Var scores, std::span<const Var> vectors) {
  if (scores.rows() != 1 || scores.cols() != vectors.size() || vectors.empty()) {
    throw DimensionError("aggregate_signal: " + std::to_string(vectors.size()) + " vectors for scores " +
                         shape_string(scores.value()));
  }
  Var w = ops::row_softmax(scores);
  Var z = ops::mul(vectors[0], ops::broadcast(ops::slice_cols(w, 0, 1), 1, vectors[0].cols()));
  for (std::size_t m = 1; m < vectors.size(); ++m) {
    z = ops::add(z, ops::mul(vectors[m], ops::broadcast(ops::slice_cols(w, m, 1), 1, vectors[m].cols())));
  }
  return z;
}

Var predict(Var z, ParamSet& params, std::size_t hidden_layers) {
  Var h = z;
  for (std::size_t i = 0; i <= hidden_layers; ++i) {
    h = ops::add_row(ops::matmul(h, params.bind(*z.tape, mlp_weight_name(i))),
                     params.bind(*z.tape, mlp_bias_name(i)));
    if (i < hidden_layers) h = ops::relu(h);
  }
  return h;
}

CrossSection forward_cross_section(Tape& tape, const ModelConfig& cfg, ParamSet& params,
                                   const FeaturePanel& panel, std::size_t t, const ForwardOptions& options) {
  if (panel.features() != cfg.features) {
    throw DimensionError("panel has " + std::to_string(panel.features()) + " features, model expects " +
                         std::to_string(cfg.features));
  }
  if (t >= panel.days()) throw ContractError("forward_cross_section: date index out of range");
  const std::size_t L = cfg.window;
  const std::size_t F = cfg.features;
  CrossSection cs;
  cs.date = t;

  // Stocks with a complete window (candidates) and those with a label (targets).
  std::vector<std::size_t> encoded;
  std::vector<std::size_t> slot(panel.stocks(), std::numeric_limits<std::size_t>::max());
  std::vector<std::size_t> candidates_targets;
  for (std::size_t u = 0; u < panel.stocks(); ++u) {
    const bool has_window = window_available(panel, u, t, L);
    const bool has_label = std::isfinite(panel.next_return(t, u));
    if (has_window) {
      slot[u] = encoded.size();
      encoded.push_back(u);
      if (has_label) candidates_targets.push_back(u);
    }
    if (panel.valid(t, u) && !(has_window && has_label)) {
      cs.skipped.push_back({t, u, has_window ? "no next-day return" : "insufficient history"});
    }
  }

  auto feature_vector = [&](std::size_t day, std::size_t v) { return panel.feature_row(day, v); };

  std::vector<std::size_t> targets;
  std::vector<LeadLagAssignment> assignments;
  Var z{};

  if (cfg.variant == Variant::kSelfLag1) {
    targets = candidates_targets;
    Array x(targets.size(), F);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      auto src = feature_vector(t, targets[i]);
      std::copy(src.begin(), src.end(), x.row(i).begin());
    }
    if (!targets.empty()) z = tape.constant(std::move(x));
  } else if (cfg.variant == Variant::kFrozenGraph) {
    if (!options.graph) throw ContractError("frozen-graph variant needs assignments");
    std::vector<Array> rows;
    for (std::size_t u : candidates_targets) {
      auto it = options.graph->find(u);
      if (it == options.graph->end() || it->second.picks.empty()) {
        cs.skipped.push_back({t, u, "no graph assignment"});
        continue;
      }
      const LeadLagAssignment& a = it->second;
      bool ok = true;
      for (const Selection& p : a.picks) {
        ok = ok && p.lag >= 1 && t + 1 >= p.lag && panel.valid(t + 1 - p.lag, p.leader);
      }
      if (!ok) {
        cs.skipped.push_back({t, u, "missing lagged leader features"});
        continue;
      }
      std::vector<double> s;
      for (const Selection& p : a.picks) s.push_back(p.score);
      LeadLagAssignment used{u, t, a.picks, softmax(s)};
      Array zi(1, F);
      for (std::size_t m = 0; m < used.picks.size(); ++m) {
        auto src = feature_vector(t + 1 - used.picks[m].lag, used.picks[m].leader);
        for (std::size_t f = 0; f < F; ++f) zi[f] += used.weights[m] * src[f];
      }
      rows.push_back(std::move(zi));
      targets.push_back(u);
      assignments.push_back(std::move(used));
    }
    if (!targets.empty()) {
      Array x(targets.size(), F);
      for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].values().begin(), rows[i].values().end(), x.row(i).begin());
      z = tape.constant(std::move(x));
    }
  } else {
    const std::size_t B = encoded.size();
    if (B == 0 || candidates_targets.empty()) {
      for (std::size_t u : candidates_targets) cs.skipped.push_back({t, u, "no candidates"});
      candidates_targets.clear();
    } else {
      std::vector<Array> steps;
      steps.reserve(L);
      for (std::size_t i = 0; i < L; ++i) {
        Array x(B, F);
        for (std::size_t b = 0; b < B; ++b) {
          auto src = feature_vector(t + 1 - L + i, encoded[b]);
          std::copy(src.begin(), src.end(), x.row(b).begin());
        }
        steps.push_back(std::move(x));
      }
      std::vector<Var> h = encode_batch(tape, params, steps);
      Var w_query = params.bind(tape, AttentionNames::kQuery);
      Var w_key = params.bind(tape, AttentionNames::kKey);
      const std::size_t lk = key_count(cfg);
      Var q = ops::matmul(h[L - 1], w_query);  // B x N
      Var keys = ops::matmul(ops::concat_rows(std::span<const Var>(h.data() + (L - lk), lk)), w_key);
      Var scores = ops::matmul_nt(q, keys);  // B x (lk * B); column j*B + b is stock b at key row j
      const Array& sv = scores.value();
      const bool self = cfg.variant == Variant::kSelfLagNet;

      std::vector<std::size_t> flat;
      for (std::size_t u : candidates_targets) {
        const std::size_t a = slot[u];
        AttentionMatrix am;
        am.target = u;
        am.date = t;
        if (self) {
          am.candidates = {u};
        } else {
          for (std::size_t v : encoded) {
            if (v != u) am.candidates.push_back(v);
          }
        }
        am.scores = Array(am.candidates.size(), lk);
        for (std::size_t r = 0; r < am.candidates.size(); ++r) {
          const std::size_t b = slot[am.candidates[r]];
          for (std::size_t j = 0; j < lk; ++j) am.scores(r, j) = sv(a, j * B + b);
        }
        std::vector<SelectedPosition> pos;
        if (options.frozen_positions) {
          auto it = options.frozen_positions->find(u);
          if (it != options.frozen_positions->end()) {
            for (const Selection& p : it->second.picks) {
              auto row = std::find(am.candidates.begin(), am.candidates.end(), p.leader);
              if (row == am.candidates.end() || p.lag < 1 || p.lag > lk) {
                pos.clear();
                break;
              }
              pos.push_back({static_cast<std::size_t>(row - am.candidates.begin()), lk - p.lag});
            }
          }
          if (pos.size() != cfg.k) {
            cs.skipped.push_back({t, u, "no frozen selection"});
            continue;
          }
        } else {
          pos = topk_positions(am.scores, cfg.k);
          if (pos.size() < cfg.k) {
            cs.skipped.push_back({t, u, "fewer than k selectable entries"});
            continue;
          }
        }
        LeadLagAssignment asg{u, t, {}, {}};
        for (const SelectedPosition& p : pos) {
          const std::size_t b = slot[am.candidates[p.row]];
          asg.picks.push_back({am.candidates[p.row], am.lag_of_column(p.col), am.scores(p.row, p.col)});
          flat.push_back(a * sv.cols() + p.col * B + b);
        }
        targets.push_back(u);
        assignments.push_back(std::move(asg));
      }

      if (!targets.empty()) {
        const std::size_t T = targets.size();
        const std::size_t k = cfg.k;
        Var w = ops::row_softmax(ops::gather(scores, std::move(flat), T, k));
        const Array& wv = w.value();
        for (std::size_t i = 0; i < T; ++i) {
          assignments[i].weights.assign(wv.row(i).begin(), wv.row(i).end());
        }
        Var all{};
        if (cfg.signal == SignalMode::kEmbedding) all = ops::concat_rows(h);  // (L * B) x N, row i*B + b
        for (std::size_t m = 0; m < k; ++m) {
          Var part{};
          if (cfg.signal == SignalMode::kRaw) {
            Array x(T, F);
            for (std::size_t i = 0; i < T; ++i) {
              const Selection& p = assignments[i].picks[m];
              auto src = feature_vector(t + 1 - p.lag, p.leader);
              std::copy(src.begin(), src.end(), x.row(i).begin());
            }
            part = tape.constant(std::move(x));
          } else {
            const std::size_t N = cfg.hidden;
            std::vector<std::size_t> idx;
            idx.reserve(T * N);
            for (std::size_t i = 0; i < T; ++i) {
              const Selection& p = assignments[i].picks[m];
              const std::size_t row = (L - p.lag) * B + slot[p.leader];
              for (std::size_t c = 0; c < N; ++c) idx.push_back(row * N + c);
            }
            part = ops::gather(all, std::move(idx), T, N);
          }
          Var term = ops::scale_rows(part, ops::slice_cols(w, m, 1));
          z = m == 0 ? term : ops::add(z, term);
        }
      }
    }
  }

  cs.targets = std::move(targets);
  cs.assignments = std::move(assignments);
  cs.labels = Array(cs.targets.size(), 1);
  for (std::size_t i = 0; i < cs.targets.size(); ++i) cs.labels[i] = panel.next_return(t, cs.targets[i]);
  if (!cs.targets.empty()) cs.predictions = predict(z, params, cfg.mlp_hidden.size());
  return cs;
}

void write_assignments(std::span<const LeadLagAssignment> assignments, const FeaturePanel& panel,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "date,target,rank,leader,lag,score,weight\n";
  for (const LeadLagAssignment& a : assignments) {
    for (std::size_t m = 0; m < a.picks.size(); ++m) {
      const Selection& p = a.picks[m];
      out << panel.dates()[a.date].iso() << ',' << panel.tickers()[a.target] << ',' << (m + 1) << ','
          << panel.tickers()[p.leader] << ',' << p.lag << ',' << format_double(p.score) << ','
          << format_double(m < a.weights.size() ? a.weights[m] : std::nan("")) << '\n';
    }
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace deltalag
