#include "deltalag/statbaselines.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "deltalag/errors.hpp"
#include "deltalag/format.hpp"
#include "deltalag/kernels.hpp"

namespace deltalag {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string to_string(GraphMode m) { return m == GraphMode::kLag1 ? "lag1" : "lagall"; }

GraphMode parse_graph_mode(const std::string& name) {
  if (name == "lag1") return GraphMode::kLag1;
  if (name == "lagall") return GraphMode::kLagAll;
  throw ConfigError("unknown graph mode '" + name + "' (expected lag1 or lagall)");
}

Array lagged_corr(const FeaturePanel& panel, std::size_t tau, std::size_t window, std::size_t as_of) {
  const std::size_t n = panel.stocks();
  Array out(n, n, kNaN);
  if (tau == 0 || window < 2) throw ConfigError("lagged_corr: need tau >= 1 and window >= 2");
  // s runs over [as_of - 1 - window, as_of - 2]; the leader day s - tau + 1 must be >= 1.
  if (as_of < window + tau + 1 || as_of > panel.days()) return out;
  const std::size_t s0 = as_of - 1 - window;
  Array leader(window, n), lagger(window, n);
  for (std::size_t i = 0; i < window; ++i) {
    const std::size_t s = s0 + i;
    for (std::size_t u = 0; u < n; ++u) {
      leader(i, u) = panel.daily_return(s + 1 - tau, u);
      lagger(i, u) = panel.daily_return(s + 1, u);
    }
  }
  kernels::column_correlation(leader.data(), lagger.data(), out.data(), window, n, n);
  return out;
}

LaggedCorrGraph build_graph(const FeaturePanel& panel, std::size_t lag_max, std::size_t window, std::size_t as_of) {
  if (lag_max == 0) throw ConfigError("graph: lag_max must be positive");
  LaggedCorrGraph g{as_of, window, lag_max, {}};
  for (std::size_t tau = 1; tau <= lag_max; ++tau) g.by_lag.push_back(lagged_corr(panel, tau, window, as_of));
  return g;
}

OfflineSelection select_leaders_offline(const LaggedCorrGraph& graph, std::size_t u, std::size_t k,
                                        GraphMode mode, std::size_t date) {
  if (graph.by_lag.empty()) throw ContractError("select_leaders_offline: empty graph");
  const std::size_t n = graph.by_lag.front().rows();
  if (u >= n) throw ContractError("select_leaders_offline: target out of range");
  const std::size_t lags = mode == GraphMode::kLag1 ? 1 : graph.lag_max;
  AttentionMatrix a;
  a.target = u;
  a.date = date;
  for (std::size_t v = 0; v < n; ++v) {
    if (v != u) a.candidates.push_back(v);
  }
  a.scores = Array(a.candidates.size(), lags, kNaN);
  for (std::size_t r = 0; r < a.candidates.size(); ++r) {
    for (std::size_t j = 0; j < lags; ++j) {
      a.scores(r, j) = graph.by_lag[lags - j - 1](a.candidates[r], u);
    }
  }
  OfflineSelection out{topk_select(a, k), false};
  out.short_of_k = out.assignment.picks.size() < k;
  return out;
}

GraphSchedule::GraphSchedule(const FeaturePanel& panel, std::size_t lag_max, std::size_t window,
                             std::size_t refresh, std::optional<std::size_t> freeze_at)
    : panel_(&panel), lag_max_(lag_max), window_(window), refresh_(refresh), freeze_at_(freeze_at) {
  if (refresh_ == 0) throw ConfigError("graph refresh must be positive");
}

std::size_t GraphSchedule::as_of_for(std::size_t t) const {
  if (freeze_at_) return *freeze_at_;
  return t - t % refresh_;
}

const LaggedCorrGraph& GraphSchedule::graph_for(std::size_t t) {
  const std::size_t as_of = as_of_for(t);
  auto it = cache_.find(as_of);
  if (it == cache_.end()) it = cache_.emplace(as_of, build_graph(*panel_, lag_max_, window_, as_of)).first;
  return it->second;
}

void GraphSchedule::insert(LaggedCorrGraph graph) {
  const std::size_t as_of = graph.as_of;
  cache_[as_of] = std::move(graph);
}

AssignmentMap GraphSchedule::assignments_for(std::size_t t, std::size_t k, GraphMode mode) {
  const LaggedCorrGraph& g = graph_for(t);
  AssignmentMap out;
  for (std::size_t u = 0; u < panel_->stocks(); ++u) {
    OfflineSelection s = select_leaders_offline(g, u, k, mode, t);
    if (s.short_of_k) ++warnings_;
    if (!s.assignment.picks.empty()) out.emplace(u, std::move(s.assignment));
  }
  return out;
}

CrossSection predict_from_graph(Tape& tape, const ModelConfig& cfg, ParamSet& params, const FeaturePanel& panel,
                                std::size_t t, const AssignmentMap& assignments) {
  if (cfg.variant != Variant::kFrozenGraph) throw ConfigError("predict_from_graph needs the frozengraph variant");
  ForwardOptions options;
  options.graph = &assignments;
  return forward_cross_section(tape, cfg, params, panel, t, options);
}

void write_graph_cache(const std::map<std::size_t, LaggedCorrGraph>& graphs, const FeaturePanel& panel,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "as_of,leader,lagger,lag,corr\n";
  for (const auto& [as_of, g] : graphs) {
    const std::string date = as_of < panel.days() ? panel.dates()[as_of].iso() : std::to_string(as_of);
    for (std::size_t tau = 1; tau <= g.by_lag.size(); ++tau) {
      const Array& m = g.by_lag[tau - 1];
      for (std::size_t v = 0; v < m.rows(); ++v) {
        for (std::size_t u = 0; u < m.cols(); ++u) {
          if (u == v || !std::isfinite(m(v, u))) continue;
          out << date << ',' << panel.tickers()[v] << ',' << panel.tickers()[u] << ',' << tau << ','
              << format_double(m(v, u)) << '\n';
        }
      }
    }
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::map<std::size_t, LaggedCorrGraph> read_graph_cache(const FeaturePanel& panel, std::size_t lag_max,
                                                        std::size_t window, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph cache '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || (line != "as_of,leader,lagger,lag,corr" && line != "as_of,leader,lagger,lag,corr\r")) {
    throw ParseError("unexpected graph cache header", line_no);
  }
  const std::size_t n = panel.stocks();
  std::map<std::size_t, LaggedCorrGraph> graphs;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) throw ParseError("expected 5 fields", line_no);
    const Date d = Date::parse(f[0]);
    const auto t = panel.date_index_at_or_before(d);
    if (!t || panel.dates()[*t] != d) throw ParseError("as_of date not in panel: " + f[0], line_no);
    const auto v = panel.ticker_index(f[1]);
    const auto u = panel.ticker_index(f[2]);
    if (!v || !u) throw ParseError("unknown ticker", line_no);
    std::size_t tau = 0;
    double corr = 0.0;
    auto r1 = std::from_chars(f[3].data(), f[3].data() + f[3].size(), tau);
    auto r2 = std::from_chars(f[4].data(), f[4].data() + f[4].size(), corr);
    if (r1.ec != std::errc{} || r2.ec != std::errc{} || tau == 0 || tau > lag_max) {
      throw ParseError("invalid lag or correlation", line_no);
    }
    auto it = graphs.find(*t);
    if (it == graphs.end()) {
      LaggedCorrGraph g{*t, window, lag_max, std::vector<Array>(lag_max, Array(n, n, kNaN))};
      it = graphs.emplace(*t, std::move(g)).first;
    }
    it->second.by_lag[tau - 1](*v, *u) = corr;
  }
  return graphs;
}

}  // namespace deltalag
