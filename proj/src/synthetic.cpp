#include "deltalag/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "deltalag/errors.hpp"

namespace deltalag {

namespace {

LeaderMap draw_map(const std::vector<std::size_t>& leaders, const std::vector<std::size_t>& laggers,
                   const std::vector<std::string>& tickers, const SyntheticSpec& spec,
                   std::mt19937_64& rng) {
  std::vector<std::size_t> order = leaders;
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> lag(spec.lag_min, spec.lag_max);
  LeaderMap map;
  for (std::size_t i = 0; i < laggers.size(); ++i) {
    const std::size_t leader = order[i % order.size()];
    map[tickers[laggers[i]]] = LeadLag{tickers[leader], lag(rng)};
  }
  return map;
}

}  // namespace

void validate(const SyntheticSpec& spec) {
  if (spec.n_leaders == 0) throw ConfigError("synthetic: n_leaders must be positive");
  if (spec.n_leaders >= spec.n_stocks) throw ConfigError("synthetic: n_leaders must be below n_stocks");
  if (spec.lag_min < 1 || spec.lag_min > spec.lag_max) {
    throw ConfigError("synthetic: lag range must satisfy 1 <= lag_min <= lag_max");
  }
  if (spec.n_days < 2) throw ConfigError("synthetic: n_days must be at least 2");
  if (!(spec.noise_sd >= 0.0) || !(spec.leader_sd > 0.0)) {
    throw ConfigError("synthetic: noise_sd must be >= 0 and leader_sd > 0");
  }
  if (!std::isfinite(spec.signal_coef)) throw ConfigError("synthetic: signal_coef must be finite");
  if (spec.shift_day && (*spec.shift_day == 0 || *spec.shift_day >= spec.n_days)) {
    throw ConfigError("synthetic: shift_day must lie inside (0, n_days)");
  }
}

const LeadLag* GroundTruth::lookup(const std::string& lagger, std::size_t day) const {
  const Regime* active = nullptr;
  for (const Regime& r : regimes) {
    if (r.first_day <= day) active = &r;
  }
  if (!active) return nullptr;
  auto it = active->map.find(lagger);
  return it == active->map.end() ? nullptr : &it->second;
}

const LeadLag* GroundTruth::lookup_forecast(const std::string& lagger, Date forecast) const {
  const Regime* active = regimes.empty() ? nullptr : &regimes.front();
  for (const Regime& r : regimes) {
    if (r.first_day > 0 && r.first_forecast <= forecast) active = &r;
  }
  if (!active) return nullptr;
  auto it = active->map.find(lagger);
  return it == active->map.end() ? nullptr : &it->second;
}

SyntheticMarket generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  const std::size_t n = spec.n_stocks;
  const std::size_t days = spec.n_days;
  const std::size_t burn = spec.lag_max;

  SyntheticMarket m;
  const int width = static_cast<int>(std::to_string(n - 1).size());
  for (std::size_t u = 0; u < n; ++u) {
    std::string id = std::to_string(u);
    m.tickers.push_back("S" + std::string(std::max(0, std::max(width, 3) - static_cast<int>(id.size())), '0') + id);
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> leaders(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(spec.n_leaders));
  std::vector<std::size_t> laggers(perm.begin() + static_cast<std::ptrdiff_t>(spec.n_leaders), perm.end());
  std::sort(leaders.begin(), leaders.end());
  std::sort(laggers.begin(), laggers.end());
  for (std::size_t v : leaders) m.truth.leaders.push_back(m.tickers[v]);

  m.dates.reserve(days);
  Date date = Date::from_ymd(2010, 1, 4);
  for (std::size_t d = 0; d < days; ++d) {
    m.dates.push_back(date);
    date = date.next_business_day();
  }

  m.truth.regimes.push_back({0, m.dates.front(), draw_map(leaders, laggers, m.tickers, spec, rng)});
  if (spec.shift_day) {
    m.truth.regimes.push_back({*spec.shift_day, m.dates[*spec.shift_day - 1], draw_map(leaders, laggers, m.tickers, spec, rng)});
  }

  // Returns on days -burn .. days-1, stored at offset `burn`.
  std::normal_distribution<double> leader_ret(0.0, spec.leader_sd);
  std::normal_distribution<double> noise(0.0, spec.noise_sd > 0.0 ? spec.noise_sd : 1.0);
  std::vector<double> r((burn + days) * n, 0.0);
  auto at = [&](std::size_t d, std::size_t u) -> double& { return r[d * n + u]; };
  for (std::size_t d = 0; d < burn + days; ++d) {
    for (std::size_t v : leaders) at(d, v) = leader_ret(rng);
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t u = 0; u < n; ++u) index[m.tickers[u]] = u;
  for (std::size_t d = 0; d < days; ++d) {
    const LeaderMap& map = (spec.shift_day && d >= *spec.shift_day) ? m.truth.regimes[1].map
                                                                    : m.truth.regimes[0].map;
    for (std::size_t u : laggers) {
      const LeadLag& ll = map.at(m.tickers[u]);
      const double eps = spec.noise_sd > 0.0 ? noise(rng) : 0.0;
      at(burn + d, u) = spec.signal_coef * at(burn + d - ll.lag, index.at(ll.leader)) + eps;
    }
  }

  m.returns = Array(days, n);
  for (std::size_t d = 0; d < days; ++d) {
    for (std::size_t u = 0; u < n; ++u) m.returns(d, u) = at(burn + d, u);
  }

  std::normal_distribution<double> jitter(0.0, kSyntheticJitterSd);
  std::normal_distribution<double> log_volume(13.0, 0.5);
  for (std::size_t u = 0; u < n; ++u) {
    auto& bars = m.bars[m.tickers[u]];
    bars.reserve(days);
    double prev = kSyntheticStartPrice;
    for (std::size_t d = 0; d < days; ++d) {
      const double ret = m.returns(d, u);
      if (!(1.0 + ret > 0.0)) throw DomainError("synthetic: return below -100% generated");
      Bar b;
      b.date = m.dates[d];
      b.close = prev * (1.0 + ret);
      b.open = prev;
      b.high = std::max(b.open, b.close) * (1.0 + std::abs(jitter(rng)));
      b.low = std::min(b.open, b.close) * (1.0 - std::min(std::abs(jitter(rng)), 0.5));
      b.volume = std::round(std::exp(log_volume(rng)));
      b.shares_outstanding = kSyntheticShares;
      bars.push_back(b);
      prev = b.close;
    }
  }
  return m;
}

void write_ground_truth(const LeaderMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "lagger,leader,lag\n";
  for (const auto& [lagger, ll] : map) out << lagger << ',' << ll.leader << ',' << ll.lag << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

LeaderMap read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ground truth '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty ground truth file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "lagger,leader,lag") throw ParseError("unexpected ground truth header", line_no);
  LeaderMap map;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw ParseError("expected 3 fields", line_no);
    std::size_t lag = 0;
    const char* b = line.data() + c2 + 1;
    const char* e = line.data() + line.size();
    auto [p, ec] = std::from_chars(b, e, lag);
    if (ec != std::errc{} || p != e || lag == 0) throw ParseError("invalid lag", line_no);
    const std::string lagger = line.substr(0, c1);
    const std::string leader = line.substr(c1 + 1, c2 - c1 - 1);
    if (lagger.empty() || leader.empty() || lagger == leader) {
      throw ParseError("invalid lagger/leader pair", line_no);
    }
    map[lagger] = LeadLag{leader, lag};
  }
  return map;
}

}  // namespace deltalag
