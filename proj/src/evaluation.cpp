#include "deltalag/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "deltalag/errors.hpp"

namespace deltalag {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> daily_ic(std::span<const double> pred, std::span<const double> realized) {
  if (pred.size() != realized.size()) throw DimensionError("daily_ic: length mismatch");
  if (pred.size() < 2) return std::nullopt;
  auto [pmin, pmax] = std::minmax_element(pred.begin(), pred.end());
  auto [rmin, rmax] = std::minmax_element(realized.begin(), realized.end());
  if (*pmin == *pmax || *rmin == *rmax) return std::nullopt;
  const std::vector<double> a = average_ranks(pred);
  const std::vector<double> b = average_ranks(realized);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - mean) * (b[i] - mean);
    va += (a[i] - mean) * (a[i] - mean);
    vb += (b[i] - mean) * (b[i] - mean);
  }
  return cov / std::sqrt(va * vb);
}

std::optional<LongShort> long_short_return(std::span<const double> pred, std::span<const double> realized,
                                           std::span<const std::string> names, double decile) {
  const std::size_t n = pred.size();
  if (realized.size() != n || names.size() != n) throw DimensionError("long_short_return: length mismatch");
  if (!(decile > 0.0 && decile <= 0.5)) throw ConfigError("long_short_return: decile must lie in (0, 0.5]");
  if (n < 2) return std::nullopt;
  const auto d = static_cast<std::size_t>(std::ceil(decile * static_cast<double>(n) - 1e-9));
  if (d == 0 || 2 * d > n) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pred[a] != pred[b]) return pred[a] > pred[b];
    return names[a] < names[b];
  });
  LongShort out;
  double long_sum = 0.0, short_sum = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    out.long_set.push_back(order[i]);
    long_sum += realized[order[i]];
    out.short_set.push_back(order[n - d + i]);
    short_sum += realized[order[n - d + i]];
  }
  out.ret = long_sum / static_cast<double>(d) - short_sum / static_cast<double>(d);
  return out;
}

Annualized annualize(std::span<const double> daily) {
  Annualized out;
  if (daily.empty()) return out;
  const double n = static_cast<double>(daily.size());
  const double mean = std::accumulate(daily.begin(), daily.end(), 0.0) / n;
  out.ar = mean * kTradingDays;
  if (daily.size() < 2) return out;
  auto [lo, hi] = std::minmax_element(daily.begin(), daily.end());
  if (*lo == *hi) return out;
  double ss = 0.0;
  for (double r : daily) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  out.sr = mean / sd * std::sqrt(kTradingDays);
  return out;
}

std::vector<double> cumulative_curve(std::span<const double> daily) {
  std::vector<double> out;
  out.reserve(daily.size());
  double acc = 0.0;
  for (double r : daily) {
    acc += r;
    out.push_back(acc);
  }
  return out;
}

std::vector<AssignmentRecord> to_records(std::span<const LeadLagAssignment> assignments, const FeaturePanel& panel) {
  std::vector<AssignmentRecord> out;
  for (const LeadLagAssignment& a : assignments) {
    for (std::size_t m = 0; m < a.picks.size(); ++m) {
      const Selection& p = a.picks[m];
      out.push_back({panel.dates()[a.date], panel.tickers()[a.target], m + 1, panel.tickers()[p.leader], p.lag,
                     p.score, m < a.weights.size() ? a.weights[m] : 0.0});
    }
  }
  return out;
}

std::vector<AssignmentRecord> read_assignments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open assignment dump '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty assignment dump");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "date,target,rank,leader,lag,score,weight") throw ParseError("unexpected assignment header", line_no);
  std::vector<AssignmentRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 7) throw ParseError("expected 7 fields", line_no);
    AssignmentRecord r;
    try {
      r.date = Date::parse(f[0]);
      r.target = f[1];
      r.rank = std::stoul(f[2]);
      r.leader = f[3];
      r.lag = std::stoul(f[4]);
      r.score = f[5].empty() ? std::nan("") : std::stod(f[5]);
      r.weight = f[6].empty() ? std::nan("") : std::stod(f[6]);
    } catch (const ParseError&) {
      throw ParseError("invalid date", line_no);
    } catch (const std::exception&) {
      throw ParseError("invalid numeric field", line_no);
    }
    if (r.rank == 0 || r.lag == 0) throw ParseError("rank and lag must be positive", line_no);
    out.push_back(std::move(r));
  }
  return out;
}

std::map<std::size_t, double> lag_histogram(std::span<const AssignmentRecord> records) {
  std::map<std::size_t, double> hist;
  if (records.empty()) return hist;
  std::map<std::size_t, std::size_t> counts;
  for (const AssignmentRecord& r : records) ++counts[r.lag];
  const double total = static_cast<double>(records.size());
  for (const auto& [lag, c] : counts) hist[lag] = static_cast<double>(c) / total;
  return hist;
}

Concentration leader_concentration(std::span<const AssignmentRecord> records) {
  std::map<Date, std::pair<std::set<std::string>, std::set<std::string>>> by_date;
  for (const AssignmentRecord& r : records) {
    auto& sets = by_date[r.date];
    sets.first.insert(r.leader);
    if (r.rank == 1) sets.second.insert(r.leader);
  }
  Concentration out;
  for (const auto& [date, sets] : by_date) {
    out.days.push_back({date, sets.first.size(), sets.second.size()});
    out.mean_unique += static_cast<double>(sets.first.size());
    out.mean_unique_rank1 += static_cast<double>(sets.second.size());
  }
  if (!out.days.empty()) {
    out.mean_unique /= static_cast<double>(out.days.size());
    out.mean_unique_rank1 /= static_cast<double>(out.days.size());
  }
  return out;
}

DetectionAccuracy detection_accuracy(std::span<const AssignmentRecord> records, const GroundTruth& truth) {
  DetectionAccuracy out;
  std::size_t pair_hits = 0, leader_hits = 0;
  for (const AssignmentRecord& r : records) {
    if (r.rank != 1) continue;
    const LeadLag* planted = truth.lookup_forecast(r.target, r.date);
    if (!planted) continue;
    ++out.evaluated;
    if (r.leader == planted->leader) {
      ++leader_hits;
      if (r.lag == planted->lag) ++pair_hits;
    }
  }
  if (out.evaluated) {
    out.pair = static_cast<double>(pair_hits) / static_cast<double>(out.evaluated);
    out.leader = static_cast<double>(leader_hits) / static_cast<double>(out.evaluated);
  }
  return out;
}

void add_cross_section(BacktestReport& report, const FeaturePanel& panel, const CrossSection& cs) {
  report.skipped_targets += cs.skipped.size();
  DailyResult day;
  day.date = cs.date;
  day.stocks = cs.targets.size();
  if (cs.targets.size() >= 2) {
    std::span<const double> pred = cs.predictions.value().values();
    std::span<const double> real = cs.labels.values();
    day.ic = daily_ic(pred, real);
    std::vector<std::string> names;
    for (std::size_t u : cs.targets) names.push_back(panel.tickers()[u]);
    if (auto ls = long_short_return(pred, real, names)) {
      day.ls_return = ls->ret;
      for (std::size_t i : ls->long_set) day.long_set.push_back(names[i]);
      for (std::size_t i : ls->short_set) day.short_set.push_back(names[i]);
    }
  }
  if (!day.ic) ++report.skipped_ic_dates;
  if (!day.ls_return) ++report.skipped_ls_dates;
  report.days.push_back(std::move(day));
  report.assignments.insert(report.assignments.end(), cs.assignments.begin(), cs.assignments.end());
}

void finalize_report(BacktestReport& report, const FeaturePanel& panel) {
  double ic_sum = 0.0;
  std::size_t ic_n = 0;
  std::vector<double> ls;
  for (const DailyResult& d : report.days) {
    if (d.ic) {
      ic_sum += *d.ic;
      ++ic_n;
    }
    if (d.ls_return) ls.push_back(*d.ls_return);
  }
  report.ic_mean = ic_n ? ic_sum / static_cast<double>(ic_n) : std::nan("");
  const Annualized a = annualize(ls);
  report.ar = a.ar;
  report.sr = a.sr;
  report.cumulative = cumulative_curve(ls);
  const std::vector<AssignmentRecord> records = to_records(report.assignments, panel);
  report.lag_hist = lag_histogram(records);
  report.concentration = leader_concentration(records);
}

}  // namespace deltalag
