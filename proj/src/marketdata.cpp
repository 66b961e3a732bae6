#include "deltalag/marketdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "deltalag/errors.hpp"
#include "deltalag/format.hpp"

namespace deltalag {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kHeader = "ticker,date,open,high,low,close,volume,shares_outstanding";

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

double parse_number(std::string_view s, const char* field, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(std::string("invalid ") + field + " '" + std::string(s) + "'", line);
  }
  return v;
}

}  // namespace

std::string check_bar(const Bar& b) {
  if (!(b.low > 0.0)) return "low must be positive";
  if (b.low > std::min(b.open, b.close)) return "low exceeds min(open, close)";
  if (b.high < std::max(b.open, b.close)) return "high below max(open, close)";
  if (b.low > b.high) return "low exceeds high";
  if (b.volume < 0.0) return "negative volume";
  if (b.shares_outstanding && !(*b.shares_outstanding > 0.0)) return "non-positive shares_outstanding";
  return {};
}

BarSeries load_ohlcv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open OHLCV file '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty OHLCV file '" + path.string() + "'");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) {
    throw ParseError(std::string("unexpected header, expected '") + kHeader + "'", line_no);
  }
  BarSeries series;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 8) {
      throw ParseError("expected 8 fields, found " + std::to_string(f.size()), line_no);
    }
    if (f[0].empty()) throw ParseError("empty ticker", line_no);
    Bar bar;
    try {
      bar.date = Date::parse(f[1]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    bar.open = parse_number(f[2], "open", line_no);
    bar.high = parse_number(f[3], "high", line_no);
    bar.low = parse_number(f[4], "low", line_no);
    bar.close = parse_number(f[5], "close", line_no);
    bar.volume = parse_number(f[6], "volume", line_no);
    if (!f[7].empty()) bar.shares_outstanding = parse_number(f[7], "shares_outstanding", line_no);
    if (const std::string err = check_bar(bar); !err.empty()) {
      throw ParseError("invalid bar for " + std::string(f[0]) + " on " + bar.date.iso() + ": " + err,
                       line_no);
    }
    auto& bars = series[std::string(f[0])];
    if (!bars.empty() && !(bars.back().date < bar.date)) {
      throw DataError("non-monotone dates for " + std::string(f[0]) + " at line " +
                      std::to_string(line_no) + ": " + bar.date.iso() + " after " +
                      bars.back().date.iso());
    }
    bars.push_back(bar);
  }
  return series;
}

BarSeries load_ohlcv(std::span<const std::filesystem::path> paths) {
  BarSeries all;
  for (const auto& p : paths) {
    BarSeries one = load_ohlcv(p);
    for (auto& [ticker, bars] : one) {
      if (all.count(ticker)) {
        throw DataError("duplicate ticker '" + ticker + "' in '" + p.string() + "'");
      }
      all.emplace(ticker, std::move(bars));
    }
  }
  return all;
}

void write_ohlcv(const BarSeries& bars, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << kHeader << '\n';
  for (const auto& [ticker, series] : bars) {
    for (const Bar& b : series) {
      out << ticker << ',' << b.date.iso() << ',' << format_double(b.open) << ','
          << format_double(b.high) << ',' << format_double(b.low) << ',' << format_double(b.close)
          << ',' << format_double(b.volume) << ',';
      if (b.shares_outstanding) out << format_double(*b.shares_outstanding);
      out << '\n';
    }
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

FeaturePanel::FeaturePanel(std::vector<Date> dates, std::vector<std::string> tickers, std::size_t features)
    : dates_(std::move(dates)),
      tickers_(std::move(tickers)),
      features_(features),
      values_(dates_.size() * tickers_.size() * features, 0.0),
      valid_(dates_.size() * tickers_.size(), 0),
      next_return_(dates_.size() * tickers_.size(), kNaN) {}

std::optional<std::size_t> FeaturePanel::ticker_index(const std::string& ticker) const {
  auto it = std::lower_bound(tickers_.begin(), tickers_.end(), ticker);
  if (it == tickers_.end() || *it != ticker) {
    // Tickers are normally sorted; fall back to a scan otherwise.
    auto lin = std::find(tickers_.begin(), tickers_.end(), ticker);
    if (lin == tickers_.end()) return std::nullopt;
    return static_cast<std::size_t>(lin - tickers_.begin());
  }
  return static_cast<std::size_t>(it - tickers_.begin());
}

std::optional<std::size_t> FeaturePanel::date_index_at_or_before(Date d) const {
  auto it = std::upper_bound(dates_.begin(), dates_.end(), d);
  if (it == dates_.begin()) return std::nullopt;
  return static_cast<std::size_t>(it - dates_.begin()) - 1;
}

double FeaturePanel::daily_return(std::size_t t, std::size_t u) const {
  return t == 0 ? kNaN : next_return(t - 1, u);
}

FeaturePanel compute_features(const BarSeries& bars, FeatureMode mode) {
  std::set<Date> date_set;
  std::vector<std::string> tickers;
  for (const auto& [ticker, series] : bars) {
    if (series.size() < 2) {
      throw DataError("ticker '" + ticker + "' needs at least 2 bars to form returns");
    }
    tickers.push_back(ticker);
    for (const Bar& b : series) date_set.insert(b.date);
  }
  std::vector<Date> dates(date_set.begin(), date_set.end());
  const std::size_t nf = mode == FeatureMode::kFull ? kFullFeatureCount : 1;
  FeaturePanel panel(dates, tickers, nf);

  std::size_t u = 0;
  for (const auto& [ticker, series] : bars) {
    // Row of each bar in the panel calendar.
    std::vector<std::size_t> row(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
      row[i] = static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), series[i].date) -
                                        dates.begin());
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
      const Bar& b = series[i];
      const std::size_t t = row[i];
      if (i + 1 < series.size() && row[i + 1] == t + 1) {
        panel.set_next_return(t, u, series[i + 1].close / b.close - 1.0);
      }
      if (i == 0 || row[i - 1] + 1 != t) continue;  // needs the previous panel day
      const Bar& prev = series[i - 1];
      if (prev.close == 0.0) {
        throw DataError("zero close for '" + ticker + "' on " + prev.date.iso());
      }
      auto x = panel.feature_row(t, u);
      const double ret = b.close / prev.close - 1.0;
      if (mode == FeatureMode::kReturnOnly) {
        x[0] = ret;
      } else {
        x[kOpenRatio] = b.open / b.close - 1.0;
        x[kHighRatio] = b.high / b.close - 1.0;
        x[kLowRatio] = b.low / b.close - 1.0;
        x[kDailyReturn] = ret;
        x[kLogVolume] = std::log1p(b.volume);
        if (b.shares_outstanding && *b.shares_outstanding > 0.0) {
          x[kTurnover] = b.volume / *b.shares_outstanding;
        } else {
          const std::size_t first = i + 1 >= kTurnoverWindow ? i + 1 - kTurnoverWindow : 0;
          double sum = 0.0;
          for (std::size_t j = first; j <= i; ++j) sum += series[j].volume;
          const double mean = sum / static_cast<double>(i + 1 - first);
          x[kTurnover] = mean > 0.0 ? b.volume / mean : 0.0;
        }
      }
      bool finite = true;
      for (double v : x) finite = finite && std::isfinite(v);
      panel.set_valid(t, u, finite);
    }
    ++u;
  }
  return panel;
}

NormalizeResult normalize(const FeaturePanel& panel, const std::optional<NormStats>& stats) {
  NormalizeResult result{panel, {}, {}};
  const std::size_t nf = panel.features();
  result.stats.clip = stats ? stats->clip : 5.0;
  result.stats.location.assign(nf, 0.0);
  result.stats.scale.assign(nf, 0.0);
  const double clip = result.stats.clip;
  std::vector<std::size_t> fit_days(nf, 0);

  FeaturePanel& out = result.panel;
  std::vector<std::size_t> members;
  for (std::size_t t = 0; t < panel.days(); ++t) {
    members.clear();
    for (std::size_t u = 0; u < panel.stocks(); ++u) {
      if (panel.valid(t, u)) members.push_back(u);
    }
    if (members.empty()) continue;
    bool degenerate = members.size() < 2;
    std::vector<double> mean(nf, 0.0), sd(nf, 0.0);
    for (std::size_t f = 0; f < nf && !degenerate; ++f) {
      double lo = panel.feature(t, members[0], f), hi = lo, sum = 0.0;
      for (std::size_t u : members) {
        const double v = panel.feature(t, u, f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      if (lo == hi) {
        degenerate = true;
        break;
      }
      mean[f] = sum / static_cast<double>(members.size());
      double ss = 0.0;
      for (std::size_t u : members) {
        const double d = panel.feature(t, u, f) - mean[f];
        ss += d * d;
      }
      sd[f] = std::sqrt(ss / static_cast<double>(members.size()));
      if (!(sd[f] > 0.0)) degenerate = true;
    }
    if (degenerate) {
      for (std::size_t u : members) out.set_valid(t, u, false);
      result.invalid_days.push_back(t);
      continue;
    }
    for (std::size_t f = 0; f < nf; ++f) {
      result.stats.location[f] += mean[f];
      result.stats.scale[f] += sd[f];
      ++fit_days[f];
    }
    for (std::size_t u : members) {
      auto x = out.feature_row(t, u);
      for (std::size_t f = 0; f < nf; ++f) {
        x[f] = std::clamp((x[f] - mean[f]) / sd[f], -clip, clip);
      }
    }
  }
  for (std::size_t f = 0; f < nf; ++f) {
    if (fit_days[f] > 0) {
      result.stats.location[f] /= static_cast<double>(fit_days[f]);
      result.stats.scale[f] /= static_cast<double>(fit_days[f]);
    } else {
      result.stats.scale[f] = 1.0;
    }
  }
  if (!stats) {
    for (std::size_t f = 0; f < nf; ++f) {
      if (fit_days[f] == 0) {
        throw DataError("normalize: feature " + std::to_string(f) + " has no valid cross-section");
      }
    }
  }
  return result;
}

bool window_available(const FeaturePanel& panel, std::size_t u, std::size_t t, std::size_t length) {
  if (length == 0 || t + 1 < length || t >= panel.days()) return false;
  for (std::size_t d = t + 1 - length; d <= t; ++d) {
    if (!panel.valid(d, u)) return false;
  }
  return true;
}

std::optional<Array> make_window(const FeaturePanel& panel, std::size_t u, std::size_t t, std::size_t length) {
  if (!window_available(panel, u, t, length)) return std::nullopt;
  Array w(length, panel.features());
  for (std::size_t i = 0; i < length; ++i) {
    auto src = panel.feature_row(t + 1 - length + i, u);
    std::copy(src.begin(), src.end(), w.row(i).begin());
  }
  return w;
}

std::vector<std::size_t> Splits::forecast_dates(const DateRange& r) {
  std::vector<std::size_t> out;
  for (std::size_t d = std::max<std::size_t>(r.begin, 1); d < r.end; ++d) out.push_back(d - 1);
  return out;
}

Splits split_at(std::size_t days, std::size_t train_end, std::size_t val_end) {
  if (!(train_end < val_end)) throw ConfigError("split: train_end must precede val_end");
  if (!(val_end + 1 < days)) throw ConfigError("split: val_end must precede the last date");
  Splits s{{0, train_end + 1}, {train_end + 1, val_end + 1}, {val_end + 1, days}};
  if (s.train.size() == 0 || s.validation.size() == 0 || s.test.size() == 0) {
    throw ConfigError("split: empty range");
  }
  return s;
}

Splits split(const FeaturePanel& panel, Date train_end, Date val_end) {
  if (!(train_end < val_end)) throw ConfigError("split: train_end must precede val_end");
  const auto te = panel.date_index_at_or_before(train_end);
  const auto ve = panel.date_index_at_or_before(val_end);
  if (!te) throw ConfigError("split: train_end " + train_end.iso() + " precedes all data");
  if (!ve || *ve == *te) throw ConfigError("split: validation range is empty");
  return split_at(panel.days(), *te, *ve);
}

}  // namespace deltalag
