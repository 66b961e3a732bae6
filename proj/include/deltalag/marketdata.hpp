#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deltalag/date.hpp"
#include "deltalag/tensor.hpp"

namespace deltalag {

struct Bar {
  Date date;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  double volume = 0.0;
  std::optional<double> shares_outstanding;
};

// Empty string when the bar is consistent, otherwise a description of the
// violated invariant.
std::string check_bar(const Bar& bar);

using BarSeries = std::map<std::string, std::vector<Bar>>;

enum class FeatureMode { kFull, kReturnOnly };

inline constexpr std::size_t kFullFeatureCount = 6;
inline constexpr std::size_t kTurnoverWindow = 20;

// Column order of the full feature vector.
enum FeatureIndex : std::size_t {
  kOpenRatio = 0,
  kHighRatio = 1,
  kLowRatio = 2,
  kDailyReturn = 3,
  kLogVolume = 4,
  kTurnover = 5,
};

// dates x stocks x features, plus validity and the realized next-day return
// r(t+1) = close(t+1)/close(t) - 1 stored on row t (NaN where undefined).
class FeaturePanel {
 public:
  FeaturePanel() = default;
  FeaturePanel(std::vector<Date> dates, std::vector<std::string> tickers, std::size_t features);

  std::size_t days() const { return dates_.size(); }
  std::size_t stocks() const { return tickers_.size(); }
  std::size_t features() const { return features_; }
  const std::vector<Date>& dates() const { return dates_; }
  const std::vector<std::string>& tickers() const { return tickers_; }
  std::optional<std::size_t> ticker_index(const std::string& ticker) const;
  // Index of the last date <= d, if any.
  std::optional<std::size_t> date_index_at_or_before(Date d) const;

  std::span<const double> feature_row(std::size_t t, std::size_t u) const {
    return {values_.data() + (t * stocks() + u) * features_, features_};
  }
  std::span<double> feature_row(std::size_t t, std::size_t u) {
    return {values_.data() + (t * stocks() + u) * features_, features_};
  }
  double feature(std::size_t t, std::size_t u, std::size_t f) const { return feature_row(t, u)[f]; }

  bool valid(std::size_t t, std::size_t u) const { return valid_[t * stocks() + u] != 0; }
  void set_valid(std::size_t t, std::size_t u, bool v) { valid_[t * stocks() + u] = v ? 1 : 0; }

  double next_return(std::size_t t, std::size_t u) const { return next_return_[t * stocks() + u]; }
  void set_next_return(std::size_t t, std::size_t u, double r) { next_return_[t * stocks() + u] = r; }
  // Realized return on day t (close(t)/close(t-1) - 1), i.e. next_return(t-1, u).
  double daily_return(std::size_t t, std::size_t u) const;

 private:
  std::vector<Date> dates_;
  std::vector<std::string> tickers_;
  std::size_t features_ = 0;
  std::vector<double> values_;
  std::vector<char> valid_;
  std::vector<double> next_return_;
};

struct NormStats {
  // Per-feature averages of the daily cross-sectional location and scale seen
  // while fitting; informative only, the transform is recomputed per day.
  std::vector<double> location;
  std::vector<double> scale;
  double clip = 5.0;
};

struct NormalizeResult {
  FeaturePanel panel;
  NormStats stats;
  std::vector<std::size_t> invalid_days;  // days dropped for a degenerate cross-section
};

// Reads the OHLCV CSV (header required). Rows of one ticker must appear with
// strictly increasing dates.
BarSeries load_ohlcv(const std::filesystem::path& path);
// Loads several universe files; a ticker present in two files is an error.
BarSeries load_ohlcv(std::span<const std::filesystem::path> paths);
void write_ohlcv(const BarSeries& bars, const std::filesystem::path& path);

FeaturePanel compute_features(const BarSeries& bars, FeatureMode mode);

// Cross-sectional per-day, per-feature z-scores (population std) clipped to
// [-clip, clip]. With `stats` empty the clip bound defaults to 5 and the
// returned stats summarize the fit.
NormalizeResult normalize(const FeaturePanel& panel, const std::optional<NormStats>& stats = std::nullopt);

// Rows t-L+1 .. t of stock u's features, oldest first; nullopt when any row is
// invalid or the window starts before the first date.
std::optional<Array> make_window(const FeaturePanel& panel, std::size_t u, std::size_t t, std::size_t length);
bool window_available(const FeaturePanel& panel, std::size_t u, std::size_t t, std::size_t length);

// Half-open range of label-day indices.
struct DateRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool contains(std::size_t d) const { return d >= begin && d < end; }
};

// A sample formed on date t predicts day t+1 and belongs to the range holding
// its label day.
struct Splits {
  DateRange train;
  DateRange validation;
  DateRange test;

  // Forecast-date indices whose label day falls inside `r`.
  static std::vector<std::size_t> forecast_dates(const DateRange& r);
};

Splits split(const FeaturePanel& panel, Date train_end, Date val_end);
// Index form: train = [0, train_end], validation = (train_end, val_end], test = the rest.
Splits split_at(std::size_t days, std::size_t train_end, std::size_t val_end);

}  // namespace deltalag
