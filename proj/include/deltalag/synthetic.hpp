#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deltalag/marketdata.hpp"
#include "deltalag/tensor.hpp"

namespace deltalag {

struct SyntheticSpec {
  std::size_t n_stocks = 30;
  std::size_t n_days = 1000;
  std::size_t n_leaders = 10;
  std::size_t lag_min = 1;
  std::size_t lag_max = 8;
  double signal_coef = 1.0;
  double noise_sd = 0.02;
  double leader_sd = 0.02;
  std::uint64_t seed = 1;
  // Day index from which the lagger -> leader map is redrawn.
  std::optional<std::size_t> shift_day;
};

// Throws ConfigError when the spec is inconsistent.
void validate(const SyntheticSpec& spec);

struct LeadLag {
  std::string leader;
  std::size_t lag = 0;
  friend bool operator==(const LeadLag&, const LeadLag&) = default;
};

using LeaderMap = std::map<std::string, LeadLag>;  // lagger -> (leader, lag)

struct Regime {
  std::size_t first_day = 0;  // first label-day index governed by this map
  Date first_forecast;        // forecast date whose label day is first_day
  LeaderMap map;
};

struct GroundTruth {
  std::vector<std::string> leaders;
  std::vector<Regime> regimes;  // ordered by first_day

  // Planted (leader, lag) for `lagger` on label day `day`; nullptr for leaders.
  const LeadLag* lookup(const std::string& lagger, std::size_t day) const;
  // Same, keyed by the forecast date (the day before the label day).
  const LeadLag* lookup_forecast(const std::string& lagger, Date forecast) const;
};

struct SyntheticMarket {
  BarSeries bars;
  GroundTruth truth;
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  Array returns;  // n_days x n_stocks, column order = tickers
};

inline constexpr double kSyntheticStartPrice = 100.0;
inline constexpr double kSyntheticJitterSd = 0.005;
inline constexpr double kSyntheticShares = 1.0e8;

// Business days starting 2010-01-04.
SyntheticMarket generate_synthetic(const SyntheticSpec& spec);

// CSV `lagger,leader,lag`.
void write_ground_truth(const LeaderMap& map, const std::filesystem::path& path);
LeaderMap read_ground_truth(const std::filesystem::path& path);

}  // namespace deltalag
