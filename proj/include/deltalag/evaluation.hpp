#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deltalag/date.hpp"
#include "deltalag/marketdata.hpp"
#include "deltalag/model.hpp"
#include "deltalag/synthetic.hpp"

namespace deltalag {

inline constexpr double kTradingDays = 252.0;
inline constexpr double kDecile = 0.1;

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

// Spearman rank correlation; nullopt when either vector is constant.
std::optional<double> daily_ic(std::span<const double> pred, std::span<const double> realized);

struct LongShort {
  double ret = 0.0;
  std::vector<std::size_t> long_set;   // positions into the input vectors
  std::vector<std::size_t> short_set;
};

// Stocks ordered by prediction descending, then name ascending; the first
// ceil(decile * N) go long and the last as many go short. nullopt when the
// two sets would overlap.
std::optional<LongShort> long_short_return(std::span<const double> pred, std::span<const double> realized,
                                           std::span<const std::string> names, double decile = kDecile);

struct Annualized {
  double ar = 0.0;
  std::optional<double> sr;  // missing for zero dispersion or fewer than 2 dates
};

Annualized annualize(std::span<const double> daily);
std::vector<double> cumulative_curve(std::span<const double> daily);

// One row of an assignment dump.
struct AssignmentRecord {
  Date date;
  std::string target;
  std::size_t rank = 0;
  std::string leader;
  std::size_t lag = 0;
  double score = 0.0;
  double weight = 0.0;
};

std::vector<AssignmentRecord> to_records(std::span<const LeadLagAssignment> assignments, const FeaturePanel& panel);
std::vector<AssignmentRecord> read_assignments(const std::filesystem::path& path);

// Share of (target, date, rank) triples per lag.
std::map<std::size_t, double> lag_histogram(std::span<const AssignmentRecord> records);

struct Concentration {
  struct Day {
    Date date;
    std::size_t unique_leaders = 0;
    std::size_t unique_rank1_leaders = 0;
  };
  std::vector<Day> days;
  double mean_unique = 0.0;
  double mean_unique_rank1 = 0.0;
};

Concentration leader_concentration(std::span<const AssignmentRecord> records);

struct DetectionAccuracy {
  double pair = 0.0;
  double leader = 0.0;
  std::size_t evaluated = 0;  // (target, date) cases with a planted leader
};

// Scores the rank-1 pick of every (target, date) whose target is a planted lagger.
DetectionAccuracy detection_accuracy(std::span<const AssignmentRecord> records, const GroundTruth& truth);

struct DailyResult {
  std::size_t date = 0;
  std::size_t stocks = 0;
  std::optional<double> ic;
  std::optional<double> ls_return;
  std::vector<std::string> long_set;
  std::vector<std::string> short_set;
};

struct BacktestReport {
  std::vector<DailyResult> days;
  double ic_mean = 0.0;
  double ar = 0.0;
  std::optional<double> sr;
  std::vector<double> cumulative;  // over days with a long-short return
  std::map<std::size_t, double> lag_hist;
  Concentration concentration;
  std::vector<LeadLagAssignment> assignments;
  std::size_t skipped_targets = 0;
  std::size_t skipped_ic_dates = 0;
  std::size_t skipped_ls_dates = 0;
  std::optional<DetectionAccuracy> detection;
};

// Fills the metric fields from per-date predictions. `days` must be set.
void finalize_report(BacktestReport& report, const FeaturePanel& panel);

// Adds one evaluated cross-section to the report.
void add_cross_section(BacktestReport& report, const FeaturePanel& panel, const CrossSection& cs);

}  // namespace deltalag
