#pragma once

#include <filesystem>
#include <optional>

#include "deltalag/evaluation.hpp"
#include "deltalag/synthetic.hpp"
#include "deltalag/training.hpp"

namespace deltalag {

// Evaluates every forecast date of `range` and assembles the report.
BacktestReport run_backtest(const ModelConfig& model, ParamSet& params, const FeaturePanel& panel,
                            const DateRange& range, const GraphSource& graph = {},
                            const GroundTruth* truth = nullptr);

// Writes summary.json, daily.csv, lag_histogram.csv, concentration.csv and
// assignments.csv into `dir`.
void write_report(const BacktestReport& report, const FeaturePanel& panel, const std::filesystem::path& dir);

void write_lag_histogram(const std::map<std::size_t, double>& hist, const std::filesystem::path& path);
void write_concentration(const Concentration& c, const std::filesystem::path& path);

}  // namespace deltalag
