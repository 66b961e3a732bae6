#include "deltalag/report.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "deltalag/errors.hpp"
#include "deltalag/format.hpp"

namespace deltalag {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

nlohmann::json optional_number(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

}  // namespace

BacktestReport run_backtest(const ModelConfig& model, ParamSet& params, const FeaturePanel& panel,
                            const DateRange& range, const GraphSource& graph, const GroundTruth* truth) {
  BacktestReport report;
  for (std::size_t t : Splits::forecast_dates(range)) {
    Tape tape(false);
    add_cross_section(report, panel, run_forward(tape, model, params, panel, t, graph));
  }
  finalize_report(report, panel);
  if (truth) {
    const auto records = to_records(report.assignments, panel);
    report.detection = detection_accuracy(records, *truth);
  }
  return report;
}

void write_lag_histogram(const std::map<std::size_t, double>& hist, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "lag,share\n";
  for (const auto& [lag, share] : hist) out << lag << ',' << format_double(share) << '\n';
}

void write_concentration(const Concentration& c, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "date,unique_leaders,unique_rank1_leaders\n";
  for (const auto& d : c.days) out << d.date.iso() << ',' << d.unique_leaders << ',' << d.unique_rank1_leaders << '\n';
}

void write_report(const BacktestReport& report, const FeaturePanel& panel, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::size_t ic_dates = 0, ls_dates = 0;
  for (const DailyResult& d : report.days) {
    ic_dates += d.ic ? 1 : 0;
    ls_dates += d.ls_return ? 1 : 0;
  }
  nlohmann::ordered_json summary;
  summary["ic_mean"] = optional_number(report.ic_mean);
  summary["ar"] = optional_number(report.ar);
  summary["sr"] = optional_number(report.sr);
  summary["n_dates"] = report.days.size();
  summary["n_ic_dates"] = ic_dates;
  summary["n_ls_dates"] = ls_dates;
  summary["skipped_targets"] = report.skipped_targets;
  summary["skipped_ic_dates"] = report.skipped_ic_dates;
  summary["skipped_ls_dates"] = report.skipped_ls_dates;
  summary["mean_unique_leaders"] = report.concentration.mean_unique;
  summary["mean_unique_rank1_leaders"] = report.concentration.mean_unique_rank1;
  if (report.detection) {
    summary["detection"] = {{"pair_accuracy", report.detection->pair},
                            {"leader_accuracy", report.detection->leader},
                            {"evaluated", report.detection->evaluated}};
  }
  {
    auto out = open_out(dir / "summary.json");
    out << summary.dump(2) << '\n';
  }
  {
    auto out = open_out(dir / "daily.csv");
    out << "date,ic,ls_return,cum_return\n";
    double cum = 0.0;
    for (const DailyResult& d : report.days) {
      if (d.ls_return) cum += *d.ls_return;
      out << panel.dates()[d.date].iso() << ',' << format_double(d.ic.value_or(std::nan(""))) << ','
          << format_double(d.ls_return.value_or(std::nan(""))) << ',' << format_double(cum) << '\n';
    }
  }
  write_lag_histogram(report.lag_hist, dir / "lag_histogram.csv");
  write_concentration(report.concentration, dir / "concentration.csv");
  write_assignments(report.assignments, panel, dir / "assignments.csv");
}

}  // namespace deltalag
