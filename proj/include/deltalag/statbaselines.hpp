#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deltalag/marketdata.hpp"
#include "deltalag/model.hpp"
#include "deltalag/tensor.hpp"

namespace deltalag {

inline constexpr std::size_t kGraphWindow = 250;
inline constexpr std::size_t kGraphRefresh = 20;

enum class GraphMode { kLag1, kLagAll };

std::string to_string(GraphMode m);
GraphMode parse_graph_mode(const std::string& name);

// Matrix entry (v, u) correlates the leader return on day s - tau + 1 with the
// lagger return on day s + 1, for s in [t - 1 - window, t - 2]; only data
// strictly before the as-of day t is read. Missing entries are NaN.
Array lagged_corr(const FeaturePanel& panel, std::size_t tau, std::size_t window, std::size_t as_of);

struct LaggedCorrGraph {
  std::size_t as_of = 0;
  std::size_t window = kGraphWindow;
  std::size_t lag_max = 1;       // lags 1 .. lag_max
  std::vector<Array> by_lag;     // by_lag[tau - 1] is |S| x |S|
};

LaggedCorrGraph build_graph(const FeaturePanel& panel, std::size_t lag_max, std::size_t window, std::size_t as_of);

struct OfflineSelection {
  LeadLagAssignment assignment;
  bool short_of_k = false;  // fewer than k entries were available
};

// Top-k leaders of target u from the graph: lag1 uses only the tau = 1 matrix,
// lagall uses every lag. Ordering and ties follow topk_select.
OfflineSelection select_leaders_offline(const LaggedCorrGraph& graph, std::size_t u, std::size_t k,
                                        GraphMode mode, std::size_t date = 0);

// Serves graphs for forecast dates: as-of days sit on a fixed refresh grid
// (multiples of `refresh`), or at `freeze_at` for every date when set.
class GraphSchedule {
 public:
  GraphSchedule(const FeaturePanel& panel, std::size_t lag_max, std::size_t window = kGraphWindow,
                std::size_t refresh = kGraphRefresh, std::optional<std::size_t> freeze_at = std::nullopt);

  std::size_t as_of_for(std::size_t t) const;
  const LaggedCorrGraph& graph_for(std::size_t t);
  // Assignments for every stock on forecast date t. Targets without any
  // available entry are omitted and counted in `warnings`.
  AssignmentMap assignments_for(std::size_t t, std::size_t k, GraphMode mode);
  std::size_t warnings() const { return warnings_; }
  const std::map<std::size_t, LaggedCorrGraph>& cache() const { return cache_; }
  void insert(LaggedCorrGraph graph);

 private:
  const FeaturePanel* panel_;
  std::size_t lag_max_;
  std::size_t window_;
  std::size_t refresh_;
  std::optional<std::size_t> freeze_at_;
  std::map<std::size_t, LaggedCorrGraph> cache_;
  std::size_t warnings_ = 0;
};

// Prediction through the shared signal/MLP path with detection frozen.
CrossSection predict_from_graph(Tape& tape, const ModelConfig& cfg, ParamSet& params, const FeaturePanel& panel,
                                std::size_t t, const AssignmentMap& assignments);

// CSV `as_of,leader,lagger,lag,corr`; only finite off-diagonal entries are written.
void write_graph_cache(const std::map<std::size_t, LaggedCorrGraph>& graphs, const FeaturePanel& panel,
                       const std::filesystem::path& path);
std::map<std::size_t, LaggedCorrGraph> read_graph_cache(const FeaturePanel& panel, std::size_t lag_max,
                                                        std::size_t window, const std::filesystem::path& path);

}  // namespace deltalag
