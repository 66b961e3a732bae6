#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deltalag/marketdata.hpp"
#include "deltalag/params.hpp"
#include "deltalag/tensor.hpp"

namespace deltalag {

enum class Variant {
  kDeltaLag,    // candidates S \ {u}, lags 1..l_max
  kLag1Net,     // candidates S \ {u}, final-timestep key only (lag 1)
  kSelfLagNet,  // candidate {u}, lags 1..l_max
  kSelfLag1,    // no attention, z = x_{u,t}
  kFrozenGraph, // externally supplied assignments, MLP only
};

enum class SignalMode { kRaw, kEmbedding };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
std::string to_string(SignalMode m);
SignalMode parse_signal_mode(const std::string& name);

struct ModelConfig {
  std::size_t window = 30;      // L
  std::size_t lag_max = 10;     // l_max
  std::size_t hidden = 64;      // N
  std::size_t features = 6;     // F
  std::size_t k = 2;
  Variant variant = Variant::kDeltaLag;
  SignalMode signal = SignalMode::kRaw;
  std::vector<std::size_t> mlp_hidden{32};
};

// Throws ConfigError on violated invariants. `stocks` adds the k bound when known.
void validate(const ModelConfig& cfg, std::optional<std::size_t> stocks = std::nullopt);

bool uses_encoder(const ModelConfig& cfg);
bool uses_attention(const ModelConfig& cfg);
// Dimension of the aggregated signal z fed to the MLP.
std::size_t signal_size(const ModelConfig& cfg);

struct AttentionNames {
  static constexpr const char* kQuery = "attention.w_query";  // N x N
  static constexpr const char* kKey = "attention.w_key";      // N x N
};
// MLP parameters are "mlp.w<i>" / "mlp.b<i>", i = 0 .. hidden layers (last is the output).
std::string mlp_weight_name(std::size_t layer);
std::string mlp_bias_name(std::size_t layer);

ParamSet init_params(const ModelConfig& cfg, std::mt19937_64& rng);
// Throws DimensionError naming the first parameter whose shape disagrees.
void check_params(const ModelConfig& cfg, const ParamSet& params);

// Score matrix of one target on one date. Row i belongs to candidates[i]
// (ascending stock index); column j is lag cols - j. Missing entries are NaN.
struct AttentionMatrix {
  std::size_t target = 0;
  std::size_t date = 0;
  std::vector<std::size_t> candidates;
  Array scores;

  std::size_t lag_of_column(std::size_t j) const { return scores.cols() - j; }
};

struct Selection {
  std::size_t leader = 0;  // stock index
  std::size_t lag = 0;
  double score = 0.0;
  friend bool operator==(const Selection&, const Selection&) = default;
};

struct LeadLagAssignment {
  std::size_t target = 0;
  std::size_t date = 0;
  std::vector<Selection> picks;  // descending score
  std::vector<double> weights;   // softmax over pick scores
};

struct SelectedPosition {
  std::size_t row = 0;
  std::size_t col = 0;
};

// Positions of the k largest finite entries: score descending, then smaller
// row, then smaller column. Returns fewer when fewer finite entries exist.
std::vector<SelectedPosition> topk_positions(const Array& scores, std::size_t k);
LeadLagAssignment topk_select(const AttentionMatrix& a, std::size_t k);

std::vector<double> softmax(std::span<const double> scores);

// Single-target building blocks.
Var make_query(Var embeddings, Var w_query);                      // 1 x N
Var make_keys(Var embeddings, Var w_key, std::size_t lag_max);    // l_max x N
Var attention_scores(Var query, std::span<const Var> keys);       // |C| x l_max
// z = sum_m softmax(scores)_m * vectors[m]; scores is 1 x k, vectors are 1 x D.
Var aggregate_signal(Var scores, std::span<const Var> vectors);
Var predict(Var z, ParamSet& params, std::size_t hidden_layers);  // B x 1

struct SkipEntry {
  std::size_t date = 0;
  std::size_t stock = 0;
  std::string reason;
};

using AssignmentMap = std::map<std::size_t, LeadLagAssignment>;  // by target

struct ForwardOptions {
  // Reuse these (leader, lag) positions instead of running top-k; the scores
  // are still computed by the network. Targets absent from the map are skipped.
  const AssignmentMap* frozen_positions = nullptr;
  // Assignments for Variant::kFrozenGraph (scores taken as given).
  const AssignmentMap* graph = nullptr;
};

struct CrossSection {
  std::size_t date = 0;
  std::vector<std::size_t> targets;  // stock indices, ascending
  Var predictions;                   // targets x 1; unset when targets is empty
  Array labels;                      // targets x 1 realized next-day returns
  std::vector<LeadLagAssignment> assignments;  // aligned with targets; empty for selflag1
  std::vector<SkipEntry> skipped;
};

// All valid targets on date t: stocks with a full window ending at t and a
// known next-day return.
CrossSection forward_cross_section(Tape& tape, const ModelConfig& cfg, ParamSet& params,
                                   const FeaturePanel& panel, std::size_t t,
                                   const ForwardOptions& options = {});

// CSV `date,target,rank,leader,lag,score,weight`; rank starts at 1.
void write_assignments(std::span<const LeadLagAssignment> assignments, const FeaturePanel& panel,
                       const std::filesystem::path& path);

}  // namespace deltalag
