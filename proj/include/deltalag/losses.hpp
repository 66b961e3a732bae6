#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "deltalag/tensor.hpp"

namespace deltalag {

enum class LossKind { kMonotonic, kPairwise, kMse, kIc };

std::string to_string(LossKind k);
LossKind parse_loss(const std::string& name);

// Cross-sectional losses over one date. `pred` is N x 1 on a tape, `realized`
// is N x 1. Pairwise sums run over all ordered pairs including i = j.
Var pairwise_loss(Var pred, const Array& realized);
Var monotonic_loss(Var pred, const Array& realized);
Var mse_loss(Var pred, const Array& realized);
// Negative Pearson correlation; nullopt when either vector has zero variance.
std::optional<Var> ic_loss(Var pred, const Array& realized);

struct LossOptions {
  // Above this cross-section size the pair losses use `pair_samples` uniformly
  // drawn ordered pairs, rescaled to the full pair count. 0 disables sampling.
  std::size_t pair_cap = 0;
  std::size_t pair_samples = 512 * 512;
};

// Dispatches on `kind`; nullopt when the date must be skipped.
std::optional<Var> cross_section_loss(LossKind kind, Var pred, const Array& realized,
                                      const LossOptions& options = {}, std::mt19937_64* rng = nullptr);

// Convenience evaluation on plain vectors (no gradients).
std::optional<double> loss_value(LossKind kind, std::span<const double> pred, std::span<const double> realized);

}  // namespace deltalag
