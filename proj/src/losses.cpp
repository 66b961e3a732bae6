#include "deltalag/losses.hpp"

#include <cmath>

#include "deltalag/errors.hpp"

namespace deltalag {

namespace {

void check_batch(const Var& pred, const Array& realized) {
  const Array& p = pred.value();
  if (p.cols() != 1 || realized.cols() != 1 || p.rows() != realized.rows()) {
    throw DimensionError("loss: predictions " + shape_string(p) + " vs realized " + shape_string(realized));
  }
  if (p.rows() == 0) throw DimensionError("loss: empty cross-section");
  if (!realized.all_finite()) throw DomainError("loss: non-finite realized return");
}

// tanh(r_i - r_j) for the realized vector, as a constant.
Array realized_tanh_diff(const Array& r) {
  const std::size_t n = r.rows();
  Array d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) d(i, j) = std::tanh(r[i] - r[j]);
  }
  return d;
}

Array realized_diff(const Array& r) {
  const std::size_t n = r.rows();
  Array d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) d(i, j) = r[i] - r[j];
  }
  return d;
}

Var sampled_sum(Var terms, std::size_t n, const LossOptions& options, std::mt19937_64* rng) {
  if (options.pair_cap == 0 || n <= options.pair_cap) return ops::reduce_sum(terms);
  if (!rng) throw ContractError("pair subsampling needs a random generator");
  std::uniform_int_distribution<std::size_t> pick(0, n * n - 1);
  std::vector<std::size_t> idx(options.pair_samples);
  for (auto& i : idx) i = pick(*rng);
  Var sampled = ops::gather(terms, std::move(idx), options.pair_samples, 1);
  return ops::mul(ops::reduce_sum(sampled), static_cast<double>(n * n) / static_cast<double>(options.pair_samples));
}

Var pairwise_terms(Var pred, const Array& realized) {
  Var dp = ops::pairwise_diff(pred);
  Var dr = pred.tape->constant(realized_diff(realized));
  return ops::relu(ops::neg(ops::mul(dp, dr)));
}

Var monotonic_terms(Var pred, const Array& realized) {
  Var dp = ops::tanh(ops::pairwise_diff(pred));
  Var dr = pred.tape->constant(realized_tanh_diff(realized));
  return ops::log1p_exp(ops::neg(ops::mul(dp, dr)));
}

}  // namespace

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kMonotonic: return "monotonic";
    case LossKind::kPairwise: return "pairwise";
    case LossKind::kMse: return "mse";
    case LossKind::kIc: return "ic";
  }
  return "unknown";
}

LossKind parse_loss(const std::string& name) {
  for (LossKind k : {LossKind::kMonotonic, LossKind::kPairwise, LossKind::kMse, LossKind::kIc}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown loss '" + name + "' (expected monotonic, pairwise, mse or ic)");
}

Var pairwise_loss(Var pred, const Array& realized) {
  check_batch(pred, realized);
  return ops::reduce_sum(pairwise_terms(pred, realized));
}

Var monotonic_loss(Var pred, const Array& realized) {
  check_batch(pred, realized);
  return ops::reduce_sum(monotonic_terms(pred, realized));
}

Var mse_loss(Var pred, const Array& realized) {
  check_batch(pred, realized);
  Var d = ops::sub(pred, pred.tape->constant(realized));
  return ops::reduce_mean(ops::mul(d, d));
}

std::optional<Var> ic_loss(Var pred, const Array& realized) {
  check_batch(pred, realized);
  const std::size_t n = realized.rows();
  double mean_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_r += realized[i];
  mean_r /= static_cast<double>(n);
  Array rc(n, 1);
  double ss_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rc[i] = realized[i] - mean_r;
    ss_r += rc[i] * rc[i];
  }
  const Array& p = pred.value();
  bool constant_pred = true;
  for (std::size_t i = 1; i < n; ++i) constant_pred = constant_pred && p[i] == p[0];
  if (!(ss_r > 0.0) || constant_pred) return std::nullopt;

  Var pc = ops::sub(pred, ops::broadcast(ops::reduce_mean(pred), n, 1));
  Var cov = ops::reduce_sum(ops::mul(pc, pred.tape->constant(rc)));
  Var ss_p = ops::reduce_sum(ops::mul(pc, pc));
  Var denom = ops::mul(ops::sqrt(ss_p), std::sqrt(ss_r));
  return ops::neg(ops::div(cov, denom));
}

std::optional<Var> cross_section_loss(LossKind kind, Var pred, const Array& realized,
                                      const LossOptions& options, std::mt19937_64* rng) {
  switch (kind) {
    case LossKind::kMonotonic:
      check_batch(pred, realized);
      return sampled_sum(monotonic_terms(pred, realized), realized.rows(), options, rng);
    case LossKind::kPairwise:
      check_batch(pred, realized);
      return sampled_sum(pairwise_terms(pred, realized), realized.rows(), options, rng);
    case LossKind::kMse:
      return mse_loss(pred, realized);
    case LossKind::kIc:
      return ic_loss(pred, realized);
  }
  throw ContractError("unhandled loss kind");
}

std::optional<double> loss_value(LossKind kind, std::span<const double> pred, std::span<const double> realized) {
  if (pred.size() != realized.size()) throw DimensionError("loss_value: length mismatch");
  Tape tape(false);
  Var p = tape.constant(Array(pred.size(), 1, std::vector<double>(pred.begin(), pred.end())));
  Array r(realized.size(), 1, std::vector<double>(realized.begin(), realized.end()));
  auto v = cross_section_loss(kind, p, r);
  if (!v) return std::nullopt;
  return v->value().item();
}

}  // namespace deltalag
