#include "deltalag/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "deltalag/errors.hpp"
#include "deltalag/kernels.hpp"

namespace deltalag {

Array::Array(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw DimensionError("array of shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " given " + std::to_string(values_.size()) + " values");
  }
}

Array Array::identity(std::size_t n) {
  Array a(n, n);
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  return a;
}

double Array::item() const {
  if (size() != 1) throw DimensionError("item() on array of shape " + shape_string(*this));
  return values_[0];
}

void Array::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Array::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const Array& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

const Array& Var::value() const { return tape->value(id); }
const Array& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Array value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, false, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Array value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, tracing_, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(const Array& value, Array* grad_sink) {
  if (grad_sink && !grad_sink->same_shape(value)) {
    throw DimensionError("gradient sink shape " + shape_string(*grad_sink) +
                         " differs from parameter shape " + shape_string(value));
  }
  nodes_.push_back(Node{value, {}, nullptr, tracing_ ? grad_sink : nullptr, tracing_, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Array value, std::initializer_list<std::size_t> inputs, BackwardFn fn) {
  bool any = false;
  if (tracing_) {
    for (std::size_t in : inputs) any = any || nodes_[in].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, any ? std::move(fn) : nullptr, nullptr, any, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Array value, const std::vector<std::size_t>& inputs, BackwardFn fn) {
  bool any = false;
  if (tracing_) {
    for (std::size_t in : inputs) any = any || nodes_[in].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, any ? std::move(fn) : nullptr, nullptr, any, false});
  return Var{this, nodes_.size() - 1};
}

const Array& Tape::grad(std::size_t id) const {
  static const Array kEmpty;
  const Node& n = nodes_[id];
  return n.has_grad ? n.grad : kEmpty;
}

Array& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Array(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss recorded on another tape");
  if (!tracing_) throw ContractError("backward: tape is not tracing");
  const Array& lv = nodes_[loss.id].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + shape_string(lv));
  }
  grad_buffer(loss.id)[0] += 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.sink && n.has_grad) {
      double* dst = n.sink->data();
      const double* src = n.grad.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += src[i];
    }
  }
}

namespace fault {
namespace {
std::atomic<Kind> g_kind{Kind::kNone};
}
void inject(Kind kind) { g_kind.store(kind); }
Kind active() { return g_kind.load(); }
}  // namespace fault

namespace ops {

namespace {

void require_same_shape(const Array& a, const Array& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
}

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands recorded on different tapes");
}

// Elementwise unary op; deriv(x, y) returns dy/dx.
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Array& x = a.value();
  Array y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia, deriv](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Array& xv = t.value(ia);
    const Array& yv = t.value(self);
    const Array& gy = t.grad(self);
    Array& gx = t.grad_buffer(ia);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape_string(av) + " by " + shape_string(bv));
  }
  Array c(av.rows(), bv.cols());
  kernels::matmul(av.data(), bv.data(), c.data(), av.rows(), av.cols(), bv.cols());
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(c), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Array& A = t.value(ia);
    const Array& B = t.value(ib);
    const Array& G = t.grad(self);
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (t.needs_grad(ia)) {
      kernels::matmul_nt(G.data(), B.data(), t.grad_buffer(ia).data(), m, n, k, true);
    }
    if (t.needs_grad(ib)) {
      if (fault::active() == fault::Kind::kMatmulRhsAdjoint) {
        Array tmp(k, n);
        kernels::matmul_tn(A.data(), G.data(), tmp.data(), k, m, n);
        Array& gb = t.grad_buffer(ib);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += 1.5 * tmp[i];
      } else {
        kernels::matmul_tn(A.data(), G.data(), t.grad_buffer(ib).data(), k, m, n, true);
      }
    }
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("matmul_nt: " + shape_string(av) + " by transpose of " + shape_string(bv));
  }
  Array c(av.rows(), bv.rows());
  kernels::matmul_nt(av.data(), bv.data(), c.data(), av.rows(), av.cols(), bv.rows());
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(c), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Array& A = t.value(ia);
    const Array& B = t.value(ib);
    const Array& G = t.grad(self);
    const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
    if (t.needs_grad(ia)) {
      kernels::matmul(G.data(), B.data(), t.grad_buffer(ia).data(), m, n, k, true);
    }
    if (t.needs_grad(ib)) {
      kernels::matmul_tn(G.data(), A.data(), t.grad_buffer(ib).data(), n, m, k, true);
    }
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Array c = a.value();
  const Array& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(c), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Array& G = t.grad(self);
    for (std::size_t in : {ia, ib}) {
      if (!t.needs_grad(in)) continue;
      Array& g = t.grad_buffer(in);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Array c = a.value();
  const Array& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(c), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Array& G = t.grad(self);
    if (t.needs_grad(ia)) {
      Array& g = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
    }
    if (t.needs_grad(ib)) {
      Array& g = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= G[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Array c = a.value();
  const Array& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(c), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Array& G = t.grad(self);
    if (t.needs_grad(ia)) {
      const Array& B = t.value(ib);
      Array& g = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * B[i];
    }
    if (t.needs_grad(ib)) {
      const Array& A = t.value(ia);
      Array& g = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * A[i];
    }
  });
}

Var mul(Var a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var div(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "div");
  Array c = a.value();
  const Array& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (bv[i] == 0.0) throw DomainError("div: division by zero");
    c[i] /= bv[i];
  }
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(c), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Array& G = t.grad(self);
    const Array& B = t.value(ib);
    if (t.needs_grad(ia)) {
      Array& g = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] / B[i];
    }
    if (t.needs_grad(ib)) {
      const Array& Y = t.value(self);
      Array& g = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= G[i] * Y[i] / B[i];
    }
  });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(Var a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var tanh(Var a) {
  const double scale = fault::active() == fault::Kind::kTanhAdjoint ? 1.5 : 1.0;
  return unary(a, [](double x) { return std::tanh(x); },
               [scale](double, double y) { return scale * (1.0 - y * y); });
}

Var sigmoid(Var a) {
  return unary(a,
               [](double x) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  for (double v : a.value().values()) {
    if (!(v >= 0.0)) throw DomainError("sqrt of negative value " + std::to_string(v));
  }
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var log1p_exp(Var a) {
  return unary(a,
               [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
               [](double x, double) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var row_softmax(Var a) {
  const Array& x = a.value();
  Array y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto yr = y.row(r);
    const double mx = *std::max_element(xr.begin(), xr.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < xr.size(); ++c) {
      yr[c] = std::exp(xr[c] - mx);
      sum += yr[c];
    }
    for (double& v : yr) v /= sum;
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const Array& Y = t.value(self);
    const Array& G = t.grad(self);
    Array& gx = t.grad_buffer(ia);
    for (std::size_t r = 0; r < Y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < Y.cols(); ++c) dot += G(r, c) * Y(r, c);
      for (std::size_t c = 0; c < Y.cols(); ++c) gx(r, c) += Y(r, c) * (G(r, c) - dot);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.tape != parts[0].tape) throw ContractError("operands recorded on different tapes");
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.rows();
    ids.push_back(p.id);
  }
  Array out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Array& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + offset);
    offset += v.size();
  }
  return parts[0].tape->record(std::move(out), ids, [ids](Tape& t, std::size_t self) {
    const Array& G = t.grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t n = t.value(id).size();
      if (t.needs_grad(id)) {
        Array& g = t.grad_buffer(id);
        for (std::size_t i = 0; i < n; ++i) g[i] += G[off + i];
      }
      off += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.tape != parts[0].tape) throw ContractError("operands recorded on different tapes");
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
    ids.push_back(p.id);
  }
  Array out(rows, cols);
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const Array& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, c0 + c) = v(r, c);
    }
    c0 += v.cols();
  }
  return parts[0].tape->record(std::move(out), ids, [ids](Tape& t, std::size_t self) {
    const Array& G = t.grad(self);
    std::size_t c0 = 0;
    for (std::size_t id : ids) {
      const std::size_t w = t.value(id).cols();
      if (t.needs_grad(id)) {
        Array& g = t.grad_buffer(id);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < w; ++c) g(r, c) += G(r, c0 + c);
        }
      }
      c0 += w;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Array& x = a.value();
  if (begin + count > x.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of " + shape_string(x));
  }
  Array out(count, x.cols());
  std::copy(x.data() + begin * x.cols(), x.data() + (begin + count) * x.cols(), out.data());
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, begin](Tape& t, std::size_t self) {
    const Array& G = t.grad(self);
    Array& g = t.grad_buffer(ia);
    const std::size_t off = begin * g.cols();
    for (std::size_t i = 0; i < G.size(); ++i) g[off + i] += G[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Array& x = a.value();
  if (begin + count > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of " + shape_string(x));
  }
  Array out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, begin + c);
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, begin](Tape& t, std::size_t self) {
    const Array& G = t.grad(self);
    Array& g = t.grad_buffer(ia);
    for (std::size_t r = 0; r < G.rows(); ++r) {
      for (std::size_t c = 0; c < G.cols(); ++c) g(r, begin + c) += G(r, c);
    }
  });
}

Var reduce_sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id;
  return a.tape->record(Array::scalar(s), {ia}, [ia](Tape& t, std::size_t self) {
    const double g0 = t.grad(self)[0];
    Array& g = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0;
  });
}

Var reduce_mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("reduce_mean of empty array");
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id;
  return a.tape->record(Array::scalar(s / static_cast<double>(n)), {ia},
                        [ia, n](Tape& t, std::size_t self) {
                          const double g0 = t.grad(self)[0] / static_cast<double>(n);
                          Array& g = t.grad_buffer(ia);
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0;
                        });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  const Array& x = a.value();
  const Array& b = row.value();
  if (b.rows() != 1 || b.cols() != x.cols()) {
    throw DimensionError("add_row: " + shape_string(x) + " + row " + shape_string(b));
  }
  Array out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += b[c];
  }
  const std::size_t ia = a.id, ib = row.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Array& G = t.grad(self);
    if (t.needs_grad(ia)) {
      Array& g = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
    }
    if (t.needs_grad(ib)) {
      Array& g = t.grad_buffer(ib);
      for (std::size_t r = 0; r < G.rows(); ++r) {
        for (std::size_t c = 0; c < G.cols(); ++c) g[c] += G(r, c);
      }
    }
  });
}

Var scale_rows(Var a, Var s) {
  require_same_tape(a, s);
  const Array& x = a.value();
  const Array& sv = s.value();
  if (sv.rows() != x.rows() || sv.cols() != 1) {
    throw DimensionError("scale_rows: " + shape_string(x) + " by " + shape_string(sv));
  }
  Array out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= sv[r];
  }
  const std::size_t ia = a.id, is = s.id;
  return a.tape->record(std::move(out), {ia, is}, [ia, is](Tape& t, std::size_t self) {
    const Array& G = t.grad(self);
    if (t.needs_grad(ia)) {
      const Array& S = t.value(is);
      Array& g = t.grad_buffer(ia);
      for (std::size_t r = 0; r < G.rows(); ++r) {
        for (std::size_t c = 0; c < G.cols(); ++c) g(r, c) += G(r, c) * S[r];
      }
    }
    if (t.needs_grad(is)) {
      const Array& A = t.value(ia);
      Array& g = t.grad_buffer(is);
      for (std::size_t r = 0; r < G.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < G.cols(); ++c) acc += G(r, c) * A(r, c);
        g[r] += acc;
      }
    }
  });
}

Var broadcast(Var s, std::size_t rows, std::size_t cols) {
  if (s.value().size() != 1) throw DimensionError("broadcast: source must be 1x1");
  Array out(rows, cols, s.value()[0]);
  const std::size_t is = s.id;
  return s.tape->record(std::move(out), {is}, [is](Tape& t, std::size_t self) {
    double acc = 0.0;
    for (double v : t.grad(self).values()) acc += v;
    t.grad_buffer(is)[0] += acc;
  });
}

Var pairwise_diff(Var v) {
  const Array& x = v.value();
  if (x.cols() != 1) throw DimensionError("pairwise_diff: expected n x 1, got " + shape_string(x));
  const std::size_t n = x.rows();
  Array out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out(i, j) = x[i] - x[j];
  }
  const std::size_t iv = v.id;
  return v.tape->record(std::move(out), {iv}, [iv, n](Tape& t, std::size_t self) {
    const Array& G = t.grad(self);
    Array& g = t.grad_buffer(iv);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        g[i] += G(i, j);
        g[j] -= G(i, j);
      }
    }
  });
}

Var gather(Var a, std::vector<std::size_t> index, std::size_t rows, std::size_t cols) {
  const Array& x = a.value();
  if (index.size() != rows * cols) throw DimensionError("gather: index count != rows*cols");
  Array out(rows, cols);
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= x.size()) throw DimensionError("gather: index out of range");
    out[e] = x[index[e]];
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia, index = std::move(index)](Tape& t, std::size_t self) {
                          const Array& G = t.grad(self);
                          Array& g = t.grad_buffer(ia);
                          for (std::size_t e = 0; e < index.size(); ++e) g[index[e]] += G[e];
                        });
}

}  // namespace ops

}  // namespace deltalag
