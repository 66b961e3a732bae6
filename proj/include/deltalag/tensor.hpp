#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace deltalag {

// Row-major 2-D array of doubles. Vectors are 1 x n or n x 1.
class Array {
 public:
  Array() = default;
  Array(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Array(std::size_t rows, std::size_t cols, std::vector<double> values);
  Array(std::size_t rows, std::size_t cols, std::initializer_list<double> values)
      : Array(rows, cols, std::vector<double>(values)) {}

  static Array scalar(double v) { return Array(1, 1, v); }
  static Array identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
  bool same_shape(const Array& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }

  double item() const;  // value of a 1 x 1 array
  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Array&, const Array&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

std::string shape_string(const Array& a);

class Tape;

// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Array& value() const;
  const Array& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Linear record of array operations for reverse-mode differentiation. Node ids
// increase in creation order, which is a valid topological order, so backward
// is a single reverse sweep.
class Tape {
 public:
  explicit Tape(bool tracing = true) : tracing_(tracing) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool tracing() const { return tracing_; }

  // Leaf that never receives a gradient.
  Var constant(Array value);
  // Leaf whose gradient is kept on the tape (read it with Var::grad()).
  Var variable(Array value);
  // Leaf bound to an external gradient accumulator: after backward() the
  // node's adjoint is added into *grad_sink.
  Var parameter(const Array& value, Array* grad_sink);

  // Seeds d(loss)/d(loss) = 1 and propagates adjoints to every recorded input.
  // Throws ContractError if loss is not 1 x 1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // --- used by operation implementations ---
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;
  Var record(Array value, std::initializer_list<std::size_t> inputs, BackwardFn fn);
  Var record(Array value, const std::vector<std::size_t>& inputs, BackwardFn fn);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const Array& value(std::size_t id) const { return nodes_[id].value; }
  const Array& grad(std::size_t id) const;
  // Adjoint buffer of a node, allocated as zeros on first use.
  Array& grad_buffer(std::size_t id);

 private:
  struct Node {
    Array value;
    Array grad;
    BackwardFn backward;
    Array* sink = nullptr;
    bool needs_grad = false;
    bool has_grad = false;
  };

  bool tracing_;
  std::deque<Node> nodes_;  // stable references across appends
};

// Test hooks that deliberately break an adjoint so the gradient checker's
// sensitivity can be exercised end to end.
namespace fault {
enum class Kind { kNone, kTanhAdjoint, kMatmulRhsAdjoint };
void inject(Kind kind);
Kind active();
}  // namespace fault

namespace ops {

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);        // elementwise
Var mul(Var a, double s);
Var div(Var a, Var b);        // elementwise
Var add_scalar(Var a, double s);
Var neg(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);               // DomainError on non-positive input
Var sqrt(Var a);              // DomainError on negative input
Var log1p_exp(Var a);         // softplus, max(x,0) + log1p(exp(-|x|))
Var relu(Var a);
Var row_softmax(Var a);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var reduce_sum(Var a);        // -> 1 x 1
Var reduce_mean(Var a);       // -> 1 x 1
Var add_row(Var a, Var row);  // a[n x m] + row[1 x m] broadcast over rows
Var scale_rows(Var a, Var s); // a[n x m] * s[n x 1] broadcast over columns
Var broadcast(Var s, std::size_t rows, std::size_t cols);  // 1 x 1 -> rows x cols
Var pairwise_diff(Var v);     // v[n x 1] -> d[n x n], d(i,j) = v(i) - v(j)
// out has shape rows x cols; element e is a.flat[index[e]]. Adjoint scatters.
Var gather(Var a, std::vector<std::size_t> index, std::size_t rows, std::size_t cols);

}  // namespace ops

}  // namespace deltalag
