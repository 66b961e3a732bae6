#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "deltalag/errors.hpp"
#include "deltalag/params.hpp"
#include "deltalag/tensor.hpp"
#include "helpers.hpp"

using namespace deltalag;

TEST_CASE("array construction checks the value count") {
  CHECK_THROWS_AS(Array(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  Array a(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(a(1, 2) == 6);
  CHECK(shape_string(a) == "2x3");
  CHECK(Array::identity(3)(1, 1) == 1);
  CHECK(Array::identity(3)(0, 1) == 0);
}

TEST_CASE("matmul shape rule and mismatch") {
  Tape tape;
  Var a = tape.constant(Array(1, 4, 1.0));
  Var b = tape.constant(Array(4, 3, 2.0));
  Var c = ops::matmul(a, b);
  CHECK(c.rows() == 1);
  CHECK(c.cols() == 3);
  CHECK(c.value()(0, 2) == 8.0);
  CHECK_THROWS_AS(ops::matmul(b, b), DimensionError);
  CHECK_THROWS_AS(ops::add(a, b), DimensionError);
}

TEST_CASE("row_softmax of zeros is uniform") {
  Tape tape;
  Var s = ops::row_softmax(tape.constant(Array(1, 3, 0.0)));
  for (double v : s.value().values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("row_softmax rows sum to one and stay positive") {
  std::mt19937_64 rng(1);
  for (double scale : {1.0, 30.0, 300.0}) {
    Tape tape;
    Var s = ops::row_softmax(tape.constant(testing::random_array(6, 9, rng, scale)));
    for (std::size_t r = 0; r < 6; ++r) {
      double sum = 0.0;
      for (double v : s.value().row(r)) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
  Tape tape;
  Var s = ops::row_softmax(tape.constant(testing::random_array(4, 5, rng, 3.0)));
  for (double v : s.value().values()) CHECK(v > 0.0);
}

TEST_CASE("tanh at the origin") {
  Tape tape;
  Var x = tape.variable(Array(1, 1, 0.0));
  Var y = ops::tanh(x);
  CHECK(y.value().item() == 0.0);
  tape.backward(ops::reduce_sum(y));
  CHECK(x.grad().item() == 1.0);
}

TEST_CASE("log rejects non-positive input") {
  Tape tape;
  CHECK_THROWS_AS(ops::log(tape.constant(Array(1, 2, {1.0, 0.0}))), DomainError);
  CHECK_THROWS_AS(ops::log(tape.constant(Array(1, 1, -2.0))), DomainError);
  CHECK_THROWS_AS(ops::sqrt(tape.constant(Array(1, 1, -2.0))), DomainError);
}

TEST_CASE("backward requires a scalar loss on a tracing tape") {
  Tape tape;
  Var x = tape.variable(Array(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(x), ContractError);
  Tape off(false);
  Var y = off.variable(Array(1, 1, 1.0));
  CHECK_THROWS_AS(off.backward(y), ContractError);
}

TEST_CASE("gradients of simple functionals") {
  ParamSet params;
  params.add("w", Array(2, 3, {0.0, 0.0, 0.0, 0.0, 0.0, 0.0}));
  params.add("v", Array(1, 2, {1.0, 2.0}));

  SUBCASE("sum(W) gives all ones") {
    Tape tape;
    tape.backward(ops::reduce_sum(params.bind(tape, "w")));
    for (double g : params.grad("w").values()) CHECK(g == 1.0);
  }
  SUBCASE("a loss independent of W leaves its gradient zero") {
    Tape tape;
    Var w = params.bind(tape, "w");
    (void)w;
    tape.backward(ops::reduce_sum(ops::mul(params.bind(tape, "v"), 3.0)));
    for (double g : params.grad("w").values()) CHECK(g == 0.0);
    CHECK(params.grad("v")[0] == 3.0);
  }
  SUBCASE("sum(tanh(W)) at zero gives all ones") {
    Tape tape;
    tape.backward(ops::reduce_sum(ops::tanh(params.bind(tape, "w"))));
    for (double g : params.grad("w").values()) CHECK(g == 1.0);
  }
}

namespace {

// Weighted sum of the op output, so every output element carries a distinct adjoint.
double check_op(const std::function<Var(Tape&, ParamSet&)>& op, ParamSet& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Array weights;
  {
    Tape probe(false);
    const Array& out = op(probe, params).value();
    weights = testing::random_array(out.rows(), out.cols(), rng);
  }
  const LossFn f = [&](Tape& tape, ParamSet& p) {
    return ops::reduce_sum(ops::mul(op(tape, p), tape.constant(weights)));
  };
  return grad_check(f, params).max_rel_error;
}

Array away_from_zero(Array a, double margin) {
  for (double& v : a.values()) v = v >= 0 ? v + margin : v - margin;
  return a;
}

}  // namespace

TEST_CASE("every primitive adjoint matches central differences") {
  std::mt19937_64 rng(42);
  ParamSet p;
  p.add("a", away_from_zero(testing::random_array(3, 4, rng), 0.05));
  p.add("b", away_from_zero(testing::random_array(3, 4, rng), 0.05));
  p.add("m", testing::random_array(4, 2, rng));
  p.add("n", testing::random_array(5, 4, rng));
  p.add("row", testing::random_array(1, 4, rng));
  p.add("col", testing::random_array(3, 1, rng));
  p.add("s", Array(1, 1, 0.7));
  Array pos = testing::random_array(3, 4, rng);
  for (double& v : pos.values()) v = std::abs(v) + 0.5;
  p.add("pos", pos);

  using Op = std::function<Var(Tape&, ParamSet&)>;
  const std::vector<std::pair<std::string, Op>> cases = {
      {"matmul", [](Tape& t, ParamSet& q) { return ops::matmul(q.bind(t, "a"), q.bind(t, "m")); }},
      {"matmul_nt", [](Tape& t, ParamSet& q) { return ops::matmul_nt(q.bind(t, "a"), q.bind(t, "n")); }},
      {"add", [](Tape& t, ParamSet& q) { return ops::add(q.bind(t, "a"), q.bind(t, "b")); }},
      {"sub", [](Tape& t, ParamSet& q) { return ops::sub(q.bind(t, "a"), q.bind(t, "b")); }},
      {"mul", [](Tape& t, ParamSet& q) { return ops::mul(q.bind(t, "a"), q.bind(t, "b")); }},
      {"mul_scalar", [](Tape& t, ParamSet& q) { return ops::mul(q.bind(t, "a"), -1.7); }},
      {"div", [](Tape& t, ParamSet& q) { return ops::div(q.bind(t, "a"), q.bind(t, "pos")); }},
      {"add_scalar", [](Tape& t, ParamSet& q) { return ops::add_scalar(q.bind(t, "a"), 2.5); }},
      {"neg", [](Tape& t, ParamSet& q) { return ops::neg(q.bind(t, "a")); }},
      {"tanh", [](Tape& t, ParamSet& q) { return ops::tanh(q.bind(t, "a")); }},
      {"sigmoid", [](Tape& t, ParamSet& q) { return ops::sigmoid(q.bind(t, "a")); }},
      {"exp", [](Tape& t, ParamSet& q) { return ops::exp(q.bind(t, "a")); }},
      {"log", [](Tape& t, ParamSet& q) { return ops::log(q.bind(t, "pos")); }},
      {"sqrt", [](Tape& t, ParamSet& q) { return ops::sqrt(q.bind(t, "pos")); }},
      {"log1p_exp", [](Tape& t, ParamSet& q) { return ops::log1p_exp(ops::mul(q.bind(t, "a"), 10.0)); }},
      {"relu", [](Tape& t, ParamSet& q) { return ops::relu(q.bind(t, "a")); }},
      {"row_softmax", [](Tape& t, ParamSet& q) { return ops::row_softmax(q.bind(t, "a")); }},
      {"concat_rows",
       [](Tape& t, ParamSet& q) {
         const Var parts[] = {q.bind(t, "a"), q.bind(t, "n")};
         return ops::concat_rows(parts);
       }},
      {"concat_cols",
       [](Tape& t, ParamSet& q) {
         const Var parts[] = {q.bind(t, "a"), q.bind(t, "col")};
         return ops::concat_cols(parts);
       }},
      {"slice_rows", [](Tape& t, ParamSet& q) { return ops::slice_rows(q.bind(t, "n"), 1, 3); }},
      {"slice_cols", [](Tape& t, ParamSet& q) { return ops::slice_cols(q.bind(t, "a"), 1, 2); }},
      {"reduce_sum", [](Tape& t, ParamSet& q) { return ops::reduce_sum(q.bind(t, "a")); }},
      {"reduce_mean", [](Tape& t, ParamSet& q) { return ops::reduce_mean(q.bind(t, "a")); }},
      {"add_row", [](Tape& t, ParamSet& q) { return ops::add_row(q.bind(t, "a"), q.bind(t, "row")); }},
      {"scale_rows", [](Tape& t, ParamSet& q) { return ops::scale_rows(q.bind(t, "a"), q.bind(t, "col")); }},
      {"broadcast", [](Tape& t, ParamSet& q) { return ops::broadcast(q.bind(t, "s"), 2, 3); }},
      {"pairwise_diff", [](Tape& t, ParamSet& q) { return ops::pairwise_diff(q.bind(t, "col")); }},
      {"gather",
       [](Tape& t, ParamSet& q) { return ops::gather(q.bind(t, "a"), {0, 5, 5, 11, 3, 7}, 2, 3); }},
  };
  for (const auto& [name, op] : cases) {
    CAPTURE(name);
    CHECK(check_op(op, p, 7) <= 1e-6);
  }
}

TEST_CASE("tape replay is deterministic") {
  std::mt19937_64 rng(3);
  ParamSet p;
  p.add("a", testing::random_array(4, 4, rng));
  p.add("b", testing::random_array(4, 1, rng));
  auto run = [&]() {
    p.zero_grad();
    Tape tape;
    Var h = ops::tanh(ops::matmul(p.bind(tape, "a"), p.bind(tape, "b")));
    tape.backward(ops::reduce_sum(ops::log1p_exp(h)));
    return std::make_pair(p.grad("a"), p.grad("b"));
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}

TEST_CASE("a non-tracing tape records no gradients") {
  Tape tape(false);
  Var x = tape.variable(Array(1, 1, 2.0));
  Var y = ops::exp(x);
  CHECK(y.value().item() == doctest::Approx(std::exp(2.0)));
}

TEST_CASE("fault injection corrupts the targeted adjoint") {
  ParamSet p;
  p.add("w", Array(1, 2, {0.3, -0.2}));
  const LossFn f = [](Tape& t, ParamSet& q) { return ops::reduce_sum(ops::tanh(q.bind(t, "w"))); };
  fault::inject(fault::Kind::kTanhAdjoint);
  const double broken = grad_check(f, p).max_rel_error;
  fault::inject(fault::Kind::kNone);
  CHECK(broken > 1e-2);
  CHECK(grad_check(f, p).max_rel_error <= 1e-9);
}
