#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "deltalag/errors.hpp"
#include "deltalag/params.hpp"
#include "helpers.hpp"

using namespace deltalag;

TEST_CASE("parameter names are unique") {
  ParamSet p;
  p.add("w", Array(2, 2));
  CHECK_THROWS_AS(p.add("w", Array(1, 1)), ConfigError);
  CHECK(p.count() == 4);
  CHECK(p.grad("w").same_shape(p.value("w")));
}

TEST_CASE("adam leaves parameters alone under a zero gradient") {
  ParamSet p;
  p.add("w", Array(1, 3, {0.5, -1.0, 2.0}));
  const Array before = p.value("w");
  AdamState s;
  adam_step(p, s);
  CHECK(p.value("w") == before);
  CHECK(s.step == 1);
}

TEST_CASE("first adam step equals the bias-corrected formula") {
  ParamSet p;
  p.add("w", Array(1, 3, {0.5, -1.0, 2.0}));
  const double g[] = {0.3, -2.0, 1e-9};
  for (int i = 0; i < 3; ++i) p.grad("w")[i] = g[i];
  AdamConfig cfg;
  cfg.lr = 0.01;
  AdamState s(cfg);
  adam_step(p, s);
  for (int i = 0; i < 3; ++i) {
    // m_hat = g and v_hat = g^2 after one step.
    const double expected = (i == 0 ? 0.5 : i == 1 ? -1.0 : 2.0) - 0.01 * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(p.value("w")[i] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(p.grad("w")[i] == 0.0);
  }
}

TEST_CASE("adam is deterministic") {
  auto run = [] {
    ParamSet p;
    p.add("w", Array(2, 2, {1, 2, 3, 4}));
    AdamState s;
    for (int step = 0; step < 5; ++step) {
      for (std::size_t i = 0; i < 4; ++i) p.grad("w")[i] = std::sin(static_cast<double>(step + i));
      adam_step(p, s);
    }
    return p.value("w");
  };
  CHECK(run() == run());
}

TEST_CASE("grad_check is exact for a quadratic") {
  ParamSet p;
  p.add("theta", Array(1, 1, 3.0));
  const LossFn f = [](Tape& t, ParamSet& q) {
    Var th = q.bind(t, "theta");
    return ops::reduce_sum(ops::mul(th, th));
  };
  const GradCheckResult r = grad_check(f, p);
  CHECK(r.analytic == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(r.numeric == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(r.max_rel_error <= 1e-10);
  CHECK(p.value("theta").item() == 3.0);
}

TEST_CASE("initializers respect their bounds") {
  std::mt19937_64 rng(1);
  const Array x = xavier_uniform(10, 20, rng);
  const double a = std::sqrt(6.0 / 30.0);
  for (double v : x.values()) CHECK(std::abs(v) <= a);
  const Array s = scaled_uniform(8, 32, 8, rng);
  for (double v : s.values()) CHECK(std::abs(v) <= 1.0 / std::sqrt(8.0));
}

namespace {

ParamSet sample_params() {
  std::mt19937_64 rng(4);
  ParamSet p;
  p.add("encoder.w", testing::random_array(3, 5, rng));
  p.add("mlp.b", testing::random_array(1, 1, rng));
  p.add("odd", Array(2, 2, {std::nextafter(1.0, 2.0), -0.0, 1e-300, -7.5}));
  return p;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = testing::temp_dir("ckpt");
  const ParamSet p = sample_params();
  save_checkpoint(p, dir / "a.bin");
  const ParamSet q = load_checkpoint(dir / "a.bin");
  REQUIRE(q.names() == p.names());
  for (const auto& name : p.names()) {
    const Array& x = p.value(name);
    const Array& y = q.value(name);
    REQUIRE(x.same_shape(y));
    CHECK(std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("checkpoint header layout") {
  const auto dir = testing::temp_dir("ckpt_layout");
  ParamSet p;
  p.add("ab", Array(1, 2, {1.0, 2.0}));
  save_checkpoint(p, dir / "c.bin");
  const std::string bytes = testing::read_text(dir / "c.bin");
  // magic(8) count(4) len(4) name(2) rank(4) rows(8) cols(8) offset(8) payload_len(8) payload(16)
  REQUIRE(bytes.size() == 8 + 4 + 4 + 2 + 4 + 8 + 8 + 8 + 8 + 16);
  CHECK(bytes.substr(0, 8) == "DLCKPT01");
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);
  CHECK(bytes.substr(16, 2) == "ab");
  double first;
  std::memcpy(&first, bytes.data() + bytes.size() - 16, 8);
  CHECK(first == 1.0);
}

TEST_CASE("corrupted checkpoints raise format errors") {
  const auto dir = testing::temp_dir("ckpt_bad");
  save_checkpoint(sample_params(), dir / "ok.bin");
  const std::string bytes = testing::read_text(dir / "ok.bin");
  testing::write_text(dir / "trunc.bin", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.bin"), FormatError);
  testing::write_text(dir / "short.bin", bytes.substr(0, 20));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.bin"), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  testing::write_text(dir / "magic.bin", bad);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.bin"), FormatError);
  testing::write_text(dir / "extra.bin", bytes + "zz");
  CHECK_THROWS_AS(load_checkpoint(dir / "extra.bin"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), IoError);
}

TEST_CASE("loading into a mismatched layout names the parameter") {
  const auto dir = testing::temp_dir("ckpt_shape");
  save_checkpoint(sample_params(), dir / "p.bin");
  ParamSet other = sample_params();
  other.value("mlp.b") = Array(1, 2);
  other.grad("mlp.b") = Array(1, 2);
  try {
    load_checkpoint_into(other, dir / "p.bin");
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("mlp.b") != std::string::npos);
  }
  ParamSet fewer;
  fewer.add("encoder.w", Array(3, 5));
  CHECK_THROWS_AS(load_checkpoint_into(fewer, dir / "p.bin"), DimensionError);
  ParamSet same = sample_params();
  for (auto& e : same.entries()) e.value.fill(0.0);
  load_checkpoint_into(same, dir / "p.bin");
  CHECK(same.value("odd") == sample_params().value("odd"));
}
