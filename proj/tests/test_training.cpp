#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "deltalag/errors.hpp"
#include "deltalag/training.hpp"
#include "helpers.hpp"

using namespace deltalag;

namespace {

ModelConfig small_model(Variant v = Variant::kDeltaLag) {
  ModelConfig c;
  c.window = 6;
  c.lag_max = 3;
  c.hidden = 4;
  c.k = 2;
  c.variant = v;
  c.mlp_hidden = {5};
  return c;
}

TrainConfig small_train(std::size_t epochs = 3) {
  TrainConfig t;
  t.epochs = epochs;
  t.patience = epochs;
  t.seed = 7;
  return t;
}

const FeaturePanel& panel() {
  static const FeaturePanel p = testing::synthetic_panel(testing::tiny_spec(44));
  return p;
}

ParamSet fresh(const ModelConfig& m, std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  return init_params(m, rng);
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(validate(c));
  c.patience = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = TrainConfig{};
  c.adam.lr = 0.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = TrainConfig{};
  c.adam.beta2 = 1.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("early stopping with patience one stops after the first worse epoch") {
  EarlyStopper s(1);
  CHECK_FALSE(s.update(0.30));
  CHECK(s.improved());
  CHECK(s.update(0.20));
  CHECK_FALSE(s.improved());
  CHECK(s.best() == 0.30);

  EarlyStopper p(3);
  CHECK_FALSE(p.update(0.1));
  CHECK_FALSE(p.update(0.05));
  CHECK_FALSE(p.update(0.2));
  CHECK(p.improved());
  CHECK_FALSE(p.update(0.2));
  CHECK_FALSE(p.update(0.1));
  CHECK(p.update(0.0));

  EarlyStopper n(2);
  CHECK_FALSE(n.update(std::numeric_limits<double>::quiet_NaN()));
  CHECK(n.improved());
  CHECK_FALSE(n.update(-0.5));
  CHECK(n.improved());
}

TEST_CASE("returned parameters belong to the best epoch") {
  const ModelConfig m = small_model();
  const Splits s = split_at(panel().days(), 59, 74);
  TrainConfig c = small_train(6);
  c.patience = 1;
  const TrainResult r = train(m, c, panel(), s, fresh(m));
  REQUIRE(r.history.best_epoch >= 1);
  const EpochRecord& best = r.history.epochs.at(r.history.best_epoch - 1);
  CHECK(best.is_best);
  std::size_t marked = 0;
  for (const auto& e : r.history.epochs) {
    marked += e.is_best ? 1 : 0;
    if (!std::isnan(e.val_ic)) CHECK(e.val_ic <= best.val_ic);
  }
  CHECK(marked == 1);
  // Patience 1: the run ends one epoch after the best unless it hit the cap.
  if (r.history.epochs.size() < c.epochs) CHECK(r.history.epochs.size() == r.history.best_epoch + 1);
  ParamSet p = r.params;
  CHECK(mean_ic(m, p, panel(), s.validation) == best.val_ic);
}

TEST_CASE("training is deterministic") {
  const ModelConfig m = small_model();
  const Splits s = split_at(panel().days(), 59, 74);
  const TrainResult a = train(m, small_train(), panel(), s, fresh(m));
  const TrainResult b = train(m, small_train(), panel(), s, fresh(m));
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    CHECK(a.history.epochs[i].train_loss == b.history.epochs[i].train_loss);
    CHECK(a.history.epochs[i].val_ic == b.history.epochs[i].val_ic);
  }
  CHECK(a.params == b.params);
  const auto dir = testing::temp_dir("history");
  write_history(a.history, dir / "a.csv");
  write_history(b.history, dir / "b.csv");
  CHECK(testing::read_text(dir / "a.csv") == testing::read_text(dir / "b.csv"));
  CHECK(testing::read_text(dir / "a.csv").rfind("epoch,train_loss,val_ic,is_best\n1,", 0) == 0);
}

TEST_CASE("training never touches test labels") {
  const ModelConfig m = small_model();
  const Splits s = split_at(panel().days(), 59, 74);
  std::size_t max_label_day = 0, calls = 0;
  TrainHooks hooks;
  hooks.on_forward = [&](std::size_t t) {
    max_label_day = std::max(max_label_day, t + 1);
    ++calls;
  };
  train(m, small_train(2), panel(), s, fresh(m), {}, hooks);
  CHECK(calls > 0);
  CHECK(max_label_day < s.test.begin);
  CHECK(max_label_day == s.validation.end - 1);
}

TEST_CASE("loss on one repeated date does not increase early on") {
  const ModelConfig m = small_model();
  Splits s = split_at(panel().days(), 59, 74);
  s.train = DateRange{41, 42};  // forecast date 40 only
  TrainConfig c = small_train(10);
  c.adam.lr = 1e-4;
  std::vector<double> losses;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) { losses.push_back(e.train_loss); };
  train(m, c, panel(), s, fresh(m), {}, hooks);
  REQUIRE(losses.size() == 10);
  for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1]);
}

TEST_CASE("a training range without usable dates is an error") {
  const ModelConfig m = small_model();
  Splits s = split_at(panel().days(), 59, 74);
  s.train = DateRange{0, 4};  // windows of length 6 do not exist yet
  CHECK_THROWS_AS(train(m, small_train(), panel(), s, fresh(m)), TrainingError);
  s.train = DateRange{0, 1};
  CHECK_THROWS_AS(train(m, small_train(), panel(), s, fresh(m)), TrainingError);
}

TEST_CASE("mismatched initial parameters are rejected") {
  const ModelConfig m = small_model();
  const Splits s = split_at(panel().days(), 59, 74);
  CHECK_THROWS_AS(train(m, small_train(), panel(), s, fresh(small_model(Variant::kSelfLag1))), DimensionError);
}

TEST_CASE("every loss and variant trains end to end") {
  const Splits s = split_at(panel().days(), 59, 74);
  for (Variant v : {Variant::kDeltaLag, Variant::kLag1Net, Variant::kSelfLagNet, Variant::kSelfLag1}) {
    for (LossKind k : {LossKind::kMonotonic, LossKind::kPairwise, LossKind::kMse, LossKind::kIc}) {
      const ModelConfig m = small_model(v);
      TrainConfig c = small_train(1);
      c.loss = k;
      const TrainResult r = train(m, c, panel(), s, fresh(m));
      REQUIRE(r.history.epochs.size() == 1);
      CHECK(std::isfinite(r.history.epochs[0].train_loss));
      CHECK(r.history.epochs[0].train_dates > 0);
    }
  }
}

TEST_CASE("correlation-graph variant trains only the head") {
  const FeaturePanel& p = panel();
  const Splits s = split_at(p.days(), 59, 74);
  ModelConfig m = small_model(Variant::kFrozenGraph);
  GraphSchedule schedule(p, m.lag_max, 30, 10);
  GraphSource g{&schedule, GraphMode::kLagAll};
  const TrainResult r = train(m, small_train(2), p, s, fresh(m), g);
  CHECK_FALSE(r.params.contains(AttentionNames::kQuery));
  CHECK(r.history.epochs.front().train_dates > 0);
  CHECK_THROWS_AS(train(m, small_train(1), p, s, fresh(m)), ConfigError);
}
