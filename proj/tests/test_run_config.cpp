#include <doctest.h>

#include <json.hpp>

#include "deltalag/errors.hpp"
#include "deltalag/run_config.hpp"
#include "helpers.hpp"

using namespace deltalag;
using nlohmann::json;

namespace {

json base() {
  return json::parse(R"({
    "seed": 3,
    "synthetic": {"n_stocks": 8, "n_days": 90, "n_leaders": 4, "lag_min": 1, "lag_max": 3},
    "split": {"train_days": 50, "val_days": 20},
    "model": {"window": 6, "lag_max": 3, "hidden": 4, "k": 2, "mlp_hidden": [5]},
    "train": {"epochs": 2}
  })");
}

}  // namespace

TEST_CASE("defaults are materialized") {
  const RunConfig c = parse_run_config(base());
  CHECK(c.seed == 3);
  CHECK(c.seeds.data == derive_seed(3, 1));
  CHECK(c.seeds.init == derive_seed(3, 2));
  CHECK(c.seeds.shuffle == derive_seed(3, 3));
  CHECK(c.synthetic->seed == c.seeds.data);
  CHECK(c.train.seed == c.seeds.shuffle);
  CHECK(c.model.features == 6);
  CHECK(c.model.variant == Variant::kDeltaLag);
  CHECK(c.loss == LossKind::kMonotonic);
  CHECK(c.train.adam.lr == 1e-3);
  CHECK(c.train.patience == 5);
  CHECK(c.eval.graph_lag_max == 3);
  CHECK(c.eval.graph_window == kGraphWindow);
  const auto j = to_json(c);
  for (const char* key : {"seed", "seeds", "synthetic", "features", "split", "model", "variant", "loss", "train",
                          "eval", "output_dir"}) {
    CHECK(j.contains(key));
  }
}

TEST_CASE("sub-seeds differ by stream and seed") {
  CHECK(derive_seed(1, 1) != derive_seed(1, 2));
  CHECK(derive_seed(1, 1) != derive_seed(2, 1));
  CHECK(derive_seed(5, 3) == derive_seed(5, 3));
}

TEST_CASE("resolved config parses back to the same run") {
  const RunConfig c = parse_run_config(base());
  const json resolved = json::parse(to_json(c).dump());
  const RunConfig d = parse_run_config(resolved);
  CHECK(to_json(d) == to_json(c));
  const auto dir = testing::temp_dir("resolved");
  write_resolved_config(c, dir / "r.json");
  CHECK(to_json(load_run_config(dir / "r.json")) == to_json(c));
}

TEST_CASE("invalid configs are rejected") {
  auto expect_error = [](json j) { CHECK_THROWS_AS(parse_run_config(j), ConfigError); };
  json j = base();
  j["extra"] = 1;
  expect_error(j);
  j = base();
  j["model"]["dropout"] = 0.1;
  expect_error(j);
  j = base();
  j["data"] = {{"paths", {"x.csv"}}};
  expect_error(j);
  j = base();
  j.erase("synthetic");
  expect_error(j);
  j = base();
  j["synthetic"]["n_leaders"] = 8;
  expect_error(j);
  j = base();
  j["split"] = {{"train_days", 50}};
  expect_error(j);
  j = base();
  j["split"]["train_end"] = "2010-03-01";
  expect_error(j);
  j = base();
  j["variant"] = "frozengraph";
  expect_error(j);
  j = base();
  j["model"]["k"] = 30;
  expect_error(j);
  j = base();
  j["train"]["lr"] = -1.0;
  expect_error(j);
  j = base();
  j["model"]["window"] = "six";
  expect_error(j);
  j = base();
  j["loss"] = "hinge";
  expect_error(j);
  const auto dir = testing::temp_dir("badjson");
  testing::write_text(dir / "c.json", "{ not json");
  CHECK_THROWS_AS(load_run_config(dir / "c.json"), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), IoError);
}

TEST_CASE("overrides re-derive seeds and variants") {
  RunConfig c = parse_run_config(base());
  override_seed(c, 11);
  CHECK(c.seeds.init == derive_seed(11, 2));
  CHECK(c.synthetic->seed == derive_seed(11, 1));
  CHECK(c.train.seed == derive_seed(11, 3));
  override_variant(c, "corrgraph-lag1");
  CHECK(c.model.variant == Variant::kFrozenGraph);
  CHECK(graph_mode(c.variant) == GraphMode::kLag1);
  CHECK(graph_mode("deltalag") == std::nullopt);
  CHECK_THROWS_AS(override_variant(c, "gru"), ConfigError);
}

TEST_CASE("data preparation resolves splits by count and by date") {
  const RunConfig c = parse_run_config(base());
  const PreparedData d = prepare_data(c);
  CHECK(d.panel.days() == 90);
  CHECK(d.splits.train.size() == 50);
  CHECK(d.splits.validation.size() == 20);
  CHECK(d.splits.test.size() == 20);
  REQUIRE(d.truth);

  json j = base();
  j["split"] = {{"train_end", d.panel.dates()[49].iso()}, {"val_end", d.panel.dates()[69].iso()}};
  const PreparedData e = prepare_data(parse_run_config(j));
  CHECK(e.splits.train.end == d.splits.train.end);
  CHECK(e.splits.validation.end == d.splits.validation.end);

  json f = base();
  f.erase("synthetic");
  f["data"] = {{"paths", {"/nonexistent/ohlcv.csv"}}};
  CHECK_THROWS_AS(prepare_data(parse_run_config(f)), IoError);
}
