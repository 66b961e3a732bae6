#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "deltalag/params.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kTiny = R"({
  "seed": 7,
  "synthetic": {"n_stocks": 8, "n_days": 120, "n_leaders": 4, "lag_min": 1, "lag_max": 4,
                "signal_coef": 1.0, "noise_sd": 0.02},
  "split": {"train_days": 80, "val_days": 20},
  "model": {"window": 12, "lag_max": 4, "hidden": 8, "k": 2, "mlp_hidden": [8]},
  "train": {"epochs": 2, "lr": 0.001}
})";

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(DELTALAG_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  testing::write_text(p, j.dump(2));
  return p;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("gen-data is deterministic and writes ground truth") {
  const auto dir = testing::temp_dir("cli_gen");
  const auto cfg = write_config(dir, json::parse(kTiny));
  REQUIRE(run("gen-data --config " + q(cfg) + " --out " + q(dir / "a"), dir / "log") == 0);
  REQUIRE(run("gen-data --config " + q(cfg) + " --out " + q(dir / "b"), dir / "log") == 0);
  for (const char* f : {"ohlcv.csv", "ground_truth.csv"}) {
    CHECK(fs::exists(dir / "a" / f));
    CHECK(testing::read_text(dir / "a" / f) == testing::read_text(dir / "b" / f));
  }
  json ra = json::parse(testing::read_text(dir / "a" / "resolved_config.json"));
  json rb = json::parse(testing::read_text(dir / "b" / "resolved_config.json"));
  CHECK(ra["output_dir"] == (dir / "a").string());
  ra.erase("output_dir");
  rb.erase("output_dir");
  CHECK(ra == rb);
  REQUIRE(run("gen-data --config " + q(cfg) + " --out " + q(dir / "c") + " --seed 99", dir / "log") == 0);
  CHECK(testing::read_text(dir / "a" / "ohlcv.csv") != testing::read_text(dir / "c" / "ohlcv.csv"));
}

TEST_CASE("configuration and data errors exit with status 2") {
  const auto dir = testing::temp_dir("cli_errors");
  json j = json::parse(kTiny);
  j["synthetic"]["n_leaders"] = 8;
  CHECK(run("gen-data --config " + q(write_config(dir, j)), dir / "log") == 2);
  CHECK(testing::read_text(dir / "log").find("n_leaders") != std::string::npos);

  j = json::parse(kTiny);
  j.erase("synthetic");
  j["data"] = {{"paths", {(dir / "missing.csv").string()}}};
  CHECK(run("train --config " + q(write_config(dir, j)) + " --out " + q(dir / "o"), dir / "log") == 2);

  CHECK(run("train --config " + q(dir / "nope.json"), dir / "log") == 2);
  CHECK(run("train --bogus-flag", dir / "log") == 2);
  CHECK(run("analyze " + q(dir / "none.csv"), dir / "log") == 2);
  CHECK(run("train --config " + q(write_config(dir, json::parse(kTiny))) + " --variant frozengraph", dir / "log") ==
        2);
  // Backtest without a checkpoint.
  CHECK(run("backtest --config " + q(write_config(dir, json::parse(kTiny))) + " --out " + q(dir / "empty"),
            dir / "log") == 2);
}

TEST_CASE("train then backtest writes every artifact and is reproducible") {
  const auto dir = testing::temp_dir("cli_train");
  const auto cfg = write_config(dir, json::parse(kTiny));
  const fs::path a = dir / "a";
  REQUIRE(run("train --config " + q(cfg) + " --out " + q(a), dir / "log") == 0);
  for (const char* f : {"checkpoint.bin", "history.csv", "resolved_config.json"}) CHECK(fs::exists(a / f));
  REQUIRE(run("backtest --config " + q(cfg) + " --out " + q(a), dir / "log") == 0);
  for (const char* f : {"summary.json", "daily.csv", "lag_histogram.csv", "concentration.csv", "assignments.csv"}) {
    CHECK(fs::exists(a / f));
  }
  const json summary = json::parse(testing::read_text(a / "summary.json"));
  for (const char* key : {"ic_mean", "ar", "sr"}) CHECK(summary.contains(key));

  // Rerunning from the resolved configuration reproduces the outputs.
  const fs::path b = dir / "b";
  REQUIRE(run("train --config " + q(a / "resolved_config.json") + " --out " + q(b), dir / "log") == 0);
  REQUIRE(run("backtest --config " + q(a / "resolved_config.json") + " --out " + q(b), dir / "log") == 0);
  for (const char* f : {"checkpoint.bin", "history.csv", "summary.json", "daily.csv", "assignments.csv"}) {
    CHECK(testing::read_text(a / f) == testing::read_text(b / f));
  }

  REQUIRE(run("analyze " + q(a / "assignments.csv") + " --out " + q(dir / "an"), dir / "log") == 0);
  CHECK(testing::read_text(dir / "an" / "lag_histogram.csv") == testing::read_text(a / "lag_histogram.csv"));
  CHECK(testing::read_text(dir / "an" / "concentration.csv") == testing::read_text(a / "concentration.csv"));
}

TEST_CASE("selflag1 has no attention parameters and an empty assignment dump") {
  const auto dir = testing::temp_dir("cli_selflag1");
  const auto cfg = write_config(dir, json::parse(kTiny));
  REQUIRE(run("train --config " + q(cfg) + " --variant selflag1 --out " + q(dir), dir / "log") == 0);
  REQUIRE(run("backtest --config " + q(cfg) + " --variant selflag1 --out " + q(dir), dir / "log") == 0);
  const std::string dump = testing::read_text(dir / "assignments.csv");
  REQUIRE(!dump.empty());
  CHECK(dump.find('\n') == dump.size() - 1);
  CHECK(testing::read_text(dir / "checkpoint.bin").find("wq") == std::string::npos);
  // A checkpoint of another variant is refused.
  CHECK(run("backtest --config " + q(cfg) + " --variant deltalag --out " + q(dir), dir / "log") == 2);
}

TEST_CASE("correlation-graph variants train and backtest") {
  const auto dir = testing::temp_dir("cli_corrgraph");
  json j = json::parse(kTiny);
  j["eval"] = {{"graph_window", 30}, {"graph_refresh", 10}};
  const auto cfg = write_config(dir, j);
  for (const char* v : {"corrgraph-lag1", "corrgraph-lagall"}) {
    const fs::path out = dir / v;
    REQUIRE(run("train --config " + q(cfg) + " --variant " + v + " --out " + q(out), dir / "log") == 0);
    CHECK(fs::exists(out / "graph_cache.csv"));
    REQUIRE(run("backtest --config " + q(cfg) + " --variant " + v + " --out " + q(out), dir / "log") == 0);
    CHECK(fs::exists(out / "summary.json"));
  }
}

TEST_CASE("gradcheck passes, detects faults and refuses large configs") {
  const auto dir = testing::temp_dir("cli_gradcheck");
  const auto cfg = write_config(dir, json::parse(kTiny));
  CHECK(run("gradcheck --config " + q(cfg), dir / "log") == 0);
  CHECK(testing::read_text(dir / "log").find("PASS") != std::string::npos);
  CHECK(run("gradcheck --config " + q(cfg) + " --fault tanh", dir / "log") == 1);
  CHECK(testing::read_text(dir / "log").find("FAIL") != std::string::npos);
  CHECK(run("gradcheck --config " + q(cfg) + " --fault matmul", dir / "log") == 1);
  CHECK(run("gradcheck --config " + q(cfg) + " --fault gamma", dir / "log") == 2);
  json big = json::parse(kTiny);
  big["synthetic"]["n_stocks"] = 12;
  CHECK(run("gradcheck --config " + q(write_config(dir, big)), dir / "log") == 2);
}
