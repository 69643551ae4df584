#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "advgame/checkpoint.hpp"
#include "advgame/cli.hpp"
#include "advgame/config.hpp"
#include "advgame/errors.hpp"
#include "advgame/pipeline.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace advgame;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "advgame");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  return cli_main(static_cast<int>(args.size()), argv.data());
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("advgame_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST_CASE("strict parsing rejects unknown keys and wrong types") {
  CHECK_THROWS_AS(parse_run_config(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"training": {"epoch": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"training": {"epochs": "3"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"training": {"epochs": -3}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
  const RunConfig c = parse_run_config(R"({"seed": 5, "constraint": {"p": "2", "delta": 0.1}})");
  CHECK(c.seed == 5);
  CHECK(c.resolved_constraint().p == Norm::l2);
  CHECK(c.resolved_constraint().delta == 0.1);
  CHECK(c.training.epochs == RunConfig{}.training.epochs);
}

TEST_CASE("all violations are listed together") {
  try {
    parse_run_config(R"({"x": 1, "constraint": {"p": "3", "delta": -1}, "training": {"epochs": 0}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    CHECK(m.find("x: unknown key") != std::string::npos);
    CHECK(m.find("constraint.p") != std::string::npos);
    CHECK(m.find("constraint.delta") != std::string::npos);
    CHECK(m.find("training.epochs") != std::string::npos);
  }
  RunConfig c;
  c.loss.mix = "mixup";
  c.dataset.family = "spirals";
  CHECK(c.violations().size() == 2);
}

TEST_CASE("resolved config round trips through json") {
  RunConfig c;
  c.seed = 11;
  c.training.epochs = 7;
  c.pgd.include_start = true;
  c.loss.mix = "alpha";
  c.loss.alpha = 0.25;
  const std::string text = run_config_json(c);
  const RunConfig back = parse_run_config(text);
  CHECK(run_config_json(back) == text);
  const json j = json::parse(text);
  for (const char* key : {"dataset", "constraint", "loss", "training", "pgd", "evaluation", "output", "seed"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["training"]["batch_size"] == 200);
}

TEST_CASE("derived settings") {
  RunConfig c;
  c.dataset.regression_dim = 3;
  CHECK(c.is_regression());
  CHECK(c.resolved_loss().family == LossFamily::mean_squared_error);
  CHECK_FALSE(c.task().is_classification());
  const RunConfig r = reproduce_preset("moons-l2", true);
  CHECK(r.dataset.family == "moons");
  CHECK(r.dataset.n == 2000);
  CHECK(r.training.epochs == 100);
  CHECK(r.resolved_constraint().p == Norm::l2);
  CHECK(reproduce_preset("regression-linf", true).training.epochs == 400);
  CHECK_THROWS_AS(reproduce_preset("circles-l3"), ConfigError);
  CHECK_THROWS_AS(reproduce_preset("spirals-linf"), ConfigError);
}

TEST_CASE("exit codes") {
  CHECK(run({"--help"}) == kExitOk);
  CHECK(run({"no-such-command"}) == kExitConfig);
  const fs::path dir = scratch("codes");
  CHECK(run({"gen-data", "--family", "spirals", "--out", (dir / "d.csv").string()}) == kExitConfig);
  CHECK(run({"train-clean", "--p", "3", "--out-dir", dir.string()}) == kExitConfig);
  CHECK(run({"train-clean", "--data", (dir / "missing.csv").string(), "--out-dir", dir.string()}) == kExitIo);

  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << R"({"training": {"epochs": 0, "batch_mode": "huge"}})";
  CHECK(run({"train-game", "--config", (dir / "bad.json").string(), "--out-dir", dir.string()}) == kExitConfig);
  CHECK(run({"gen-data", "--family", "moons", "--n", "50", "--out", (dir / "d.csv").string()}) == kExitOk);
  CHECK(fs::exists(dir / "d.csv"));
  // Raw targets near the double limit overflow the squared error.
  std::ofstream(dir / "huge.csv") << "a,y\n0.1,1e300\n0.4,-1e300\n0.7,1e300\n0.9,-1e300\n";
  std::ofstream(dir / "huge.json") << R"({"dataset": {"path": ")" << (dir / "huge.csv").string()
                                   << R"(", "target_column": "y", "raw_target": true}, "loss": {"family": "mse"}})";
  CHECK(run({"train-clean", "--config", (dir / "huge.json").string(), "--epochs", "1", "--run-dir",
             (dir / "huge").string()}) == kExitNumeric);
}

TEST_CASE("tiny reproduce writes every artifact with its schema") {
  const fs::path root = scratch("reproduce");
  const fs::path dir = root / "run";
  REQUIRE(run({"reproduce", "circles-linf", "--epochs", "2", "--n", "100", "--restarts", "1", "--steps", "3",
               "--resolution", "5", "--run-dir", dir.string()}) == kExitOk);
  for (const char* name : {"config.json", "data.csv", "curves.csv", "matrix.csv", "field.csv", "manifest.json",
                           "record_clean.csv", "record_game.csv", "record_pgd.csv", "audit_game.csv", "timing.csv"}) {
    CHECK_MESSAGE(fs::exists(dir / name), name);
  }
  CHECK(first_line(dir / "curves.csv") == "epoch,defense,attack,metric,value");
  CHECK(first_line(dir / "matrix.csv") == "defense,attack,loss,loss_sum,error");
  CHECK(first_line(dir / "field.csv") == "x1,x2,label,loss,g1,g2,a1,a2");
  CHECK(first_line(dir / "record_game.csv") ==
        "trainer,epoch,train_loss,test_loss,test_error,clean_test_loss,clean_test_error,max_budget_norm");

  const RunConfig written = load_run_config(dir / "config.json");
  CHECK(written.training.epochs == 2);
  CHECK(written.dataset.n == 100);
  const json m = json::parse(read_text(dir / "manifest.json"));
  CHECK(m["target"] == "circles-linf");
  CHECK(m.contains("dataset"));
  CHECK(m.contains("seeds"));
  CHECK(m["artifact_version"] == kArtifactVersion);
  for (const auto& ck : m["checkpoints"]) CHECK(fs::exists(dir / ck.get<std::string>()));

  // The written config alone reproduces the metric files.
  const fs::path again = root / "again";
  REQUIRE(run({"reproduce", "circles-linf", "--config", (dir / "config.json").string(), "--run-dir", again.string()}) ==
          kExitOk);
  for (const char* name : {"curves.csv", "matrix.csv", "field.csv", "record_game.csv"}) {
    CHECK_MESSAGE(read_text(dir / name) == read_text(again / name), name);
  }
}

TEST_CASE("run directory naming") {
  const std::string n = run_dir_name(42);
  CHECK(n.size() == std::string("20260101-000000-seed42").size());
  CHECK(n.ends_with("-seed42"));
}
