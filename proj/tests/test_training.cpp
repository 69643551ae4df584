#include <cmath>
#include <filesystem>

#include "advgame/checkpoint.hpp"
#include "advgame/data.hpp"
#include "advgame/errors.hpp"
#include "advgame/models.hpp"
#include "advgame/training.hpp"
#include "doctest.h"

using namespace advgame;
namespace fs = std::filesystem;

namespace {

Dataset circles(std::size_t n, std::uint64_t seed = 0) {
  GenerateOptions o;
  o.n = n;
  o.seed = seed;
  return generate_2d(Family::circles, o);
}

GameConfig small_config(std::size_t epochs) {
  GameConfig cfg;
  cfg.epochs = epochs;
  cfg.constraint = {Norm::linf, 0.2};
  cfg.batch_mode = BatchMode::minibatch;
  cfg.batch_size = 50;
  return cfg;
}

double train_accuracy(const DefenseNet& f, const Dataset& d) {
  const Batch b = d.train_batch();
  const auto pred = f.predict(b.x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == b.labels[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

std::vector<double> params(const DefenseNet& f) { return {f.net.params().begin(), f.net.params().end()}; }

void zero_attack(AttackModel& a) {
  std::vector<double> theta(a.param_count(), 0.0);
  a.set_flat_params(theta);
}

}  // namespace

TEST_CASE("players only change their own parameters, defense first") {
  const Dataset d = circles(200);
  GameConfig cfg = small_config(3);
  cfg.defense_steps = 2;
  cfg.attack_steps = 3;
  const ModelPair pair = build_classification_pair(2, 2, cfg.constraint, 1);
  const GameResult r = train_game(pair.defense, pair.attack, d, cfg);
  REQUIRE(r.record.epochs.size() == 3);
  // Three batches of 50 over 160 training rows per epoch, five steps per batch.
  CHECK(r.record.audit.size() == 3 * 4 * 5);
  for (std::size_t k = 0; k < r.record.audit.size(); ++k) {
    const StepAudit& a = r.record.audit[k];
    const bool defense_slot = k % 5 < 2;
    CHECK((a.player == Player::defense) == defense_slot);
    CHECK(a.defense_changed == defense_slot);
    CHECK(a.attack_changed == !defense_slot);
  }
  for (const auto& e : r.record.epochs) CHECK(e.max_budget_norm <= 0.2 + 1e-9);
}

TEST_CASE("a zero attack with zero learning rate reproduces clean training") {
  const Dataset d = circles(200);
  GameConfig cfg = small_config(4);
  cfg.attack_lr = 0.0;
  ModelPair pair = build_classification_pair(2, 2, cfg.constraint, 2);
  zero_attack(pair.attack);
  const GameResult g = train_game(pair.defense, pair.attack, d, cfg);
  const DefenseResult c = train_clean(pair.defense, d, cfg);
  CHECK(params(g.defense) == params(c.defense));
  for (std::size_t e = 0; e < 4; ++e) CHECK(g.record.epochs[e].train_loss == c.record.epochs[e].train_loss);
  CHECK(g.attack.flat_params() == pair.attack.flat_params());
  for (const auto& a : g.record.audit) CHECK_FALSE(a.attack_changed);
}

TEST_CASE("pgd with zero step and one restart reproduces clean training") {
  const Dataset d = circles(200);
  const GameConfig cfg = small_config(3);
  PgdConfig pgd = PgdConfig::for_constraint(cfg.constraint);
  pgd.step = 0.0;
  pgd.steps = 3;
  pgd.restarts = 1;
  const ModelPair pair = build_classification_pair(2, 2, cfg.constraint, 3);
  const DefenseResult p = train_pgd_baseline(pair.defense, d, cfg, pgd);
  const DefenseResult c = train_clean(pair.defense, d, cfg);
  CHECK(params(p.defense) == params(c.defense));
}

TEST_CASE("training is deterministic per seed") {
  const Dataset d = circles(200);
  GameConfig cfg = small_config(3);
  const ModelPair pair = build_classification_pair(2, 2, cfg.constraint, 4);
  const GameResult a = train_game(pair.defense, pair.attack, d, cfg);
  const GameResult b = train_game(pair.defense, pair.attack, d, cfg);
  CHECK(record_csv(a.record) == record_csv(b.record));
  CHECK(a.attack.flat_params() == b.attack.flat_params());

  PgdConfig pgd = PgdConfig::for_constraint(cfg.constraint);
  pgd.steps = 3;
  pgd.restarts = 2;
  pgd.seed = 7;
  const DefenseResult p = train_pgd_baseline(pair.defense, d, cfg, pgd);
  const DefenseResult q = train_pgd_baseline(pair.defense, d, cfg, pgd);
  CHECK(record_csv(p.record) == record_csv(q.record));
  cfg.seed = 1;
  CHECK(record_csv(train_game(pair.defense, pair.attack, d, cfg).record) != record_csv(a.record));
}

TEST_CASE("clean training on circles reaches 95% train accuracy") {
  const Dataset d = circles(2000);
  GameConfig cfg = small_config(100);
  cfg.batch_size = 200;
  cfg.evaluate_test = false;
  const ModelPair pair = build_classification_pair(2, 2, cfg.constraint, 0);
  const DefenseResult r = train_clean(pair.defense, d, cfg);
  CHECK(train_accuracy(r.defense, d) >= 0.95);
  CHECK(r.record.epochs.back().train_loss < r.record.epochs.front().train_loss);
}

TEST_CASE("clean regression beats the constant predictor") {
  GenerateOptions o;
  o.n = 400;
  const Dataset d = generate_regression(2, o);
  GameConfig cfg = small_config(60);
  cfg.loss.family = LossFamily::mean_squared_error;
  const ModelPair pair = build_regression_pair(2, cfg.constraint, 0);
  const DefenseResult r = train_clean(pair.defense, d, cfg);
  double mean = 0.0, var = 0.0;
  for (auto i : d.train) mean += d.targets[i];
  mean /= static_cast<double>(d.train.size());
  for (auto i : d.train) var += (d.targets[i] - mean) * (d.targets[i] - mean);
  var /= static_cast<double>(d.train.size());
  CHECK(r.record.epochs.back().train_loss < var);
}

TEST_CASE("checkpoints reload bit-exactly") {
  const Dataset d = circles(100);
  GameConfig cfg = small_config(4);
  cfg.checkpoint_every = 2;
  cfg.checkpoint_dir = fs::temp_directory_path() / "advgame_test_ckpt";
  fs::remove_all(cfg.checkpoint_dir);
  const ModelPair pair = build_classification_pair(2, 2, cfg.constraint, 5);
  const GameResult r = train_game(pair.defense, pair.attack, d, cfg);
  REQUIRE(r.record.checkpoints.size() == 4);
  Manifest m;
  const DefenseNet f = load_defense(r.record.checkpoints[2], &m);
  CHECK(m.epoch == 4);
  CHECK(m.dataset_fingerprint == d.fingerprint);
  CHECK(params(f) == params(r.defense));
  const AttackModel a = load_attack(r.record.checkpoints[3]);
  CHECK(a.flat_params() == r.attack.flat_params());
  CHECK(checkpoint_kind(r.record.checkpoints[3]) == "attack");
  CHECK(parse_hex64(hex64(0xdeadbeef01234567ULL)) == 0xdeadbeef01234567ULL);
}

TEST_CASE("non-finite parameters abort with context") {
  const Dataset d = circles(100);
  const GameConfig cfg = small_config(2);
  ModelPair pair = build_classification_pair(2, 2, cfg.constraint, 6);
  std::vector<double> p = params(pair.defense);
  p[0] = NAN;
  pair.defense.net.set_params(p);
  try {
    train_game(pair.defense, pair.attack, d, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string m = e.what();
    CHECK(m.find("epoch 1, step 1") != std::string::npos);
    CHECK(m.find("last good checkpoint: none") != std::string::npos);
  }
}

TEST_CASE("game config validation") {
  GameConfig cfg;
  cfg.epochs = 0;
  cfg.defense_lr = 0.0;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    CHECK(m.find("epochs") != std::string::npos);
    CHECK(m.find("defense_lr") != std::string::npos);
  }
  CHECK_THROWS_AS(batch_mode_from_string("stochastic"), ConfigError);
}
