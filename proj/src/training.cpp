#include "advgame/training.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <sstream>

#include "advgame/checkpoint.hpp"
#include "advgame/errors.hpp"
#include "advgame/rng.hpp"

namespace advgame {
namespace {

constexpr std::uint64_t kOrderStream = 0x6f72646572;
constexpr std::uint64_t kSweepStream = 0x7377656570;
constexpr std::uint64_t kPgdTrainStream = 0x7067642d74;
constexpr std::uint64_t kPgdTestStream = 0x7067642d65;

using Clock = std::chrono::steady_clock;

/// Row groups for one epoch: the whole training split, or shuffled minibatches.
std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& data, const GameConfig& cfg,
                                                    std::size_t epoch) {
  if (cfg.batch_mode == BatchMode::full) return {data.train};
  std::vector<std::size_t> order = data.train;
  Rng rng = make_rng(cfg.seed, kOrderStream + epoch);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), i + cfg.batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool changed(std::span<const double> before, std::span<const double> after) {
  return !std::equal(before.begin(), before.end(), after.begin(), after.end());
}

void descend(DefenseNet& f, AdamState& opt, std::span<const double> grad, const GameConfig& cfg) {
  adam_step(opt, f.net.params(), grad, Direction::descent);
  if (cfg.kappa) {
    f.net.set_magnitude_bound(cfg.kappa);
    f.net.enforce_magnitude_bound();
  }
}

std::string numeric_context(const std::string& trainer, std::size_t epoch, std::size_t step,
                            const std::filesystem::path& last_good, const std::string& what) {
  std::ostringstream msg;
  msg << trainer << " training diverged at epoch " << epoch << ", step " << step << ": " << what
      << "; last good checkpoint: " << (last_good.empty() ? "none" : last_good.string());
  return msg.str();
}

bool checkpoint_due(const GameConfig& cfg, std::size_t epoch) {
  if (cfg.checkpoint_dir.empty()) return false;
  return epoch == cfg.epochs || (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0);
}

Manifest manifest_for(const std::string& role, const Task& task, const Dataset& data,
                      const GameConfig& cfg, std::size_t epoch) {
  Manifest m;
  m.role = role;
  m.task = task;
  m.constraint = cfg.constraint;
  m.dataset_fingerprint = data.fingerprint;
  m.seed = cfg.seed;
  m.epoch = epoch;
  return m;
}

std::filesystem::path save_defense_checkpoint(const DefenseNet& f, const std::string& role,
                                              const Dataset& data, const GameConfig& cfg,
                                              std::size_t epoch) {
  std::filesystem::create_directories(cfg.checkpoint_dir);
  const auto path = cfg.checkpoint_dir / (role + "-epoch" + std::to_string(epoch) + ".json");
  save_defense(path, f, manifest_for(role, f.task, data, cfg, epoch));
  return path;
}

void fill_clean(EpochRecord& rec, const DefenseNet& f, LossFamily family, const Batch& test) {
  const Metrics clean = measure(f, family, test, test.x);
  rec.clean_test_loss = clean.loss;
  rec.clean_test_error = clean.error;
}

}  // namespace

std::string to_string(BatchMode m) { return m == BatchMode::full ? "full" : "minibatch"; }

BatchMode batch_mode_from_string(const std::string& text) {
  if (text == "full" || text == "full-batch") return BatchMode::full;
  if (text == "minibatch") return BatchMode::minibatch;
  throw ConfigError("unknown batch mode '" + text + "' (expected full or minibatch)");
}

void GameConfig::validate() const {
  std::vector<std::string> problems;
  if (epochs < 1) problems.emplace_back("epochs must be at least 1");
  if (defense_steps < 1) problems.emplace_back("defense_steps (P) must be at least 1");
  if (attack_steps < 1) problems.emplace_back("attack_steps (H) must be at least 1");
  if (!(defense_lr > 0.0)) problems.emplace_back("defense_lr must be positive");
  if (!(attack_lr >= 0.0)) problems.emplace_back("attack_lr must be non-negative");
  if (batch_mode == BatchMode::minibatch && batch_size < 1) {
    problems.emplace_back("batch_size must be at least 1");
  }
  if (kappa && !(*kappa > 0.0)) problems.emplace_back("kappa must be positive");
  if (!(constraint.delta > 0.0)) problems.emplace_back("constraint delta must be positive");
  if (!(loss.alpha >= 0.0 && loss.alpha <= 1.0)) problems.emplace_back("loss alpha must lie in [0, 1]");
  if (!problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

double budget_sweep(const AttackModel& attack, std::uint64_t seed, std::size_t points) {
  const std::size_t d = attack.input_dim();
  Rng rng = make_rng(seed, kSweepStream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor2 x(points, d);
  for (auto& v : x.data()) v = unit(rng);
  std::vector<std::size_t> labels(points, 0);
  if (attack.task().is_classification()) {
    std::uniform_int_distribution<std::size_t> pick(0, attack.task().classes - 1);
    for (auto& y : labels) y = pick(rng);
  }
  const Tensor2 lam = attack.forward(x, labels);
  double worst = 0.0;
  for (std::size_t r = 0; r < points; ++r) worst = std::max(worst, lp_norm(lam.row(r), attack.constraint().p));
  return worst;
}

Metrics measure(const DefenseNet& f, LossFamily family, const Batch& batch, const Tensor2& x_eval) {
  const Tensor2 out = f.forward(x_eval);
  const LossResult res = loss(family, out, batch);
  const double n = static_cast<double>(std::max<std::size_t>(batch.size(), 1));
  Metrics m;
  m.loss = res.total / n;
  if (f.task.is_classification()) {
    const auto pred = f.predict(x_eval);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != batch.labels[i] ? 1 : 0;
    m.error = static_cast<double>(wrong) / n;
  } else {
    m.error = m.loss;
  }
  return m;
}

// ---------------------------------------------------------------- clean

CleanTrainer::CleanTrainer(DefenseNet f, const Dataset& data, GameConfig cfg)
    : f_(std::move(f)), data_(data), cfg_(std::move(cfg)), opt_(f_.net.param_count(), cfg_.defense_lr) {
  cfg_.validate();
  if (f_.input_dim() != data_.dim()) throw ConfigError("defense input width does not match the data");
  record_.trainer = "clean";
  test_ = data_.test_batch();
}

const EpochRecord& CleanTrainer::step_epoch() {
  const auto start = Clock::now();
  const std::size_t epoch = record_.epochs.size() + 1;
  EpochRecord rec;
  rec.epoch = epoch;
  double total = 0.0;
  std::size_t step = 0;
  try {
    for (const auto& rows : epoch_batches(data_, cfg_, epoch)) {
      const Batch b = data_.batch(rows);
      for (std::size_t p = 0; p < cfg_.defense_steps; ++p, ++step) {
        const auto res = clean_loss(cfg_.loss, f_, b, true);
        if (p == 0) total += res.total;
        descend(f_, opt_, res.defense_grad, cfg_);
        record_.audit.push_back({epoch, step, Player::defense, true, false});
      }
    }
  } catch (const NumericError& e) {
    throw NumericError(numeric_context("clean", epoch, step + 1, last_good_, e.what()));
  }
  rec.train_loss = total / static_cast<double>(data_.train.size());
  if (cfg_.evaluate_test && test_.size() > 0) {
    fill_clean(rec, f_, cfg_.loss.family, test_);
    rec.test_loss = rec.clean_test_loss;
    rec.test_error = rec.clean_test_error;
  }
  if (checkpoint_due(cfg_, epoch)) {
    last_good_ = save_defense_checkpoint(f_, "f_clean", data_, cfg_, epoch);
    record_.checkpoints.push_back(last_good_);
  }
  rec.seconds = seconds_since(start);
  record_.epochs.push_back(rec);
  return record_.epochs.back();
}

TrainRecord CleanTrainer::run() {
  while (record_.epochs.size() < cfg_.epochs) step_epoch();
  return record_;
}

// ---------------------------------------------------------------- game

GameTrainer::GameTrainer(DefenseNet f, AttackModel attack, const Dataset& data, GameConfig cfg)
    : f_(std::move(f)),
      attack_(std::move(attack)),
      data_(data),
      cfg_(std::move(cfg)),
      defense_opt_(f_.net.param_count(), cfg_.defense_lr),
      attack_opt_(attack_.param_count(), cfg_.attack_lr) {
  cfg_.validate();
  if (f_.input_dim() != data_.dim() || attack_.input_dim() != data_.dim()) {
    throw ConfigError("model input width does not match the data");
  }
  if (!(attack_.task() == f_.task)) throw ConfigError("defense and attack were built for different tasks");
  record_.trainer = "game";
  test_ = data_.test_batch();
}

const EpochRecord& GameTrainer::step_epoch() {
  const auto start = Clock::now();
  const std::size_t epoch = record_.epochs.size() + 1;
  EpochRecord rec;
  rec.epoch = epoch;
  double total = 0.0;
  std::size_t step = 0;
  try {
    for (const auto& rows : epoch_batches(data_, cfg_, epoch)) {
      const Batch b = data_.batch(rows);
      for (std::size_t p = 0; p < cfg_.defense_steps; ++p, ++step) {
        const std::vector<double> attack_before = attack_.flat_params();
        const std::vector<double> defense_before(f_.net.params().begin(), f_.net.params().end());
        const auto res = adversarial_loss(cfg_.loss, f_, attack_, b, GradFor::defense, cfg_.clip_input);
        if (p == 0) total += res.total;
        descend(f_, defense_opt_, res.defense_grad, cfg_);
        record_.audit.push_back({epoch, step, Player::defense, changed(defense_before, f_.net.params()),
                                 changed(attack_before, attack_.flat_params())});
      }
      for (std::size_t h = 0; h < cfg_.attack_steps; ++h, ++step) {
        const std::vector<double> defense_before(f_.net.params().begin(), f_.net.params().end());
        const auto res = adversarial_loss(cfg_.loss, f_, attack_, b, GradFor::attack, cfg_.clip_input);
        std::vector<double> theta = attack_.flat_params();
        const std::vector<double> before = theta;
        // attack_lr 0 freezes lambda; the step is still audited.
        if (cfg_.attack_lr > 0.0) adam_step(attack_opt_, theta, res.attack_grad, Direction::ascent);
        attack_.set_flat_params(theta);
        record_.audit.push_back({epoch, step, Player::attack, changed(defense_before, f_.net.params()),
                                 changed(before, theta)});
      }
    }
  } catch (const NumericError& e) {
    throw NumericError(numeric_context("game", epoch, step + 1, last_good_, e.what()));
  }
  rec.train_loss = total / static_cast<double>(data_.train.size());
  rec.max_budget_norm = budget_sweep(attack_, derive_seed(cfg_.seed, epoch));
  if (cfg_.evaluate_test && test_.size() > 0) {
    const Tensor2 x_adv = attack_.adversarial_example(test_.x, test_.labels, cfg_.clip_input);
    const Metrics adv = measure(f_, cfg_.loss.family, test_, x_adv);
    rec.test_loss = adv.loss;
    rec.test_error = adv.error;
    fill_clean(rec, f_, cfg_.loss.family, test_);
  }
  if (checkpoint_due(cfg_, epoch)) {
    last_good_ = save_defense_checkpoint(f_, "f", data_, cfg_, epoch);
    const auto apath = cfg_.checkpoint_dir / ("lambda-epoch" + std::to_string(epoch) + ".json");
    save_attack(apath, attack_, manifest_for("lambda", attack_.task(), data_, cfg_, epoch));
    record_.checkpoints.push_back(last_good_);
    record_.checkpoints.push_back(apath);
  }
  rec.seconds = seconds_since(start);
  record_.epochs.push_back(rec);
  return record_.epochs.back();
}

TrainRecord GameTrainer::run() {
  while (record_.epochs.size() < cfg_.epochs) step_epoch();
  return record_;
}

// ---------------------------------------------------------------- pgd

PgdTrainer::PgdTrainer(DefenseNet f, const Dataset& data, GameConfig cfg, PgdConfig pgd)
    : f_(std::move(f)),
      data_(data),
      cfg_(std::move(cfg)),
      pgd_(std::move(pgd)),
      opt_(f_.net.param_count(), cfg_.defense_lr) {
  cfg_.validate();
  pgd_.validate();
  if (f_.input_dim() != data_.dim()) throw ConfigError("defense input width does not match the data");
  record_.trainer = "pgd";
  test_ = data_.test_batch();
}

const EpochRecord& PgdTrainer::step_epoch() {
  const auto start = Clock::now();
  const std::size_t epoch = record_.epochs.size() + 1;
  EpochRecord rec;
  rec.epoch = epoch;
  double total = 0.0;
  std::size_t step = 0;
  std::size_t batch_index = 0;
  try {
    for (const auto& rows : epoch_batches(data_, cfg_, epoch)) {
      const Batch b = data_.batch(rows);
      PgdConfig pc = pgd_;
      pc.seed = derive_seed(derive_seed(pgd_.seed, kPgdTrainStream + epoch), batch_index++);
      const Tensor2 x_adv = pgd(f_, cfg_.loss.family, b, pc);
      for (std::size_t p = 0; p < cfg_.defense_steps; ++p, ++step) {
        const auto res = perturbed_loss(cfg_.loss, f_, b, x_adv, GradFor::defense);
        if (p == 0) total += res.total;
        descend(f_, opt_, res.defense_grad, cfg_);
        record_.audit.push_back({epoch, step, Player::defense, true, false});
      }
    }
  } catch (const NumericError& e) {
    throw NumericError(numeric_context("pgd", epoch, step + 1, last_good_, e.what()));
  }
  rec.train_loss = total / static_cast<double>(data_.train.size());
  if (cfg_.evaluate_test && test_.size() > 0) {
    PgdConfig pc = pgd_;
    pc.seed = derive_seed(pgd_.seed, kPgdTestStream + epoch);
    const Tensor2 x_adv = pgd(f_, cfg_.loss.family, test_, pc);
    const Metrics adv = measure(f_, cfg_.loss.family, test_, x_adv);
    rec.test_loss = adv.loss;
    rec.test_error = adv.error;
    fill_clean(rec, f_, cfg_.loss.family, test_);
  }
  if (checkpoint_due(cfg_, epoch)) {
    last_good_ = save_defense_checkpoint(f_, "f_pgd", data_, cfg_, epoch);
    record_.checkpoints.push_back(last_good_);
  }
  rec.seconds = seconds_since(start);
  record_.epochs.push_back(rec);
  return record_.epochs.back();
}

TrainRecord PgdTrainer::run() {
  while (record_.epochs.size() < cfg_.epochs) step_epoch();
  return record_;
}

GameResult train_game(DefenseNet f, AttackModel attack, const Dataset& data, const GameConfig& cfg) {
  GameTrainer t(std::move(f), std::move(attack), data, cfg);
  TrainRecord rec = t.run();
  return {t.defense(), t.attack(), std::move(rec)};
}

DefenseResult train_pgd_baseline(DefenseNet f, const Dataset& data, const GameConfig& cfg,
                                 const PgdConfig& pgd_cfg) {
  PgdTrainer t(std::move(f), data, cfg, pgd_cfg);
  TrainRecord rec = t.run();
  return {t.defense(), std::move(rec)};
}

DefenseResult train_clean(DefenseNet f, const Dataset& data, const GameConfig& cfg) {
  CleanTrainer t(std::move(f), data, cfg);
  TrainRecord rec = t.run();
  return {t.defense(), std::move(rec)};
}

std::string record_csv(const TrainRecord& r) {
  std::string out = "trainer,epoch,train_loss,test_loss,test_error,clean_test_loss,clean_test_error,max_budget_norm\n";
  for (const auto& e : r.epochs) {
    out += r.trainer + "," + std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," +
           format_double(e.test_loss) + "," + format_double(e.test_error) + "," +
           format_double(e.clean_test_loss) + "," + format_double(e.clean_test_error) + "," +
           format_double(e.max_budget_norm) + "\n";
  }
  return out;
}

std::string timing_csv(const TrainRecord& r) {
  std::string out = "trainer,epoch,seconds\n";
  for (const auto& e : r.epochs) {
    out += r.trainer + "," + std::to_string(e.epoch) + "," + format_double(e.seconds) + "\n";
  }
  return out;
}

std::string audit_csv(const TrainRecord& r) {
  std::string out = "trainer,epoch,step,player,defense_changed,attack_changed\n";
  for (const auto& a : r.audit) {
    out += r.trainer + "," + std::to_string(a.epoch) + "," + std::to_string(a.step) + "," +
           (a.player == Player::defense ? "defense" : "attack") + "," +
           (a.defense_changed ? "1" : "0") + "," + (a.attack_changed ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace advgame
