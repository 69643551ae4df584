#include "advgame/cli.hpp"

#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "advgame/checkpoint.hpp"
#include "advgame/config.hpp"
#include "advgame/errors.hpp"
#include "advgame/eval.hpp"
#include "advgame/flow.hpp"
#include "advgame/pipeline.hpp"
#include "advgame/rng.hpp"
#include "json.hpp"

namespace advgame {

namespace fs = std::filesystem;

std::string run_dir_name(std::uint64_t seed) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return std::string(buf) + "-seed" + std::to_string(seed);
}

namespace {

/// Flags that override RunConfig fields; applied after --config is read.
class Overlay {
 public:
  template <typename T>
  Overlay& option(CLI::App* app, const std::string& flags, const std::string& help,
                  std::function<void(RunConfig&, const T&)> set) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flags, *value, help);
    apply_.push_back([opt, value, set](RunConfig& c) {
      if (opt->count() > 0) set(c, *value);
    });
    return *this;
  }

  Overlay& flag(CLI::App* app, const std::string& flags, const std::string& help,
                std::function<void(RunConfig&)> set) {
    CLI::Option* opt = app->add_flag(flags, help);
    apply_.push_back([opt, set](RunConfig& c) {
      if (opt->count() > 0) set(c);
    });
    return *this;
  }

  void apply(RunConfig& cfg) const {
    for (const auto& f : apply_) f(cfg);
  }

 private:
  std::vector<std::function<void(RunConfig&)>> apply_;
};

struct Common {
  std::string config;
  std::string out_dir;  // empty: output.dir from the config
  std::string run_dir;
};

void add_dataset_flags(CLI::App* app, Overlay& o) {
  o.option<std::string>(app, "--family", "circles, moons, streaks or polynomials",
                        [](RunConfig& c, const std::string& v) { c.dataset.family = v; });
  o.option<std::size_t>(app, "--n", "number of generated points",
                        [](RunConfig& c, const std::size_t& v) { c.dataset.n = v; });
  o.option<double>(app, "--noise", "generator noise scale",
                   [](RunConfig& c, const double& v) { c.dataset.noise = v; });
  o.option<double>(app, "--train-fraction", "train split fraction",
                   [](RunConfig& c, const double& v) { c.dataset.train_fraction = v; });
  o.option<std::string>(app, "--data", "dataset CSV instead of a generator",
                        [](RunConfig& c, const std::string& v) { c.dataset.path = v; });
  o.option<std::string>(app, "--target-column", "regression target column of --data",
                        [](RunConfig& c, const std::string& v) { c.dataset.target_column = v; });
  o.option<std::size_t>(app, "--regression-dim", "synthetic regression input width (0: off)",
                        [](RunConfig& c, const std::size_t& v) { c.dataset.regression_dim = v; });
  o.option<std::uint64_t>(app, "--seed", "run seed",
                          [](RunConfig& c, const std::uint64_t& v) { c.seed = v; });
}

void add_constraint_flags(CLI::App* app, Overlay& o) {
  o.option<std::string>(app, "--p", "budget norm: 1, 2 or inf",
                        [](RunConfig& c, const std::string& v) { c.constraint.p = v; });
  o.option<double>(app, "--delta", "budget radius",
                   [](RunConfig& c, const double& v) { c.constraint.delta = v; });
}

void add_training_flags(CLI::App* app, Overlay& o) {
  o.option<std::size_t>(app, "--epochs", "training epochs",
                        [](RunConfig& c, const std::size_t& v) { c.training.epochs = v; });
  o.option<std::size_t>(app, "--defense-steps", "descent steps per batch",
                        [](RunConfig& c, const std::size_t& v) { c.training.defense_steps = v; });
  o.option<std::size_t>(app, "--attack-steps", "ascent steps per batch",
                        [](RunConfig& c, const std::size_t& v) { c.training.attack_steps = v; });
  o.option<double>(app, "--defense-lr", "defense learning rate",
                   [](RunConfig& c, const double& v) { c.training.defense_lr = v; });
  o.option<double>(app, "--attack-lr", "attack learning rate (0 freezes the attack)",
                   [](RunConfig& c, const double& v) { c.training.attack_lr = v; });
  o.option<std::string>(app, "--batch-mode", "full or minibatch",
                        [](RunConfig& c, const std::string& v) { c.training.batch_mode = v; });
  o.option<std::size_t>(app, "--batch-size", "minibatch size",
                        [](RunConfig& c, const std::size_t& v) { c.training.batch_size = v; });
  o.option<std::size_t>(app, "--checkpoint-every", "checkpoint interval in epochs (0: final only)",
                        [](RunConfig& c, const std::size_t& v) { c.training.checkpoint_every = v; });
  o.flag(app, "--clip-input", "clip x + lambda to the unit cube", [](RunConfig& c) { c.training.clip_input = true; });
  o.option<std::string>(app, "--loss", "cross-entropy or mse",
                        [](RunConfig& c, const std::string& v) { c.loss.family = v; });
  o.option<std::string>(app, "--mix", "plain, alpha or trades",
                        [](RunConfig& c, const std::string& v) { c.loss.mix = v; });
  o.option<double>(app, "--alpha", "clean weight of the mixed loss",
                   [](RunConfig& c, const double& v) { c.loss.alpha = v; });
}

void add_pgd_flags(CLI::App* app, Overlay& o) {
  o.option<double>(app, "--gamma", "PGD step length",
                   [](RunConfig& c, const double& v) { c.pgd.step = v; });
  o.option<std::size_t>(app, "--steps", "PGD steps",
                        [](RunConfig& c, const std::size_t& v) { c.pgd.steps = v; });
  o.option<std::size_t>(app, "--restarts", "PGD restarts",
                        [](RunConfig& c, const std::size_t& v) { c.pgd.restarts = v; });
  o.flag(app, "--early-stop", "stop a restart once the point is misclassified",
         [](RunConfig& c) { c.pgd.early_stop = true; });
  o.option<std::string>(app, "--ascent-norm", "PGD steepest-ascent norm (default: the budget norm)",
                        [](RunConfig& c, const std::string& v) { c.pgd.ascent_norm = v; });
  o.option<std::string>(app, "--step-mode", "normalized or raw-grad",
                        [](RunConfig& c, const std::string& v) { c.pgd.step_mode = v; });
  o.flag(app, "--include-start", "keep the clean input as a PGD candidate",
         [](RunConfig& c) { c.pgd.include_start = true; });
}

void add_common(CLI::App* app, Common& c, bool run_dir) {
  app->add_option("--config", c.config, "JSON run config (flags override it)");
  if (run_dir) {
    app->add_option("--out-dir", c.out_dir, "parent of the timestamped run directory");
    app->add_option("--run-dir", c.run_dir, "exact run directory (overrides --out-dir)");
  }
}

RunConfig resolve(const Common& common, const Overlay& overlay, RunConfig base = {}) {
  RunConfig cfg = common.config.empty() ? base : load_run_config(common.config, base);
  overlay.apply(cfg);
  if (!common.out_dir.empty()) cfg.output.dir = common.out_dir;
  cfg.validate();
  return cfg;
}

fs::path make_run_dir(const Common& common, const RunConfig& cfg) {
  fs::path dir;
  if (!common.run_dir.empty()) {
    dir = common.run_dir;
  } else {
    const fs::path base = fs::path(cfg.output.dir) / run_dir_name(cfg.seed);
    dir = base;
    for (int k = 2; fs::exists(dir); ++k) dir = base.string() + "-" + std::to_string(k);
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  return dir;
}

Batch all_rows(const Dataset& d) {
  std::vector<std::size_t> rows(d.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return d.batch(rows);
}

Batch select_split(const Dataset& d, const std::string& split) {
  if (split == "test") return d.test_batch();
  if (split == "train") return d.train_batch();
  if (split == "all") return all_rows(d);
  throw ConfigError("--split: expected test, train or all, got '" + split + "'");
}

nlohmann::ordered_json base_manifest(const RunConfig& cfg, const Dataset& data, const std::string& command) {
  nlohmann::ordered_json m;
  m["artifact_version"] = kArtifactVersion;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["dataset"] = {{"fingerprint", hex64(data.fingerprint)},
                  {"provenance", data.provenance},
                  {"task", to_string(data.task.kind)},
                  {"classes", data.task.classes},
                  {"train", data.train.size()},
                  {"test", data.test.size()}};
  return m;
}

Manifest final_manifest(const std::string& role, const Dataset& data, const RunConfig& cfg,
                        bool with_constraint) {
  Manifest m;
  m.role = role;
  m.task = data.task;
  if (with_constraint) m.constraint = cfg.resolved_constraint();
  m.dataset_fingerprint = data.fingerprint;
  m.seed = cfg.seed;
  m.epoch = cfg.training.epochs;
  return m;
}

void print_last(const TrainRecord& rec) {
  if (rec.epochs.empty()) return;
  const EpochRecord& e = rec.epochs.back();
  std::cout << rec.trainer << " epoch " << e.epoch << ": train_loss " << e.train_loss << ", test_loss "
            << e.test_loss << ", test_error " << e.test_error << ", clean_test_error " << e.clean_test_error
            << "\n";
}

enum class Trainer { clean, game, pgd };

int run_train(Trainer which, const Common& common, const Overlay& overlay, const std::string& command) {
  RunConfig cfg = resolve(common, overlay);
  const Dataset data = make_dataset(cfg);
  const fs::path dir = make_run_dir(common, cfg);
  GameConfig gc = cfg.game_config();
  gc.loss = loss_for(cfg, data);
  gc.checkpoint_dir = dir / "checkpoints";
  const std::size_t D = data.dim();

  write_text(dir / "config.json", run_config_json(cfg));
  save_dataset(dir / "data.csv", data);
  TrainRecord rec;
  if (which == Trainer::game) {
    ModelPair pair = data.task.is_classification()
                         ? build_classification_pair(D, data.task.classes, gc.constraint, cfg.seed)
                         : build_regression_pair(D, gc.constraint, cfg.seed);
    GameResult r = train_game(std::move(pair.defense), std::move(pair.attack), data, gc);
    save_defense(dir / "f.json", r.defense, final_manifest("f", data, cfg, true));
    save_attack(dir / "lambda.json", r.attack, final_manifest("lambda", data, cfg, true));
    write_text(dir / "audit.csv", audit_csv(r.record));
    rec = std::move(r.record);
  } else if (which == Trainer::pgd) {
    DefenseResult r = train_pgd_baseline(build_defense(D, data.task, cfg.seed), data, gc, cfg.pgd_config());
    save_defense(dir / "f_pgd.json", r.defense, final_manifest("f_pgd", data, cfg, true));
    rec = std::move(r.record);
  } else {
    DefenseResult r = train_clean(build_defense(D, data.task, cfg.seed), data, gc);
    save_defense(dir / "f_clean.json", r.defense, final_manifest("f_clean", data, cfg, false));
    rec = std::move(r.record);
  }
  write_text(dir / "record.csv", record_csv(rec));
  write_text(dir / "timing.csv", timing_csv(rec));
  auto m = base_manifest(cfg, data, command);
  std::vector<std::string> ckpts;
  for (const auto& p : rec.checkpoints) ckpts.push_back(fs::relative(p, dir).generic_string());
  m["checkpoints"] = ckpts;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  print_last(rec);
  std::cout << "run directory: " << dir.string() << "\n";
  return kExitOk;
}

/// Adversarial examples written as a dataset file (label or target column kept).
CsvTable adversarial_table(const Batch& b, const Tensor2& x_adv, const Task& task) {
  CsvTable t;
  for (std::size_t j = 0; j < x_adv.cols(); ++j) t.header.push_back("x" + std::to_string(j + 1));
  t.header.push_back(task.is_classification() ? "label" : "target");
  t.values = Tensor2(x_adv.rows(), x_adv.cols() + 1);
  for (std::size_t i = 0; i < x_adv.rows(); ++i) {
    for (std::size_t j = 0; j < x_adv.cols(); ++j) t.values(i, j) = x_adv(i, j);
    t.values(i, x_adv.cols()) =
        task.is_classification() ? static_cast<double>(b.labels[i]) : b.targets[i];
  }
  return t;
}

struct AttackArgs {
  std::string method = "pgd";
  std::string model;
  std::string out;
  std::string split = "all";
};

int run_attack(const AttackArgs& a, const Common& common, const Overlay& overlay) {
  RunConfig cfg = resolve(common, overlay);
  if (cfg.dataset.path.empty()) throw ConfigError("--data: attack needs a dataset file");
  const Dataset data = make_dataset(cfg);
  const DefenseNet f = load_defense(a.model);
  if (f.task != data.task) throw ConfigError("--model: task does not match the dataset");
  const Batch b = select_split(data, a.split);
  const LossFamily family = loss_for(cfg, data).family;
  Tensor2 x_adv;
  if (a.method == "fgsm") {
    x_adv = fgsm(f, family, b, cfg.resolved_constraint());
  } else if (a.method == "pgd") {
    x_adv = pgd(f, family, b, cfg.pgd_config());
  } else {
    throw ConfigError("--method: expected fgsm or pgd, got '" + a.method + "'");
  }
  write_csv(a.out, adversarial_table(b, x_adv, data.task));
  const Metrics clean = measure(f, family, b, b.x);
  const Metrics adv = measure(f, family, b, x_adv);
  std::cout << "clean loss " << clean.loss << " error " << clean.error << "; adversarial loss " << adv.loss
            << " error " << adv.error << "\n";
  return kExitOk;
}

struct FlowArgs {
  std::string function = "quadratic";
  std::string model;
  std::vector<double> point;
  std::size_t label = 0;
  double dt = 0.0;
  double max_time = 50.0;
  std::string saddle = "none";
  double epsilon = 0.0;
  double sigma = 0.0;
  double noise_horizon = -1.0;
  std::string integrator = "rk4";
  std::size_t record_every = 1;
  std::string out = "trajectory.csv";
};

nlohmann::ordered_json kkt_json(const KktReport& k) {
  nlohmann::ordered_json j;
  j["passed"] = k.passed;
  j["interior"] = k.interior;
  j["stationarity_residual"] = k.stationarity_residual;
  j["active"] = k.active;
  j["multipliers"] = k.multipliers;
  j["primal_feasible"] = k.primal_feasible;
  j["dual_feasible"] = k.dual_feasible;
  j["tol"] = k.tol;
  return j;
}

int run_flow(const FlowArgs& a, const Common& common, const Overlay& overlay) {
  RunConfig cfg = resolve(common, overlay);
  FlowConfig fc;
  fc.constraint = cfg.resolved_constraint();
  if (fc.constraint.p == Norm::l1) throw ConfigError("--p: the flow supports 2 and inf");
  fc.dt = a.dt;
  fc.max_time = a.max_time;
  fc.saddle_handling = saddle_handling_from_string(a.saddle);
  fc.epsilon = a.epsilon;
  fc.noise_sigma = a.sigma;
  fc.noise_horizon = a.noise_horizon;
  fc.seed = cfg.seed;
  fc.record_every = a.record_every;
  if (a.integrator == "rk4") {
    fc.integrator = Integrator::rk4;
  } else if (a.integrator == "euler") {
    fc.integrator = Integrator::explicit_euler;
  } else {
    throw ConfigError("--integrator: expected rk4 or euler, got '" + a.integrator + "'");
  }

  PointObjective f;
  std::vector<double> start;
  std::optional<DefenseNet> net;  // referenced by f
  if (!a.model.empty()) {
    net = load_defense(a.model);
    if (a.point.size() != net->input_dim()) {
      throw ConfigError("--point: expected " + std::to_string(net->input_dim()) + " coordinates");
    }
    f = defense_point_objective(*net, net->task.is_classification() ? LossFamily::cross_entropy
                                                                    : LossFamily::mean_squared_error,
                                a.label);
    start = a.point;
  } else {
    AnalyticCase c = analytic_case(a.function);
    f = std::move(c.f);
    start = a.point.empty() ? c.start : a.point;
    if (start.size() != 2) throw ConfigError("--point: analytic functions take 2 coordinates");
    if (fc.saddle_handling == SaddleHandling::deflect) fc.saddles = c.saddles;
  }
  const Trajectory tr = integrate_flow(f, start, fc);

  CsvTable t;
  t.header.push_back("t");
  for (std::size_t j = 0; j < start.size(); ++j) t.header.push_back("x" + std::to_string(j + 1));
  t.header.push_back("F");
  t.values = Tensor2(tr.states.rows(), tr.states.cols() + 2);
  for (std::size_t i = 0; i < tr.states.rows(); ++i) {
    t.values(i, 0) = tr.times[i];
    for (std::size_t j = 0; j < tr.states.cols(); ++j) t.values(i, j + 1) = tr.states(i, j);
    t.values(i, tr.states.cols() + 1) = tr.values[i];
  }
  write_csv(a.out, t);
  nlohmann::ordered_json j;
  j["converged"] = tr.converged;
  j["steps"] = tr.steps;
  j["final_residual"] = tr.final_residual;
  j["terminal"] = std::vector<double>(tr.terminal().begin(), tr.terminal().end());
  j["value"] = tr.values.back();
  j["kkt"] = kkt_json(tr.kkt);
  const std::string text = j.dump(2) + "\n";
  write_text(a.out + ".kkt.json", text);
  std::cout << text;
  return kExitOk;
}

struct EvalArgs {
  std::vector<std::string> defenses;
  std::vector<std::string> attacks{"none", "pgd", "fgsm"};
  std::string labeler;
  std::string split = "test";
  std::string out;
};

int run_eval(const EvalArgs& a, const Common& common, const Overlay& overlay) {
  RunConfig cfg = resolve(common, overlay);
  if (cfg.dataset.path.empty()) throw ConfigError("--data: eval needs a dataset file");
  const Dataset data = make_dataset(cfg);
  const Batch b = select_split(data, a.split);

  std::vector<DefenseNet> nets;
  std::vector<std::string> names;
  nets.reserve(a.defenses.size());
  for (const auto& p : a.defenses) {
    Manifest m;
    nets.push_back(load_defense(p, &m));
    if (nets.back().task != data.task) throw ConfigError("--defense " + p + ": task does not match the dataset");
    names.push_back(m.role.empty() ? fs::path(p).stem().string() : m.role);
  }
  std::vector<NamedDefense> defenses;
  for (std::size_t i = 0; i < nets.size(); ++i) defenses.push_back({names[i], &nets[i]});

  std::optional<DefenseNet> labeler;
  if (!a.labeler.empty()) labeler = load_defense(a.labeler);
  std::vector<AttackModel> attack_nets;
  attack_nets.reserve(a.attacks.size());
  std::vector<AttackSpec> attacks;
  const PgdConfig pc = cfg.pgd_config();
  for (const auto& spec : a.attacks) {
    if (spec == "none") {
      attacks.push_back(no_attack());
    } else if (spec == "pgd") {
      attacks.push_back(pgd_attack(pc, pc.early_stop_on_misclassify ? "lambda_pgd_es" : "lambda_pgd"));
    } else if (spec == "pgd-es") {
      PgdConfig es = pc;
      es.early_stop_on_misclassify = true;
      attacks.push_back(pgd_attack(es, "lambda_pgd_es"));
    } else if (spec == "fgsm") {
      attacks.push_back(fgsm_attack(cfg.resolved_constraint()));
    } else if (spec.starts_with("net:")) {
      const std::string path = spec.substr(4);
      attack_nets.push_back(load_attack(path));
      const std::string stem = fs::path(path).stem().string();
      attacks.push_back(net_attack(attack_nets.back(), stem.starts_with("lambda") ? stem : "lambda_" + stem,
                                   labeler ? &*labeler : nullptr));
    } else {
      throw ConfigError("--attack: expected none, net:PATH, pgd, pgd-es or fgsm, got '" + spec + "'");
    }
  }
  const LossFamily family = loss_for(cfg, data).family;
  const EvalMatrix m = evaluate_matrix(defenses, attacks, b, family, cfg.seed);
  const fs::path dir = a.out.empty() ? make_run_dir(common, cfg) : fs::path(a.out);
  fs::create_directories(dir);
  write_text(dir / "matrix.csv", matrix_csv(m));
  write_text(dir / "config.json", run_config_json(cfg));
  auto man = base_manifest(cfg, data, "eval");
  man["split"] = a.split;
  man["defenses"] = a.defenses;
  man["attacks"] = a.attacks;
  man["labels"] = {{"network_attack", labeler ? "imputed:" + a.labeler : std::string("true")},
                   {"misclassification", "true"}};
  write_text(dir / "manifest.json", man.dump(2) + "\n");
  std::cout << matrix_csv(m);
  return kExitOk;
}

struct GridArgs {
  std::string defense;
  std::string attack;
  std::string labeler;
  std::size_t resolution = 51;
  std::string out = "field.csv";
};

int run_export_grid(const GridArgs& a) {
  const DefenseNet f = load_defense(a.defense);
  const AttackModel lam = load_attack(a.attack);
  const DefenseNet labeler = a.labeler.empty() ? f : load_defense(a.labeler);
  if (a.resolution < 2) throw ConfigError("--resolution: must be at least 2");
  const FieldExport field = export_field(f, lam, labeler, a.resolution);
  write_text(a.out, field_csv(field));
  std::cout << "wrote " << field.points.size() << " grid points to " << a.out << "\n";
  return kExitOk;
}

struct GenArgs {
  std::string out = "data.csv";
};

int run_gen_data(const GenArgs& a, const Common& common, const Overlay& overlay) {
  RunConfig cfg = resolve(common, overlay);
  const Dataset data = make_dataset(cfg);
  save_dataset(a.out, data);
  std::cout << data.size() << " rows, fingerprint " << hex64(data.fingerprint) << "\n";
  for (const auto& w : data.warnings) std::cerr << "warning: " << w << "\n";
  return kExitOk;
}

struct ReproduceArgs {
  std::string target;
  bool full_scale = false;
};

int run_reproduce(const ReproduceArgs& a, const Common& common, const Overlay& overlay) {
  RunConfig base = reproduce_preset(a.target, a.full_scale);
  RunConfig cfg = resolve(common, overlay, base);
  const fs::path dir = make_run_dir(common, cfg);
  const ReproduceResult r = reproduce(cfg, dir);
  print_last(r.clean);
  print_last(r.game);
  print_last(r.pgd);
  std::cout << matrix_csv(r.final_matrix) << "run directory: " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Adversarial training as a two-network game: data, training, attacks, flow oracle, evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kArtifactVersion));

  std::function<int()> action;

  Common gen_c;
  Overlay gen_o;
  GenArgs gen_a;
  auto* gen = app.add_subcommand("gen-data", "generate a 2D or regression dataset CSV");
  add_common(gen, gen_c, false);
  add_dataset_flags(gen, gen_o);
  gen->add_option("--out", gen_a.out, "output CSV");
  gen->callback([&] { action = [&] { return run_gen_data(gen_a, gen_c, gen_o); }; });

  struct TrainSub {
    const char* name;
    const char* help;
    Trainer which;
    Common common;
    Overlay overlay;
  };
  std::vector<std::unique_ptr<TrainSub>> trains;
  trains.push_back(std::make_unique<TrainSub>(TrainSub{"train-clean", "plain loss minimization", Trainer::clean, {}, {}}));
  trains.push_back(std::make_unique<TrainSub>(TrainSub{"train-game", "defense and attack networks trained as a zero-sum game", Trainer::game, {}, {}}));
  trains.push_back(std::make_unique<TrainSub>(TrainSub{"train-pgd", "PGD adversarial training baseline", Trainer::pgd, {}, {}}));
  for (auto& t : trains) {
    auto* sub = app.add_subcommand(t->name, t->help);
    add_common(sub, t->common, true);
    add_dataset_flags(sub, t->overlay);
    add_constraint_flags(sub, t->overlay);
    add_training_flags(sub, t->overlay);
    if (t->which == Trainer::pgd) add_pgd_flags(sub, t->overlay);
    TrainSub* ts = t.get();
    sub->callback([&action, ts] { action = [ts] { return run_train(ts->which, ts->common, ts->overlay, ts->name); }; });
  }

  Common atk_c;
  Overlay atk_o;
  AttackArgs atk_a;
  auto* atk = app.add_subcommand("attack", "perturb a dataset against a trained defense");
  add_common(atk, atk_c, false);
  atk->add_option("--method", atk_a.method, "fgsm or pgd")->capture_default_str();
  atk->add_option("--model", atk_a.model, "defense checkpoint")->required();
  atk->add_option("--out", atk_a.out, "adversarial dataset CSV")->required();
  atk->add_option("--split", atk_a.split, "rows to attack: all, train or test")->capture_default_str();
  add_dataset_flags(atk, atk_o);
  add_constraint_flags(atk, atk_o);
  add_pgd_flags(atk, atk_o);
  atk->callback([&] { action = [&] { return run_attack(atk_a, atk_c, atk_o); }; });

  Common flow_c;
  Overlay flow_o;
  FlowArgs flow_a;
  auto* flow = app.add_subcommand("flow", "integrate the constrained gradient flow from one point");
  add_common(flow, flow_c, false);
  add_constraint_flags(flow, flow_o);
  flow_o.option<std::uint64_t>(flow, "--seed", "noise seed", [](RunConfig& c, const std::uint64_t& v) { c.seed = v; });
  flow->add_option("--function", flow_a.function, "analytic function: linear, quadratic, saddle, two-bump")
      ->capture_default_str();
  flow->add_option("--model", flow_a.model, "defense checkpoint (replaces --function)");
  flow->add_option("--point", flow_a.point, "start point (default: the analytic start)")->delimiter(',');
  flow->add_option("--label", flow_a.label, "label of the start point for --model");
  flow->add_option("--dt", flow_a.dt, "step size (0: delta / 100)");
  flow->add_option("--max-time", flow_a.max_time, "integration horizon")->capture_default_str();
  flow->add_option("--saddle", flow_a.saddle, "none, deflect or noise")->capture_default_str();
  flow->add_option("--epsilon", flow_a.epsilon, "deflection radius");
  flow->add_option("--sigma", flow_a.sigma, "noise scale");
  flow->add_option("--noise-horizon", flow_a.noise_horizon, "time after which noise stops (<0: max-time / 4)");
  flow->add_option("--integrator", flow_a.integrator, "rk4 or euler")->capture_default_str();
  flow->add_option("--record-every", flow_a.record_every, "keep every k-th state");
  flow->add_option("--out", flow_a.out, "trajectory CSV (KKT report goes to <out>.kkt.json)")->capture_default_str();
  flow->callback([&] { action = [&] { return run_flow(flow_a, flow_c, flow_o); }; });

  Common ev_c;
  Overlay ev_o;
  EvalArgs ev_a;
  auto* ev = app.add_subcommand("eval", "defense x attack loss and error matrix");
  add_common(ev, ev_c, true);
  ev->add_option("--defense", ev_a.defenses, "defense checkpoints")->required();
  ev->add_option("--attack", ev_a.attacks, "none, net:PATH, pgd, pgd-es or fgsm (repeatable)");
  ev->add_option("--labeler", ev_a.labeler, "checkpoint whose predictions label the network attack");
  ev->add_option("--split", ev_a.split, "rows to evaluate: test, train or all")->capture_default_str();
  ev->add_option("--out", ev_a.out, "output directory (default: a new run directory)");
  add_dataset_flags(ev, ev_o);
  add_constraint_flags(ev, ev_o);
  add_pgd_flags(ev, ev_o);
  ev->callback([&] { action = [&] { return run_eval(ev_a, ev_c, ev_o); }; });

  GridArgs grid_a;
  auto* gr = app.add_subcommand("export-grid", "loss, gradient and attack field over [0,1]^2");
  gr->add_option("--defense", grid_a.defense, "defense checkpoint")->required();
  gr->add_option("--attack", grid_a.attack, "attack checkpoint")->required();
  gr->add_option("--labeler", grid_a.labeler, "checkpoint that imputes labels (default: the defense)");
  gr->add_option("--resolution", grid_a.resolution, "points per axis")->capture_default_str();
  gr->add_option("--out", grid_a.out, "field CSV")->capture_default_str();
  gr->callback([&] { action = [&] { return run_export_grid(grid_a); }; });

  Common rep_c;
  Overlay rep_o;
  ReproduceArgs rep_a;
  auto* rep = app.add_subcommand("reproduce", "clean, game and PGD training, evaluation matrix and field export");
  add_common(rep, rep_c, true);
  rep->add_option("target", rep_a.target, "<family>-<linf|l2>, e.g. circles-linf")->required();
  rep->add_flag("--full-scale", rep_a.full_scale, "n = 2000 and 100 epochs (400 for regression)");
  add_dataset_flags(rep, rep_o);
  add_constraint_flags(rep, rep_o);
  add_training_flags(rep, rep_o);
  add_pgd_flags(rep, rep_o);
  rep_o.flag(rep, "--early-stop-column", "add an early-stopped PGD column",
             [](RunConfig& c) { c.evaluation.early_stop_column = true; });
  rep_o.flag(rep, "--impute-labels", "label the network attack with f_clean predictions",
             [](RunConfig& c) { c.evaluation.impute_labels = true; });
  rep_o.option<std::size_t>(rep, "--every", "evaluate every k epochs",
                            [](RunConfig& c, const std::size_t& v) { c.evaluation.every = v; });
  rep_o.option<std::size_t>(rep, "--resolution", "field grid points per axis",
                            [](RunConfig& c, const std::size_t& v) { c.evaluation.field_resolution = v; });
  rep->callback([&] { action = [&] { return run_reproduce(rep_a, rep_c, rep_o); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    return action ? action() : kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace advgame
