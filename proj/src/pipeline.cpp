#include "advgame/pipeline.hpp"

#include <algorithm>

#include "advgame/checkpoint.hpp"
#include "advgame/errors.hpp"
#include "advgame/rng.hpp"
#include "json.hpp"

namespace advgame {
namespace {

// Model init streams under the run seed.
constexpr std::uint64_t kCleanInitStream = 9;
constexpr std::uint64_t kPgdInitStream = 10;
constexpr std::uint64_t kEvalStream = 0x6576616c;

std::string label_mode(const RunConfig& cfg) { return cfg.evaluation.impute_labels ? "imputed:f_clean" : "true"; }

}  // namespace

RunConfig reproduce_preset(const std::string& name, bool full_scale) {
  const auto dash = name.rfind('-');
  if (dash == std::string::npos) {
    throw ConfigError("reproduce target must look like <family>-<linf|l2>, got '" + name + "'");
  }
  const std::string family = name.substr(0, dash);
  const std::string norm = name.substr(dash + 1);
  RunConfig cfg;
  if (norm == "linf") {
    cfg.constraint.p = "inf";
  } else if (norm == "l2") {
    cfg.constraint.p = "2";
  } else {
    throw ConfigError("reproduce target norm must be linf or l2, got '" + norm + "'");
  }
  if (family == "regression") {
    cfg.dataset.regression_dim = 2;
    cfg.loss.family = "mse";
  } else {
    family_from_string(family);
    cfg.dataset.family = family;
  }
  if (full_scale) {
    cfg.dataset.n = 2000;
    cfg.training.epochs = family == "regression" ? 400 : 100;
  }
  cfg.output.name = name;
  return cfg;
}

Dataset make_dataset(const RunConfig& cfg) {
  if (!cfg.dataset.path.empty()) {
    LoadOptions o;
    o.target_column = cfg.dataset.target_column;
    o.train_fraction = cfg.dataset.train_fraction;
    o.seed = cfg.seed;
    o.raw_target = cfg.dataset.raw_target;
    if (!cfg.dataset.target_column.empty() && cfg.dataset.target_column != "label") {
      return load_regression_csv(cfg.dataset.path, o);
    }
    return load_dataset(cfg.dataset.path, o);
  }
  if (cfg.dataset.regression_dim > 0) {
    return generate_regression(cfg.dataset.regression_dim, cfg.generate_options(), cfg.dataset.raw_target);
  }
  return generate_2d(family_from_string(cfg.dataset.family), cfg.generate_options());
}

LossKind loss_for(const RunConfig& cfg, const Dataset& data) {
  LossKind k = cfg.resolved_loss();
  if (!data.task.is_classification() && k.family == LossFamily::cross_entropy) {
    k.family = LossFamily::mean_squared_error;
  }
  if (data.task.is_classification() && k.family == LossFamily::mean_squared_error) {
    throw ConfigError("loss.family: mse needs a regression dataset");
  }
  return k;
}

ReproduceResult reproduce(const RunConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());

  ReproduceResult r;
  r.dir = dir;
  r.data = make_dataset(cfg);
  const Dataset& data = r.data;
  const LpConstraint constraint = cfg.resolved_constraint();

  GameConfig gc = cfg.game_config();
  gc.loss = loss_for(cfg, data);
  gc.checkpoint_dir = dir / "checkpoints";
  gc.validate();
  const PgdConfig pc = cfg.pgd_config();
  const std::size_t D = data.dim();

  ModelPair pair = data.task.is_classification()
                       ? build_classification_pair(D, data.task.classes, constraint, cfg.seed)
                       : build_regression_pair(D, constraint, cfg.seed);
  CleanTrainer clean(build_defense(D, data.task, derive_seed(cfg.seed, kCleanInitStream)), data, gc);
  GameTrainer game(std::move(pair.defense), std::move(pair.attack), data, gc);
  PgdTrainer pgdt(build_defense(D, data.task, derive_seed(cfg.seed, kPgdInitStream)), data, gc, pc);

  const Batch test = data.test_batch();
  auto evaluate = [&](std::size_t epoch) {
    const std::vector<NamedDefense> defenses = {
        {"f", &game.defense()}, {"f_pgd", &pgdt.defense()}, {"f_clean", &clean.defense()}};
    std::vector<AttackSpec> attacks = {
        no_attack(),
        net_attack(game.attack(), "lambda_f", cfg.evaluation.impute_labels ? &clean.defense() : nullptr),
        pgd_attack(pc, pc.early_stop_on_misclassify ? "lambda_pgd_es" : "lambda_pgd"),
        fgsm_attack(constraint, "lambda_fgsm")};
    if (cfg.evaluation.early_stop_column && !pc.early_stop_on_misclassify && data.task.is_classification()) {
      PgdConfig es = pc;
      es.early_stop_on_misclassify = true;
      attacks.push_back(pgd_attack(es, "lambda_pgd_es"));
    }
    return evaluate_matrix(defenses, attacks, test, gc.loss.family, derive_seed(cfg.seed, kEvalStream + epoch));
  };

  for (std::size_t e = 1; e <= gc.epochs; ++e) {
    clean.step_epoch();
    game.step_epoch();
    pgdt.step_epoch();
    if (e % cfg.evaluation.every == 0 || e == gc.epochs) r.curves.add(e, evaluate(e));
  }

  r.f_game = game.defense();
  r.attack = game.attack();
  r.f_pgd = pgdt.defense();
  r.f_clean = clean.defense();
  r.game = game.record();
  r.pgd = pgdt.record();
  r.clean = clean.record();
  r.final_matrix = r.curves.matrices.back();

  const bool regression = !data.task.is_classification();
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    r.files.push_back(name);
  };
  emit("config.json", run_config_json(cfg));
  save_dataset(dir / "data.csv", data);
  r.files.push_back("data.csv");
  emit("curves.csv", curves_csv(r.curves, regression));
  emit("matrix.csv", matrix_csv(r.final_matrix));
  emit("record_clean.csv", record_csv(r.clean));
  emit("record_game.csv", record_csv(r.game));
  emit("record_pgd.csv", record_csv(r.pgd));
  emit("audit_game.csv", audit_csv(r.game));
  std::string timing = timing_csv(r.clean);
  for (const TrainRecord* rec : {&r.game, &r.pgd}) {
    const std::string t = timing_csv(*rec);
    timing += t.substr(t.find('\n') + 1);
  }
  emit("timing.csv", timing);
  if (data.task.is_classification() && D == 2) {
    r.field = export_field(r.f_game, r.attack, r.f_clean, cfg.evaluation.field_resolution);
    r.has_field = true;
    emit("field.csv", field_csv(r.field));
  }

  nlohmann::ordered_json m;
  m["artifact_version"] = kArtifactVersion;
  m["target"] = cfg.output.name;
  m["seed"] = cfg.seed;
  m["seeds"] = {{"data_split", cfg.seed},
                {"f_and_lambda", cfg.seed},
                {"f_clean", hex64(derive_seed(cfg.seed, kCleanInitStream))},
                {"f_pgd", hex64(derive_seed(cfg.seed, kPgdInitStream))},
                {"pgd", hex64(pc.seed)}};
  m["dataset"] = {{"fingerprint", hex64(data.fingerprint)},
                  {"provenance", data.provenance},
                  {"task", to_string(data.task.kind)},
                  {"classes", data.task.classes},
                  {"train", data.train.size()},
                  {"test", data.test.size()},
                  {"warnings", data.warnings}};
  m["constraint"] = {{"p", to_string(constraint.p)}, {"delta", constraint.delta}};
  m["labels"] = {{"network_attack", label_mode(cfg)}, {"misclassification", "true"}, {"field", "imputed:f_clean"}};
  std::vector<std::string> ckpts;
  for (const TrainRecord* rec : {&r.clean, &r.game, &r.pgd}) {
    for (const auto& p : rec->checkpoints) ckpts.push_back(std::filesystem::relative(p, dir).generic_string());
  }
  m["checkpoints"] = ckpts;
  m["files"] = r.files;
  emit("manifest.json", m.dump(2) + "\n");
  return r;
}

std::vector<std::string> metric_files(const ReproduceResult& r) {
  std::vector<std::string> out;
  for (const auto& f : r.files) {
    if (f != "timing.csv" && f.ends_with(".csv")) out.push_back(f);
  }
  return out;
}

}  // namespace advgame
