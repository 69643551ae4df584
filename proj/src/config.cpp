#include "advgame/config.hpp"

#include <functional>
#include <type_traits>

#include "advgame/checkpoint.hpp"
#include "advgame/errors.hpp"
#include "json.hpp"

namespace advgame {
namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

struct Field {
  std::string key;
  std::function<void(const json&, const std::string&, std::vector<std::string>&)> read;
  std::function<ordered()> write;
};

template <typename T>
Field field(std::string key, T& target) {
  Field f;
  f.key = key;
  f.read = [&target](const json& v, const std::string& path, std::vector<std::string>& errs) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return errs.push_back(path + ": expected true or false");
      target = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) return errs.push_back(path + ": expected a string");
      target = v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return errs.push_back(path + ": expected a number");
      target = v.get<double>();
    } else {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        return errs.push_back(path + ": expected a non-negative integer");
      }
      target = v.get<T>();
    }
  };
  f.write = [&target] { return ordered(target); };
  return f;
}

struct Section {
  std::string key;
  std::vector<Field> fields;
};

std::vector<Section> sections(RunConfig& c) {
  auto& d = c.dataset;
  auto& k = c.constraint;
  auto& l = c.loss;
  auto& t = c.training;
  auto& p = c.pgd;
  auto& e = c.evaluation;
  auto& o = c.output;
  return {
      {"dataset",
       {field("family", d.family), field("n", d.n), field("noise", d.noise),
        field("train_fraction", d.train_fraction), field("path", d.path),
        field("target_column", d.target_column), field("raw_target", d.raw_target),
        field("regression_dim", d.regression_dim)}},
      {"constraint", {field("p", k.p), field("delta", k.delta)}},
      {"loss", {field("family", l.family), field("mix", l.mix), field("alpha", l.alpha)}},
      {"training",
       {field("epochs", t.epochs), field("defense_steps", t.defense_steps),
        field("attack_steps", t.attack_steps), field("defense_lr", t.defense_lr),
        field("attack_lr", t.attack_lr), field("batch_mode", t.batch_mode),
        field("batch_size", t.batch_size), field("checkpoint_every", t.checkpoint_every),
        field("clip_input", t.clip_input)}},
      {"pgd",
       {field("step", p.step), field("steps", p.steps), field("restarts", p.restarts),
        field("early_stop", p.early_stop), field("ascent_norm", p.ascent_norm),
        field("step_mode", p.step_mode), field("include_start", p.include_start)}},
      {"evaluation",
       {field("early_stop_column", e.early_stop_column), field("impute_labels", e.impute_labels),
        field("field_resolution", e.field_resolution), field("every", e.every)}},
      {"output", {field("dir", o.dir), field("name", o.name)}},
  };
}

template <typename F>
void check(std::vector<std::string>& errs, const std::string& path, F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    errs.push_back(path + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> errs;
  if (dataset.path.empty() && dataset.regression_dim == 0) {
    check(errs, "dataset.family", [&] { family_from_string(dataset.family); });
  }
  if (dataset.n < 10) errs.emplace_back("dataset.n: must be at least 10");
  if (!(dataset.noise >= 0.0)) errs.emplace_back("dataset.noise: must be non-negative");
  if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0)) {
    errs.emplace_back("dataset.train_fraction: must lie in (0, 1)");
  }
  check(errs, "constraint.p", [&] { norm_from_string(constraint.p); });
  if (!(constraint.delta > 0.0) || !std::isfinite(constraint.delta)) {
    errs.emplace_back("constraint.delta: must be a positive number");
  }
  check(errs, "loss.family", [&] { loss_family_from_string(loss.family); });
  check(errs, "loss.mix", [&] { loss_mix_from_string(loss.mix); });
  if (!(loss.alpha >= 0.0 && loss.alpha <= 1.0)) errs.emplace_back("loss.alpha: must lie in [0, 1]");
  if (training.epochs < 1) errs.emplace_back("training.epochs: must be at least 1");
  if (training.defense_steps < 1) errs.emplace_back("training.defense_steps: must be at least 1");
  if (training.attack_steps < 1) errs.emplace_back("training.attack_steps: must be at least 1");
  if (!(training.defense_lr > 0.0)) errs.emplace_back("training.defense_lr: must be positive");
  if (!(training.attack_lr >= 0.0)) errs.emplace_back("training.attack_lr: must be non-negative");
  check(errs, "training.batch_mode", [&] { batch_mode_from_string(training.batch_mode); });
  if (training.batch_size < 1) errs.emplace_back("training.batch_size: must be at least 1");
  if (!(pgd.step >= 0.0)) errs.emplace_back("pgd.step: must be non-negative");
  if (constraint.delta > 0.0 && pgd.step > 2.0 * constraint.delta) {
    errs.emplace_back("pgd.step: must not exceed 2 * constraint.delta");
  }
  if (pgd.steps < 1) errs.emplace_back("pgd.steps: must be at least 1");
  if (pgd.restarts < 1) errs.emplace_back("pgd.restarts: must be at least 1");
  if (!pgd.ascent_norm.empty()) check(errs, "pgd.ascent_norm", [&] { norm_from_string(pgd.ascent_norm); });
  if (pgd.step_mode != "normalized" && pgd.step_mode != "raw-grad") {
    errs.emplace_back("pgd.step_mode: expected normalized or raw-grad");
  }
  if (evaluation.field_resolution < 2) errs.emplace_back("evaluation.field_resolution: must be at least 2");
  if (evaluation.every < 1) errs.emplace_back("evaluation.every: must be at least 1");
  if (output.dir.empty()) errs.emplace_back("output.dir: must not be empty");
  return errs;
}

void RunConfig::validate() const {
  const auto errs = violations();
  if (errs.empty()) return;
  std::string msg = "invalid configuration (" + std::to_string(errs.size()) + " problem" +
                    (errs.size() == 1 ? "" : "s") + "):";
  for (const auto& e : errs) msg += "\n  " + e;
  throw ConfigError(msg);
}

LpConstraint RunConfig::resolved_constraint() const {
  LpConstraint c{norm_from_string(constraint.p), constraint.delta};
  c.validate();
  return c;
}

LossKind RunConfig::resolved_loss() const {
  LossKind k{loss_family_from_string(loss.family), loss_mix_from_string(loss.mix), loss.alpha};
  if (is_regression() && loss.family == "cross-entropy") k.family = LossFamily::mean_squared_error;
  return k;
}

bool RunConfig::is_regression() const {
  return dataset.regression_dim > 0 || (!dataset.path.empty() && dataset.target_column != "label" &&
                                        !dataset.target_column.empty());
}

Task RunConfig::task() const {
  if (is_regression()) return Task::regression();
  return Task::classification(family_classes(family_from_string(dataset.family)));
}

GameConfig RunConfig::game_config() const {
  GameConfig g;
  g.epochs = training.epochs;
  g.defense_steps = training.defense_steps;
  g.attack_steps = training.attack_steps;
  g.defense_lr = training.defense_lr;
  g.attack_lr = training.attack_lr;
  g.loss = resolved_loss();
  g.constraint = resolved_constraint();
  g.batch_mode = batch_mode_from_string(training.batch_mode);
  g.batch_size = training.batch_size;
  g.seed = seed;
  g.checkpoint_every = training.checkpoint_every;
  g.clip_input = training.clip_input;
  return g;
}

PgdConfig RunConfig::pgd_config() const {
  PgdConfig p = PgdConfig::for_constraint(resolved_constraint());
  p.step = pgd.step;
  p.steps = pgd.steps;
  p.restarts = pgd.restarts;
  p.early_stop_on_misclassify = pgd.early_stop;
  if (!pgd.ascent_norm.empty()) p.ascent_norm = norm_from_string(pgd.ascent_norm);
  p.step_mode = pgd.step_mode == "raw-grad" ? StepMode::raw_gradient : StepMode::normalized;
  p.include_start = pgd.include_start;
  p.seed = derive_seed(seed, 0x706764);
  return p;
}

GenerateOptions RunConfig::generate_options() const {
  GenerateOptions g;
  g.n = dataset.n;
  g.noise = dataset.noise;
  g.train_fraction = dataset.train_fraction;
  g.seed = seed;
  return g;
}

RunConfig parse_run_config(const std::string& text, const RunConfig& base) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg = base;
  std::vector<std::string> errs;
  auto secs = sections(cfg);
  for (const auto& [key, value] : root.items()) {
    if (key == "seed") {
      field("seed", cfg.seed).read(value, "seed", errs);
      continue;
    }
    auto sec = std::find_if(secs.begin(), secs.end(), [&](const Section& s) { return s.key == key; });
    if (sec == secs.end()) {
      errs.push_back(key + ": unknown key");
      continue;
    }
    if (!value.is_object()) {
      errs.push_back(key + ": expected an object");
      continue;
    }
    for (const auto& [fkey, fvalue] : value.items()) {
      auto f = std::find_if(sec->fields.begin(), sec->fields.end(),
                            [&](const Field& x) { return x.key == fkey; });
      if (f == sec->fields.end()) {
        errs.push_back(key + "." + fkey + ": unknown key");
        continue;
      }
      f->read(fvalue, key + "." + fkey, errs);
    }
  }
  for (auto& e : cfg.violations()) errs.push_back(std::move(e));
  if (!errs.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errs.size()) + " problem" +
                      (errs.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
  return parse_run_config(read_text(path), base);
}

std::string run_config_json(const RunConfig& cfg) {
  RunConfig copy = cfg;
  ordered root;
  for (const auto& sec : sections(copy)) {
    ordered obj = ordered::object();
    for (const auto& f : sec.fields) obj[f.key] = f.write();
    root[sec.key] = obj;
  }
  root["seed"] = copy.seed;
  return root.dump(2) + "\n";
}

}  // namespace advgame
