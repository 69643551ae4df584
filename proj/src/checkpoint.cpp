#include "advgame/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "advgame/errors.hpp"
#include "json.hpp"

namespace advgame {
namespace {

using nlohmann::json;

json mlp_json(const Mlp& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) {
    json e = {{"kind", to_string(l.kind)}, {"in", l.in_dim}, {"out", l.out_dim}};
    if (l.kind == LayerKind::leaky_relu) e["slope"] = l.slope;
    layers.push_back(e);
  }
  json out = {{"layers", layers},
              {"params", std::vector<double>(net.params().begin(), net.params().end())}};
  if (net.magnitude_bound()) out["kappa"] = *net.magnitude_bound();
  if (net.output_bound()) out["output_bound"] = *net.output_bound();
  return out;
}

Mlp mlp_from(const json& j) {
  std::vector<LayerSpec> layers;
  for (const auto& e : j.at("layers")) {
    LayerSpec s;
    s.kind = layer_kind_from_string(e.at("kind").get<std::string>());
    s.in_dim = e.at("in").get<std::size_t>();
    s.out_dim = e.at("out").get<std::size_t>();
    s.slope = s.kind == LayerKind::leaky_relu ? e.value("slope", kLeakySlope) : 0.0;
    layers.push_back(s);
  }
  Mlp net(std::move(layers), j.at("params").get<std::vector<double>>());
  if (j.contains("kappa")) net.set_magnitude_bound(j.at("kappa").get<double>());
  if (j.contains("output_bound")) net.set_output_bound(j.at("output_bound").get<double>());
  return net;
}

json task_json(const Task& t) {
  json j = {{"kind", to_string(t.kind)}};
  if (t.is_classification()) j["classes"] = t.classes;
  return j;
}

Task task_from(const json& j) {
  const TaskKind kind = task_kind_from_string(j.at("kind").get<std::string>());
  return kind == TaskKind::classification ? Task::classification(j.at("classes").get<std::size_t>())
                                          : Task::regression();
}

json constraint_json(const LpConstraint& c) { return {{"p", to_string(c.p)}, {"delta", c.delta}}; }

LpConstraint constraint_from(const json& j) {
  LpConstraint c{norm_from_string(j.at("p").get<std::string>()), j.at("delta").get<double>()};
  c.validate();
  return c;
}

json manifest_json(const Manifest& m) {
  json j = {{"role", m.role},
            {"task", task_json(m.task)},
            {"dataset_fingerprint", hex64(m.dataset_fingerprint)},
            {"seed", m.seed},
            {"artifact_version", m.artifact_version},
            {"epoch", m.epoch}};
  if (m.constraint) j["constraint"] = constraint_json(*m.constraint);
  return j;
}

Manifest manifest_from(const json& j) {
  Manifest m;
  m.role = j.value("role", "");
  m.task = task_from(j.at("task"));
  m.dataset_fingerprint = parse_hex64(j.value("dataset_fingerprint", "0x0"));
  m.seed = j.value("seed", std::uint64_t{0});
  m.artifact_version = j.value("artifact_version", "");
  m.epoch = j.value("epoch", std::size_t{0});
  if (j.contains("constraint")) m.constraint = constraint_from(j.at("constraint"));
  return m;
}

json parse(const std::string& text) {
  try {
    json j = json::parse(text);
    if (j.value("format", 0) != kCheckpointFormat) {
      throw IoError("unsupported checkpoint format " + std::to_string(j.value("format", 0)));
    }
    return j;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
}

template <typename F>
auto guarded(F&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& text) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(text, &pos, 16);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InputError("not a hexadecimal fingerprint: '" + text + "'");
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string defense_to_json(const DefenseNet& f, const Manifest& manifest) {
  json j = {{"format", kCheckpointFormat},
            {"kind", "defense"},
            {"manifest", manifest_json(manifest)},
            {"task", task_json(f.task)},
            {"net", mlp_json(f.net)}};
  return j.dump(1) + "\n";
}

DefenseNet defense_from_json(const std::string& text, Manifest* manifest) {
  const json j = parse(text);
  return guarded([&] {
    if (j.at("kind") != "defense") throw IoError("checkpoint does not hold a defense network");
    if (manifest) *manifest = manifest_from(j.at("manifest"));
    return DefenseNet{mlp_from(j.at("net")), task_from(j.at("task"))};
  });
}

std::string attack_to_json(const AttackModel& a, const Manifest& manifest) {
  json decoders = json::array();
  for (const auto& d : a.decoders()) decoders.push_back(mlp_json(d));
  json scalers = json::array();
  for (const auto& s : a.scalers()) scalers.push_back(mlp_json(s));
  json j = {{"format", kCheckpointFormat},
            {"kind", "attack"},
            {"manifest", manifest_json(manifest)},
            {"task", task_json(a.task())},
            {"constraint", constraint_json(a.constraint())},
            {"decoders", decoders},
            {"scalers", scalers}};
  if (a.encoder()) j["encoder"] = mlp_json(*a.encoder());
  return j.dump(1) + "\n";
}

AttackModel attack_from_json(const std::string& text, Manifest* manifest) {
  const json j = parse(text);
  return guarded([&] {
    if (j.at("kind") != "attack") throw IoError("checkpoint does not hold an attack network");
    if (manifest) *manifest = manifest_from(j.at("manifest"));
    std::optional<Mlp> encoder;
    if (j.contains("encoder")) encoder = mlp_from(j.at("encoder"));
    std::vector<Mlp> decoders, scalers;
    for (const auto& d : j.at("decoders")) decoders.push_back(mlp_from(d));
    for (const auto& s : j.at("scalers")) scalers.push_back(mlp_from(s));
    return AttackModel(constraint_from(j.at("constraint")), task_from(j.at("task")),
                       std::move(encoder), std::move(decoders), std::move(scalers));
  });
}

void save_defense(const std::filesystem::path& path, const DefenseNet& f, const Manifest& m) {
  write_text(path, defense_to_json(f, m));
}

DefenseNet load_defense(const std::filesystem::path& path, Manifest* manifest) {
  return defense_from_json(read_text(path), manifest);
}

void save_attack(const std::filesystem::path& path, const AttackModel& a, const Manifest& m) {
  write_text(path, attack_to_json(a, m));
}

AttackModel load_attack(const std::filesystem::path& path, Manifest* manifest) {
  return attack_from_json(read_text(path), manifest);
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  const json j = parse(read_text(path));
  return j.value("kind", "");
}

}  // namespace advgame
