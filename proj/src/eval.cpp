#include "advgame/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "advgame/checkpoint.hpp"
#include "advgame/data.hpp"
#include "advgame/errors.hpp"
#include "advgame/training.hpp"

namespace advgame {

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::net: return "net";
    case AttackKind::pgd: return "pgd";
    case AttackKind::pgd_early_stop: return "pgd-es";
    case AttackKind::fgsm: return "fgsm";
  }
  return "?";
}

AttackSpec no_attack() { return {"none", AttackKind::none, nullptr, {}, nullptr}; }

AttackSpec net_attack(const AttackModel& attack, std::string name, const DefenseNet* labeler) {
  AttackSpec s;
  s.name = std::move(name);
  s.kind = AttackKind::net;
  s.net = &attack;
  s.pgd.constraint = attack.constraint();
  s.labeler = labeler;
  return s;
}

AttackSpec pgd_attack(const PgdConfig& cfg, std::string name) {
  AttackSpec s;
  s.name = std::move(name);
  s.kind = cfg.early_stop_on_misclassify ? AttackKind::pgd_early_stop : AttackKind::pgd;
  s.pgd = cfg;
  return s;
}

AttackSpec fgsm_attack(const LpConstraint& constraint, std::string name) {
  AttackSpec s;
  s.name = std::move(name);
  s.kind = AttackKind::fgsm;
  s.pgd = PgdConfig::for_constraint(constraint);
  s.pgd.step = constraint.delta;
  s.pgd.steps = 1;
  s.pgd.restarts = 1;
  return s;
}

const Cell& EvalMatrix::at(const std::string& defense, const std::string& attack) const {
  const auto d = std::find(defenses.begin(), defenses.end(), defense);
  const auto a = std::find(attacks.begin(), attacks.end(), attack);
  if (d == defenses.end() || a == attacks.end()) {
    throw InputError("no matrix cell (" + defense + ", " + attack + ")");
  }
  return at(static_cast<std::size_t>(d - defenses.begin()), static_cast<std::size_t>(a - attacks.begin()));
}

Tensor2 attack_inputs(const AttackSpec& spec, const DefenseNet& f, LossFamily family,
                      const Batch& batch, std::uint64_t seed) {
  switch (spec.kind) {
    case AttackKind::none:
      return batch.x;
    case AttackKind::net: {
      if (!spec.net) throw ConfigError("network attack '" + spec.name + "' has no model");
      if (spec.net->input_dim() != batch.x.cols()) throw ConfigError("attack input width does not match the data");
      if (!spec.net->task().is_classification()) return spec.net->adversarial_example(batch.x, {});
      const std::vector<std::size_t> labels = spec.labeler ? spec.labeler->predict(batch.x) : batch.labels;
      return spec.net->adversarial_example(batch.x, labels);
    }
    case AttackKind::fgsm:
      if (spec.pgd.constraint.p == Norm::linf) return fgsm(f, family, batch, spec.pgd.constraint);
      [[fallthrough]];
    case AttackKind::pgd:
    case AttackKind::pgd_early_stop: {
      PgdConfig cfg = spec.pgd;
      cfg.seed = seed;
      return pgd(f, family, batch, cfg);
    }
  }
  return batch.x;
}

EvalMatrix evaluate_matrix(std::span<const NamedDefense> defenses, std::span<const AttackSpec> attacks,
                           const Batch& test, LossFamily family, std::uint64_t seed) {
  EvalMatrix m;
  for (const auto& d : defenses) {
    if (!d.net) throw ConfigError("defense '" + d.name + "' has no model");
    if (d.net->input_dim() != test.x.cols()) {
      throw ConfigError("defense '" + d.name + "' expects " + std::to_string(d.net->input_dim()) +
                        " inputs but the data has " + std::to_string(test.x.cols()));
    }
    m.defenses.push_back(d.name);
  }
  for (const auto& a : attacks) m.attacks.push_back(a.name);
  const double n = static_cast<double>(std::max<std::size_t>(test.size(), 1));
  for (std::size_t di = 0; di < defenses.size(); ++di) {
    for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
      const Tensor2 x = attack_inputs(attacks[ai], *defenses[di].net, family, test,
                                      derive_seed(seed, di * attacks.size() + ai));
      const Metrics met = measure(*defenses[di].net, family, test, x);
      m.cells.push_back({met.loss, met.loss * n, met.error});
    }
  }
  return m;
}

std::string matrix_csv(const EvalMatrix& m) {
  std::string out = "defense,attack,loss,loss_sum,error\n";
  for (std::size_t d = 0; d < m.defenses.size(); ++d) {
    for (std::size_t a = 0; a < m.attacks.size(); ++a) {
      const Cell& c = m.at(d, a);
      out += m.defenses[d] + "," + m.attacks[a] + "," + format_double(c.loss) + "," +
             format_double(c.loss_sum) + "," + format_double(c.error) + "\n";
    }
  }
  return out;
}

std::string curves_csv(const CurveLog& log, bool regression) {
  std::string out = "epoch,defense,attack,metric,value\n";
  for (std::size_t k = 0; k < log.matrices.size(); ++k) {
    const EvalMatrix& m = log.matrices[k];
    const std::string epoch = std::to_string(log.epochs[k]);
    for (std::size_t d = 0; d < m.defenses.size(); ++d) {
      for (std::size_t a = 0; a < m.attacks.size(); ++a) {
        const Cell& c = m.at(d, a);
        const std::string key = epoch + "," + m.defenses[d] + "," + m.attacks[a] + ",";
        out += key + "loss," + format_double(c.loss) + "\n";
        out += key + (regression ? "mse," : "error,") + format_double(c.error) + "\n";
        if (regression) out += key + "loss_sum," + format_double(c.loss_sum) + "\n";
      }
    }
  }
  return out;
}

void emit_curves(const CurveLog& log, const std::filesystem::path& out, bool regression) {
  if (log.matrices.empty()) throw InputError("no evaluated epochs to emit");
  write_text(out, curves_csv(log, regression));
}

FieldExport export_field(const DefenseNet& f, const AttackModel& attack, const DefenseNet& labeler,
                         std::size_t resolution) {
  if (f.input_dim() != 2 || attack.input_dim() != 2 || labeler.input_dim() != 2) {
    throw ConfigError("field export supports 2D inputs only");
  }
  if (!f.task.is_classification()) throw ConfigError("field export needs a classification defense");
  const Tensor2 pts = grid(resolution);
  Batch b;
  b.x = pts;
  b.labels = labeler.predict(pts);
  Tape tape = f.net.record(pts);
  const LossResult res = loss(LossFamily::cross_entropy, tape.output(), b);
  const Tensor2 g = f.net.backward(tape, res.grad, GradRequest::input_only).input;
  const Tensor2 lam = attack.forward(pts, b.labels);

  FieldExport out;
  out.constraint = attack.constraint();
  out.resolution = resolution;
  out.points.resize(pts.rows());
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    FieldPoint& p = out.points[i];
    p.x1 = pts(i, 0);
    p.x2 = pts(i, 1);
    p.label = b.labels[i];
    p.loss = res.per_sample[i];
    const double n = std::hypot(g(i, 0), g(i, 1));
    if (n > 0.0) {
      p.g1 = g(i, 0) / n;
      p.g2 = g(i, 1) / n;
    }
    p.a1 = lam(i, 0);
    p.a2 = lam(i, 1);
  }
  return out;
}

std::string field_csv(const FieldExport& field) {
  std::string out = "x1,x2,label,loss,g1,g2,a1,a2\n";
  for (const auto& p : field.points) {
    out += format_double(p.x1) + "," + format_double(p.x2) + "," + std::to_string(p.label) + "," +
           format_double(p.loss) + "," + format_double(p.g1) + "," + format_double(p.g2) + "," +
           format_double(p.a1) + "," + format_double(p.a2) + "\n";
  }
  return out;
}

double angle_deg(double x, double y) { return std::atan2(y, x) * 180.0 / std::numbers::pi; }

double diagonal_distance_deg(double deg) {
  double best = 360.0;
  for (double d : {45.0, 135.0, -45.0, -135.0}) {
    double diff = std::fmod(std::abs(deg - d), 360.0);
    diff = std::min(diff, 360.0 - diff);
    best = std::min(best, diff);
  }
  return best;
}

std::vector<std::size_t> angle_histogram(const FieldExport& field, double bin_deg) {
  const auto bins = static_cast<std::size_t>(std::lround(360.0 / bin_deg));
  std::vector<std::size_t> h(bins, 0);
  for (const auto& p : field.points) {
    if (p.a1 == 0.0 && p.a2 == 0.0) continue;
    const double a = angle_deg(p.a1, p.a2);
    auto k = static_cast<std::size_t>(std::floor((a + 180.0) / bin_deg));
    h[std::min(k, bins - 1)]++;
  }
  return h;
}

std::vector<double> quadrant_modes(const std::vector<std::size_t>& h, double bin_deg) {
  std::vector<double> modes;
  const std::size_t per = h.size() / 4;
  for (std::size_t q = 0; q < 4; ++q) {
    const auto first = h.begin() + static_cast<std::ptrdiff_t>(q * per);
    const auto last = first + static_cast<std::ptrdiff_t>(per);
    const auto it = std::max_element(first, last);
    if (*it == 0) continue;
    const auto k = static_cast<std::size_t>(it - h.begin());
    modes.push_back(-180.0 + (static_cast<double>(k) + 0.5) * bin_deg);
  }
  return modes;
}

double mean_angular_deviation(const FieldExport& field) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& p : field.points) {
    const double na = std::hypot(p.a1, p.a2);
    const double ng = std::hypot(p.g1, p.g2);
    if (na == 0.0 || ng == 0.0) continue;
    const double c = std::clamp((p.a1 * p.g1 + p.a2 * p.g2) / (na * ng), -1.0, 1.0);
    sum += std::acos(c) * 180.0 / std::numbers::pi;
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace advgame
