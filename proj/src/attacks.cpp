#include "advgame/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

#include "advgame/errors.hpp"

namespace advgame {
namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<char> AttackObjective::succeeded(const Tensor2& x) const {
  return std::vector<char>(x.rows(), 0);
}

DefenseObjective::DefenseObjective(const DefenseNet& f, LossFamily family, const Batch& batch)
    : f_(f), family_(family), batch_(batch) {}

std::vector<double> DefenseObjective::evaluate(const Tensor2& x, Tensor2* grad) const {
  if (grad == nullptr) return loss(family_, f_.forward(x), batch_).per_sample;
  Tape tape = f_.net.record(x);
  LossResult res = loss(family_, tape.output(), batch_);
  *grad = f_.net.backward(tape, res.grad, GradRequest::input_only).input;
  return std::move(res.per_sample);
}

std::vector<char> DefenseObjective::succeeded(const Tensor2& x) const {
  std::vector<char> out(x.rows(), 0);
  if (!f_.task.is_classification()) return out;
  const auto pred = f_.predict(x);
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = pred[r] != batch_.labels[r] ? 1 : 0;
  return out;
}

void PgdConfig::validate() const {
  constraint.validate();
  if (!(step >= 0.0) || !std::isfinite(step)) throw ConfigError("pgd step must be non-negative");
  if (step > 2.0 * constraint.delta) throw ConfigError("pgd step must not exceed 2 * delta");
  if (steps < 1) throw ConfigError("pgd needs at least one step");
  if (restarts < 1) throw ConfigError("pgd needs at least one restart");
}

PgdConfig PgdConfig::for_constraint(const LpConstraint& c) {
  PgdConfig cfg;
  cfg.constraint = c;
  cfg.ascent_norm = c.p;
  return cfg;
}

// Points this close to the sphere count as inside, which keeps projection
// idempotent under rounding.
constexpr double kBoundarySlack = 1e-12;

void project_lp_ball_inplace(std::span<double> x, std::span<const double> center,
                             const LpConstraint& c) {
  if (x.size() != center.size()) throw ShapeError("project_lp_ball: point and center differ in size");
  const std::size_t d = x.size();
  switch (c.p) {
    case Norm::linf:
      for (std::size_t i = 0; i < d; ++i) x[i] = std::clamp(x[i], center[i] - c.delta, center[i] + c.delta);
      return;
    case Norm::l2: {
      double n2 = 0.0;
      for (std::size_t i = 0; i < d; ++i) n2 += (x[i] - center[i]) * (x[i] - center[i]);
      const double n = std::sqrt(n2);
      if (n <= c.delta * (1.0 + kBoundarySlack)) return;
      const double s = c.delta / n;
      for (std::size_t i = 0; i < d; ++i) x[i] = center[i] + (x[i] - center[i]) * s;
      return;
    }
    case Norm::l1: {
      std::vector<double> w(d);
      double total = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        w[i] = x[i] - center[i];
        total += std::abs(w[i]);
      }
      if (total <= c.delta * (1.0 + kBoundarySlack)) return;
      // Sort-based simplex projection of |w| (Duchi et al. 2008).
      std::vector<double> u(d);
      for (std::size_t i = 0; i < d; ++i) u[i] = std::abs(w[i]);
      std::sort(u.begin(), u.end(), std::greater<>());
      double cumsum = 0.0;
      double theta = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        cumsum += u[j];
        const double t = (cumsum - c.delta) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0) theta = t;
      }
      for (std::size_t i = 0; i < d; ++i) {
        x[i] = center[i] + sign(w[i]) * std::max(std::abs(w[i]) - theta, 0.0);
      }
      return;
    }
  }
}

std::vector<double> project_lp_ball(std::span<const double> x, std::span<const double> center,
                                    const LpConstraint& constraint) {
  std::vector<double> out(x.begin(), x.end());
  project_lp_ball_inplace(out, center, constraint);
  return out;
}

std::vector<double> steepest_direction(std::span<const double> grad, Norm ascent_norm) {
  std::vector<double> d(grad.size(), 0.0);
  switch (ascent_norm) {
    case Norm::l2: {
      const double n = lp_norm(grad, Norm::l2);
      if (n == 0.0) return d;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = grad[i] / n;
      return d;
    }
    case Norm::linf:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = sign(grad[i]);
      return d;
    case Norm::l1: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < grad.size(); ++i) {
        if (std::abs(grad[i]) > std::abs(grad[best])) best = i;
      }
      if (!grad.empty()) d[best] = sign(grad[best]);
      return d;
    }
  }
  return d;
}

std::vector<double> sample_in_ball(std::span<const double> center, const LpConstraint& c,
                                   Rng& rng) {
  const std::size_t d = center.size();
  std::vector<double> out(center.begin(), center.end());
  switch (c.p) {
    case Norm::linf: {
      std::uniform_real_distribution<double> u(-c.delta, c.delta);
      for (auto& v : out) v += u(rng);
      break;
    }
    case Norm::l2: {
      std::normal_distribution<double> g(0.0, 1.0);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> dir(d);
      double n = 0.0;
      while (n == 0.0) {
        for (auto& v : dir) v = g(rng);
        n = lp_norm(dir, Norm::l2);
      }
      const double r = c.delta * std::pow(u(rng), 1.0 / static_cast<double>(d));
      for (std::size_t i = 0; i < d; ++i) out[i] += r * dir[i] / n;
      break;
    }
    case Norm::l1: {
      // First D of D+1 normalized exponentials are uniform on the simplex interior.
      std::exponential_distribution<double> e(1.0);
      std::bernoulli_distribution coin(0.5);
      std::vector<double> w(d + 1);
      double s = 0.0;
      for (auto& v : w) s += (v = e(rng));
      for (std::size_t i = 0; i < d; ++i) out[i] += (coin(rng) ? 1.0 : -1.0) * c.delta * w[i] / s;
      break;
    }
  }
  return out;
}

Tensor2 fgsm(const AttackObjective& objective, const Tensor2& x, const LpConstraint& constraint) {
  constraint.validate();
  if (constraint.p != Norm::linf) throw ConfigError("FGSM is defined for the l-infinity ball only");
  Tensor2 grad;
  objective.evaluate(x, &grad);
  Tensor2 out = x;
  auto o = out.data();
  auto g = grad.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += constraint.delta * sign(g[i]);
  return out;
}

Tensor2 fgsm(const DefenseNet& f, LossFamily family, const Batch& batch,
             const LpConstraint& constraint) {
  DefenseObjective obj(f, family, batch);
  return fgsm(obj, batch.x, constraint);
}

PgdResult pgd(const AttackObjective& objective, const Tensor2& x, const PgdConfig& cfg) {
  cfg.validate();
  if (x.cols() != objective.dim()) throw ShapeError("pgd: input width does not match objective");
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const auto& c = cfg.constraint;

  PgdResult best;
  best.x_adv = x;
  best.loss.assign(n, -std::numeric_limits<double>::infinity());
  best.succeeded.assign(n, 0);
  best.restart.assign(n, 0);

  if (cfg.include_start) {
    best.loss = objective.evaluate(x, nullptr);
    if (cfg.early_stop_on_misclassify) best.succeeded = objective.succeeded(x);
  }

  std::vector<double> dir(d);
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    Tensor2 cur = x;
    if (r > 0) {
      Rng rng = make_rng(cfg.seed, r);
      for (std::size_t i = 0; i < n; ++i) {
        auto s = sample_in_ball(x.row(i), c, rng);
        std::copy(s.begin(), s.end(), cur.row(i).begin());
      }
    }
    std::vector<char> active(n, 1);
    std::vector<char> success(n, 0);
    Tensor2 grad;
    for (std::size_t t = 0; t < cfg.steps; ++t) {
      if (cfg.early_stop_on_misclassify) {
        success = objective.succeeded(cur);
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) {
          if (success[i]) active[i] = 0;
          any = any || active[i];
        }
        if (!any) break;
      }
      // Always evaluated on the full batch so per-row results do not depend
      // on which rows are still active.
      objective.evaluate(cur, &grad);
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) continue;
        auto g = grad.row(i);
        if (cfg.step_mode == StepMode::raw_gradient && cfg.ascent_norm != Norm::linf) {
          dir = steepest_direction(g, cfg.ascent_norm);
          if (cfg.ascent_norm == Norm::l2) {
            std::copy(g.begin(), g.end(), dir.begin());
          } else {
            for (std::size_t k = 0; k < d; ++k) dir[k] *= std::abs(g[k]);
          }
        } else {
          dir = steepest_direction(g, cfg.ascent_norm);
        }
        auto row = cur.row(i);
        for (std::size_t k = 0; k < d; ++k) row[k] += cfg.step * dir[k];
        project_lp_ball_inplace(row, x.row(i), c);
      }
    }
    const std::vector<double> values = objective.evaluate(cur, nullptr);
    if (cfg.early_stop_on_misclassify) success = objective.succeeded(cur);
    for (std::size_t i = 0; i < n; ++i) {
      const bool better = cfg.early_stop_on_misclassify && success[i] != best.succeeded[i]
                              ? success[i] > best.succeeded[i]
                              : values[i] > best.loss[i];
      if (better) {
        best.loss[i] = values[i];
        best.succeeded[i] = success[i];
        best.restart[i] = r;
        auto src = cur.row(i);
        std::copy(src.begin(), src.end(), best.x_adv.row(i).begin());
      }
    }
  }
  return best;
}

Tensor2 pgd(const DefenseNet& f, LossFamily family, const Batch& batch, const PgdConfig& cfg) {
  DefenseObjective obj(f, family, batch);
  return std::move(pgd(obj, batch.x, cfg).x_adv);
}

}  // namespace advgame
