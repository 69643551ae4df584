#include "advgame/flow.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "advgame/errors.hpp"
#include "advgame/rng.hpp"

namespace advgame {
namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double norm_power(Norm p) { return p == Norm::l1 ? 1.0 : 2.0; }

/// g_1 = |w|_p^p - delta^p for p < inf, with its scale delta^p.
double ball_constraint(std::span<const double> w, const LpConstraint& c) {
  const double p = norm_power(c.p);
  double acc = 0.0;
  for (double v : w) acc += std::pow(std::abs(v), p);
  return acc - std::pow(c.delta, p);
}

std::vector<double> ball_constraint_gradient(std::span<const double> w, const LpConstraint& c) {
  std::vector<double> n(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    n[i] = c.p == Norm::l1 ? sign(w[i]) : 2.0 * w[i];
  }
  return n;
}

std::vector<double> offset(std::span<const double> x, std::span<const double> x_s) {
  std::vector<double> w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) w[i] = x[i] - x_s[i];
  return w;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Flow velocity: gradient plus deflection, with outward-pointing components
/// of active constraints removed (tangent-cone projection).
class FlowField {
 public:
  FlowField(const PointObjective& f, std::span<const double> x_s, const FlowConfig& cfg)
      : f_(f), x_s_(x_s.begin(), x_s.end()), cfg_(cfg) {
    if (cfg_.saddle_handling == SaddleHandling::deflect) {
      for (const auto& s : cfg_.saddles) {
        Saddle full = s;
        if (full.direction.empty()) full.direction = top_eigenvector(f_, s.point);
        saddles_.push_back(std::move(full));
      }
    }
  }

  void velocity(std::span<const double> x, std::span<double> v, bool deflect) const {
    f_.gradient(x, v);
    if (deflect) {
      for (const auto& s : saddles_) {
        // Scaled to peak 1 at the saddle; the raw bump tops out at exp(-1/eps^2).
        const double psi = scaled_bump(x, s.point);
        if (psi == 0.0) continue;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += psi * s.direction[i];
      }
    }
    restrict_to_tangent_cone(x, v);
  }

  void restrict_to_tangent_cone(std::span<const double> x, std::span<double> v) const {
    const auto& c = cfg_.constraint;
    const auto w = offset(x, x_s_);
    if (c.p == Norm::linf) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const bool active = std::abs(w[i]) - c.delta >= -kActivationTol * c.delta;
        if (active && sign(w[i]) * v[i] > 0.0) v[i] = 0.0;
      }
      return;
    }
    const double scale = std::pow(c.delta, norm_power(c.p));
    if (ball_constraint(w, c) < -kActivationTol * scale) return;
    if (c.p == Norm::l1) {
      restrict_to_l1_cone(w, v);
      return;
    }
    const auto n = ball_constraint_gradient(w, c);
    const double nv = dot(n, v);
    const double nn = dot(n, n);
    if (nv <= 0.0 || nn == 0.0) return;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= nv / nn * n[i];
  }

  /// Cone {u : sum_S sign(w_i) u_i + sum_{not S} |u_i| <= 0}, S the nonzero
  /// coordinates of w. Projection is u_S = v_S - mu sign(w_S), u_rest =
  /// shrink(v_rest, mu), with mu found by bisection on the cone constraint.
  void restrict_to_l1_cone(std::span<const double> w, std::span<double> v) const {
    const double zero = kActivationTol * cfg_.constraint.delta;
    std::vector<char> support(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) support[i] = std::abs(w[i]) > zero;
    auto cone_value = [&](double mu) {
      double h = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        h += support[i] ? sign(w[i]) * v[i] - mu : std::max(std::abs(v[i]) - mu, 0.0);
      }
      return h;
    };
    if (cone_value(0.0) <= 0.0) return;
    double lo = 0.0, hi = 0.0;
    for (double e : v) hi += std::abs(e);
    hi = 2.0 * hi + 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-17 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (cone_value(mid) > 0.0 ? lo : hi) = mid;
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (support[i]) {
        v[i] -= hi * sign(w[i]);
      } else {
        v[i] = sign(v[i]) * std::max(std::abs(v[i]) - hi, 0.0);
      }
    }
  }

  double scaled_bump(std::span<const double> x, std::span<const double> eta) const {
    double r2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - eta[i]) * (x[i] - eta[i]);
    const double e2 = cfg_.epsilon * cfg_.epsilon;
    const double gap = e2 - r2;
    if (gap <= 0.0) return 0.0;
    return std::exp(1.0 / e2 - 1.0 / gap);
  }

  bool inside_bump(std::span<const double> x) const {
    for (const auto& s : saddles_) {
      if (deflection_bump(x, s.point, cfg_.epsilon) > 0.0) return true;
    }
    return false;
  }

 private:
  const PointObjective& f_;
  std::vector<double> x_s_;
  const FlowConfig& cfg_;
  std::vector<Saddle> saddles_;
};

}  // namespace

PointObjective defense_point_objective(const DefenseNet& f, LossFamily family,
                                       std::size_t label, double target) {
  PointObjective obj;
  obj.dim = f.input_dim();
  auto make_batch = [family, label, target](std::span<const double> x) {
    Batch b;
    b.x = Tensor2::row_vector(x);
    if (family == LossFamily::cross_entropy) {
      b.labels = {label};
    } else {
      b.targets = {target};
    }
    return b;
  };
  obj.value = [&f, family, make_batch](std::span<const double> x) {
    const Batch b = make_batch(x);
    return loss(family, f.forward(b.x), b).total;
  };
  obj.gradient = [&f, family, make_batch](std::span<const double> x, std::span<double> g) {
    const Batch b = make_batch(x);
    Tape tape = f.net.record(b.x);
    LossResult res = loss(family, tape.output(), b);
    Tensor2 in = f.net.backward(tape, res.grad, GradRequest::input_only).input;
    std::copy(in.data().begin(), in.data().end(), g.begin());
  };
  return obj;
}

std::vector<double> PointwiseObjective::evaluate(const Tensor2& x, Tensor2* grad) const {
  std::vector<double> values(x.rows());
  if (grad) *grad = Tensor2(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    values[r] = f_.value(x.row(r));
    if (grad) f_.gradient(x.row(r), grad->row(r));
  }
  return values;
}

std::string to_string(SaddleHandling s) {
  switch (s) {
    case SaddleHandling::none: return "none";
    case SaddleHandling::deflect: return "deflect";
    case SaddleHandling::noise: return "noise";
  }
  return "?";
}

SaddleHandling saddle_handling_from_string(const std::string& text) {
  if (text == "none") return SaddleHandling::none;
  if (text == "deflect") return SaddleHandling::deflect;
  if (text == "noise") return SaddleHandling::noise;
  throw ConfigError("unknown saddle handling '" + text + "'");
}

void FlowConfig::validate() const {
  constraint.validate();
  const double h = effective_dt();
  if (!(h > 0.0) || !(h < constraint.delta)) throw ConfigError("flow dt must satisfy 0 < dt < delta");
  if (!(max_time > 0.0)) throw ConfigError("flow max_time must be positive");
  if (!(stationarity_tol > 0.0)) throw ConfigError("flow stationarity_tol must be positive");
  if (saddle_handling == SaddleHandling::deflect &&
      !(epsilon > 0.0 && epsilon < constraint.delta)) {
    throw ConfigError("deflection radius epsilon must satisfy 0 < epsilon < delta");
  }
  if (saddle_handling == SaddleHandling::noise && !(noise_sigma >= 0.0)) {
    throw ConfigError("noise sigma must be non-negative");
  }
  if (record_every < 1) throw ConfigError("record_every must be at least 1");
}

ActiveSet active_set(std::span<const double> x, std::span<const double> x_s,
                     const LpConstraint& c) {
  const auto w = offset(x, x_s);
  ActiveSet out;
  if (c.p == Norm::linf) {
    out.active.resize(w.size(), 0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (std::abs(w[i]) - c.delta >= -kActivationTol * c.delta) {
        out.active[i] = 1;
        out.indices.push_back(i);
      }
    }
  } else {
    const double scale = std::pow(c.delta, norm_power(c.p));
    const bool on = ball_constraint(w, c) >= -kActivationTol * scale;
    out.active = {static_cast<char>(on ? 1 : 0)};
    if (on) out.indices.push_back(0);
  }
  return out;
}

Tensor2 projection_matrix(std::span<const double> x, std::span<const double> x_s,
                          const LpConstraint& c) {
  const std::size_t d = x.size();
  Tensor2 p(d, d);
  for (std::size_t i = 0; i < d; ++i) p(i, i) = 1.0;
  const ActiveSet act = active_set(x, x_s, c);
  if (act.indices.empty()) return p;
  if (c.p == Norm::linf) {
    for (auto i : act.indices) p(i, i) = 0.0;
    return p;
  }
  const auto n = ball_constraint_gradient(offset(x, x_s), c);
  const double nn = dot(n, n);
  if (nn == 0.0) throw NumericError("projection_matrix: constraint gradient vanishes");
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) p(i, j) -= n[i] * n[j] / nn;
  }
  return p;
}

double deflection_bump(std::span<const double> x, std::span<const double> eta, double eps) {
  double r2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - eta[i]) * (x[i] - eta[i]);
  const double gap = eps * eps - r2;
  if (gap <= 0.0) return 0.0;
  return std::exp(-1.0 / gap);
}

std::vector<double> top_eigenvector(const PointObjective& f, std::span<const double> x) {
  const std::size_t d = f.dim;
  std::vector<double> h(d * d, 0.0);
  if (f.hessian) {
    f.hessian(x, h);
  } else {
    constexpr double step = 1e-5;
    std::vector<double> xp(x.begin(), x.end()), gp(d), gm(d);
    for (std::size_t j = 0; j < d; ++j) {
      xp[j] = x[j] + step;
      f.gradient(xp, gp);
      xp[j] = x[j] - step;
      f.gradient(xp, gm);
      xp[j] = x[j];
      for (std::size_t i = 0; i < d; ++i) h[i * d + j] = (gp[i] - gm[i]) / (2.0 * step);
    }
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j) {
        const double s = 0.5 * (h[i * d + j] + h[j * d + i]);
        h[i * d + j] = h[j * d + i] = s;
      }
    }
  }
  // Gershgorin shift makes the spectrum non-negative so the dominant
  // eigenvector belongs to the largest (not largest-magnitude) eigenvalue.
  double shift = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < d; ++j) row += std::abs(h[i * d + j]);
    shift = std::max(shift, row);
  }
  std::vector<double> v(d), next(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i);
  double n = lp_norm(v, Norm::l2);
  for (auto& e : v) e /= n;
  for (int it = 0; it < 500; ++it) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = shift * v[i];
      for (std::size_t j = 0; j < d; ++j) s += h[i * d + j] * v[j];
      next[i] = s;
    }
    n = lp_norm(next, Norm::l2);
    if (n == 0.0) break;
    double change = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      next[i] /= n;
      change = std::max(change, std::abs(next[i] - v[i]));
    }
    v.swap(next);
    if (change < 1e-8) break;
  }
  return v;
}

KktReport kkt_report(const PointObjective& f, std::span<const double> x_terminal,
                     std::span<const double> x_s, const LpConstraint& c, double tol) {
  KktReport rep;
  rep.tol = tol;
  const std::size_t d = x_terminal.size();
  std::vector<double> g(d);
  f.gradient(x_terminal, g);
  const auto w = offset(x_terminal, x_s);
  rep.primal_feasible = lp_norm(w, c.p) <= c.delta * (1.0 + 1e-9);
  const ActiveSet act = active_set(x_terminal, x_s, c);
  rep.active = act.indices;
  rep.interior = act.indices.empty();

  std::vector<double> residual = g;
  if (!rep.interior) {
    if (c.p == Norm::linf) {
      for (auto i : act.indices) {
        const double mu = g[i] * sign(w[i]);  // grad g_i = sign(w_i) e_i
        rep.multipliers.push_back(mu);
        residual[i] = 0.0;
      }
    } else if (c.p == Norm::l1) {
      // Subgradient condition: g_i = mu sign(w_i) on the support, |g_i| <= mu off it.
      const double zero = kActivationTol * c.delta;
      double acc = 0.0;
      std::size_t support = 0;
      for (std::size_t i = 0; i < d; ++i) {
        if (std::abs(w[i]) > zero) {
          acc += g[i] * sign(w[i]);
          ++support;
        }
      }
      const double mu = support ? acc / static_cast<double>(support) : 0.0;
      rep.multipliers.push_back(mu);
      for (std::size_t i = 0; i < d; ++i) {
        residual[i] = std::abs(w[i]) > zero ? g[i] - mu * sign(w[i])
                                            : sign(g[i]) * std::max(std::abs(g[i]) - mu, 0.0);
      }
    } else {
      const auto n = ball_constraint_gradient(w, c);
      const double nn = dot(n, n);
      const double mu = nn > 0.0 ? dot(g, n) / nn : 0.0;
      rep.multipliers.push_back(mu);
      for (std::size_t i = 0; i < d; ++i) residual[i] -= mu * n[i];
    }
  }
  rep.stationarity_residual = lp_norm(residual, Norm::l2);
  rep.dual_feasible = std::all_of(rep.multipliers.begin(), rep.multipliers.end(),
                                  [tol](double mu) { return mu >= -tol; });
  rep.passed = rep.primal_feasible && rep.dual_feasible && rep.stationarity_residual <= tol;
  return rep;
}

Trajectory integrate_flow(const PointObjective& f, std::span<const double> x_s,
                          const FlowConfig& cfg) {
  cfg.validate();
  if (x_s.size() != f.dim) throw ShapeError("integrate_flow: start point does not match objective");
  const std::size_t d = f.dim;
  const double h = cfg.effective_dt();
  const bool deflect = cfg.saddle_handling == SaddleHandling::deflect;
  const bool noisy = cfg.saddle_handling == SaddleHandling::noise && cfg.noise_sigma > 0.0;
  const double noise_end = noisy ? cfg.effective_noise_horizon() : 0.0;
  FlowField field(f, x_s, cfg);
  Rng rng = make_rng(cfg.seed, 0x666c6f77);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> x(x_s.begin(), x_s.end());
  std::vector<double> times;
  std::vector<double> states;
  std::vector<double> values;
  auto keep = [&](double t) {
    times.push_back(t);
    states.insert(states.end(), x.begin(), x.end());
    values.push_back(f.value(x));
  };
  keep(0.0);

  std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d), v(d);
  double t = 0.0;
  std::size_t steps = 0;
  bool converged = false;
  double residual = 0.0;
  while (t < cfg.max_time) {
    const double step = std::min(h, cfg.max_time - t);
    if (cfg.integrator == Integrator::explicit_euler) {
      field.velocity(x, k1, deflect);
      for (std::size_t i = 0; i < d; ++i) x[i] += step * k1[i];
    } else {
      field.velocity(x, k1, deflect);
      for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * step * k1[i];
      field.velocity(tmp, k2, deflect);
      for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * step * k2[i];
      field.velocity(tmp, k3, deflect);
      for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + step * k3[i];
      field.velocity(tmp, k4, deflect);
      for (std::size_t i = 0; i < d; ++i) {
        x[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
    }
    project_lp_ball_inplace(x, x_s, cfg.constraint);
    if (noisy && t < noise_end) {
      const double scale = cfg.noise_sigma * std::sqrt(step);
      for (std::size_t i = 0; i < d; ++i) x[i] += scale * gauss(rng);
      project_lp_ball_inplace(x, x_s, cfg.constraint);
    }
    t += step;
    ++steps;
    for (double e : x) {
      if (!std::isfinite(e)) throw NumericError("integrate_flow: state became non-finite");
    }

    field.velocity(x, v, false);
    residual = lp_norm(v, Norm::l2);
    const bool can_stop = (!deflect || !field.inside_bump(x)) && (!noisy || t >= noise_end);
    converged = can_stop && residual <= cfg.stationarity_tol;
    if (converged || steps % cfg.record_every == 0 || t >= cfg.max_time) {
      if (times.back() != t) keep(t);
    }
    if (converged) break;
  }

  Trajectory traj;
  traj.times = std::move(times);
  traj.values = std::move(values);
  traj.states = Tensor2(traj.times.size(), d, std::move(states));
  traj.converged = converged;
  traj.final_residual = residual;
  traj.steps = steps;
  traj.kkt = kkt_report(f, traj.terminal(), x_s, cfg.constraint, 10.0 * cfg.stationarity_tol);
  return traj;
}

FlowAttack best_attack_flow(const PointObjective& f, std::span<const double> x_s,
                            const FlowConfig& cfg) {
  Trajectory traj = integrate_flow(f, x_s, cfg);
  FlowAttack out;
  const auto end = traj.terminal();
  out.perturbation.resize(end.size());
  for (std::size_t i = 0; i < end.size(); ++i) out.perturbation[i] = end[i] - x_s[i];
  out.value = traj.values.back();
  out.converged = traj.converged;
  out.kkt = std::move(traj.kkt);
  return out;
}

std::vector<double> closed_form_attack(ClosedFormModel model, std::span<const double> beta,
                                       std::span<const double> x, double y, double delta) {
  if (beta.size() != x.size()) throw ShapeError("closed_form_attack: beta and x differ in length");
  std::vector<double> out(beta.size());
  double lead = 0.0;
  if (model == ClosedFormModel::linear) {
    lead = sign(dot(beta, x) - y);
  } else {
    lead = sign(0.5 - y);
  }
  for (std::size_t i = 0; i < beta.size(); ++i) out[i] = delta * lead * sign(beta[i]);
  return out;
}

namespace {

AnalyticCase linear_case() {
  // F(x) = x1 - 2 x2: constant gradient, the maximum sits at a corner of the
  // l-infinity ball and on the boundary of every other ball.
  AnalyticCase c;
  c.name = "linear";
  c.start = {0.5, 0.5};
  c.f.dim = 2;
  c.f.value = [](std::span<const double> x) { return x[0] - 2.0 * x[1] + 1.0; };
  c.f.gradient = [](std::span<const double>, std::span<double> g) {
    g[0] = 1.0;
    g[1] = -2.0;
  };
  c.f.hessian = [](std::span<const double>, std::span<double> h) { std::fill(h.begin(), h.end(), 0.0); };
  return c;
}

AnalyticCase quadratic_case() {
  // F(x) = 1 - |x - x*|^2 with x* = (0.56, 0.42), inside every ball of radius 0.2.
  AnalyticCase c;
  c.name = "quadratic";
  c.start = {0.5, 0.5};
  c.f.dim = 2;
  c.f.value = [](std::span<const double> x) {
    const double a = x[0] - 0.56, b = x[1] - 0.42;
    return 1.0 - a * a - b * b;
  };
  c.f.gradient = [](std::span<const double> x, std::span<double> g) {
    g[0] = -2.0 * (x[0] - 0.56);
    g[1] = -2.0 * (x[1] - 0.42);
  };
  c.f.hessian = [](std::span<const double>, std::span<double> h) {
    h[0] = -2.0; h[1] = 0.0; h[2] = 0.0; h[3] = -2.0;
  };
  return c;
}

AnalyticCase saddle_case() {
  // F(x) = (x1 - 0.5)^2 - (x2 - 0.5)^2, started on its saddle.
  AnalyticCase c;
  c.name = "saddle";
  c.start = {0.5, 0.5};
  c.f.dim = 2;
  c.f.value = [](std::span<const double> x) {
    const double a = x[0] - 0.5, b = x[1] - 0.5;
    return a * a - b * b;
  };
  c.f.gradient = [](std::span<const double> x, std::span<double> g) {
    g[0] = 2.0 * (x[0] - 0.5);
    g[1] = -2.0 * (x[1] - 0.5);
  };
  c.f.hessian = [](std::span<const double>, std::span<double> h) {
    h[0] = 2.0; h[1] = 0.0; h[2] = 0.0; h[3] = -2.0;
  };
  c.saddles.push_back({{0.5, 0.5}, {}});
  return c;
}

AnalyticCase two_bump_case() {
  // Tall bump outside the ball at (0.75, 0.62), small one at (0.25, 0.3).
  struct Bump {
    double amp, cx, cy;
  };
  static constexpr Bump bumps[] = {{1.0, 0.75, 0.62}, {0.5, 0.25, 0.30}};
  static constexpr double width = 0.12;
  static constexpr double inv = 1.0 / (2.0 * width * width);
  AnalyticCase c;
  c.name = "two-bump";
  c.start = {0.5, 0.5};
  c.f.dim = 2;
  c.f.value = [](std::span<const double> x) {
    double s = 0.0;
    for (const auto& b : bumps) {
      const double dx = x[0] - b.cx, dy = x[1] - b.cy;
      s += b.amp * std::exp(-(dx * dx + dy * dy) * inv);
    }
    return s;
  };
  c.f.gradient = [](std::span<const double> x, std::span<double> g) {
    g[0] = g[1] = 0.0;
    for (const auto& b : bumps) {
      const double dx = x[0] - b.cx, dy = x[1] - b.cy;
      const double e = b.amp * std::exp(-(dx * dx + dy * dy) * inv);
      g[0] -= 2.0 * inv * dx * e;
      g[1] -= 2.0 * inv * dy * e;
    }
  };
  return c;
}

}  // namespace

std::vector<AnalyticCase> analytic_suite_2d() {
  return {linear_case(), quadratic_case(), saddle_case(), two_bump_case()};
}

AnalyticCase analytic_case(const std::string& name) {
  for (auto& c : analytic_suite_2d()) {
    if (c.name == name) return c;
  }
  throw ConfigError("unknown analytic function '" + name +
                    "' (expected linear, quadratic, saddle or two-bump)");
}

}  // namespace advgame
