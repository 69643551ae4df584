#include <cmath>
#include <random>

#include "advgame/attacks.hpp"
#include "advgame/errors.hpp"
#include "advgame/flow.hpp"
#include "advgame/mlp.hpp"
#include "advgame/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace advgame;

namespace {

double p_value(Norm p) { return p == Norm::l1 ? 1.0 : p == Norm::l2 ? 2.0 : INFINITY; }

DefenseNet affine_defense(std::size_t in, std::size_t out, std::vector<double> params, Task task) {
  Mlp net({LayerSpec::affine(in, out)}, std::move(params));
  return {net, task};
}

DefenseNet toy_defense(std::uint64_t seed) {
  Mlp net = init_uniform(MlpBuilder(2).affine(8).leaky_relu().affine(8).leaky_relu().affine(2).build(), seed);
  for (double& p : net.params()) p *= 4.0;  // sharper landscape inside the ball
  return {net, Task::classification(2)};
}

double point_loss(const DefenseNet& f, std::span<const double> x, std::size_t label) {
  Batch b;
  b.x = Tensor2::row_vector(x);
  b.labels = {label};
  return loss(LossFamily::cross_entropy, f.forward(b.x), b).total;
}

PointObjective analytic(std::function<double(std::span<const double>)> v,
                        std::function<void(std::span<const double>, std::span<double>)> g) {
  PointObjective f;
  f.dim = 2;
  f.value = std::move(v);
  f.gradient = std::move(g);
  return f;
}

}  // namespace

TEST_CASE("projection examples") {
  const std::vector<double> c{0.5, 0.5};
  const auto a = project_lp_ball(std::vector<double>{0.5, 0.9}, c, {Norm::linf, 0.2});
  CHECK(a[0] == 0.5);
  CHECK(a[1] == doctest::Approx(0.7));
  const auto b = project_lp_ball(std::vector<double>{0.5 + 0.24, 0.5 + 0.32}, c, {Norm::l2, 0.2});
  CHECK(b[0] == doctest::Approx(0.5 + 0.12));
  CHECK(b[1] == doctest::Approx(0.5 + 0.16));
  const std::vector<double> inside{0.55, 0.45};
  for (Norm p : {Norm::l1, Norm::l2, Norm::linf}) CHECK(project_lp_ball(inside, c, {p, 0.2}) == inside);
}

TEST_CASE("projection is the nearest ball point, idempotent and non-expansive") {
  Rng rng = make_rng(1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const std::vector<double> c{0.5, 0.5};
  for (Norm p : {Norm::l1, Norm::l2, Norm::linf}) {
    const LpConstraint k{p, 0.2};
    for (int t = 0; t < 20; ++t) {
      const std::vector<double> x{0.5 + u(rng), 0.5 + u(rng)};
      const auto y = project_lp_ball(x, c, k);
      const auto ref = oracle::grid_nearest_in_ball_2d(x, c, p_value(p), 0.2);
      const double dy = std::hypot(y[0] - x[0], y[1] - x[1]);
      const double dr = std::hypot(ref[0] - x[0], ref[1] - x[1]);
      CHECK(dy <= dr + 1e-12);
      CHECK(dy >= dr - 2e-3);
      CHECK(project_lp_ball(y, c, k) == y);
      CHECK(lp_distance(y, c, p) <= lp_distance(x, c, p) + 1e-15);
      CHECK(lp_distance(y, c, p) <= 0.2 * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("steepest direction examples") {
  const std::vector<double> g{3.0, -4.0};
  auto d2 = steepest_direction(g, Norm::l2);
  CHECK(d2[0] == doctest::Approx(0.6));
  CHECK(d2[1] == doctest::Approx(-0.8));
  CHECK(steepest_direction(g, Norm::linf) == std::vector<double>{1.0, -1.0});
  CHECK(steepest_direction(g, Norm::l1) == std::vector<double>{0.0, -1.0});
  const std::vector<double> z{0.0, 0.0};
  for (Norm p : {Norm::l1, Norm::l2, Norm::linf}) CHECK(steepest_direction(z, p) == z);
}

TEST_CASE("steepest direction maximizes the linear gain over the unit ball") {
  Rng rng = make_rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::vector<double> origin{0.0, 0.0};
  for (Norm p : {Norm::l1, Norm::l2, Norm::linf}) {
    for (int t = 0; t < 10; ++t) {
      const std::vector<double> g{n(rng), n(rng)};
      const auto d = steepest_direction(g, p);
      const double gain = g[0] * d[0] + g[1] * d[1];
      const auto best = oracle::grid_max_2d(
          [&](std::span<const double> v) { return g[0] * v[0] + g[1] * v[1]; }, origin, p_value(p), 1.0);
      CHECK(lp_norm(d, p) == doctest::Approx(1.0));
      CHECK(gain >= best.value - 1e-12);
      CHECK(gain <= best.value + 0.01 * std::hypot(g[0], g[1]));
    }
  }
}

TEST_CASE("ball samples are inside and spread") {
  Rng rng = make_rng(3);
  const std::vector<double> c{0.5, 0.5};
  for (Norm p : {Norm::l1, Norm::l2, Norm::linf}) {
    const LpConstraint k{p, 0.2};
    std::size_t inner = 0;
    const std::size_t n = 20000;
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = sample_in_ball(c, k, rng);
      CHECK(lp_distance(s, c, p) <= 0.2 * (1.0 + 1e-12));
      if (lp_distance(s, c, p) <= 0.1) ++inner;
    }
    // Uniform in a 2D ball: the half-radius ball holds a quarter of the mass.
    CHECK(static_cast<double>(inner) / n == doctest::Approx(0.25).epsilon(0.08));
  }
}

TEST_CASE("fgsm examples") {
  // Logistic model, scalar input: logits (0, 2x).
  const DefenseNet logistic = affine_defense(1, 2, {0.0, 2.0, 0.0, 0.0}, Task::classification(2));
  Batch b;
  b.x = Tensor2{{0.3}};
  b.labels = {0};
  CHECK(fgsm(logistic, LossFamily::cross_entropy, b, {Norm::linf, 0.2})(0, 0) == doctest::Approx(0.5));
  b.labels = {1};
  CHECK(fgsm(logistic, LossFamily::cross_entropy, b, {Norm::linf, 0.2})(0, 0) == doctest::Approx(0.1));

  // Zero gradient leaves the point in place.
  const DefenseNet flat = affine_defense(2, 2, {0, 0, 0, 0, 0, 0}, Task::classification(2));
  Batch fb;
  fb.x = Tensor2{{0.4, 0.6}};
  fb.labels = {1};
  CHECK(fgsm(flat, LossFamily::cross_entropy, fb, {Norm::linf, 0.2}) == fb.x);

  // Linear regression with weights (1, -3): loss grows along +x1, -x2.
  const DefenseNet lin = affine_defense(2, 1, {1.0, -3.0, 0.0}, Task::regression());
  Batch rb;
  rb.x = Tensor2{{0.5, 0.2}};
  rb.targets = {-1.0};
  const Tensor2 adv = fgsm(lin, LossFamily::mean_squared_error, rb, {Norm::linf, 0.2});
  CHECK(adv(0, 0) - 0.5 == doctest::Approx(0.2));
  CHECK(adv(0, 1) - 0.2 == doctest::Approx(-0.2));
  const std::vector<double> x0{0.5, 0.2};
  const auto best = oracle::grid_max_2d(
      [&](std::span<const double> x) {
        const double r = x[0] - 3.0 * x[1] + 1.0;
        return r * r;
      },
      x0, INFINITY, 0.2);
  CHECK(best.point[0] == doctest::Approx(adv(0, 0)));
  CHECK(best.point[1] == doctest::Approx(adv(0, 1)));

  CHECK_THROWS_AS(fgsm(lin, LossFamily::mean_squared_error, rb, {Norm::l2, 0.2}), ConfigError);
}

TEST_CASE("pgd with one full step equals fgsm bit for bit") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const DefenseNet f = toy_defense(s);
    Rng rng = make_rng(s, 99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Batch b;
    b.x = Tensor2(20, 2);
    for (double& v : b.x.data()) v = u(rng);
    for (std::size_t i = 0; i < 20; ++i) b.labels.push_back(i % 2);
    PgdConfig cfg;
    cfg.constraint = {Norm::linf, 0.2};
    cfg.step = 0.2;
    cfg.steps = 1;
    cfg.restarts = 1;
    cfg.seed = s;
    CHECK(pgd(f, LossFamily::cross_entropy, b, cfg) == fgsm(f, LossFamily::cross_entropy, b, cfg.constraint));
  }
}

TEST_CASE("pgd reaches the grid maximum on a toy network") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const DefenseNet f = toy_defense(100 + s);
    for (Norm p : {Norm::l2, Norm::linf}) {
      Batch b;
      b.x = Tensor2{{0.45, 0.55}};
      b.labels = {s % 2};
      PgdConfig cfg = PgdConfig::for_constraint({p, 0.2});
      cfg.seed = s;
      const PgdResult r = pgd(DefenseObjective(f, LossFamily::cross_entropy, b), b.x, cfg);
      const auto best = oracle::grid_max_2d([&](std::span<const double> x) { return point_loss(f, x, b.labels[0]); },
                                            b.x.row(0), p_value(p), 0.2);
      CHECK(r.loss[0] >= 0.99 * best.value);
      CHECK(lp_distance(r.x_adv.row(0), b.x.row(0), p) <= 0.2 + 1e-9);
    }
  }
}

TEST_CASE("pgd analytic examples") {
  const std::vector<double> star{0.56, 0.58};  // distance 0.1 from the start
  const PointwiseObjective concave(analytic(
      [&](std::span<const double> x) {
        return -((x[0] - star[0]) * (x[0] - star[0]) + (x[1] - star[1]) * (x[1] - star[1]));
      },
      [&](std::span<const double> x, std::span<double> g) {
        g[0] = -2.0 * (x[0] - star[0]);
        g[1] = -2.0 * (x[1] - star[1]);
      }));
  PgdConfig cfg = PgdConfig::for_constraint({Norm::l2, 0.2});
  cfg.step = 1e-4;
  cfg.steps = 3000;
  cfg.restarts = 1;
  const Tensor2 x{{0.5, 0.5}};
  const PgdResult r = pgd(concave, x, cfg);
  CHECK(std::hypot(r.x_adv(0, 0) - star[0], r.x_adv(0, 1) - star[1]) < 1e-3);

  const PointwiseObjective linear(analytic([](std::span<const double> v) { return 2.0 * v[0] - v[1]; },
                                           [](std::span<const double>, std::span<double> g) {
                                             g[0] = 2.0;
                                             g[1] = -1.0;
                                           }));
  PgdConfig lc = PgdConfig::for_constraint({Norm::linf, 0.2});
  const PgdResult lr = pgd(linear, x, lc);
  CHECK(lr.x_adv(0, 0) == doctest::Approx(0.7));
  CHECK(lr.x_adv(0, 1) == doctest::Approx(0.3));
}

TEST_CASE("pgd is seeded and keeps iterates in the ball") {
  const DefenseNet f = toy_defense(7);
  Rng rng = make_rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Batch b;
  b.x = Tensor2(30, 2);
  for (double& v : b.x.data()) v = u(rng);
  for (std::size_t i = 0; i < 30; ++i) b.labels.push_back(i % 2);
  for (Norm p : {Norm::l1, Norm::l2, Norm::linf}) {
    PgdConfig cfg = PgdConfig::for_constraint({p, 0.2});
    cfg.steps = 10;
    cfg.restarts = 4;
    cfg.seed = 3;
    const Tensor2 a = pgd(f, LossFamily::cross_entropy, b, cfg);
    CHECK(a == pgd(f, LossFamily::cross_entropy, b, cfg));
    for (std::size_t i = 0; i < 30; ++i) CHECK(lp_distance(a.row(i), b.x.row(i), p) <= 0.2 + 1e-9);
  }
}

TEST_CASE("pgd with the start as candidate never lowers the loss") {
  const DefenseNet f = toy_defense(9);
  Rng rng = make_rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Batch b;
  b.x = Tensor2(50, 2);
  for (double& v : b.x.data()) v = u(rng);
  for (std::size_t i = 0; i < 50; ++i) b.labels.push_back(i % 2);
  PgdConfig cfg = PgdConfig::for_constraint({Norm::linf, 0.2});
  cfg.step = 0.2;  // large steps overshoot, so the start sometimes wins
  cfg.steps = 1;
  cfg.restarts = 1;
  cfg.include_start = true;
  const DefenseObjective obj(f, LossFamily::cross_entropy, b);
  const PgdResult r = pgd(obj, b.x, cfg);
  const auto clean = obj.evaluate(b.x, nullptr);
  for (std::size_t i = 0; i < 50; ++i) CHECK(r.loss[i] >= clean[i]);
}

TEST_CASE("early stopping keeps a misclassified start") {
  const DefenseNet f = toy_defense(11);
  Batch b;
  b.x = Tensor2{{0.3, 0.6}};
  const std::size_t pred = f.predict(b.x)[0];
  b.labels = {1 - pred};  // already misclassified
  PgdConfig cfg = PgdConfig::for_constraint({Norm::linf, 0.2});
  cfg.early_stop_on_misclassify = true;
  const DefenseObjective obj(f, LossFamily::cross_entropy, b);
  const PgdResult r = pgd(obj, b.x, cfg);
  CHECK(r.succeeded[0] == 1);
  CHECK(r.loss[0] >= obj.evaluate(b.x, nullptr)[0]);  // restart 0 stays at x
  cfg.restarts = 1;
  CHECK(pgd(obj, b.x, cfg).x_adv == b.x);
}

TEST_CASE("pgd config validation") {
  PgdConfig cfg;
  cfg.step = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.step = 0.01;
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.steps = 1;
  cfg.restarts = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
