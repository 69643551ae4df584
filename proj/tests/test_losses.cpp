#include <cmath>
#include <random>

#include "advgame/errors.hpp"
#include "advgame/losses.hpp"
#include "advgame/models.hpp"
#include "advgame/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace advgame;

namespace {

Batch random_batch(std::size_t n, std::size_t d, std::size_t classes, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Batch b;
  b.x = Tensor2(n, d);
  for (double& v : b.x.data()) v = u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (classes) {
      b.labels.push_back(i % classes);
    } else {
      b.targets.push_back(u(rng) - 0.5);
    }
  }
  return b;
}

DefenseNet with_params(const DefenseNet& f, std::span<const double> p) {
  DefenseNet g = f;
  g.net.set_params(p);
  return g;
}

}  // namespace

TEST_CASE("cross entropy against the naive formula") {
  const std::vector<double> z{0.3, -1.2, 2.0};
  const double naive = -std::log(std::exp(z[2]) / (std::exp(z[0]) + std::exp(z[1]) + std::exp(z[2])));
  CHECK(cross_entropy(z, 2) == doctest::Approx(naive).epsilon(1e-14));
  // Large logits stay finite.
  const std::vector<double> big{1000.0, 0.0};
  CHECK(cross_entropy(big, 1) == doctest::Approx(1000.0));
  CHECK(cross_entropy(big, 0) == doctest::Approx(0.0));
  CHECK(squared_error(1.5, 0.5) == 1.0);
}

TEST_CASE("loss sums over the batch and its gradient matches finite differences") {
  Rng rng = make_rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor2 z(4, 3);
  for (double& v : z.data()) v = n(rng);
  Batch b;
  b.x = Tensor2(4, 1);
  b.labels = {0, 2, 1, 2};
  const LossResult r = loss(LossFamily::cross_entropy, z, b);
  double sum = 0.0;
  for (double v : r.per_sample) sum += v;
  CHECK(r.total == doctest::Approx(sum).epsilon(1e-14));
  const auto fd = oracle::fd_gradient(
      [&](std::span<const double> zz) {
        return loss(LossFamily::cross_entropy, Tensor2(4, 3, std::vector<double>(zz.begin(), zz.end())), b).total;
      },
      z.data());
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(oracle::rel_err(r.grad.data()[i], fd[i], 1e-4) < 1e-6);

  Tensor2 y(3, 1);
  for (double& v : y.data()) v = n(rng);
  Batch rb;
  rb.x = Tensor2(3, 1);
  rb.targets = {0.1, -0.4, 2.0};
  const LossResult m = loss(LossFamily::mean_squared_error, y, rb);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(m.per_sample[i] == doctest::Approx(squared_error(y(i, 0), rb.targets[i])));
    CHECK(m.grad(i, 0) == doctest::Approx(2.0 * (y(i, 0) - rb.targets[i])));
  }
}

TEST_CASE("loss input validation") {
  Batch b;
  b.x = Tensor2(2, 1);
  b.labels = {0, 3};
  CHECK_THROWS_AS(loss(LossFamily::cross_entropy, Tensor2(2, 3), b), InputError);
  b.labels = {0};
  CHECK_THROWS_AS(loss(LossFamily::cross_entropy, Tensor2(2, 3), b), ShapeError);
  CHECK_THROWS_AS(loss_family_from_string("hinge"), ConfigError);
  CHECK_THROWS_AS(loss_mix_from_string("mixup"), ConfigError);
  LossKind k{LossFamily::cross_entropy, LossMix::alpha_weighted, 1.5};
  CHECK_THROWS_AS(k.validate(), ConfigError);
}

TEST_CASE("soft loss gradient treats the reference as constant") {
  Rng rng = make_rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor2 z(3, 2), ref(3, 2);
  for (double& v : z.data()) v = n(rng);
  for (double& v : ref.data()) v = n(rng);
  const LossResult r = soft_loss(LossFamily::cross_entropy, z, ref);
  const auto fd = oracle::fd_gradient(
      [&](std::span<const double> zz) {
        return soft_loss(LossFamily::cross_entropy, Tensor2(3, 2, std::vector<double>(zz.begin(), zz.end())), ref)
            .total;
      },
      z.data());
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(oracle::rel_err(r.grad.data()[i], fd[i], 1e-4) < 1e-6);
  // Soft cross-entropy is minimized at the reference itself: equals its entropy.
  const LossResult self = soft_loss(LossFamily::cross_entropy, ref, ref);
  for (std::size_t i = 0; i < 3; ++i) {
    const double a = ref(i, 0), c = ref(i, 1);
    const double pa = 1.0 / (1.0 + std::exp(c - a));
    const double h = -(pa * std::log(pa) + (1.0 - pa) * std::log(1.0 - pa));
    CHECK(self.per_sample[i] == doctest::Approx(h).epsilon(1e-12));
  }
}

TEST_CASE("adversarial loss gradients match finite differences") {
  Rng rng = make_rng(3);
  for (LossMix mix : {LossMix::plain, LossMix::alpha_weighted}) {
    const LpConstraint c{Norm::l2, 0.2};
    const ModelPair pair = build_classification_pair(2, 2, c, 4);
    const Batch b = random_batch(3, 2, 2, rng);
    const LossKind kind{LossFamily::cross_entropy, mix, mix == LossMix::plain ? 0.0 : 0.3};
    const AdversarialLossResult r = adversarial_loss(kind, pair.defense, pair.attack, b, GradFor::both);
    const std::vector<double> tf(pair.defense.net.params().begin(), pair.defense.net.params().end());
    auto by_f = [&](std::span<const double> p) {
      return adversarial_loss(kind, with_params(pair.defense, p), pair.attack, b).total;
    };
    for (std::size_t i = 0; i < tf.size(); i += 7) {
      CHECK(oracle::rel_err(r.defense_grad[i], oracle::fd_partial(by_f, tf, i), 1e-4) < 1e-6);
    }
    const std::vector<double> tl = pair.attack.flat_params();
    AttackModel probe = pair.attack;
    auto by_l = [&](std::span<const double> p) {
      probe.set_flat_params(p);
      return adversarial_loss(kind, pair.defense, probe, b).total;
    };
    for (std::size_t i = 0; i < tl.size(); i += 11) {
      CHECK(oracle::rel_err(r.attack_grad[i], oracle::fd_partial(by_l, tl, i), 1e-4) < 1e-6);
    }
  }
}

TEST_CASE("trades defense gradient holds the clean target fixed") {
  Rng rng = make_rng(5);
  const LpConstraint c{Norm::linf, 0.2};
  const ModelPair pair = build_classification_pair(2, 2, c, 6);
  const Batch b = random_batch(3, 2, 2, rng);
  const LossKind kind{LossFamily::cross_entropy, LossMix::trades, 0.4};
  const AdversarialLossResult r = adversarial_loss(kind, pair.defense, pair.attack, b, GradFor::defense);
  const Tensor2 ref = pair.defense.forward(b.x);
  const Tensor2 x_adv = pair.attack.adversarial_example(b.x, b.labels);
  auto frozen = [&](std::span<const double> p) {
    const DefenseNet g = with_params(pair.defense, p);
    return 0.6 * soft_loss(LossFamily::cross_entropy, g.forward(x_adv), ref).total +
           0.4 * loss(LossFamily::cross_entropy, g.forward(b.x), b).total;
  };
  const std::vector<double> tf(pair.defense.net.params().begin(), pair.defense.net.params().end());
  CHECK(r.total == doctest::Approx(frozen(tf)).epsilon(1e-12));
  for (std::size_t i = 0; i < tf.size(); i += 5) {
    CHECK(oracle::rel_err(r.defense_grad[i], oracle::fd_partial(frozen, tf, i), 1e-4) < 1e-6);
  }
}

TEST_CASE("alpha endpoints reduce to plain and clean losses") {
  Rng rng = make_rng(7);
  for (int k = 0; k < 10; ++k) {
    const LpConstraint c{k % 2 ? Norm::l2 : Norm::linf, 0.2};
    const bool cls = k < 6;
    const ModelPair pair = cls ? build_classification_pair(2, 3, c, 10 + k) : build_regression_pair(3, c, 10 + k);
    const Batch b = cls ? random_batch(8, 2, 3, rng) : random_batch(8, 3, 0, rng);
    const LossFamily fam = cls ? LossFamily::cross_entropy : LossFamily::mean_squared_error;
    const double plain = adversarial_loss({fam, LossMix::plain, 0.0}, pair.defense, pair.attack, b).total;
    const double clean = clean_loss({fam, LossMix::plain, 0.0}, pair.defense, b).total;
    const double a0 = adversarial_loss({fam, LossMix::alpha_weighted, 0.0}, pair.defense, pair.attack, b).total;
    const double a1 = adversarial_loss({fam, LossMix::alpha_weighted, 1.0}, pair.defense, pair.attack, b).total;
    CHECK(std::abs(a0 - plain) <= 1e-12 * std::max(1.0, std::abs(plain)));
    CHECK(std::abs(a1 - clean) <= 1e-12 * std::max(1.0, std::abs(clean)));
  }
}

TEST_CASE("perturbed loss at the clean point equals the clean loss") {
  Rng rng = make_rng(8);
  const ModelPair pair = build_classification_pair(2, 2, {Norm::linf, 0.2}, 9);
  const Batch b = random_batch(5, 2, 2, rng);
  const LossKind kind{LossFamily::cross_entropy, LossMix::plain, 0.0};
  CHECK(perturbed_loss(kind, pair.defense, b, b.x).total == clean_loss(kind, pair.defense, b).total);
}
