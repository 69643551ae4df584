#include <cmath>
#include <random>

#include "advgame/adam.hpp"
#include "advgame/errors.hpp"
#include "advgame/mlp.hpp"
#include "advgame/rng.hpp"
#include "advgame/tensor.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace advgame;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor2 t(r, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// <w, f(x)> summed over the batch, as a function of the flat parameters.
double weighted_output(const Mlp& base, std::span<const double> params, const Tensor2& x, const Tensor2& w) {
  Mlp net = base;
  net.set_params(params);
  const Tensor2 y = net.forward(x);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
  return s;
}

}  // namespace

TEST_CASE("tensor shapes are checked") {
  CHECK_THROWS_AS(Tensor2(2, 3, std::vector<double>(5)), ShapeError);
  Tensor2 a(2, 2, 1.0);
  Tensor2 b(2, 3, 1.0);
  CHECK_THROWS_AS(a += b, ShapeError);
  CHECK_THROWS_AS(Tensor2({{1.0, 2.0}, {3.0}}), ShapeError);
  Tensor2 c{{1.0, 2.0}, {3.0, 4.0}};
  CHECK((c + c)(1, 1) == 8.0);
  CHECK((c - c)(0, 0) == 0.0);
}

TEST_CASE("gather and scatter rows are inverse") {
  Tensor2 t{{1, 2}, {3, 4}, {5, 6}};
  const std::vector<std::size_t> idx{2, 0};
  Tensor2 g = t.gather_rows(idx);
  CHECK(g(0, 0) == 5.0);
  CHECK(g(1, 1) == 2.0);
  Tensor2 z(3, 2);
  z.scatter_rows(idx, g);
  CHECK(z(2, 1) == 6.0);
  CHECK(z(1, 0) == 0.0);
  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(t.gather_rows(bad), ShapeError);
}

TEST_CASE("builder checks layer chains") {
  Mlp net = MlpBuilder(3).affine(4).leaky_relu().affine(2).build();
  CHECK(net.input_dim() == 3);
  CHECK(net.output_dim() == 2);
  CHECK(net.param_count() == 3 * 4 + 4 + 4 * 2 + 2);
  CHECK(net.depth() == 2);
  CHECK(net.width() == 4);
  CHECK_THROWS_AS(net.forward(Tensor2(1, 2)), ShapeError);
  CHECK_THROWS_AS(Mlp({LayerSpec::affine(2, 3), LayerSpec::affine(4, 1)}), ShapeError);
}

TEST_CASE("init_uniform draws inside the fan-in bound and is seeded") {
  Mlp net = init_uniform(MlpBuilder(4).affine(50).leaky_relu().affine(3).build(), 7);
  const auto p = net.params();
  const double b0 = std::sqrt(1.0 / 4.0);
  const double b1 = std::sqrt(1.0 / 50.0);
  for (std::size_t i = 0; i < 250; ++i) CHECK(std::abs(p[i]) <= b0);
  for (std::size_t i = 250; i < p.size(); ++i) CHECK(std::abs(p[i]) <= b1);
  CHECK(init_uniform(MlpBuilder(4).affine(50).leaky_relu().affine(3).build(), 7) == net);
  CHECK_FALSE(init_uniform(MlpBuilder(4).affine(50).leaky_relu().affine(3).build(), 8) == net);
}

TEST_CASE("backward matches finite differences for every layer kind") {
  Rng rng = make_rng(11);
  const std::vector<Mlp> nets = {
      MlpBuilder(3).affine(6).leaky_relu().affine(4).sigmoid().affine(2).build(),
      MlpBuilder(2).affine(5).relu().affine(3).softmax().build(),
      MlpBuilder(4).affine(7).leaky_relu(0.2).affine(1).build(),
  };
  for (std::size_t k = 0; k < nets.size(); ++k) {
    Mlp net = init_uniform(nets[k], 100 + k);
    const Tensor2 x = random_tensor(3, net.input_dim(), rng);
    const Tensor2 w = random_tensor(3, net.output_dim(), rng, -1.0, 1.0);
    Tape tape = net.record(x);
    const Gradients g = net.backward(tape, w);
    const std::vector<double> theta(net.params().begin(), net.params().end());
    const auto fd = oracle::fd_gradient(
        [&](std::span<const double> p) { return weighted_output(net, p, x, w); }, theta);
    for (std::size_t i = 0; i < theta.size(); ++i) CHECK(oracle::rel_err(g.params[i], fd[i], 1e-4) < 1e-6);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double fdx = oracle::fd_partial(
            [&](std::span<const double> xi) {
              Tensor2 xx = x;
              for (std::size_t j = 0; j < x.cols(); ++j) xx(r, j) = xi[j];
              const Tensor2 y = net.forward(xx);
              double s = 0.0;
              for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
              return s;
            },
            x.row(r), c);
        CHECK(oracle::rel_err(g.input(r, c), fdx, 1e-4) < 1e-6);
      }
    }
  }
}

TEST_CASE("gradient requests and the backward counter") {
  Mlp net = init_uniform(MlpBuilder(2).affine(3).leaky_relu().affine(1).build(), 3);
  const Tensor2 x{{0.1, 0.2}};
  Tape tape = net.record(x);
  const Tensor2 up{{1.0}};
  const auto before = backward_call_count();
  const Gradients a = net.backward(tape, up, GradRequest::params_only);
  const Gradients b = net.backward(tape, up, GradRequest::input_only);
  CHECK(backward_call_count() == before + 2);
  CHECK(a.input.empty());
  CHECK(b.params.empty());
  CHECK(a.params.size() == net.param_count());
  CHECK_THROWS_AS(net.backward(Tape{}, up), StateError);
  CHECK_THROWS_AS(net.backward(tape, Tensor2(2, 1)), ShapeError);
}

TEST_CASE("magnitude bound clips only when enforced") {
  Mlp net = MlpBuilder(1).affine(2).build();
  std::vector<double> p{3.0, -4.0, 0.5, -0.1};
  net.set_params(p);
  net.set_magnitude_bound(1.0);
  CHECK(net.max_abs_param() == 4.0);
  net.enforce_magnitude_bound();
  CHECK(net.params()[0] == 1.0);
  CHECK(net.params()[1] == -1.0);
  CHECK(net.params()[2] == 0.5);
  CHECK_THROWS_AS(net.set_magnitude_bound(-1.0), ConfigError);
}

TEST_CASE("adam first steps follow the bias-corrected recursion") {
  // Reference recursion written out by hand.
  const std::vector<double> grads1{0.5, -2.0, 0.0};
  const std::vector<double> grads2{0.1, 1.0, -3.0};
  std::vector<double> params{1.0, 1.0, 1.0};
  AdamState s(3, 0.01);
  adam_step(s, params, grads1);
  adam_step(s, params, grads2);

  std::vector<double> ref{1.0, 1.0, 1.0}, m(3, 0.0), v(3, 0.0);
  for (int t = 1; t <= 2; ++t) {
    const auto& g = t == 1 ? grads1 : grads2;
    for (std::size_t i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(params[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  CHECK(s.step == 2);
}

TEST_CASE("adam ascent mirrors descent") {
  std::vector<double> a{0.0, 0.0}, d{0.0, 0.0};
  const std::vector<double> g{0.3, -0.7};
  AdamState sa(2, 0.1), sd(2, 0.1);
  adam_step(sa, a, g, Direction::ascent);
  adam_step(sd, d, g, Direction::descent);
  CHECK(a[0] == -d[0]);
  CHECK(a[1] == -d[1]);
}

TEST_CASE("adam rejects non-finite gradients and size mismatches") {
  std::vector<double> p{0.0, 0.0};
  AdamState s(2);
  const std::vector<double> bad{0.0, NAN};
  CHECK_THROWS_AS(adam_step(s, p, bad), NumericError);
  const std::vector<double> short_g{0.0};
  CHECK_THROWS_AS(adam_step(s, p, short_g), ShapeError);
}

TEST_CASE("derived seeds are stable and distinct") {
  CHECK(derive_seed(0, 0) != derive_seed(0, 1));
  CHECK(derive_seed(1, 0) != derive_seed(0, 0));
  Rng a = make_rng(5, 2), b = make_rng(5, 2);
  CHECK(a() == b());
}
