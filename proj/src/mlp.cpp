#include "advgame/mlp.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "advgame/errors.hpp"

namespace advgame {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

std::atomic<std::uint64_t> g_backward_calls{0};

ConstMapMat as_matrix(const Tensor2& t) {
  return ConstMapMat(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

MapMat as_matrix(Tensor2& t) {
  return MapMat(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

void softmax_rows(Tensor2& t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto row = t.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - m);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
}

double sigmoid(double v) {
  // Branches keep exp() from overflowing for large |v|.
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::affine: return "affine";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::softmax: return "softmax";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (auto k : {LayerKind::affine, LayerKind::leaky_relu, LayerKind::relu, LayerKind::sigmoid,
                 LayerKind::softmax}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown layer kind '" + name + "'");
}

Mlp::Mlp(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("network needs at least one layer");
  std::size_t total = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.in_dim == 0 || l.out_dim == 0) throw ConfigError("layer dimensions must be positive");
    if (l.kind != LayerKind::affine && l.in_dim != l.out_dim) {
      throw ConfigError("activation layer " + std::to_string(i) + " must preserve dimension");
    }
    if (i > 0 && layers_[i - 1].out_dim != l.in_dim) {
      std::ostringstream msg;
      msg << "layer " << i << " expects " << l.in_dim << " inputs but previous layer emits "
          << layers_[i - 1].out_dim;
      throw ShapeError(msg.str());
    }
    offsets_.push_back(total);
    total += l.param_count();
  }
  params_.assign(total, 0.0);
}

Mlp::Mlp(std::vector<LayerSpec> layers, std::vector<double> params) : Mlp(std::move(layers)) {
  set_params(params);
}

void Mlp::set_params(std::span<const double> params) {
  if (params.size() != params_.size()) {
    std::ostringstream msg;
    msg << "parameter vector has length " << params.size() << ", network expects "
        << params_.size();
    throw ShapeError(msg.str());
  }
  std::copy(params.begin(), params.end(), params_.begin());
}

std::size_t Mlp::depth() const noexcept {
  return static_cast<std::size_t>(std::count_if(
      layers_.begin(), layers_.end(), [](const LayerSpec& l) { return l.kind == LayerKind::affine; }));
}

std::size_t Mlp::width() const noexcept {
  std::size_t w = 0;
  for (const auto& l : layers_) w = std::max(w, l.out_dim);
  return w;
}

std::size_t Mlp::nonzero_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(params_.begin(), params_.end(), [](double v) { return v != 0.0; }));
}

double Mlp::max_abs_param() const noexcept {
  double m = 0.0;
  for (double v : params_) m = std::max(m, std::abs(v));
  return m;
}

void Mlp::set_magnitude_bound(std::optional<double> kappa) {
  if (kappa && !(*kappa > 0.0)) throw ConfigError("magnitude bound must be positive");
  kappa_ = kappa;
}

void Mlp::enforce_magnitude_bound() noexcept {
  if (!kappa_) return;
  for (double& v : params_) v = std::clamp(v, -*kappa_, *kappa_);
}

void Mlp::check_input(const Tensor2& x) const {
  if (layers_.empty()) throw StateError("forward on an empty network");
  if (x.cols() != input_dim()) {
    std::ostringstream msg;
    msg << "network input has " << x.cols() << " columns, first layer expects " << input_dim();
    throw ShapeError(msg.str());
  }
}

template <bool Record>
Tensor2 Mlp::run(const Tensor2& x, Tape* tape) const {
  check_input(x);
  Tensor2 cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if constexpr (Record) tape->inputs_.push_back(cur);
    switch (l.kind) {
      case LayerKind::affine: {
        const double* w = params_.data() + offsets_[i];
        ConstMapMat weight(w, static_cast<Eigen::Index>(l.out_dim),
                           static_cast<Eigen::Index>(l.in_dim));
        ConstMapVec bias(w + l.out_dim * l.in_dim, static_cast<Eigen::Index>(l.out_dim));
        Tensor2 out(cur.rows(), l.out_dim);
        auto o = as_matrix(out);
        o.noalias() = as_matrix(cur) * weight.transpose();
        o.rowwise() += bias.transpose();
        cur = std::move(out);
        break;
      }
      case LayerKind::leaky_relu:
        for (double& v : cur.data()) v = v >= 0.0 ? v : l.slope * v;
        break;
      case LayerKind::relu:
        for (double& v : cur.data()) v = v >= 0.0 ? v : 0.0;
        break;
      case LayerKind::sigmoid:
        for (double& v : cur.data()) v = sigmoid(v);
        break;
      case LayerKind::softmax:
        softmax_rows(cur);
        break;
    }
  }
  return cur;
}

Tensor2 Mlp::forward(const Tensor2& x) const { return run<false>(x, nullptr); }

Tape Mlp::record(const Tensor2& x) const {
  Tape tape;
  tape.inputs_.reserve(layers_.size());
  tape.output_ = run<true>(x, &tape);
  tape.layer_count_ = layers_.size();
  tape.param_count_ = params_.size();
  return tape;
}

Gradients Mlp::backward(const Tape& tape, const Tensor2& upstream, GradRequest request) const {
  if (!tape.recorded()) throw StateError("backward called without a recorded forward pass");
  if (tape.layer_count_ != layers_.size() || tape.param_count_ != params_.size()) {
    throw StateError("tape was recorded on a different network");
  }
  require_same_shape(tape.output_, upstream, "backward upstream gradient");
  g_backward_calls.fetch_add(1, std::memory_order_relaxed);

  const bool want_params = request != GradRequest::input_only;
  const bool want_input = request != GradRequest::params_only;
  Gradients result;
  if (want_params) result.params.assign(params_.size(), 0.0);

  Tensor2 grad = upstream;
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    const auto& l = layers_[idx];
    const Tensor2& in = tape.inputs_[idx];
    const Tensor2& out = idx + 1 < layers_.size() ? tape.inputs_[idx + 1] : tape.output_;
    switch (l.kind) {
      case LayerKind::affine: {
        const double* w = params_.data() + offsets_[idx];
        ConstMapMat weight(w, static_cast<Eigen::Index>(l.out_dim),
                           static_cast<Eigen::Index>(l.in_dim));
        auto g = as_matrix(grad);
        if (want_params) {
          double* dw = result.params.data() + offsets_[idx];
          MapMat dweight(dw, static_cast<Eigen::Index>(l.out_dim),
                         static_cast<Eigen::Index>(l.in_dim));
          dweight.noalias() = g.transpose() * as_matrix(in);
          Eigen::Map<Eigen::VectorXd> dbias(dw + l.out_dim * l.in_dim,
                                            static_cast<Eigen::Index>(l.out_dim));
          dbias = g.colwise().sum().transpose();
        }
        if (idx > 0 || want_input) {
          Tensor2 next(grad.rows(), l.in_dim);
          as_matrix(next).noalias() = g * weight;
          grad = std::move(next);
        }
        break;
      }
      case LayerKind::leaky_relu: {
        auto gi = grad.data();
        auto xi = in.data();
        for (std::size_t k = 0; k < gi.size(); ++k) {
          if (xi[k] < 0.0) gi[k] *= l.slope;
        }
        break;
      }
      case LayerKind::relu: {
        auto gi = grad.data();
        auto xi = in.data();
        for (std::size_t k = 0; k < gi.size(); ++k) {
          if (xi[k] < 0.0) gi[k] = 0.0;
        }
        break;
      }
      case LayerKind::sigmoid: {
        auto gi = grad.data();
        auto si = out.data();
        for (std::size_t k = 0; k < gi.size(); ++k) gi[k] *= si[k] * (1.0 - si[k]);
        break;
      }
      case LayerKind::softmax: {
        for (std::size_t r = 0; r < grad.rows(); ++r) {
          auto g = grad.row(r);
          auto s = out.row(r);
          double dot = 0.0;
          for (std::size_t k = 0; k < g.size(); ++k) dot += g[k] * s[k];
          for (std::size_t k = 0; k < g.size(); ++k) g[k] = s[k] * (g[k] - dot);
        }
        break;
      }
    }
  }
  if (want_input) result.input = std::move(grad);
  return result;
}

MlpBuilder& MlpBuilder::affine(std::size_t out) {
  layers_.push_back(LayerSpec::affine(dim_, out));
  dim_ = out;
  return *this;
}

MlpBuilder& MlpBuilder::leaky_relu(double slope) {
  layers_.push_back(LayerSpec::leaky_relu(dim_, slope));
  return *this;
}

MlpBuilder& MlpBuilder::relu() {
  layers_.push_back(LayerSpec::relu(dim_));
  return *this;
}

MlpBuilder& MlpBuilder::sigmoid() {
  layers_.push_back(LayerSpec::sigmoid(dim_));
  return *this;
}

MlpBuilder& MlpBuilder::softmax() {
  layers_.push_back(LayerSpec::softmax(dim_));
  return *this;
}

void init_uniform(Mlp& net, Rng& rng) {
  auto params = net.params();
  std::size_t offset = 0;
  for (const auto& l : net.layers()) {
    const std::size_t count = l.param_count();
    if (count == 0) continue;
    const double bound = std::sqrt(1.0 / static_cast<double>(l.in_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t k = 0; k < count; ++k) params[offset + k] = dist(rng);
    offset += count;
  }
}

Mlp init_uniform(Mlp net, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  init_uniform(net, rng);
  return net;
}

std::uint64_t backward_call_count() noexcept {
  return g_backward_calls.load(std::memory_order_relaxed);
}

}  // namespace advgame
