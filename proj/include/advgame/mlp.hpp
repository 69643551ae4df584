#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advgame/rng.hpp"
#include "advgame/tensor.hpp"

namespace advgame {

enum class LayerKind { affine, leaky_relu, relu, sigmoid, softmax };

/// Slope used by every LeakyReLU in the reference architectures.
inline constexpr double kLeakySlope = 0.01;

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::affine;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  double slope = kLeakySlope;  // leaky_relu only

  static LayerSpec affine(std::size_t in, std::size_t out) {
    return {LayerKind::affine, in, out, 0.0};
  }
  static LayerSpec leaky_relu(std::size_t dim, double slope = kLeakySlope) {
    return {LayerKind::leaky_relu, dim, dim, slope};
  }
  static LayerSpec relu(std::size_t dim) { return {LayerKind::relu, dim, dim, 0.0}; }
  static LayerSpec sigmoid(std::size_t dim) { return {LayerKind::sigmoid, dim, dim, 0.0}; }
  static LayerSpec softmax(std::size_t dim) { return {LayerKind::softmax, dim, dim, 0.0}; }

  /// Weight (out x in, row-major) followed by bias (out) for affine layers; 0 otherwise.
  std::size_t param_count() const noexcept {
    return kind == LayerKind::affine ? out_dim * in_dim + out_dim : 0;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Activations kept from a recorded forward pass. Consumed by Mlp::backward.
class Tape {
 public:
  bool recorded() const noexcept { return !inputs_.empty(); }
  const Tensor2& output() const noexcept { return output_; }
  const Tensor2& input() const { return inputs_.front(); }

 private:
  friend class Mlp;
  std::vector<Tensor2> inputs_;  // inputs_[i] is the input of layer i
  Tensor2 output_;
  std::size_t layer_count_ = 0;
  std::size_t param_count_ = 0;
};

struct Gradients {
  std::vector<double> params;  // empty when not requested
  Tensor2 input;               // empty when not requested
};

enum class GradRequest { params_and_input, params_only, input_only };

/// Fixed chain of dense layers with a flat parameter vector.
///
/// Also carries the size metadata of a ReLU network class (depth, width,
/// non-zero count, magnitude bound kappa, sup-norm bound B). kappa is only
/// enforced when `enforce_magnitude_bound` is called; B is metadata.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<LayerSpec> layers);
  Mlp(std::vector<LayerSpec> layers, std::vector<double> params);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t input_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().in_dim; }
  std::size_t output_dim() const noexcept { return layers_.empty() ? 0 : layers_.back().out_dim; }
  std::size_t param_count() const noexcept { return params_.size(); }

  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }
  void set_params(std::span<const double> params);

  /// Number of affine layers.
  std::size_t depth() const noexcept;
  /// Largest layer output width.
  std::size_t width() const noexcept;
  std::size_t nonzero_count() const noexcept;
  double max_abs_param() const noexcept;

  std::optional<double> magnitude_bound() const noexcept { return kappa_; }
  void set_magnitude_bound(std::optional<double> kappa);
  /// Clips every parameter into [-kappa, kappa]. No-op without a bound.
  void enforce_magnitude_bound() noexcept;

  std::optional<double> output_bound() const noexcept { return output_bound_; }
  void set_output_bound(std::optional<double> bound) noexcept { output_bound_ = bound; }

  Tensor2 forward(const Tensor2& x) const;
  /// Forward pass that keeps the activations needed by backward.
  Tape record(const Tensor2& x) const;
  /// Vector-Jacobian products for the recorded batch. Parameter gradients are
  /// summed over rows.
  Gradients backward(const Tape& tape, const Tensor2& upstream,
                     GradRequest request = GradRequest::params_and_input) const;

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.layers_ == b.layers_ && a.params_ == b.params_;
  }

 private:
  void check_input(const Tensor2& x) const;
  template <bool Record>
  Tensor2 run(const Tensor2& x, Tape* tape) const;

  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;  // parameter offset per layer
  std::vector<double> params_;
  std::optional<double> kappa_;
  std::optional<double> output_bound_;
};

/// Fluent construction of a layer chain: MlpBuilder(2).affine(50).leaky_relu().build().
class MlpBuilder {
 public:
  explicit MlpBuilder(std::size_t input_dim) : dim_(input_dim) {}
  MlpBuilder& affine(std::size_t out);
  MlpBuilder& leaky_relu(double slope = kLeakySlope);
  MlpBuilder& relu();
  MlpBuilder& sigmoid();
  MlpBuilder& softmax();
  Mlp build() const { return Mlp(layers_); }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }

 private:
  std::size_t dim_;
  std::vector<LayerSpec> layers_;
};

/// Draws every affine parameter i.i.d. from U(-sqrt(1/in), sqrt(1/in)) of its layer.
void init_uniform(Mlp& net, Rng& rng);
Mlp init_uniform(Mlp net, std::uint64_t seed);

/// Number of Mlp::backward calls made by this process (instrumentation).
std::uint64_t backward_call_count() noexcept;

}  // namespace advgame
