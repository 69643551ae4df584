#include "advgame/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "advgame/errors.hpp"
#include "advgame/rng.hpp"

namespace advgame {

std::string to_string(TaskKind kind) {
  return kind == TaskKind::classification ? "classification" : "regression";
}

TaskKind task_kind_from_string(const std::string& text) {
  if (text == "classification") return TaskKind::classification;
  if (text == "regression") return TaskKind::regression;
  throw ConfigError("unknown task kind '" + text + "'");
}

std::vector<std::size_t> DefenseNet::predict(const Tensor2& x) const {
  if (!task.is_classification()) throw ConfigError("predict: regression defense has no classes");
  const Tensor2 logits = forward(x);
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

void project_head(std::span<const double> v, const LpConstraint& c, std::span<double> out) {
  const double dim = static_cast<double>(v.size());
  switch (c.p) {
    case Norm::l2:
    case Norm::linf: {
      const double n = lp_norm(v, Norm::l2);
      if (n == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
      }
      const double scale = (c.p == Norm::l2 ? c.delta : std::sqrt(dim) * c.delta) / n;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = scale * v[i];
        if (c.p == Norm::linf) out[i] = std::clamp(out[i], -c.delta, c.delta);
      }
      return;
    }
    case Norm::l1: {
      const double m = lp_norm(v, Norm::l1);
      if (m == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
      }
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = c.delta * v[i] / m;
      return;
    }
  }
}

void project_head_vjp(std::span<const double> v, const LpConstraint& c,
                      std::span<const double> upstream, std::span<double> grad_v) {
  const std::size_t d = v.size();
  switch (c.p) {
    case Norm::l2:
    case Norm::linf: {
      const double n = lp_norm(v, Norm::l2);
      if (n == 0.0) {
        std::fill(grad_v.begin(), grad_v.end(), 0.0);
        return;
      }
      const double scale = c.p == Norm::l2 ? c.delta : std::sqrt(static_cast<double>(d)) * c.delta;
      // Clamp passes gradient on the closed interval, like torch.clamp.
      std::vector<double> g(upstream.begin(), upstream.end());
      if (c.p == Norm::linf) {
        for (std::size_t i = 0; i < d; ++i) {
          if (std::abs(scale * v[i] / n) > c.delta) g[i] = 0.0;
        }
      }
      double vg = 0.0;
      for (std::size_t i = 0; i < d; ++i) vg += v[i] * g[i];
      for (std::size_t i = 0; i < d; ++i) grad_v[i] = scale / n * (g[i] - v[i] * vg / (n * n));
      return;
    }
    case Norm::l1: {
      const double m = lp_norm(v, Norm::l1);
      if (m == 0.0) {
        std::fill(grad_v.begin(), grad_v.end(), 0.0);
        return;
      }
      double vg = 0.0;
      for (std::size_t i = 0; i < d; ++i) vg += v[i] * upstream[i];
      for (std::size_t i = 0; i < d; ++i) {
        const double sgn = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
        grad_v[i] = c.delta * (upstream[i] / m - sgn * vg / (m * m));
      }
      return;
    }
  }
}

AttackModel::AttackModel(LpConstraint constraint, Task task, std::optional<Mlp> encoder,
                         std::vector<Mlp> decoders, std::vector<Mlp> scalers)
    : constraint_(constraint),
      task_(task),
      encoder_(std::move(encoder)),
      decoders_(std::move(decoders)),
      scalers_(std::move(scalers)) {
  constraint_.validate();
  const std::size_t slots = task_.is_classification() ? task_.classes : 1;
  if (decoders_.size() != slots || scalers_.size() != slots) {
    throw ConfigError("attack model needs " + std::to_string(slots) +
                      " decoders and scalers for its task");
  }
  if (task_.is_classification() && !encoder_) {
    throw ConfigError("classification attack model needs an encoder");
  }
  const std::size_t d = input_dim();
  for (std::size_t s = 0; s < slots; ++s) {
    const std::size_t dec_in = encoder_ ? encoder_->output_dim() : d;
    if (decoders_[s].input_dim() != dec_in || decoders_[s].output_dim() != d) {
      throw ShapeError("decoder " + std::to_string(s) + " does not map latent to input space");
    }
    if (scalers_[s].input_dim() != d || scalers_[s].output_dim() != 1) {
      throw ShapeError("scaler " + std::to_string(s) + " must map R^D to one value");
    }
  }
}

std::size_t AttackModel::input_dim() const noexcept {
  if (encoder_) return encoder_->input_dim();
  return scalers_.empty() ? 0 : scalers_.front().input_dim();
}

std::size_t AttackModel::param_count() const noexcept {
  std::size_t n = encoder_ ? encoder_->param_count() : 0;
  for (const auto& m : decoders_) n += m.param_count();
  for (const auto& m : scalers_) n += m.param_count();
  return n;
}

std::vector<double> AttackModel::flat_params() const {
  std::vector<double> out;
  out.reserve(param_count());
  auto append = [&](const Mlp& m) { out.insert(out.end(), m.params().begin(), m.params().end()); };
  if (encoder_) append(*encoder_);
  for (const auto& m : decoders_) append(m);
  for (const auto& m : scalers_) append(m);
  return out;
}

void AttackModel::set_flat_params(std::span<const double> params) {
  if (params.size() != param_count()) {
    throw ShapeError("attack parameter vector has length " + std::to_string(params.size()) +
                     ", model expects " + std::to_string(param_count()));
  }
  std::size_t off = 0;
  auto take = [&](Mlp& m) {
    m.set_params(params.subspan(off, m.param_count()));
    off += m.param_count();
  };
  if (encoder_) take(*encoder_);
  for (auto& m : decoders_) take(m);
  for (auto& m : scalers_) take(m);
}

std::size_t AttackModel::decoder_offset(std::size_t c) const {
  std::size_t off = encoder_ ? encoder_->param_count() : 0;
  for (std::size_t i = 0; i < c; ++i) off += decoders_.at(i).param_count();
  return off;
}

std::size_t AttackModel::slot_of(std::size_t label) const {
  return task_.is_classification() ? label : 0;
}

void AttackModel::validate_batch(const Tensor2& x, std::span<const std::size_t> labels) const {
  if (x.cols() != input_dim()) {
    std::ostringstream msg;
    msg << "attack input has " << x.cols() << " columns, model expects " << input_dim();
    throw ShapeError(msg.str());
  }
  if (task_.is_classification()) {
    if (labels.size() != x.rows()) {
      throw InputError("attack needs one label per row (" + std::to_string(x.rows()) +
                       " rows, " + std::to_string(labels.size()) + " labels)");
    }
    for (std::size_t label : labels) {
      if (label >= task_.classes) {
        throw InputError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(task_.classes) + " classes");
      }
    }
  }
}

AttackTape AttackModel::record(const Tensor2& x, std::span<const std::size_t> labels) const {
  validate_batch(x, labels);
  const std::size_t d = input_dim();
  AttackTape tape;
  tape.rows.assign(decoders_.size(), {});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    tape.rows[task_.is_classification() ? slot_of(labels[r]) : 0].push_back(r);
  }

  Tensor2 latent;
  if (encoder_) {
    tape.encoder = encoder_->record(x);
    latent = tape.encoder->output();
  }
  const Tensor2& dec_input = encoder_ ? latent : x;

  tape.output_ = Tensor2(x.rows(), d);
  tape.decoder.resize(decoders_.size());
  tape.scaler.resize(scalers_.size());
  std::vector<double> u(d);
  for (std::size_t s = 0; s < decoders_.size(); ++s) {
    const auto& rows = tape.rows[s];
    if (rows.empty()) continue;
    tape.decoder[s] = decoders_[s].record(dec_input.gather_rows(rows));
    tape.scaler[s] = scalers_[s].record(x.gather_rows(rows));
    const Tensor2& raw = tape.decoder[s].output();
    const Tensor2& scale = tape.scaler[s].output();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      project_head(raw.row(i), constraint_, u);
      auto out = tape.output_.row(rows[i]);
      for (std::size_t k = 0; k < d; ++k) out[k] = scale(i, 0) * u[k];
    }
  }
  tape.recorded_ = true;
  return tape;
}

Tensor2 AttackModel::forward(const Tensor2& x, std::span<const std::size_t> labels) const {
  AttackTape tape = record(x, labels);
  return std::move(tape.output_);
}

std::vector<double> AttackModel::backward(const AttackTape& tape, const Tensor2& upstream) const {
  if (!tape.recorded()) throw StateError("attack backward called without a recorded forward");
  require_same_shape(tape.output_, upstream, "attack backward upstream gradient");
  const std::size_t d = input_dim();
  std::vector<double> grad(param_count(), 0.0);

  const std::size_t enc_count = encoder_ ? encoder_->param_count() : 0;
  std::size_t scaler_off = enc_count;
  for (const auto& m : decoders_) scaler_off += m.param_count();

  Tensor2 latent_grad;
  if (encoder_) latent_grad = Tensor2(upstream.rows(), encoder_->output_dim());

  std::vector<double> u(d), gu(d), gv(d);
  std::size_t dec_off = enc_count;
  for (std::size_t s = 0; s < decoders_.size(); ++s) {
    const auto& rows = tape.rows[s];
    if (!rows.empty()) {
      const Tensor2& raw = tape.decoder[s].output();
      const Tensor2& scale = tape.scaler[s].output();
      Tensor2 g_raw(rows.size(), d);
      Tensor2 g_scale(rows.size(), 1);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        auto up = upstream.row(rows[i]);
        project_head(raw.row(i), constraint_, u);
        double gs = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          gs += up[k] * u[k];
          gu[k] = scale(i, 0) * up[k];
        }
        g_scale(i, 0) = gs;
        project_head_vjp(raw.row(i), constraint_, gu, gv);
        std::copy(gv.begin(), gv.end(), g_raw.row(i).begin());
      }
      const auto request = encoder_ ? GradRequest::params_and_input : GradRequest::params_only;
      Gradients dg = decoders_[s].backward(tape.decoder[s], g_raw, request);
      std::copy(dg.params.begin(), dg.params.end(), grad.begin() + static_cast<long>(dec_off));
      if (encoder_) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          auto src = dg.input.row(i);
          auto dst = latent_grad.row(rows[i]);
          for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
        }
      }
      Gradients sg = scalers_[s].backward(tape.scaler[s], g_scale, GradRequest::params_only);
      std::copy(sg.params.begin(), sg.params.end(), grad.begin() + static_cast<long>(scaler_off));
    }
    dec_off += decoders_[s].param_count();
    scaler_off += scalers_[s].param_count();
  }
  if (encoder_) {
    Gradients eg = encoder_->backward(*tape.encoder, latent_grad, GradRequest::params_only);
    std::copy(eg.params.begin(), eg.params.end(), grad.begin());
  }
  return grad;
}

Tensor2 AttackModel::adversarial_example(const Tensor2& x, std::span<const std::size_t> labels,
                                         bool clip_to_cube) const {
  Tensor2 out = x + forward(x, labels);
  if (clip_to_cube) {
    for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

namespace {

void require_unit_cube(std::span<const double> x) {
  constexpr double kSlack = 1e-9;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= -kSlack && x[i] <= 1.0 + kSlack)) {
      throw InputError("attack input coordinate " + std::to_string(i) +
                       " lies outside the unit cube");
    }
  }
}

}  // namespace

std::vector<double> attack_forward(const AttackModel& model, std::span<const double> x,
                                   std::size_t label) {
  require_unit_cube(x);
  const std::size_t labels[] = {label};
  Tensor2 out = model.forward(Tensor2::row_vector(x), labels);
  return out.values();
}

std::vector<double> adversarial_example(const AttackModel& model, std::span<const double> x,
                                        std::size_t label) {
  std::vector<double> out = attack_forward(model, x, label);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
  return out;
}

namespace {

Mlp scaler_net(std::size_t d) {
  return MlpBuilder(d).affine(20).leaky_relu().affine(1).sigmoid().build();
}

Mlp classification_defense(std::size_t d, std::size_t c) {
  return MlpBuilder(d)
      .affine(50).leaky_relu()
      .affine(100).leaky_relu()
      .affine(15).leaky_relu()
      .affine(c)
      .build();
}

Mlp regression_defense(std::size_t d) {
  return MlpBuilder(d).affine(50).leaky_relu().affine(20).leaky_relu().affine(1).build();
}

}  // namespace

DefenseNet build_defense(std::size_t input_dim, const Task& task, std::uint64_t seed) {
  if (input_dim == 0) throw ConfigError("input dimension must be positive");
  Rng rng = make_rng(seed);
  DefenseNet f{task.is_classification() ? classification_defense(input_dim, task.classes)
                                        : regression_defense(input_dim),
               task};
  init_uniform(f.net, rng);
  return f;
}

ModelPair build_classification_pair(std::size_t input_dim, std::size_t classes,
                                    const LpConstraint& constraint, std::uint64_t seed) {
  if (input_dim < 1) throw ConfigError("input dimension must be at least 1");
  if (classes < 2) throw ConfigError("classification needs at least 2 classes");
  constraint.validate();
  const Task task = Task::classification(classes);
  DefenseNet f = build_defense(input_dim, task, derive_seed(seed, 0));

  Rng rng = make_rng(seed, 1);
  Mlp encoder = MlpBuilder(input_dim).affine(50).leaky_relu().affine(100).build();
  init_uniform(encoder, rng);
  std::vector<Mlp> decoders;
  std::vector<Mlp> scalers;
  for (std::size_t c = 0; c < classes; ++c) {
    Mlp dec = MlpBuilder(100)
                  .leaky_relu()
                  .affine(50).leaky_relu()
                  .affine(15).leaky_relu()
                  .affine(input_dim)
                  .build();
    init_uniform(dec, rng);
    decoders.push_back(std::move(dec));
  }
  for (std::size_t c = 0; c < classes; ++c) {
    Mlp s = scaler_net(input_dim);
    init_uniform(s, rng);
    scalers.push_back(std::move(s));
  }
  return {std::move(f), AttackModel(constraint, task, std::move(encoder), std::move(decoders),
                                    std::move(scalers))};
}

ModelPair build_regression_pair(std::size_t input_dim, const LpConstraint& constraint,
                                std::uint64_t seed) {
  if (input_dim < 1) throw ConfigError("input dimension must be at least 1");
  constraint.validate();
  const Task task = Task::regression();
  DefenseNet f = build_defense(input_dim, task, derive_seed(seed, 0));

  Rng rng = make_rng(seed, 1);
  Mlp h = MlpBuilder(input_dim).affine(50).leaky_relu().affine(50).leaky_relu().affine(input_dim)
              .build();
  init_uniform(h, rng);
  Mlp s = scaler_net(input_dim);
  init_uniform(s, rng);
  std::vector<Mlp> decoders;
  decoders.push_back(std::move(h));
  std::vector<Mlp> scalers;
  scalers.push_back(std::move(s));
  return {std::move(f),
          AttackModel(constraint, task, std::nullopt, std::move(decoders), std::move(scalers))};
}

}  // namespace advgame
