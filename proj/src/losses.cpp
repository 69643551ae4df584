#include "advgame/losses.hpp"

#include <algorithm>
#include <cmath>

#include "advgame/errors.hpp"

namespace advgame {

std::string to_string(LossFamily f) {
  return f == LossFamily::cross_entropy ? "cross-entropy" : "mse";
}

std::string to_string(LossMix m) {
  switch (m) {
    case LossMix::plain: return "plain";
    case LossMix::alpha_weighted: return "alpha";
    case LossMix::trades: return "trades";
  }
  return "?";
}

LossFamily loss_family_from_string(const std::string& text) {
  if (text == "cross-entropy" || text == "ce") return LossFamily::cross_entropy;
  if (text == "mse" || text == "mean-squared-error") return LossFamily::mean_squared_error;
  throw ConfigError("unknown loss family '" + text + "'");
}

LossMix loss_mix_from_string(const std::string& text) {
  if (text == "plain") return LossMix::plain;
  if (text == "alpha" || text == "alpha-weighted") return LossMix::alpha_weighted;
  if (text == "trades") return LossMix::trades;
  throw ConfigError("unknown loss mix '" + text + "'");
}

void LossKind::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss alpha must lie in [0, 1]");
}

Batch Batch::subset(std::span<const std::size_t> rows) const {
  Batch out;
  out.x = x.gather_rows(rows);
  if (!labels.empty()) {
    out.labels.reserve(rows.size());
    for (auto r : rows) out.labels.push_back(labels.at(r));
  }
  if (!targets.empty()) {
    out.targets.reserve(rows.size());
    for (auto r : rows) out.targets.push_back(targets.at(r));
  }
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw InputError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  return m + std::log(sum) - logits[label];
}

double squared_error(double prediction, double target) {
  const double r = prediction - target;
  return r * r;
}

LossResult loss(LossFamily family, const Tensor2& outputs, const Batch& batch) {
  const std::size_t n = outputs.rows();
  LossResult res;
  res.per_sample.resize(n);
  res.grad = Tensor2(n, outputs.cols());
  if (family == LossFamily::cross_entropy) {
    if (batch.labels.size() != n) throw ShapeError("cross-entropy: need one label per row");
    for (std::size_t r = 0; r < n; ++r) {
      auto z = outputs.row(r);
      const std::size_t y = batch.labels[r];
      res.per_sample[r] = cross_entropy(z, y);
      const double m = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double v : z) sum += std::exp(v - m);
      auto g = res.grad.row(r);
      for (std::size_t k = 0; k < z.size(); ++k) g[k] = std::exp(z[k] - m) / sum;
      g[y] -= 1.0;
    }
  } else {
    if (outputs.cols() != 1) throw ShapeError("mse: regression output must have one column");
    if (batch.targets.size() != n) throw ShapeError("mse: need one target per row");
    for (std::size_t r = 0; r < n; ++r) {
      res.per_sample[r] = squared_error(outputs(r, 0), batch.targets[r]);
      res.grad(r, 0) = 2.0 * (outputs(r, 0) - batch.targets[r]);
    }
  }
  for (double v : res.per_sample) res.total += v;
  return res;
}

LossResult soft_loss(LossFamily family, const Tensor2& outputs, const Tensor2& reference) {
  require_same_shape(outputs, reference, "soft_loss");
  const std::size_t n = outputs.rows();
  const std::size_t k = outputs.cols();
  LossResult res;
  res.per_sample.resize(n);
  res.grad = Tensor2(n, k);
  if (family == LossFamily::cross_entropy) {
    std::vector<double> target(k);
    for (std::size_t r = 0; r < n; ++r) {
      auto ref = reference.row(r);
      const double mr = *std::max_element(ref.begin(), ref.end());
      double sr = 0.0;
      for (std::size_t j = 0; j < k; ++j) sr += (target[j] = std::exp(ref[j] - mr));
      for (double& t : target) t /= sr;

      auto z = outputs.row(r);
      const double m = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (double v : z) s += std::exp(v - m);
      const double lse = m + std::log(s);
      double value = 0.0;
      auto g = res.grad.row(r);
      for (std::size_t j = 0; j < k; ++j) {
        value -= target[j] * (z[j] - lse);
        g[j] = std::exp(z[j] - lse) - target[j];
      }
      res.per_sample[r] = value;
    }
  } else {
    for (std::size_t r = 0; r < n; ++r) {
      double value = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double d = outputs(r, j) - reference(r, j);
        value += d * d;
        res.grad(r, j) = 2.0 * d;
      }
      res.per_sample[r] = value;
    }
  }
  for (double v : res.per_sample) res.total += v;
  return res;
}

AdversarialLossResult perturbed_loss(const LossKind& kind, const DefenseNet& f,
                                     const Batch& batch, const Tensor2& x_adv, GradFor grads) {
  kind.validate();
  if (batch.size() == 0) throw InputError("loss on an empty batch");
  require_same_shape(batch.x, x_adv, "perturbed_loss");
  const bool want_defense = grads == GradFor::defense || grads == GradFor::both;
  const bool want_input = grads == GradFor::attack || grads == GradFor::both;
  const bool needs_clean = kind.mix != LossMix::plain;
  const double w_adv = needs_clean ? 1.0 - kind.alpha : 1.0;
  const double w_clean = needs_clean ? kind.alpha : 0.0;

  AdversarialLossResult out;
  const std::size_t n = batch.size();

  Tape clean_tape;
  LossResult clean_res;
  if (needs_clean) {
    clean_tape = f.net.record(batch.x);
    clean_res = loss(kind.family, clean_tape.output(), batch);
  }

  Tape adv_tape = f.net.record(x_adv);
  LossResult adv_res = kind.mix == LossMix::trades
                           ? soft_loss(kind.family, adv_tape.output(), clean_tape.output())
                           : loss(kind.family, adv_tape.output(), batch);

  out.per_sample.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.per_sample[i] = needs_clean ? w_adv * adv_res.per_sample[i] + w_clean * clean_res.per_sample[i]
                                    : adv_res.per_sample[i];
    out.total += out.per_sample[i];
    if (!std::isfinite(out.per_sample[i])) {
      throw NumericError("non-finite loss at sample " + std::to_string(i));
    }
  }
  out.adversarial = std::move(adv_res.per_sample);
  if (needs_clean) out.clean = std::move(clean_res.per_sample);

  if (want_defense || want_input) {
    Tensor2 up = std::move(adv_res.grad);
    if (w_adv != 1.0) up *= w_adv;
    const GradRequest req = want_defense && want_input ? GradRequest::params_and_input
                            : want_defense            ? GradRequest::params_only
                                                      : GradRequest::input_only;
    Gradients g = f.net.backward(adv_tape, up, req);
    if (want_defense) {
      out.defense_grad = std::move(g.params);
      if (needs_clean) {
        Tensor2 cup = std::move(clean_res.grad);
        cup *= w_clean;
        Gradients cg = f.net.backward(clean_tape, cup, GradRequest::params_only);
        for (std::size_t i = 0; i < out.defense_grad.size(); ++i) out.defense_grad[i] += cg.params[i];
      }
    }
    if (want_input) out.input_grad = std::move(g.input);
  }
  return out;
}

AdversarialLossResult adversarial_loss(const LossKind& kind, const DefenseNet& f,
                                       const AttackModel& attack, const Batch& batch,
                                       GradFor grads, bool clip_to_cube) {
  const bool want_attack = grads == GradFor::attack || grads == GradFor::both;
  AttackTape tape = attack.record(batch.x, batch.labels);
  Tensor2 x_adv = batch.x + tape.output();
  std::vector<char> clipped;
  if (clip_to_cube) {
    clipped.assign(x_adv.size(), 0);
    auto d = x_adv.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i] < 0.0 || d[i] > 1.0) {
        d[i] = std::clamp(d[i], 0.0, 1.0);
        clipped[i] = 1;
      }
    }
  }
  AdversarialLossResult out = perturbed_loss(kind, f, batch, x_adv, grads);
  if (want_attack) {
    if (clip_to_cube) {
      auto g = out.input_grad.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (clipped[i]) g[i] = 0.0;
      }
    }
    out.attack_grad = attack.backward(tape, out.input_grad);
  }
  return out;
}

AdversarialLossResult clean_loss(const LossKind& kind, const DefenseNet& f, const Batch& batch,
                                 bool want_grad) {
  const LossKind plain{kind.family, LossMix::plain, 0.0};
  return perturbed_loss(plain, f, batch, batch.x, want_grad ? GradFor::defense : GradFor::none);
}

}  // namespace advgame
