#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "realm/linalg.hpp"

namespace realm {

// 0.5 * (1 + cos(pi * i / T)): 1 at the first step, ~0 approaching T.
inline double cosine_lr_factor(int step_index, int total_steps) {
  if (total_steps < 1 || step_index < 0 || step_index >= total_steps)
    throw std::invalid_argument("cosine_lr_factor: step outside schedule");
  return 0.5 * (1.0 + std::cos(std::numbers::pi * step_index / total_steps));
}

struct AdamWGroupConfig {
  double lr = 0.0;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled-weight-decay Adam over two parameter groups: the classifier
// (decayed) and the expertise block (not decayed; a handful of scalars where
// decay would drag beta toward 0.5). Either group may be empty.
struct AdamW {
  AdamWGroupConfig model_group;
  AdamWGroupConfig expertise_group;
  std::vector<double> m_model, v_model;
  std::vector<double> m_expertise, v_expertise;
  long t = 0;  // completed steps

  static AdamW make(std::size_t n_model, std::size_t n_expertise,
                    double model_lr, double expertise_lr,
                    double model_weight_decay = 0.01) {
    AdamW o;
    o.model_group.lr = model_lr;
    o.model_group.weight_decay = model_weight_decay;
    o.expertise_group.lr = expertise_lr;
    o.expertise_group.weight_decay = 0.0;
    o.m_model.assign(n_model, 0.0);
    o.v_model.assign(n_model, 0.0);
    o.m_expertise.assign(n_expertise, 0.0);
    o.v_expertise.assign(n_expertise, 0.0);
    return o;
  }

  // One AdamW update with bias correction; the cosine factor scales both
  // groups' base rates. step_index counts from 0 to total_steps - 1.
  void step(std::span<double> model_params, std::span<const double> model_grad,
            std::span<double> expertise_params,
            std::span<const double> expertise_grad, int step_index,
            int total_steps) {
    if (model_params.size() != m_model.size() ||
        model_grad.size() != m_model.size() ||
        expertise_params.size() != m_expertise.size() ||
        expertise_grad.size() != m_expertise.size())
      throw std::invalid_argument("AdamW::step: shape mismatch");
    if (!all_finite(model_grad) || !all_finite(expertise_grad))
      throw std::runtime_error("AdamW::step: non-finite gradient");
    const double factor = cosine_lr_factor(step_index, total_steps);
    ++t;
    update_group(model_group, factor, m_model, v_model, model_params,
                 model_grad);
    update_group(expertise_group, factor, m_expertise, v_expertise,
                 expertise_params, expertise_grad);
  }

 private:
  void update_group(const AdamWGroupConfig& g, double factor,
                    std::vector<double>& m, std::vector<double>& v,
                    std::span<double> params,
                    std::span<const double> grad) const {
    if (params.empty()) return;
    const double lr = g.lr * factor;
    const double bc1 = 1.0 - std::pow(g.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(g.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = g.beta1 * m[i] + (1.0 - g.beta1) * grad[i];
      v[i] = g.beta2 * v[i] + (1.0 - g.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      params[i] -=
          lr * (m_hat / (std::sqrt(v_hat) + g.eps) + g.weight_decay * params[i]);
    }
  }
};

// Running mean of micro-batch gradients, so the result equals the gradient
// of the mean loss over the effective batch (equal-sized micro-batches).
struct GradAccumulator {
  std::vector<double> sum;
  int count = 0;

  explicit GradAccumulator(std::size_t n) : sum(n, 0.0) {}

  void add(std::span<const double> grad) {
    if (grad.size() != sum.size())
      throw std::invalid_argument("GradAccumulator: shape mismatch");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += grad[i];
    ++count;
  }

  std::vector<double> mean() const {
    if (count == 0) throw std::logic_error("GradAccumulator: empty");
    std::vector<double> out(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) out[i] = sum[i] / count;
    return out;
  }

  void reset() {
    std::fill(sum.begin(), sum.end(), 0.0);
    count = 0;
  }
};

}  // namespace realm
