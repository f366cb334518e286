#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "realm/core.hpp"
#include "realm/model.hpp"

namespace realm {

// One training record: an annotated example. The example outlives the batch.
struct BatchRecord {
  const Example* example = nullptr;
  int annotator_id = 0;
  int observed_label = 0;
};

// Records grouped by task; the loss uses the group's k throughout.
struct LossBatch {
  int task_id = 0;
  std::vector<BatchRecord> records;
};

struct LossOutput {
  double loss = 0.0;
  std::vector<double> grad_model;      // ModelParams-shaped
  std::vector<double> grad_expertise;  // ExpertiseParams-shaped (empty for CE)
};

enum class LabelSource { observed, true_label };

// beta * p + (1 - beta)/k. The uniform floor keeps the result positive even
// when the model assigns the observed label probability near zero.
inline double mixture_prob(double p_model, double beta, int k) {
  if (k < 2) throw std::invalid_argument("mixture_prob: k < 2");
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("mixture_prob: beta outside [0,1]");
  return beta * p_model + (1.0 - beta) / k;
}

// phi(Q): learnable linear map of the features, d_embed values.
inline std::vector<double> embed_features(const ExpertiseParams& e,
                                          std::span<const double> features) {
  if (e.variant != ExpertiseVariant::state_dependent)
    throw std::invalid_argument("embed_features: wrong expertise variant");
  if (static_cast<int>(features.size()) != e.d_in)
    throw std::invalid_argument("embed_features: feature dimension mismatch");
  std::vector<double> out(e.d_embed, 0.0);
  const double* phi = e.raw.data() + e.phi_offset();
  for (int a = 0; a < e.d_embed; ++a) {
    const double* row = phi + static_cast<std::size_t>(a) * e.d_in;
    double acc = 0.0;
    for (int b = 0; b < e.d_in; ++b) acc += row[b] * features[b];
    out[a] = acc;
  }
  return out;
}

// sigma(Omega embedding): one expertise value per annotator. With a one-hot
// embedding this reads out one column of Omega, so the matrix variant is the
// special case; with embedding = [1] it collapses to the per-annotator scalar.
inline std::vector<double> expertise_from_embedding(
    const Matrix& skills, std::span<const double> embedding) {
  if (skills.cols != embedding.size())
    throw std::invalid_argument(
        "expertise_from_embedding: embedding dimension mismatch");
  std::vector<double> out(skills.rows);
  for (std::size_t i = 0; i < skills.rows; ++i)
    out[i] = sigmoid(dot(skills.row(i), embedding));
  return out;
}

inline std::vector<double> state_dependent_expertise(
    const ExpertiseParams& e, std::span<const double> features) {
  const std::vector<double> emb = embed_features(e, features);
  std::vector<double> out(e.n_annotators);
  for (int i = 0; i < e.n_annotators; ++i)
    out[i] = sigmoid(dot(e.skill_vector(i), std::span<const double>(emb)));
  return out;
}

namespace detail {

inline void check_batch(const LossBatch& batch, const TaskSpec& task) {
  if (batch.records.empty())
    throw std::invalid_argument("loss: empty batch");
  if (batch.task_id != task.task_id)
    throw std::invalid_argument("loss: batch/task id mismatch");
  for (const BatchRecord& r : batch.records) {
    if (r.example == nullptr)
      throw std::invalid_argument("loss: null example in batch");
    if (r.example->task_id != task.task_id)
      throw std::invalid_argument("loss: record from a different task");
    if (r.observed_label < 0 || r.observed_label >= task.k)
      throw std::invalid_argument("loss: observed label out of range");
  }
}

}  // namespace detail

// Mean over the batch of -log[ beta_i(Q) * P(y_obs) + (1 - beta_i(Q))/k ],
// beta from the expertise variant: sigma(omega_i), sigma(Omega_{i,task}), or
// sigma(<skill_i, phi(Q)>). Gradients flow to the model through the mixture
// weight beta and to the expertise through the record's annotator only.
inline LossOutput realm_loss(const LossBatch& batch, const ModelParams& model,
                             const ExpertiseParams& expertise,
                             const TaskSpec& task) {
  detail::check_batch(batch, task);
  switch (expertise.variant) {
    case ExpertiseVariant::scalar:
      if (task.task_id != 0 || expertise.n_tasks != 1)
        throw std::invalid_argument(
            "realm_loss: scalar expertise is single-task");
      break;
    case ExpertiseVariant::matrix:
      if (task.task_id >= expertise.n_tasks)
        throw std::invalid_argument("realm_loss: task beyond expertise matrix");
      break;
    case ExpertiseVariant::state_dependent:
      if (model.d_in != expertise.d_in)
        throw std::invalid_argument("realm_loss: d_in mismatch");
      break;
  }
  for (const BatchRecord& r : batch.records)
    if (r.annotator_id < 0 || r.annotator_id >= expertise.n_annotators)
      throw std::invalid_argument("realm_loss: annotator out of range");

  LossOutput out;
  out.grad_model.assign(model.size(), 0.0);
  out.grad_expertise.assign(expertise.size(), 0.0);
  const double inv_b = 1.0 / batch.records.size();
  const int k = task.k;

  std::vector<double> g(k, 0.0);
  for (const BatchRecord& r : batch.records) {
    const Example& ex = *r.example;
    const RestrictedDistribution dist = forward(model, ex.features, task);
    const double p = dist.probs[r.observed_label];

    double omega = 0.0;
    std::vector<double> emb;  // state_dependent only
    switch (expertise.variant) {
      case ExpertiseVariant::scalar:
        omega = expertise.omega_scalar(r.annotator_id);
        break;
      case ExpertiseVariant::matrix:
        omega = expertise.omega_matrix(r.annotator_id, task.task_id);
        break;
      case ExpertiseVariant::state_dependent: {
        emb = embed_features(expertise, ex.features);
        omega = dot(expertise.skill_vector(r.annotator_id),
                    std::span<const double>(emb));
        break;
      }
    }
    const double beta = sigmoid(omega);
    const double mix = beta * p + (1.0 - beta) / k;
    out.loss += -std::log(mix) * inv_b;

    // d(-log mix)/d p = -beta / mix, routed through the softmax Jacobian.
    std::fill(g.begin(), g.end(), 0.0);
    g[r.observed_label] = -beta / mix * inv_b;
    backward_accumulate(model, ex.features, task, g, out.grad_model);

    // d(-log mix)/d omega = -sigma'(omega) (p - 1/k) / mix.
    const double domega =
        -sigmoid_grad(omega) * (p - 1.0 / k) / mix * inv_b;
    switch (expertise.variant) {
      case ExpertiseVariant::scalar:
        out.grad_expertise[r.annotator_id] += domega;
        break;
      case ExpertiseVariant::matrix:
        out.grad_expertise[expertise.matrix_index(r.annotator_id,
                                                  task.task_id)] += domega;
        break;
      case ExpertiseVariant::state_dependent: {
        const std::span<const double> skill =
            expertise.skill_vector(r.annotator_id);
        double* gskill =
            out.grad_expertise.data() +
            static_cast<std::size_t>(r.annotator_id) * expertise.d_embed;
        double* gphi = out.grad_expertise.data() + expertise.phi_offset();
        for (int a = 0; a < expertise.d_embed; ++a) {
          gskill[a] += domega * emb[a];
          double* gphi_row = gphi + static_cast<std::size_t>(a) * expertise.d_in;
          for (int b = 0; b < expertise.d_in; ++b)
            gphi_row[b] += domega * skill[a] * ex.features[b];
        }
        break;
      }
    }
  }

  if (!all_finite(out.grad_model) || !all_finite(out.grad_expertise) ||
      !std::isfinite(out.loss))
    throw std::runtime_error("realm_loss: non-finite output");
  return out;
}

// Plain restricted-softmax cross-entropy. Annotator identity is ignored;
// label_source picks the observed annotation or the ground-truth label.
inline LossOutput baseline_ce(const LossBatch& batch, const ModelParams& model,
                              const TaskSpec& task, LabelSource label_source) {
  detail::check_batch(batch, task);
  LossOutput out;
  out.grad_model.assign(model.size(), 0.0);
  const double inv_b = 1.0 / batch.records.size();
  std::vector<double> g(task.k, 0.0);
  for (const BatchRecord& r : batch.records) {
    const Example& ex = *r.example;
    const int label = (label_source == LabelSource::observed)
                          ? r.observed_label
                          : ex.true_label;
    const RestrictedDistribution dist = forward(model, ex.features, task);
    const double p = dist.probs[label];
    out.loss += -std::log(p) * inv_b;
    std::fill(g.begin(), g.end(), 0.0);
    g[label] = -1.0 / p * inv_b;
    backward_accumulate(model, ex.features, task, g, out.grad_model);
  }
  if (!all_finite(out.grad_model) || !std::isfinite(out.loss))
    throw std::runtime_error("baseline_ce: non-finite output");
  return out;
}

}  // namespace realm
