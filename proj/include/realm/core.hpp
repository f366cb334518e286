#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "realm/linalg.hpp"

namespace realm {

// ---------------------------------------------------------------------------
// Sigmoid
// ---------------------------------------------------------------------------

// Keeps sigma(x) strictly inside (0,1) for every finite x, so the mixture
// floor (1-beta)/k never degenerates to zero even when |x| is huge.
inline constexpr double kSigmoidFloor = 1e-15;

inline double sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::min(std::max(s, kSigmoidFloor), 1.0 - kSigmoidFloor);
}

// d sigma / dx evaluated through the clamped sigma.
inline double sigmoid_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

// ---------------------------------------------------------------------------
// Enums
// ---------------------------------------------------------------------------

enum class Method { oracle, noisy, realm };
enum class ExpertiseVariant { scalar, matrix, state_dependent };
enum class NoiseType { uniform, asymmetric, systematic };
enum class AnnotationMode { exclusive, shared };
enum class Arch { linear, mlp1 };
enum class LrSchedule { cosine };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::oracle: return "oracle";
    case Method::noisy: return "noisy";
    case Method::realm: return "realm";
  }
  return "?";
}
inline const char* to_string(ExpertiseVariant v) {
  switch (v) {
    case ExpertiseVariant::scalar: return "scalar";
    case ExpertiseVariant::matrix: return "matrix";
    case ExpertiseVariant::state_dependent: return "state_dependent";
  }
  return "?";
}
inline const char* to_string(NoiseType n) {
  switch (n) {
    case NoiseType::uniform: return "uniform";
    case NoiseType::asymmetric: return "asymmetric";
    case NoiseType::systematic: return "systematic";
  }
  return "?";
}
inline const char* to_string(AnnotationMode m) {
  return m == AnnotationMode::exclusive ? "exclusive" : "shared";
}
inline const char* to_string(Arch a) {
  return a == Arch::linear ? "linear" : "mlp1";
}

// ---------------------------------------------------------------------------
// Domain types. All immutable after construction; constructors validate.
// ---------------------------------------------------------------------------

struct TaskSpec {
  int task_id = 0;
  int k = 0;  // answer-set size
  std::vector<int> answer_token_ids;  // k distinct indices into [0, vocab)

  TaskSpec() = default;
  TaskSpec(int task_id_, int k_, std::vector<int> tokens, int vocab_size)
      : task_id(task_id_), k(k_), answer_token_ids(std::move(tokens)) {
    if (task_id < 0) throw std::invalid_argument("TaskSpec: negative task_id");
    if (k < 2) throw std::invalid_argument("TaskSpec: k must be >= 2");
    if (static_cast<int>(answer_token_ids.size()) != k)
      throw std::invalid_argument("TaskSpec: answer_token_ids size != k");
    std::set<int> seen;
    for (int t : answer_token_ids) {
      if (t < 0 || t >= vocab_size)
        throw std::invalid_argument("TaskSpec: answer token out of vocab");
      if (!seen.insert(t).second)
        throw std::invalid_argument("TaskSpec: duplicate answer token");
    }
  }
};

// Builds M tasks whose answer tokens are disjoint contiguous blocks of the
// shared logit space.
inline std::vector<TaskSpec> make_task_specs(const std::vector<int>& ks,
                                             int vocab_size) {
  std::vector<TaskSpec> tasks;
  int next = 0;
  for (std::size_t m = 0; m < ks.size(); ++m) {
    std::vector<int> tokens(ks[m]);
    for (int j = 0; j < ks[m]; ++j) tokens[j] = next + j;
    next += ks[m];
    tasks.emplace_back(static_cast<int>(m), ks[m], std::move(tokens),
                       vocab_size);
  }
  return tasks;
}

struct Example {
  int example_id = 0;
  std::vector<double> features;
  int true_label = 0;  // held out from training
  int task_id = 0;

  Example() = default;
  Example(int example_id_, std::vector<double> features_, int true_label_,
          const TaskSpec& task)
      : example_id(example_id_),
        features(std::move(features_)),
        true_label(true_label_),
        task_id(task.task_id) {
    if (true_label < 0 || true_label >= task.k)
      throw std::invalid_argument("Example: true_label out of range");
    if (!all_finite(features))
      throw std::invalid_argument("Example: non-finite feature");
  }
};

struct AnnotationRecord {
  int example_id = 0;
  int annotator_id = 0;
  int observed_label = 0;

  AnnotationRecord() = default;
  AnnotationRecord(int example_id_, int annotator_id_, int observed_label_,
                   const TaskSpec& task, int n_annotators)
      : example_id(example_id_),
        annotator_id(annotator_id_),
        observed_label(observed_label_) {
    if (annotator_id < 0 || annotator_id >= n_annotators)
      throw std::invalid_argument("AnnotationRecord: annotator_id out of range");
    if (observed_label < 0 || observed_label >= task.k)
      throw std::invalid_argument(
          "AnnotationRecord: observed_label out of range");
  }
};

// Ground-truth annotator expertise used by the simulator. Scalar variant is
// one beta per annotator; matrix variant is beta per (annotator, task).
struct ExpertiseGroundTruth {
  ExpertiseVariant variant = ExpertiseVariant::scalar;
  std::vector<double> scalar_beta;  // size N (scalar variant)
  Matrix matrix_beta;               // N x M (matrix variant)

  ExpertiseGroundTruth() = default;

  static ExpertiseGroundTruth make_scalar(std::vector<double> beta) {
    for (double b : beta)
      if (!(b >= 0.0 && b <= 1.0))
        throw std::invalid_argument("ExpertiseGroundTruth: beta outside [0,1]");
    ExpertiseGroundTruth g;
    g.variant = ExpertiseVariant::scalar;
    g.scalar_beta = std::move(beta);
    return g;
  }

  static ExpertiseGroundTruth make_matrix(Matrix beta) {
    for (double b : beta.data)
      if (!(b >= 0.0 && b <= 1.0))
        throw std::invalid_argument("ExpertiseGroundTruth: beta outside [0,1]");
    ExpertiseGroundTruth g;
    g.variant = ExpertiseVariant::matrix;
    g.matrix_beta = std::move(beta);
    return g;
  }

  int n_annotators() const {
    return variant == ExpertiseVariant::scalar
               ? static_cast<int>(scalar_beta.size())
               : static_cast<int>(matrix_beta.rows);
  }
  int n_tasks() const {
    return variant == ExpertiseVariant::scalar
               ? 1
               : static_cast<int>(matrix_beta.cols);
  }

  double beta(int annotator, int task) const {
    if (variant == ExpertiseVariant::scalar) return scalar_beta[annotator];
    return matrix_beta(annotator, task);
  }
};

// Learnable raw expertise parameters omega; beta = sigma(omega).
// Flat storage so the optimizer and finite-difference checks can treat the
// whole block as one coordinate vector.
//   scalar:          [omega_0 .. omega_{N-1}]
//   matrix:          row-major N x M
//   state_dependent: N x d_embed skill vectors, then d_embed x d_in phi map
struct ExpertiseParams {
  ExpertiseVariant variant = ExpertiseVariant::scalar;
  int n_annotators = 0;
  int n_tasks = 1;
  int d_embed = 0;  // state_dependent only
  int d_in = 0;     // state_dependent only
  std::vector<double> raw;

  ExpertiseParams() = default;

  static ExpertiseParams make_scalar(int n_annotators, double init = 0.0) {
    require(n_annotators >= 1, "need at least one annotator");
    ExpertiseParams p;
    p.variant = ExpertiseVariant::scalar;
    p.n_annotators = n_annotators;
    p.raw.assign(n_annotators, init);
    p.check_finite();
    return p;
  }

  static ExpertiseParams make_matrix(int n_annotators, int n_tasks,
                                     double init = 0.0) {
    require(n_annotators >= 1 && n_tasks >= 1, "bad expertise matrix shape");
    ExpertiseParams p;
    p.variant = ExpertiseVariant::matrix;
    p.n_annotators = n_annotators;
    p.n_tasks = n_tasks;
    p.raw.assign(static_cast<std::size_t>(n_annotators) * n_tasks, init);
    p.check_finite();
    return p;
  }

  static ExpertiseParams make_state_dependent(int n_annotators, int d_embed,
                                              int d_in,
                                              std::vector<double> raw_values) {
    require(n_annotators >= 1 && d_embed >= 1 && d_in >= 1,
            "bad state_dependent shape");
    ExpertiseParams p;
    p.variant = ExpertiseVariant::state_dependent;
    p.n_annotators = n_annotators;
    p.d_embed = d_embed;
    p.d_in = d_in;
    const std::size_t want = static_cast<std::size_t>(n_annotators) * d_embed +
                             static_cast<std::size_t>(d_embed) * d_in;
    if (raw_values.empty()) raw_values.assign(want, 0.0);
    require(raw_values.size() == want, "state_dependent raw size mismatch");
    p.raw = std::move(raw_values);
    p.check_finite();
    return p;
  }

  std::size_t size() const { return raw.size(); }

  double omega_scalar(int annotator) const { return raw[annotator]; }
  double omega_matrix(int annotator, int task) const {
    return raw[static_cast<std::size_t>(annotator) * n_tasks + task];
  }
  std::size_t matrix_index(int annotator, int task) const {
    return static_cast<std::size_t>(annotator) * n_tasks + task;
  }
  std::span<const double> skill_vector(int annotator) const {
    return {raw.data() + static_cast<std::size_t>(annotator) * d_embed,
            static_cast<std::size_t>(d_embed)};
  }
  std::size_t phi_offset() const {
    return static_cast<std::size_t>(n_annotators) * d_embed;
  }
  // phi map, d_embed x d_in row-major
  std::span<const double> phi_params() const {
    return {raw.data() + phi_offset(),
            static_cast<std::size_t>(d_embed) * d_in};
  }

  void check_finite() const {
    if (!all_finite(raw))
      throw std::invalid_argument("ExpertiseParams: non-finite raw value");
  }

 private:
  static void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("ExpertiseParams: ") + msg);
  }
};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
  std::uint64_t seed = 0;
  int n_annotators = 3;
  Method method = Method::realm;
  ExpertiseVariant expertise_variant = ExpertiseVariant::scalar;
  NoiseType noise_type = NoiseType::uniform;
  double asymmetric_c = 4.0;
  bool asymmetric_alt_norm = false;  // adjacent mass c/(c+k-1) instead of c/(c+k-2)
  AnnotationMode annotation_mode = AnnotationMode::exclusive;

  double model_lr = 0.05;
  double expertise_lr = 1.0;
  int steps = 200;
  int batch_size = 8;
  int grad_accum = 8;
  LrSchedule lr_schedule = LrSchedule::cosine;

  // Dataset geometry (per task).
  std::vector<int> task_ks = {4};
  int vocab_size = 16;
  int d_in = 20;
  int n_train_per_task = 2000;
  int n_test_per_task = 1000;

  // Model architecture.
  Arch arch = Arch::linear;
  int hidden = 32;
  int d_embed = 4;  // state_dependent expertise embedding size

  // Debug: freeze omega at +20 so the mixture reduces to cross-entropy.
  bool freeze_expertise = false;

  int n_tasks() const { return static_cast<int>(task_ks.size()); }

  void validate() const {
    if (method == Method::realm && !(expertise_lr > 0.0) && !freeze_expertise)
      throw std::invalid_argument("RunConfig: realm requires expertise_lr > 0");
    if (batch_size < 1 || grad_accum < 1 || steps < 1)
      throw std::invalid_argument(
          "RunConfig: batch_size, grad_accum and steps must be >= 1");
    if (n_annotators < 1)
      throw std::invalid_argument("RunConfig: n_annotators must be >= 1");
    if (task_ks.empty())
      throw std::invalid_argument("RunConfig: need at least one task");
    int total_k = 0;
    for (int k : task_ks) {
      if (k < 2) throw std::invalid_argument("RunConfig: task k must be >= 2");
      total_k += k;
    }
    if (total_k > vocab_size)
      throw std::invalid_argument("RunConfig: answer tokens exceed vocab size");
    if (expertise_variant == ExpertiseVariant::scalar && n_tasks() != 1)
      throw std::invalid_argument(
          "RunConfig: scalar expertise requires a single task");
    if (expertise_variant == ExpertiseVariant::matrix && n_tasks() < 2)
      throw std::invalid_argument(
          "RunConfig: matrix expertise requires multiple tasks");
    if (asymmetric_c < 1.0)
      throw std::invalid_argument("RunConfig: asymmetric_c must be >= 1");
    if (d_in < 1 || n_train_per_task < 1 || n_test_per_task < 1)
      throw std::invalid_argument("RunConfig: bad dataset sizes");
    if (arch == Arch::mlp1 && hidden < 1)
      throw std::invalid_argument("RunConfig: hidden must be >= 1 for mlp1");
    if (expertise_variant == ExpertiseVariant::state_dependent && d_embed < 1)
      throw std::invalid_argument("RunConfig: d_embed must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Dataset container + validation
// ---------------------------------------------------------------------------

struct Dataset {
  int vocab_size = 16;
  int n_annotators = 0;
  AnnotationMode mode = AnnotationMode::exclusive;
  std::vector<TaskSpec> tasks;
  std::vector<Example> train_examples;
  std::vector<Example> test_examples;
  std::vector<AnnotationRecord> annotations;  // reference train examples

  const TaskSpec& task(int task_id) const { return tasks.at(task_id); }
};

struct ValidationReport {
  std::vector<std::string> violations;
  std::size_t n_tasks = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_annotations = 0;

  bool ok() const { return violations.empty(); }
};

// Report-style consistency check over a whole dataset: dangling ids,
// out-of-range labels, duplicate assignments under the annotation mode.
inline ValidationReport validate_dataset(const Dataset& ds) {
  ValidationReport rep;
  rep.n_tasks = ds.tasks.size();
  rep.n_train = ds.train_examples.size();
  rep.n_test = ds.test_examples.size();
  rep.n_annotations = ds.annotations.size();

  auto add = [&rep](std::string msg) { rep.violations.push_back(std::move(msg)); };

  for (std::size_t m = 0; m < ds.tasks.size(); ++m) {
    const TaskSpec& t = ds.tasks[m];
    if (t.task_id != static_cast<int>(m))
      add("task " + std::to_string(m) + ": non-dense task_id " +
          std::to_string(t.task_id));
    for (int tok : t.answer_token_ids)
      if (tok < 0 || tok >= ds.vocab_size)
        add("task " + std::to_string(m) + ": answer token " +
            std::to_string(tok) + " outside vocab");
  }

  std::set<int> train_ids;
  std::set<int> all_ids;
  auto check_examples = [&](const std::vector<Example>& exs, bool is_train) {
    for (const Example& e : exs) {
      if (!all_ids.insert(e.example_id).second)
        add("example " + std::to_string(e.example_id) + ": duplicate id");
      else if (is_train)
        train_ids.insert(e.example_id);
      if (e.task_id < 0 || e.task_id >= static_cast<int>(ds.tasks.size())) {
        add("example " + std::to_string(e.example_id) + ": dangling task id " +
            std::to_string(e.task_id));
        continue;
      }
      const TaskSpec& t = ds.tasks[e.task_id];
      if (e.true_label < 0 || e.true_label >= t.k)
        add("example " + std::to_string(e.example_id) +
            ": label out of range (" + std::to_string(e.true_label) + " >= " +
            std::to_string(t.k) + ")");
      if (!all_finite(e.features))
        add("example " + std::to_string(e.example_id) + ": non-finite feature");
    }
  };
  check_examples(ds.train_examples, true);
  check_examples(ds.test_examples, false);

  // Map train example ids to task k for annotation label checks.
  std::vector<std::pair<int, int>> id_to_k;  // (example_id, k)
  id_to_k.reserve(ds.train_examples.size());
  for (const Example& e : ds.train_examples)
    if (e.task_id >= 0 && e.task_id < static_cast<int>(ds.tasks.size()))
      id_to_k.emplace_back(e.example_id, ds.tasks[e.task_id].k);
  std::sort(id_to_k.begin(), id_to_k.end());

  std::set<std::pair<int, int>> seen_pairs;  // (example, annotator)
  std::set<int> annotated_examples;
  for (std::size_t a = 0; a < ds.annotations.size(); ++a) {
    const AnnotationRecord& r = ds.annotations[a];
    if (r.annotator_id < 0 || r.annotator_id >= ds.n_annotators)
      add("annotation " + std::to_string(a) + ": annotator " +
          std::to_string(r.annotator_id) + " out of range");
    if (train_ids.count(r.example_id) == 0) {
      add("annotation " + std::to_string(a) + ": dangling example id " +
          std::to_string(r.example_id));
      continue;
    }
    auto it = std::lower_bound(
        id_to_k.begin(), id_to_k.end(), std::make_pair(r.example_id, -1));
    if (it != id_to_k.end() && it->first == r.example_id) {
      if (r.observed_label < 0 || r.observed_label >= it->second)
        add("annotation " + std::to_string(a) + ": label out of range (" +
            std::to_string(r.observed_label) + " >= " +
            std::to_string(it->second) + ")");
    }
    if (!seen_pairs.insert({r.example_id, r.annotator_id}).second)
      add("annotation " + std::to_string(a) +
          ": duplicate (example, annotator) pair (" +
          std::to_string(r.example_id) + ", " +
          std::to_string(r.annotator_id) + ")");
    if (ds.mode == AnnotationMode::exclusive &&
        !annotated_examples.insert(r.example_id).second)
      add("annotation " + std::to_string(a) +
          ": duplicate assignment for example " +
          std::to_string(r.example_id) + " in exclusive mode");
  }

  return rep;
}

}  // namespace realm
