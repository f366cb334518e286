#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "realm/core.hpp"

namespace realm {

// ---------------------------------------------------------------------------
// Seed mixing: derive independent deterministic streams from one base seed.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

// ---------------------------------------------------------------------------
// Noise models
// ---------------------------------------------------------------------------

struct NoiseSpec {
  NoiseType type = NoiseType::uniform;
  double c = 4.0;             // asymmetric concentration, ignored otherwise
  bool alt_norm = false;      // asymmetric: adjacent mass c/(c+k-1) instead of
                              // weight-c-vs-1 normalization c/(c+k-2)

  NoiseSpec() = default;
  NoiseSpec(NoiseType t, double c_ = 4.0, bool alt = false)
      : type(t), c(c_), alt_norm(alt) {
    if (c < 1.0) throw std::invalid_argument("NoiseSpec: c must be >= 1");
  }
};

// Distribution over the k classes an annotator emits *given an error*.
// Entry at the true label is zero except nothing: systematic offsets that
// collide with the true class advance by one so an error is still an error.
inline std::vector<double> wrong_label_distribution(int true_label,
                                                    int annotator_id, int k,
                                                    const NoiseSpec& noise) {
  if (k < 2) throw std::invalid_argument("wrong_label_distribution: k < 2");
  if (true_label < 0 || true_label >= k)
    throw std::invalid_argument("wrong_label_distribution: bad true_label");
  std::vector<double> p(k, 0.0);
  switch (noise.type) {
    case NoiseType::uniform: {
      const double w = 1.0 / (k - 1);
      for (int y = 0; y < k; ++y)
        if (y != true_label) p[y] = w;
      break;
    }
    case NoiseType::asymmetric: {
      const int adjacent = (true_label + 1) % k;
      if (k == 2) {
        p[adjacent] = 1.0;  // only one wrong class
        break;
      }
      if (noise.alt_norm) {
        const double adj = noise.c / (noise.c + k - 1);
        const double rest = (1.0 - adj) / (k - 2);
        for (int y = 0; y < k; ++y)
          if (y != true_label) p[y] = (y == adjacent) ? adj : rest;
      } else {
        const double z = noise.c + (k - 2);
        for (int y = 0; y < k; ++y)
          if (y != true_label) p[y] = (y == adjacent ? noise.c : 1.0) / z;
      }
      break;
    }
    case NoiseType::systematic: {
      int y = (true_label + annotator_id + 1) % k;
      if (y == true_label) y = (true_label + annotator_id + 2) % k;
      p[y] = 1.0;
      break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Expertise ground-truth patterns
// ---------------------------------------------------------------------------

enum class DistPattern { dist1, dist2, dist3 };
enum class Setting { single, multi };

inline const char* to_string(DistPattern d) {
  switch (d) {
    case DistPattern::dist1: return "dist1";
    case DistPattern::dist2: return "dist2";
    case DistPattern::dist3: return "dist3";
  }
  return "?";
}

// Single-task patterns for N=3 are [0.9,0.1,0.1], [0.9,0.9,0.1], [0.9,0.5,0.1].
// For other N: dist1 keeps one reliable annotator, dist2 one unreliable, and
// dist3 spreads beta uniformly from 0.9 down to 0.1.
// Multi-task patterns need N == M: dist1 is diagonal 0.9 / off-diagonal 0.1,
// dist2 the inverse, dist3 is beta[i][j] = [0.9,0.5,0.1][(j-i) mod M] (M=3).
inline ExpertiseGroundTruth make_expertise_distribution(DistPattern pattern,
                                                        int n_annotators,
                                                        int n_tasks,
                                                        Setting setting) {
  if (n_annotators < 2)
    throw std::invalid_argument("make_expertise_distribution: N must be >= 2");
  if (setting == Setting::single) {
    if (n_tasks != 1)
      throw std::invalid_argument(
          "make_expertise_distribution: single setting requires one task");
    std::vector<double> beta(n_annotators);
    switch (pattern) {
      case DistPattern::dist1:
        for (int i = 0; i < n_annotators; ++i) beta[i] = (i == 0) ? 0.9 : 0.1;
        break;
      case DistPattern::dist2:
        for (int i = 0; i < n_annotators; ++i)
          beta[i] = (i == n_annotators - 1) ? 0.1 : 0.9;
        break;
      case DistPattern::dist3:
        for (int i = 0; i < n_annotators; ++i)
          beta[i] = 0.9 - 0.8 * i / (n_annotators - 1);
        break;
    }
    return ExpertiseGroundTruth::make_scalar(std::move(beta));
  }

  // multi
  if (n_tasks != n_annotators)
    throw std::invalid_argument(
        "make_expertise_distribution: multi patterns need N == M");
  Matrix beta(n_annotators, n_tasks);
  switch (pattern) {
    case DistPattern::dist1:
      for (int i = 0; i < n_annotators; ++i)
        for (int j = 0; j < n_tasks; ++j) beta(i, j) = (i == j) ? 0.9 : 0.1;
      break;
    case DistPattern::dist2:
      for (int i = 0; i < n_annotators; ++i)
        for (int j = 0; j < n_tasks; ++j) beta(i, j) = (i == j) ? 0.1 : 0.9;
      break;
    case DistPattern::dist3: {
      if (n_tasks != 3)
        throw std::invalid_argument(
            "make_expertise_distribution: multi dist3 is defined for M=3");
      const double cycle[3] = {0.9, 0.5, 0.1};
      for (int i = 0; i < n_annotators; ++i)
        for (int j = 0; j < n_tasks; ++j)
          beta(i, j) = cycle[((j - i) % n_tasks + n_tasks) % n_tasks];
      break;
    }
  }
  return ExpertiseGroundTruth::make_matrix(std::move(beta));
}

// ---------------------------------------------------------------------------
// Synthetic data generation
// ---------------------------------------------------------------------------

// Assigns ground-truth labels as the argmax of a per-task linear score,
// ties broken toward the lowest class index.
struct TeacherModel {
  int d_in = 0;
  std::vector<Matrix> task_weights;  // one k x d_in matrix per task

  int label(int task_id, std::span<const double> features) const {
    const Matrix& w = task_weights.at(task_id);
    int best = 0;
    double best_score = dot(w.row(0), features);
    for (std::size_t r = 1; r < w.rows; ++r) {
      const double s = dot(w.row(r), features);
      if (s > best_score) {
        best_score = s;
        best = static_cast<int>(r);
      }
    }
    return best;
  }
};

struct GeneratedData {
  std::vector<Example> train;
  std::vector<Example> test;
  TeacherModel teacher;
};

// Features are standard normal; labels come from a random linear teacher.
// Teachers whose label marginals put any class below 5% are redrawn.
inline GeneratedData generate_dataset(const std::vector<TaskSpec>& tasks,
                                      int n_train, int n_test, int d_in,
                                      std::uint64_t seed) {
  if (n_train < 1 || n_test < 1)
    throw std::invalid_argument("generate_dataset: need n_train, n_test >= 1");
  if (tasks.empty())
    throw std::invalid_argument("generate_dataset: no tasks");

  std::mt19937_64 rng(mix_seed(seed, 0x64617461ULL));  // feature/teacher stream
  std::normal_distribution<double> normal(0.0, 1.0);

  GeneratedData out;
  out.teacher.d_in = d_in;
  out.teacher.task_weights.resize(tasks.size());

  int next_id = 0;
  std::vector<std::vector<std::vector<double>>> feats_train(tasks.size());
  std::vector<std::vector<std::vector<double>>> feats_test(tasks.size());
  for (std::size_t m = 0; m < tasks.size(); ++m) {
    feats_train[m].resize(n_train);
    for (auto& f : feats_train[m]) {
      f.resize(d_in);
      for (double& x : f) x = normal(rng);
    }
    feats_test[m].resize(n_test);
    for (auto& f : feats_test[m]) {
      f.resize(d_in);
      for (double& x : f) x = normal(rng);
    }
  }

  const int kMaxTeacherRetries = 64;
  for (std::size_t m = 0; m < tasks.size(); ++m) {
    const int k = tasks[m].k;
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxTeacherRetries && !accepted;
         ++attempt) {
      Matrix w(k, d_in);
      for (double& x : w.data) x = normal(rng);
      // Class balance over both splits of this task.
      std::vector<int> counts(k, 0);
      TeacherModel probe;
      probe.d_in = d_in;
      probe.task_weights.resize(tasks.size());
      probe.task_weights[m] = w;
      for (const auto& f : feats_train[m]) ++counts[probe.label(m, f)];
      for (const auto& f : feats_test[m]) ++counts[probe.label(m, f)];
      const int total = n_train + n_test;
      bool balanced = true;
      for (int c : counts)
        if (c < 0.05 * total) balanced = false;
      if (balanced) {
        out.teacher.task_weights[m] = std::move(w);
        accepted = true;
      }
    }
    if (!accepted)
      throw std::runtime_error(
          "generate_dataset: no class-balanced teacher for task " +
          std::to_string(m) + " after " + std::to_string(kMaxTeacherRetries) +
          " attempts");
  }

  for (std::size_t m = 0; m < tasks.size(); ++m)
    for (auto& f : feats_train[m]) {
      const int y = out.teacher.label(static_cast<int>(m), f);
      out.train.emplace_back(next_id++, std::move(f), y, tasks[m]);
    }
  for (std::size_t m = 0; m < tasks.size(); ++m)
    for (auto& f : feats_test[m]) {
      const int y = out.teacher.label(static_cast<int>(m), f);
      out.test.emplace_back(next_id++, std::move(f), y, tasks[m]);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Annotation
// ---------------------------------------------------------------------------

namespace detail {

// Single-draw inverse-CDF sample so every wrong label costs exactly one
// uniform variate regardless of noise type.
inline int sample_index(const std::vector<double>& probs,
                        std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (std::size_t y = 0; y < probs.size(); ++y) {
    acc += probs[y];
    if (u < acc) return static_cast<int>(y);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace detail

// Emits the true label with probability beta(i, task), otherwise a draw from
// wrong_label_distribution. Exclusive mode assigns one annotator per example
// uniformly at random; shared mode has every annotator label every example.
inline std::vector<AnnotationRecord> annotate(
    const std::vector<Example>& examples, const std::vector<TaskSpec>& tasks,
    AnnotationMode mode, const ExpertiseGroundTruth& expertise,
    const NoiseSpec& noise, std::uint64_t seed) {
  const int n = expertise.n_annotators();
  for (const Example& e : examples) {
    if (expertise.variant == ExpertiseVariant::matrix &&
        e.task_id >= expertise.n_tasks())
      throw std::invalid_argument("annotate: expertise matrix too narrow");
    if (e.task_id >= static_cast<int>(tasks.size()))
      throw std::invalid_argument("annotate: dangling task id");
  }

  std::mt19937_64 rng(mix_seed(seed, 0x616e6e6fULL));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> pick_annotator(0, n - 1);

  std::vector<AnnotationRecord> out;
  out.reserve(examples.size() * (mode == AnnotationMode::shared ? n : 1));
  for (const Example& e : examples) {
    const TaskSpec& task = tasks[e.task_id];
    const int first = (mode == AnnotationMode::exclusive) ? pick_annotator(rng) : 0;
    const int count = (mode == AnnotationMode::exclusive) ? 1 : n;
    for (int j = 0; j < count; ++j) {
      const int annotator = (mode == AnnotationMode::exclusive) ? first : j;
      const double beta = expertise.beta(annotator, e.task_id);
      int label;
      if (unif(rng) < beta) {
        label = e.true_label;
      } else {
        const auto wrong =
            wrong_label_distribution(e.true_label, annotator, task.k, noise);
        label = detail::sample_index(wrong, rng);
      }
      out.emplace_back(e.example_id, annotator, label, task, n);
    }
  }
  return out;
}

}  // namespace realm
