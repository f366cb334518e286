#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "realm/core.hpp"
#include "realm/model.hpp"

namespace realm {

// Restricted-softmax argmax, ties to the lowest class index.
inline int predict(const ModelParams& m, std::span<const double> features,
                   const TaskSpec& task) {
  const RestrictedDistribution dist = forward(m, features, task);
  int best = 0;
  for (int j = 1; j < task.k; ++j)
    if (dist.probs[j] > dist.probs[best]) best = j;
  return best;
}

struct AccuracyReport {
  double overall = 0.0;
  std::vector<double> per_task;
};

inline AccuracyReport accuracy(const ModelParams& m,
                               const std::vector<Example>& examples,
                               const std::vector<TaskSpec>& tasks) {
  if (examples.empty()) throw std::invalid_argument("accuracy: no examples");
  std::vector<int> hit(tasks.size(), 0), total(tasks.size(), 0);
  for (const Example& e : examples) {
    if (e.task_id < 0 || e.task_id >= static_cast<int>(tasks.size()))
      throw std::invalid_argument("accuracy: dangling task id");
    ++total[e.task_id];
    if (predict(m, e.features, tasks[e.task_id]) == e.true_label)
      ++hit[e.task_id];
  }
  AccuracyReport rep;
  rep.per_task.resize(tasks.size());
  int hits = 0, n = 0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (total[t] == 0)
      throw std::invalid_argument("accuracy: empty slice for task " +
                                  std::to_string(t));
    rep.per_task[t] = static_cast<double>(hit[t]) / total[t];
    hits += hit[t];
    n += total[t];
  }
  rep.overall = static_cast<double>(hits) / n;
  return rep;
}

// ---------------------------------------------------------------------------
// Expertise recovery
// ---------------------------------------------------------------------------

struct ExpertiseRecoveryReport {
  std::vector<double> errors;  // |sigma(raw) - beta| per annotator or cell
  double max_error = 0.0;
  bool rank_agreement = false;
};

namespace detail {

// Every strictly ordered pair in truth must be ordered the same way in the
// estimates; ties in truth impose nothing.
inline bool strict_rank_agreement(const std::vector<double>& est,
                                  const std::vector<double>& truth) {
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t j = 0; j < truth.size(); ++j)
      if (truth[i] > truth[j] && !(est[i] > est[j])) return false;
  return true;
}

inline ExpertiseRecoveryReport recovery_from_values(
    const std::vector<double>& beta_hat, const std::vector<double>& beta) {
  if (beta_hat.size() != beta.size())
    throw std::invalid_argument("recovery_report: size mismatch");
  ExpertiseRecoveryReport rep;
  rep.errors.resize(beta.size());
  for (std::size_t i = 0; i < beta.size(); ++i) {
    rep.errors[i] = std::abs(beta_hat[i] - beta[i]);
    rep.max_error = std::max(rep.max_error, rep.errors[i]);
  }
  rep.rank_agreement = strict_rank_agreement(beta_hat, beta);
  return rep;
}

}  // namespace detail

// Estimated betas against simulator ground truth. Requires matching variants;
// for the state-dependent variant use the overload taking estimated values
// (e.g. mean expertise over a reference set).
inline ExpertiseRecoveryReport recovery_report(
    const ExpertiseParams& learned, const ExpertiseGroundTruth& truth) {
  if (learned.variant == ExpertiseVariant::state_dependent)
    throw std::invalid_argument(
        "recovery_report: state_dependent needs explicit estimates");
  if (learned.variant != truth.variant)
    throw std::invalid_argument("recovery_report: variant mismatch");
  if (learned.n_annotators != truth.n_annotators() ||
      learned.n_tasks != truth.n_tasks())
    throw std::invalid_argument("recovery_report: shape mismatch");
  std::vector<double> est, tr;
  if (learned.variant == ExpertiseVariant::scalar) {
    for (int i = 0; i < learned.n_annotators; ++i) {
      est.push_back(sigmoid(learned.omega_scalar(i)));
      tr.push_back(truth.beta(i, 0));
    }
  } else {
    for (int i = 0; i < learned.n_annotators; ++i)
      for (int t = 0; t < learned.n_tasks; ++t) {
        est.push_back(sigmoid(learned.omega_matrix(i, t)));
        tr.push_back(truth.beta(i, t));
      }
  }
  return detail::recovery_from_values(est, tr);
}

inline ExpertiseRecoveryReport recovery_report(
    const std::vector<double>& beta_hat, const ExpertiseGroundTruth& truth) {
  if (truth.variant != ExpertiseVariant::scalar)
    throw std::invalid_argument(
        "recovery_report: value overload expects scalar truth");
  return detail::recovery_from_values(beta_hat, truth.scalar_beta);
}

// ---------------------------------------------------------------------------
// Multi-seed aggregation
// ---------------------------------------------------------------------------

struct AggregateCell {
  double mean = 0.0;
  double stddev = 0.0;  // population (divide by n)
  int n_seeds = 0;
};

inline AggregateCell aggregate_values(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate_values: empty");
  AggregateCell cell;
  cell.n_seeds = static_cast<int>(values.size());
  for (double v : values) cell.mean += v;
  cell.mean /= cell.n_seeds;
  double ss = 0.0;
  for (double v : values) ss += (v - cell.mean) * (v - cell.mean);
  cell.stddev = std::sqrt(ss / cell.n_seeds);
  return cell;
}

struct RawResultRow {
  std::string group;
  Method method = Method::realm;
  std::uint64_t seed = 0;
  double value = 0.0;
};

struct GroupAggregate {
  std::string group;
  std::map<Method, AggregateCell> cells;
  std::optional<double> delta;  // mean(realm) - mean(noisy)
  std::string winner;           // set alongside delta
};

// Groups rows, aggregates per method in canonical seed order, and attaches
// the realm-minus-noisy delta. With require_delta set, every group must hold
// realm and noisy rows over identical seed sets; oracle stays optional.
inline std::vector<GroupAggregate> aggregate(
    const std::vector<RawResultRow>& rows, bool require_delta) {
  std::vector<std::string> order;
  std::map<std::string, std::map<Method, std::vector<std::pair<std::uint64_t, double>>>>
      by_group;
  for (const RawResultRow& r : rows) {
    if (by_group.find(r.group) == by_group.end()) order.push_back(r.group);
    by_group[r.group][r.method].emplace_back(r.seed, r.value);
  }

  std::vector<GroupAggregate> out;
  for (const std::string& g : order) {
    GroupAggregate agg;
    agg.group = g;
    auto& methods = by_group[g];
    for (auto& [method, pairs] : methods) {
      std::sort(pairs.begin(), pairs.end());
      for (std::size_t i = 1; i < pairs.size(); ++i)
        if (pairs[i].first == pairs[i - 1].first)
          throw std::invalid_argument("aggregate: duplicate seed " +
                                      std::to_string(pairs[i].first) +
                                      " in group '" + g + "'");
      std::vector<double> vals;
      vals.reserve(pairs.size());
      for (const auto& [seed, v] : pairs) vals.push_back(v);
      agg.cells[method] = aggregate_values(vals);
    }

    const bool has_realm = methods.count(Method::realm) > 0;
    const bool has_noisy = methods.count(Method::noisy) > 0;
    if (require_delta && (!has_realm || !has_noisy))
      throw std::invalid_argument("aggregate: group '" + g +
                                  "' lacks realm or noisy rows for delta");
    if (has_realm && has_noisy) {
      auto seeds_of = [&](Method m) {
        std::vector<std::uint64_t> s;
        for (const auto& [seed, v] : methods[m]) s.push_back(seed);
        return s;
      };
      if (require_delta && seeds_of(Method::realm) != seeds_of(Method::noisy))
        throw std::invalid_argument("aggregate: group '" + g +
                                    "' has mismatched realm/noisy seed sets");
      const double d =
          agg.cells[Method::realm].mean - agg.cells[Method::noisy].mean;
      agg.delta = d;
      agg.winner = d > 0 ? "realm" : (d < 0 ? "noisy" : "tie");
    }
    out.push_back(std::move(agg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Majority-vote diagnostic (shared mode only)
// ---------------------------------------------------------------------------

inline double majority_vote_diagnostic(const Dataset& ds) {
  if (ds.mode != AnnotationMode::shared)
    throw std::invalid_argument(
        "majority_vote_diagnostic: requires shared annotation mode");
  std::unordered_map<int, const Example*> by_id;
  for (const Example& e : ds.train_examples) by_id[e.example_id] = &e;
  std::unordered_map<int, std::vector<int>> votes;  // example -> label counts
  for (const AnnotationRecord& r : ds.annotations) {
    auto it = by_id.find(r.example_id);
    if (it == by_id.end())
      throw std::invalid_argument("majority_vote_diagnostic: dangling example");
    auto& v = votes[r.example_id];
    if (v.empty()) v.assign(ds.task(it->second->task_id).k, 0);
    ++v[r.observed_label];
  }
  if (votes.size() != ds.train_examples.size())
    throw std::invalid_argument(
        "majority_vote_diagnostic: unannotated training examples");
  int hits = 0;
  for (const Example& e : ds.train_examples) {
    const auto& v = votes[e.example_id];
    int n_votes = 0;
    for (int c : v) n_votes += c;
    if (n_votes != ds.n_annotators)
      throw std::invalid_argument(
          "majority_vote_diagnostic: incomplete annotator coverage");
    int best = 0;
    for (std::size_t c = 1; c < v.size(); ++c)
      if (v[c] > v[best]) best = static_cast<int>(c);
    if (best == e.true_label) ++hits;
  }
  return static_cast<double>(hits) / ds.train_examples.size();
}

}  // namespace realm
