#pragma once

#include <atomic>
#include <bit>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "realm/core.hpp"
#include "realm/eval.hpp"
#include "realm/model.hpp"
#include "realm/objective.hpp"
#include "realm/optim.hpp"
#include "realm/simulate.hpp"

namespace realm {

struct Snapshot {
  int step = 0;  // optimizer steps completed
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> per_task_accuracy;
  std::vector<double> expertise;  // current sigma values; empty for CE methods
};

struct TrainingTrace {
  std::vector<Snapshot> snapshots;
};

struct TrainResult {
  ModelParams model;
  ExpertiseParams expertise;  // zero-sized for CE methods
  TrainingTrace trace;
};

// ---------------------------------------------------------------------------
// Dataset construction for one run
// ---------------------------------------------------------------------------

// The data seed folds in every axis that shapes the data, and nothing else:
// method and learning rates stay out so all methods train on identical
// datasets for a given seed (paired comparisons).
inline std::uint64_t dataset_seed(const RunConfig& cfg, DistPattern pattern) {
  std::uint64_t h = splitmix64(cfg.seed + 0x64736565ULL);
  auto fold = [&h](std::uint64_t v) { h = mix_seed(h, v); };
  fold(static_cast<std::uint64_t>(cfg.n_annotators));
  fold(static_cast<std::uint64_t>(pattern));
  fold(static_cast<std::uint64_t>(cfg.noise_type));
  fold(std::bit_cast<std::uint64_t>(cfg.asymmetric_c));
  fold(cfg.asymmetric_alt_norm ? 1 : 0);
  fold(static_cast<std::uint64_t>(cfg.annotation_mode));
  for (int k : cfg.task_ks) fold(static_cast<std::uint64_t>(k));
  fold(static_cast<std::uint64_t>(cfg.vocab_size));
  fold(static_cast<std::uint64_t>(cfg.d_in));
  fold(static_cast<std::uint64_t>(cfg.n_train_per_task));
  fold(static_cast<std::uint64_t>(cfg.n_test_per_task));
  return h;
}

struct SimulatedRun {
  Dataset dataset;
  ExpertiseGroundTruth truth;
};

inline SimulatedRun build_dataset(const RunConfig& cfg, DistPattern pattern) {
  cfg.validate();
  auto tasks = make_task_specs(cfg.task_ks, cfg.vocab_size);
  const Setting setting =
      cfg.n_tasks() == 1 ? Setting::single : Setting::multi;
  auto truth = make_expertise_distribution(pattern, cfg.n_annotators,
                                           cfg.n_tasks(), setting);
  const std::uint64_t dseed = dataset_seed(cfg, pattern);
  auto gen = generate_dataset(tasks, cfg.n_train_per_task, cfg.n_test_per_task,
                              cfg.d_in, dseed);
  const NoiseSpec noise(cfg.noise_type, cfg.asymmetric_c,
                        cfg.asymmetric_alt_norm);
  auto annotations = annotate(gen.train, tasks, cfg.annotation_mode, truth,
                              noise, dseed);
  SimulatedRun out;
  out.dataset.vocab_size = cfg.vocab_size;
  out.dataset.n_annotators = cfg.n_annotators;
  out.dataset.mode = cfg.annotation_mode;
  out.dataset.tasks = std::move(tasks);
  out.dataset.train_examples = std::move(gen.train);
  out.dataset.test_examples = std::move(gen.test);
  out.dataset.annotations = std::move(annotations);
  out.truth = std::move(truth);
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

struct CombinedLoss {
  double loss = 0.0;
  std::vector<double> grad_model;
  std::vector<double> grad_expertise;
};

// Record-weighted combination of per-task group losses, so the result is the
// plain mean over every record regardless of task composition.
inline CombinedLoss eval_groups(const std::vector<LossBatch>& groups,
                                const ModelParams& model,
                                const ExpertiseParams& expertise,
                                const std::vector<TaskSpec>& tasks,
                                Method method) {
  CombinedLoss out;
  out.grad_model.assign(model.size(), 0.0);
  out.grad_expertise.assign(expertise.size(), 0.0);
  std::size_t total = 0;
  for (const LossBatch& g : groups) total += g.records.size();
  if (total == 0) throw std::invalid_argument("eval_groups: no records");
  for (const LossBatch& g : groups) {
    if (g.records.empty()) continue;
    const TaskSpec& task = tasks.at(g.task_id);
    const double w = static_cast<double>(g.records.size()) / total;
    LossOutput o;
    switch (method) {
      case Method::realm:
        o = realm_loss(g, model, expertise, task);
        break;
      case Method::noisy:
        o = baseline_ce(g, model, task, LabelSource::observed);
        break;
      case Method::oracle:
        o = baseline_ce(g, model, task, LabelSource::true_label);
        break;
    }
    out.loss += w * o.loss;
    for (std::size_t i = 0; i < o.grad_model.size(); ++i)
      out.grad_model[i] += w * o.grad_model[i];
    for (std::size_t i = 0; i < o.grad_expertise.size(); ++i)
      out.grad_expertise[i] += w * o.grad_expertise[i];
  }
  return out;
}

inline std::vector<double> expertise_sigmas(const ExpertiseParams& e,
                                            const Dataset& ds) {
  std::vector<double> out;
  switch (e.variant) {
    case ExpertiseVariant::scalar:
    case ExpertiseVariant::matrix:
      out.reserve(e.raw.size());
      for (double w : e.raw) out.push_back(sigmoid(w));
      break;
    case ExpertiseVariant::state_dependent: {
      // No single sigma per annotator exists; report the mean expertise over
      // the training inputs.
      out.assign(e.n_annotators, 0.0);
      for (const Example& ex : ds.train_examples) {
        const auto rho = state_dependent_expertise(e, ex.features);
        for (int i = 0; i < e.n_annotators; ++i) out[i] += rho[i];
      }
      for (double& v : out) v /= ds.train_examples.size();
      break;
    }
  }
  return out;
}

}  // namespace detail

// Runs config.steps AdamW steps; every step accumulates grad_accum
// micro-batches of batch_size records drawn with replacement from the
// training annotations, each micro-batch split into per-task groups.
// The optional ground truth is a shape cross-check only; training never
// reads it.
inline TrainResult train(const RunConfig& cfg, const Dataset& ds,
                         const ExpertiseGroundTruth* truth_shape = nullptr) {
  cfg.validate();
  {
    const ValidationReport rep = validate_dataset(ds);
    if (!rep.ok())
      throw std::invalid_argument("train: invalid dataset: " +
                                  rep.violations.front());
  }
  if (ds.n_annotators != cfg.n_annotators)
    throw std::invalid_argument("train: annotator count mismatch");
  if (static_cast<int>(ds.tasks.size()) != cfg.n_tasks())
    throw std::invalid_argument("train: task count mismatch");
  for (int m = 0; m < cfg.n_tasks(); ++m)
    if (ds.tasks[m].k != cfg.task_ks[m])
      throw std::invalid_argument("train: task k mismatch");
  if (ds.vocab_size != cfg.vocab_size)
    throw std::invalid_argument("train: vocab size mismatch");
  if (ds.mode != cfg.annotation_mode)
    throw std::invalid_argument("train: annotation mode mismatch");
  if (ds.annotations.empty())
    throw std::invalid_argument("train: no annotations");
  if (truth_shape != nullptr) {
    if (truth_shape->n_annotators() != cfg.n_annotators)
      throw std::invalid_argument("train: ground-truth annotator mismatch");
    if (truth_shape->variant == ExpertiseVariant::matrix &&
        truth_shape->n_tasks() != cfg.n_tasks())
      throw std::invalid_argument("train: ground-truth task mismatch");
  }

  TrainResult result;
  result.model = ModelParams::make(cfg.arch, cfg.d_in, cfg.vocab_size,
                                   cfg.hidden, mix_seed(cfg.seed, 0x6d6f646cULL));
  if (cfg.method == Method::realm) {
    const double init = cfg.freeze_expertise ? 20.0 : 0.0;
    switch (cfg.expertise_variant) {
      case ExpertiseVariant::scalar:
        result.expertise = ExpertiseParams::make_scalar(cfg.n_annotators, init);
        break;
      case ExpertiseVariant::matrix:
        result.expertise =
            ExpertiseParams::make_matrix(cfg.n_annotators, cfg.n_tasks(), init);
        break;
      case ExpertiseVariant::state_dependent: {
        if (cfg.freeze_expertise)
          throw std::invalid_argument(
              "train: freeze_expertise needs an explicit per-annotator omega "
              "(scalar or matrix variant)");
        // Skill vectors start at zero so every expertise value is exactly
        // 0.5; a random phi map breaks the symmetry for their gradients.
        std::vector<double> raw(
            static_cast<std::size_t>(cfg.n_annotators) * cfg.d_embed +
                static_cast<std::size_t>(cfg.d_embed) * cfg.d_in,
            0.0);
        std::mt19937_64 rng(mix_seed(cfg.seed, 0x70686969ULL));
        std::normal_distribution<double> normal(0.0,
                                                1.0 / std::sqrt(cfg.d_in));
        for (std::size_t i =
                 static_cast<std::size_t>(cfg.n_annotators) * cfg.d_embed;
             i < raw.size(); ++i)
          raw[i] = normal(rng);
        result.expertise = ExpertiseParams::make_state_dependent(
            cfg.n_annotators, cfg.d_embed, cfg.d_in, std::move(raw));
        break;
      }
    }
  }

  std::unordered_map<int, const Example*> train_by_id;
  train_by_id.reserve(ds.train_examples.size());
  for (const Example& e : ds.train_examples) train_by_id[e.example_id] = &e;

  std::vector<BatchRecord> pool;
  pool.reserve(ds.annotations.size());
  for (const AnnotationRecord& r : ds.annotations) {
    auto it = train_by_id.find(r.example_id);
    if (it == train_by_id.end())
      throw std::invalid_argument("train: annotation for unknown example");
    pool.push_back({it->second, r.annotator_id, r.observed_label});
  }

  // All records grouped by task, reused for full-train-set loss snapshots.
  std::vector<LossBatch> full_groups(ds.tasks.size());
  for (std::size_t m = 0; m < ds.tasks.size(); ++m)
    full_groups[m].task_id = static_cast<int>(m);
  for (const BatchRecord& r : pool)
    full_groups[r.example->task_id].records.push_back(r);

  AdamW opt = AdamW::make(result.model.size(), result.expertise.size(),
                          cfg.model_lr, cfg.expertise_lr);
  std::mt19937_64 sampler(mix_seed(cfg.seed, 0x736d706cULL));
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);

  auto take_snapshot = [&](int step_done) {
    Snapshot snap;
    snap.step = step_done;
    snap.train_loss = detail::eval_groups(full_groups, result.model,
                                          result.expertise, ds.tasks,
                                          cfg.method)
                          .loss;
    const AccuracyReport acc =
        accuracy(result.model, ds.test_examples, ds.tasks);
    snap.test_accuracy = acc.overall;
    snap.per_task_accuracy = acc.per_task;
    if (cfg.method == Method::realm)
      snap.expertise = detail::expertise_sigmas(result.expertise, ds);
    result.trace.snapshots.push_back(std::move(snap));
  };

  take_snapshot(0);
  std::vector<LossBatch> groups;
  for (int s = 0; s < cfg.steps; ++s) {
    GradAccumulator acc_model(result.model.size());
    GradAccumulator acc_expertise(result.expertise.size());
    for (int micro = 0; micro < cfg.grad_accum; ++micro) {
      std::map<int, std::size_t> group_of;  // task -> index in groups
      groups.clear();
      for (int b = 0; b < cfg.batch_size; ++b) {
        const BatchRecord& r = pool[pick(sampler)];
        auto [it, inserted] =
            group_of.try_emplace(r.example->task_id, groups.size());
        if (inserted) {
          groups.emplace_back();
          groups.back().task_id = r.example->task_id;
        }
        groups[it->second].records.push_back(r);
      }
      const detail::CombinedLoss c = detail::eval_groups(
          groups, result.model, result.expertise, ds.tasks, cfg.method);
      acc_model.add(c.grad_model);
      acc_expertise.add(c.grad_expertise);
    }
    std::vector<double> gm = acc_model.mean();
    std::vector<double> ge = acc_expertise.mean();
    if (cfg.freeze_expertise) std::fill(ge.begin(), ge.end(), 0.0);
    opt.step(result.model.data, gm, result.expertise.raw, ge, s, cfg.steps);
    const int done = s + 1;
    if (done % 10 == 0 || done == cfg.steps) take_snapshot(done);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Grid runner
// ---------------------------------------------------------------------------

struct GridJob {
  RunConfig config;     // seed is overwritten per grid seed
  DistPattern pattern = DistPattern::dist1;
  std::string group;    // reporting key, e.g. "dist1/uniform"
};

struct GridRowResult {
  GridJob job;
  std::uint64_t seed = 0;
  double final_accuracy = 0.0;
  std::vector<double> per_task_accuracy;
  double final_train_loss = 0.0;
  std::vector<double> final_expertise;  // sigma values; empty for CE methods
  bool has_recovery = false;
  ExpertiseRecoveryReport recovery;
  TrainingTrace trace;
  ModelParams final_model;
  ExpertiseParams final_expertise_params;  // zero-sized for CE methods
};

// Supplies the dataset for one run; the default generates it in process,
// the CLI substitutes a loader when datasets were materialized to disk.
using DatasetProvider =
    std::function<SimulatedRun(const RunConfig&, DistPattern)>;

inline GridRowResult run_single(const GridJob& job, std::uint64_t seed,
                                const DatasetProvider& provider = {}) {
  GridRowResult row;
  row.job = job;
  row.seed = seed;
  RunConfig cfg = job.config;
  cfg.seed = seed;
  const SimulatedRun sim =
      provider ? provider(cfg, job.pattern) : build_dataset(cfg, job.pattern);
  TrainResult tr = train(cfg, sim.dataset, &sim.truth);
  const Snapshot& last = tr.trace.snapshots.back();
  row.final_accuracy = last.test_accuracy;
  row.per_task_accuracy = last.per_task_accuracy;
  row.final_train_loss = last.train_loss;
  row.final_expertise = last.expertise;
  if (cfg.method == Method::realm && !cfg.freeze_expertise) {
    if (cfg.expertise_variant == ExpertiseVariant::state_dependent) {
      row.recovery = recovery_report(last.expertise, sim.truth);
    } else {
      row.recovery = recovery_report(tr.expertise, sim.truth);
    }
    row.has_recovery = true;
  }
  row.trace = std::move(tr.trace);
  row.final_model = std::move(tr.model);
  row.final_expertise_params = std::move(tr.expertise);
  return row;
}

// Seeds 0..n_seeds-1 for every job; runs are independent, so up to n_parallel
// of them execute concurrently. Results come back in (job, seed) order no
// matter which worker finished first.
inline std::vector<GridRowResult> run_grid(const std::vector<GridJob>& jobs,
                                           int n_seeds, int n_parallel = 1,
                                           const DatasetProvider& provider = {}) {
  if (n_seeds < 1) throw std::invalid_argument("run_grid: n_seeds < 1");
  if (n_parallel < 1) throw std::invalid_argument("run_grid: n_parallel < 1");
  struct Cell {
    std::size_t job_index;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t j = 0; j < jobs.size(); ++j)
    for (int s = 0; s < n_seeds; ++s)
      cells.push_back({j, static_cast<std::uint64_t>(s)});

  std::vector<GridRowResult> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        results[i] =
            run_single(jobs[cells[i].job_index], cells[i].seed, provider);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(n_parallel),
                            cells.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        throw std::runtime_error(
            "run_grid: job '" + jobs[cells[i].job_index].group + "' method " +
            to_string(jobs[cells[i].job_index].config.method) + " seed " +
            std::to_string(cells[i].seed) + " failed: " + e.what());
      }
    }
  }
  return results;
}

}  // namespace realm
