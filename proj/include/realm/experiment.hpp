#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "realm/config.hpp"
#include "realm/dataset_io.hpp"
#include "realm/eval.hpp"
#include "realm/model.hpp"
#include "realm/trainer.hpp"

namespace realm {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Small utilities
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stable per-run directory name; idempotent re-runs land in the same place.
inline std::string run_dir_name(const std::string& group, Method method,
                                std::uint64_t seed) {
  const std::string key =
      group + "|" + to_string(method) + "|" + std::to_string(seed);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(key)));
  return buf;
}

inline void write_text_file(const fs::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + p.string());
  os << content;
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + p.string());
}

inline std::string read_text_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

namespace detail {

inline std::string fmt6(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

inline std::string join_values(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? ";" : "") + fmt_double(v[i]);
  return s;
}

inline std::vector<double> parse_values(const std::string& s, int line_no) {
  std::vector<double> out;
  if (s.empty()) return out;
  for (const std::string& part : split(s, ';'))
    out.push_back(parse_double(part, line_no));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Expertise parameter serialization
// ---------------------------------------------------------------------------

inline void write_expertise(const ExpertiseParams& e, std::ostream& os) {
  os << "realm-expertise v1\n";
  os << "[expertise] variant=" << to_string(e.variant)
     << " n=" << e.n_annotators << " m=" << e.n_tasks
     << " d_embed=" << e.d_embed << " d_in=" << e.d_in
     << " count=" << e.raw.size() << "\n";
  for (std::size_t i = 0; i < e.raw.size(); ++i) {
    os << detail::fmt_double(e.raw[i]);
    os << ((i % 8 == 7 || i + 1 == e.raw.size()) ? '\n' : ' ');
  }
}

inline ExpertiseParams read_expertise(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "realm-expertise v1")
    throw std::runtime_error("read_expertise: bad magic");
  if (!std::getline(is, line))
    throw std::runtime_error("read_expertise: missing header");
  const auto fields = detail::split(line, ' ');
  const std::string variant = detail::header_attr(fields, "variant", 2);
  const int n = detail::parse_int(detail::header_attr(fields, "n", 2), 2);
  const int m = detail::parse_int(detail::header_attr(fields, "m", 2), 2);
  const int d_embed =
      detail::parse_int(detail::header_attr(fields, "d_embed", 2), 2);
  const int d_in = detail::parse_int(detail::header_attr(fields, "d_in", 2), 2);
  const int count =
      detail::parse_int(detail::header_attr(fields, "count", 2), 2);
  std::vector<double> raw(count);
  for (int i = 0; i < count; ++i)
    if (!(is >> raw[i]))
      throw std::runtime_error("read_expertise: truncated value block");
  ExpertiseParams e;
  if (variant == "scalar") {
    e = ExpertiseParams::make_scalar(n);
  } else if (variant == "matrix") {
    e = ExpertiseParams::make_matrix(n, m);
  } else if (variant == "state_dependent") {
    e = ExpertiseParams::make_state_dependent(n, d_embed, d_in, {});
  } else {
    throw std::runtime_error("read_expertise: unknown variant '" + variant +
                             "'");
  }
  if (e.raw.size() != raw.size())
    throw std::runtime_error("read_expertise: count does not match shape");
  e.raw = std::move(raw);
  e.check_finite();
  return e;
}

// ---------------------------------------------------------------------------
// Raw results CSV (one row per run, full precision)
// ---------------------------------------------------------------------------

struct RunRecord {
  std::string group;
  std::string distribution;
  std::string noise;
  int n_annotators = 0;
  double expertise_lr = 0.0;
  Method method = Method::realm;
  std::uint64_t seed = 0;
  double final_accuracy = 0.0;
  double final_train_loss = 0.0;
  std::vector<double> per_task_accuracy;
  bool has_recovery = false;
  double recovery_max_error = 0.0;
  bool rank_agreement = false;
  std::vector<double> expertise_sigmas;
  std::string run_dir;
};

inline constexpr const char* kRawResultsHeader =
    "group,distribution,noise,n_annotators,expertise_lr,method,seed,"
    "final_accuracy,final_train_loss,per_task_accuracy,recovery_max_error,"
    "rank_agreement,expertise_sigmas,run_dir";

inline std::string raw_results_to_csv(const std::vector<RunRecord>& rows) {
  std::string out = std::string(kRawResultsHeader) + "\n";
  for (const RunRecord& r : rows) {
    out += r.group + "," + r.distribution + "," + r.noise + "," +
           std::to_string(r.n_annotators) + "," +
           detail::fmt_double(r.expertise_lr) + "," + to_string(r.method) +
           "," + std::to_string(r.seed) + "," +
           detail::fmt_double(r.final_accuracy) + "," +
           detail::fmt_double(r.final_train_loss) + "," +
           detail::join_values(r.per_task_accuracy) + ",";
    if (r.has_recovery)
      out += detail::fmt_double(r.recovery_max_error) + "," +
             (r.rank_agreement ? "1" : "0");
    else
      out += ",";
    out += "," + detail::join_values(r.expertise_sigmas) + "," + r.run_dir +
           "\n";
  }
  return out;
}

inline std::vector<RunRecord> raw_results_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  if (!std::getline(is, line) || line != kRawResultsHeader)
    throw std::runtime_error("raw results: unexpected header");
  ++line_no;
  std::vector<RunRecord> rows;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 14)
      throw std::runtime_error("raw results line " + std::to_string(line_no) +
                               ": expected 14 fields, got " +
                               std::to_string(f.size()));
    RunRecord r;
    r.group = f[0];
    r.distribution = f[1];
    r.noise = f[2];
    r.n_annotators = static_cast<int>(detail::parse_int(f[3], line_no));
    r.expertise_lr = detail::parse_double(f[4], line_no);
    r.method = detail::parse_method(f[5]);
    r.seed = static_cast<std::uint64_t>(detail::parse_int(f[6], line_no));
    r.final_accuracy = detail::parse_double(f[7], line_no);
    r.final_train_loss = detail::parse_double(f[8], line_no);
    r.per_task_accuracy = detail::parse_values(f[9], line_no);
    r.has_recovery = !f[10].empty();
    if (r.has_recovery) {
      r.recovery_max_error = detail::parse_double(f[10], line_no);
      r.rank_agreement = f[11] == "1";
    }
    r.expertise_sigmas = detail::parse_values(f[12], line_no);
    r.run_dir = f[13];
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Per-run trace CSV
// ---------------------------------------------------------------------------

inline std::vector<std::string> trace_beta_headers(
    const ExpertiseParams& e) {
  std::vector<std::string> h;
  switch (e.variant) {
    case ExpertiseVariant::scalar:
      for (int i = 0; i < e.n_annotators; ++i)
        h.push_back("beta" + std::to_string(i));
      break;
    case ExpertiseVariant::matrix:
      for (int i = 0; i < e.n_annotators; ++i)
        for (int t = 0; t < e.n_tasks; ++t)
          h.push_back("beta" + std::to_string(i) + "_t" + std::to_string(t));
      break;
    case ExpertiseVariant::state_dependent:
      for (int i = 0; i < e.n_annotators; ++i)
        h.push_back("rho_mean" + std::to_string(i));
      break;
  }
  return h;
}

inline std::string trace_to_csv(const TrainingTrace& trace, int n_tasks,
                                const std::vector<std::string>& beta_headers) {
  std::string out = "step,train_loss,test_accuracy";
  for (int t = 0; t < n_tasks; ++t) out += ",acc_task" + std::to_string(t);
  for (const std::string& h : beta_headers) out += "," + h;
  out += "\n";
  for (const Snapshot& s : trace.snapshots) {
    out += std::to_string(s.step) + "," + detail::fmt_double(s.train_loss) +
           "," + detail::fmt_double(s.test_accuracy);
    for (double a : s.per_task_accuracy) out += "," + detail::fmt_double(a);
    for (double b : s.expertise) out += "," + detail::fmt_double(b);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset file naming (cmd_simulate output, cmd_train load_dir input)
// ---------------------------------------------------------------------------

inline std::string dataset_file_name(DistPattern pattern, NoiseType noise,
                                     int n_annotators, std::uint64_t seed) {
  return std::string("ds-") + to_string(pattern) + "-" + to_string(noise) +
         "-n" + std::to_string(n_annotators) + "-seed" + std::to_string(seed) +
         ".txt";
}

inline RunConfig make_run_config(const ExperimentConfig& cfg,
                                 DistPattern /*pattern*/, NoiseType noise,
                                 int n_annotators, double expertise_lr,
                                 Method method) {
  RunConfig rc;
  rc.seed = 0;
  rc.n_annotators = n_annotators;
  rc.method = method;
  rc.expertise_variant = cfg.expertise_variant;
  rc.noise_type = noise;
  rc.asymmetric_c = cfg.asymmetric_c;
  rc.asymmetric_alt_norm = cfg.asymmetric_alt_norm;
  rc.annotation_mode = cfg.mode;
  rc.model_lr = cfg.model_lr;
  rc.expertise_lr = expertise_lr;
  rc.steps = cfg.steps;
  rc.batch_size = cfg.batch_size;
  rc.grad_accum = cfg.grad_accum;
  rc.lr_schedule = cfg.lr_schedule;
  rc.task_ks = cfg.task_ks;
  rc.vocab_size = cfg.vocab_size;
  rc.d_in = cfg.d_in;
  rc.n_train_per_task = cfg.n_train_per_task;
  rc.n_test_per_task = cfg.n_test_per_task;
  rc.arch = cfg.arch;
  rc.hidden = cfg.hidden;
  rc.d_embed = cfg.d_embed;
  rc.freeze_expertise = cfg.freeze_expertise;
  rc.validate();
  return rc;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

// Writes every dataset the grid needs plus a manifest with the seed, noise
// spec, and ground-truth expertise of each file.
inline void cmd_simulate(const ExperimentConfig& cfg, const fs::path& out) {
  fs::create_directories(out / "datasets");
  nlohmann::json manifest;
  manifest["format"] = "realm-datasets v1";
  nlohmann::json entries = nlohmann::json::array();
  for (DistPattern pattern : cfg.distributions)
    for (NoiseType noise : cfg.noise_types)
      for (int n : cfg.n_annotators_values)
        for (int seed = 0; seed < cfg.seeds; ++seed) {
          RunConfig rc = make_run_config(cfg, pattern, noise, n,
                                         cfg.expertise_lrs.front(),
                                         cfg.methods.front());
          rc.seed = static_cast<std::uint64_t>(seed);
          const SimulatedRun sim = build_dataset(rc, pattern);
          const std::string fname =
              dataset_file_name(pattern, noise, n, rc.seed);
          write_text_file(out / "datasets" / fname,
                          dataset_to_string(sim.dataset));
          nlohmann::json entry;
          entry["file"] = fname;
          entry["distribution"] = to_string(pattern);
          entry["noise"] = to_string(noise);
          entry["asymmetric_c"] = cfg.asymmetric_c;
          entry["asymmetric_alt_norm"] = cfg.asymmetric_alt_norm;
          entry["n_annotators"] = n;
          entry["mode"] = to_string(cfg.mode);
          entry["seed"] = seed;
          entry["n_train"] = sim.dataset.train_examples.size();
          entry["n_test"] = sim.dataset.test_examples.size();
          entry["n_annotations"] = sim.dataset.annotations.size();
          if (sim.truth.variant == ExpertiseVariant::scalar) {
            entry["beta"] = sim.truth.scalar_beta;
          } else {
            nlohmann::json beta = nlohmann::json::array();
            for (std::size_t i = 0; i < sim.truth.matrix_beta.rows; ++i) {
              nlohmann::json row = nlohmann::json::array();
              for (std::size_t j = 0; j < sim.truth.matrix_beta.cols; ++j)
                row.push_back(sim.truth.matrix_beta(i, j));
              beta.push_back(row);
            }
            entry["beta"] = beta;
          }
          entries.push_back(std::move(entry));
        }
  manifest["entries"] = std::move(entries);
  write_text_file(out / "datasets" / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "simulate: wrote " << manifest["entries"].size()
            << " dataset(s) under " << (out / "datasets").string() << "\n";
}

// Runs the whole grid and writes per-run artifacts plus the raw results CSV.
inline void cmd_train(const ExperimentConfig& cfg, const fs::path& out,
                      int n_parallel) {
  const std::vector<GridJob> jobs = expand_grid(cfg);
  DatasetProvider provider;
  if (!cfg.load_dir.empty()) {
    fs::path dir(cfg.load_dir);
    if (dir.is_relative()) dir = out / dir;
    provider = [dir](const RunConfig& rc, DistPattern pattern) {
      const fs::path file =
          dir / dataset_file_name(pattern, rc.noise_type, rc.n_annotators,
                                  rc.seed);
      if (!fs::exists(file))
        throw std::runtime_error("dataset file missing: " + file.string());
      SimulatedRun sim;
      sim.dataset = dataset_from_string(read_text_file(file));
      sim.truth = make_expertise_distribution(
          pattern, rc.n_annotators, rc.n_tasks(),
          rc.n_tasks() == 1 ? Setting::single : Setting::multi);
      return sim;
    };
  }

  const std::vector<GridRowResult> results =
      run_grid(jobs, cfg.seeds, n_parallel, provider);

  fs::create_directories(out / "runs");
  std::vector<RunRecord> rows;
  nlohmann::json manifest;
  manifest["format"] = "realm-run-manifest v1";
  manifest["config_file"] = "config.ini";
  nlohmann::json run_entries = nlohmann::json::array();

  for (const GridRowResult& res : results) {
    const RunConfig& rc = res.job.config;
    const std::string dir_name =
        run_dir_name(res.job.group, rc.method, res.seed);
    const fs::path run_dir = out / "runs" / dir_name;
    fs::create_directories(run_dir);

    write_text_file(run_dir / "trace.csv",
                    trace_to_csv(res.trace, rc.n_tasks(),
                                 trace_beta_headers(res.final_expertise_params)));
    write_text_file(run_dir / "model.txt", model_to_string(res.final_model));
    if (rc.method == Method::realm) {
      std::ostringstream os;
      write_expertise(res.final_expertise_params, os);
      write_text_file(run_dir / "expertise.txt", os.str());
    }
    if (res.has_recovery) {
      std::string rec = "index,abs_error\n";
      for (std::size_t i = 0; i < res.recovery.errors.size(); ++i)
        rec += std::to_string(i) + "," +
               detail::fmt_double(res.recovery.errors[i]) + "\n";
      write_text_file(run_dir / "recovery.csv", rec);
    }

    RunRecord row;
    row.group = res.job.group;
    row.distribution = to_string(res.job.pattern);
    row.noise = to_string(rc.noise_type);
    row.n_annotators = rc.n_annotators;
    row.expertise_lr = rc.expertise_lr;
    row.method = rc.method;
    row.seed = res.seed;
    row.final_accuracy = res.final_accuracy;
    row.final_train_loss = res.final_train_loss;
    row.per_task_accuracy = res.per_task_accuracy;
    row.has_recovery = res.has_recovery;
    if (res.has_recovery) {
      row.recovery_max_error = res.recovery.max_error;
      row.rank_agreement = res.recovery.rank_agreement;
    }
    row.expertise_sigmas = res.final_expertise;
    row.run_dir = "runs/" + dir_name;
    rows.push_back(row);

    nlohmann::json entry;
    entry["group"] = res.job.group;
    entry["distribution"] = to_string(res.job.pattern);
    entry["noise"] = to_string(rc.noise_type);
    entry["n_annotators"] = rc.n_annotators;
    entry["expertise_lr"] = rc.expertise_lr;
    entry["method"] = to_string(rc.method);
    entry["seed"] = res.seed;
    entry["dir"] = "runs/" + dir_name;
    run_entries.push_back(std::move(entry));
  }

  manifest["n_runs"] = run_entries.size();
  manifest["runs"] = std::move(run_entries);
  write_text_file(out / "raw_results.csv", raw_results_to_csv(rows));
  write_text_file(out / "manifest.json", manifest.dump(2) + "\n");
  write_text_file(out / "config.ini", experiment_config_to_string(cfg));
  std::cout << "train: completed " << results.size() << " run(s), results in "
            << out.string() << "\n";
}

// Recomputes the aggregate tables and the long-format learning-curve CSV
// from the raw artifacts. Returns the number of per-cell warnings (missing
// methods or mismatched seed sets).
inline int cmd_report(const fs::path& out) {
  const std::vector<RunRecord> rows =
      raw_results_from_csv(read_text_file(out / "raw_results.csv"));
  if (rows.empty()) throw std::runtime_error("report: no rows in raw results");
  fs::create_directories(out / "tables");
  int warnings = 0;

  // Group rows and keep first-appearance order.
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<const RunRecord*>> by_group;
  for (const RunRecord& r : rows) {
    if (by_group.find(r.group) == by_group.end()) group_order.push_back(r.group);
    by_group[r.group].push_back(&r);
  }

  auto cell_values = [](const std::vector<const RunRecord*>& grp, Method m,
                        auto&& value_of) {
    std::vector<std::pair<std::uint64_t, double>> pairs;
    for (const RunRecord* r : grp)
      if (r->method == m) pairs.emplace_back(r->seed, value_of(*r));
    std::sort(pairs.begin(), pairs.end());
    std::vector<double> vals;
    for (const auto& [s, v] : pairs) vals.push_back(v);
    return vals;
  };
  auto seeds_of = [](const std::vector<const RunRecord*>& grp, Method m) {
    std::vector<std::uint64_t> s;
    for (const RunRecord* r : grp)
      if (r->method == m) s.push_back(r->seed);
    std::sort(s.begin(), s.end());
    return s;
  };

  // tables/accuracy.csv
  {
    std::string csv =
        "group,distribution,noise,n_annotators,expertise_lr,n_seeds,"
        "oracle_mean,oracle_std,noisy_mean,noisy_std,realm_mean,realm_std,"
        "delta,winner,note\n";
    for (const std::string& g : group_order) {
      const auto& grp = by_group[g];
      const RunRecord& first = *grp.front();
      std::string note;
      std::map<Method, AggregateCell> cells;
      int n_seeds = 0;
      for (Method m : {Method::oracle, Method::noisy, Method::realm}) {
        const auto vals = cell_values(
            grp, m, [](const RunRecord& r) { return r.final_accuracy; });
        if (!vals.empty()) {
          cells[m] = aggregate_values(vals);
          n_seeds = std::max(n_seeds, static_cast<int>(vals.size()));
        }
      }
      if (cells.count(Method::realm) == 0) {
        note = "missing realm rows";
        ++warnings;
      } else if (cells.count(Method::noisy) == 0) {
        note = "missing noisy rows";
        ++warnings;
      } else if (seeds_of(grp, Method::realm) != seeds_of(grp, Method::noisy)) {
        note = "realm/noisy seed sets differ";
        ++warnings;
      }
      csv += g + "," + first.distribution + "," + first.noise + "," +
             std::to_string(first.n_annotators) + "," +
             detail::fmt6(first.expertise_lr) + "," + std::to_string(n_seeds);
      for (Method m : {Method::oracle, Method::noisy, Method::realm}) {
        if (cells.count(m))
          csv += "," + detail::fmt6(cells[m].mean) + "," +
                 detail::fmt6(cells[m].stddev);
        else
          csv += ",,";
      }
      if (cells.count(Method::realm) && cells.count(Method::noisy)) {
        const double delta =
            cells[Method::realm].mean - cells[Method::noisy].mean;
        csv += "," + detail::fmt6(delta) + "," +
               (delta > 0 ? "realm" : (delta < 0 ? "noisy" : "tie"));
      } else {
        csv += ",,";
      }
      csv += "," + note + "\n";
    }
    write_text_file(out / "tables" / "accuracy.csv", csv);
  }

  // tables/per_task_accuracy.csv
  {
    std::string csv =
        "group,task,n_seeds,oracle_mean,oracle_std,noisy_mean,noisy_std,"
        "realm_mean,realm_std,delta,winner\n";
    for (const std::string& g : group_order) {
      const auto& grp = by_group[g];
      const std::size_t n_tasks = grp.front()->per_task_accuracy.size();
      for (std::size_t t = 0; t < n_tasks; ++t) {
        std::map<Method, AggregateCell> cells;
        int n_seeds = 0;
        for (Method m : {Method::oracle, Method::noisy, Method::realm}) {
          const auto vals =
              cell_values(grp, m, [t](const RunRecord& r) {
                return r.per_task_accuracy.at(t);
              });
          if (!vals.empty()) {
            cells[m] = aggregate_values(vals);
            n_seeds = std::max(n_seeds, static_cast<int>(vals.size()));
          }
        }
        csv += g + "," + std::to_string(t) + "," + std::to_string(n_seeds);
        for (Method m : {Method::oracle, Method::noisy, Method::realm}) {
          if (cells.count(m))
            csv += "," + detail::fmt6(cells[m].mean) + "," +
                   detail::fmt6(cells[m].stddev);
          else
            csv += ",,";
        }
        if (cells.count(Method::realm) && cells.count(Method::noisy)) {
          const double delta =
              cells[Method::realm].mean - cells[Method::noisy].mean;
          csv += "," + detail::fmt6(delta) + "," +
                 (delta > 0 ? "realm" : (delta < 0 ? "noisy" : "tie"));
        } else {
          csv += ",,";
        }
        csv += "\n";
      }
    }
    write_text_file(out / "tables" / "per_task_accuracy.csv", csv);
  }

  // tables/recovery.csv (realm rows that produced a recovery report)
  {
    std::string csv =
        "group,n_seeds,mean_max_error,worst_max_error,rank_agreement_rate\n";
    for (const std::string& g : group_order) {
      std::vector<std::pair<std::uint64_t, const RunRecord*>> rec;
      for (const RunRecord* r : by_group[g])
        if (r->has_recovery) rec.emplace_back(r->seed, r);
      if (rec.empty()) continue;
      std::sort(rec.begin(), rec.end());
      double mean_err = 0.0, worst = 0.0, rank_rate = 0.0;
      for (const auto& [s, r] : rec) {
        mean_err += r->recovery_max_error;
        worst = std::max(worst, r->recovery_max_error);
        rank_rate += r->rank_agreement ? 1.0 : 0.0;
      }
      mean_err /= rec.size();
      rank_rate /= rec.size();
      csv += g + "," + std::to_string(rec.size()) + "," +
             detail::fmt6(mean_err) + "," + detail::fmt6(worst) + "," +
             detail::fmt6(rank_rate) + "\n";
    }
    write_text_file(out / "tables" / "recovery.csv", csv);
  }

  // curves.csv from the per-run traces listed in the manifest.
  {
    const nlohmann::json manifest =
        nlohmann::json::parse(read_text_file(out / "manifest.json"));
    std::string csv =
        "group,distribution,noise,n_annotators,expertise_lr,method,seed,step,"
        "train_loss,test_accuracy\n";
    for (const auto& entry : manifest.at("runs")) {
      const std::string trace_text =
          read_text_file(out / entry.at("dir").get<std::string>() /
                         "trace.csv");
      std::istringstream ts(trace_text);
      std::string line;
      if (!std::getline(ts, line))
        throw std::runtime_error("report: empty trace in " +
                                 entry.at("dir").get<std::string>());
      const auto header = detail::split(line, ',');
      int c_step = -1, c_loss = -1, c_acc = -1;
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "step") c_step = static_cast<int>(c);
        if (header[c] == "train_loss") c_loss = static_cast<int>(c);
        if (header[c] == "test_accuracy") c_acc = static_cast<int>(c);
      }
      if (c_step < 0 || c_loss < 0 || c_acc < 0)
        throw std::runtime_error("report: malformed trace header in " +
                                 entry.at("dir").get<std::string>());
      const std::string prefix =
          entry.at("group").get<std::string>() + "," +
          entry.at("distribution").get<std::string>() + "," +
          entry.at("noise").get<std::string>() + "," +
          std::to_string(entry.at("n_annotators").get<int>()) + "," +
          detail::fmt_double(entry.at("expertise_lr").get<double>()) + "," +
          entry.at("method").get<std::string>() + "," +
          std::to_string(entry.at("seed").get<std::uint64_t>()) + ",";
      int line_no = 1;
      while (std::getline(ts, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        csv += prefix + f.at(c_step) + "," + f.at(c_loss) + "," + f.at(c_acc) +
               "\n";
      }
    }
    write_text_file(out / "curves.csv", csv);
  }

  std::cout << "report: wrote tables under " << (out / "tables").string()
            << " and curves.csv";
  if (warnings > 0) std::cout << " (" << warnings << " cell warning(s))";
  std::cout << "\n";
  return warnings;
}

// simulate + train-from-files + report in one output directory, so every
// artifact the pipeline reads went through disk.
inline void cmd_run(const ExperimentConfig& cfg, const fs::path& out,
                    int n_parallel) {
  cmd_simulate(cfg, out);
  ExperimentConfig with_files = cfg;
  with_files.load_dir = "datasets";
  cmd_train(with_files, out, n_parallel);
  cmd_report(out);
}

}  // namespace realm
