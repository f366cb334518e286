#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "realm/core.hpp"
#include "realm/dataset_io.hpp"
#include "realm/simulate.hpp"
#include "realm/trainer.hpp"

namespace realm {

// Experiment description: one RunConfig template plus the grid axes that
// multiply into individual runs. Parsed from an INI-style file; every key is
// checked against the schema so typos fail loudly instead of silently
// falling back to defaults.
struct ExperimentConfig {
  // [dataset]
  std::vector<int> task_ks = {4};
  int vocab_size = 16;
  int d_in = 20;
  int n_train_per_task = 2000;
  int n_test_per_task = 1000;
  std::string load_dir;  // read datasets from disk instead of generating

  // [annotation] (grid axes: n_annotators, distributions, noise_types)
  std::vector<int> n_annotators_values = {3};
  std::vector<DistPattern> distributions = {DistPattern::dist1};
  std::vector<NoiseType> noise_types = {NoiseType::uniform};
  double asymmetric_c = 4.0;
  bool asymmetric_alt_norm = false;
  AnnotationMode mode = AnnotationMode::exclusive;

  // [train] (grid axes: methods, expertise_lrs)
  std::vector<Method> methods = {Method::realm, Method::noisy};
  ExpertiseVariant expertise_variant = ExpertiseVariant::scalar;
  std::vector<double> expertise_lrs = {1.0};
  double model_lr = 0.05;
  int steps = 200;
  int batch_size = 8;
  int grad_accum = 8;
  LrSchedule lr_schedule = LrSchedule::cosine;
  Arch arch = Arch::linear;
  int hidden = 32;
  int d_embed = 4;
  int seeds = 5;  // runs use seeds 0..seeds-1
  bool freeze_expertise = false;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (const std::string& part : split(s, ',')) {
    const std::string t = trim(part);
    if (t.empty()) throw std::invalid_argument("empty list element");
    out.push_back(t);
  }
  return out;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& s, Parse parse) {
  std::vector<T> out;
  for (const std::string& item : split_list(s)) out.push_back(parse(item));
  return out;
}

inline int config_int(const std::string& s) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw std::invalid_argument("bad integer '" + s + "'");
  return static_cast<int>(v);
}

inline double config_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw std::invalid_argument("bad float '" + s + "'");
  return v;
}

inline bool config_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw std::invalid_argument("bad boolean '" + s + "' (use true/false)");
}

inline Method parse_method(const std::string& s) {
  if (s == "oracle") return Method::oracle;
  if (s == "noisy") return Method::noisy;
  if (s == "realm") return Method::realm;
  throw std::invalid_argument("unknown method '" + s + "'");
}

inline DistPattern parse_pattern(const std::string& s) {
  if (s == "dist1") return DistPattern::dist1;
  if (s == "dist2") return DistPattern::dist2;
  if (s == "dist3") return DistPattern::dist3;
  throw std::invalid_argument("unknown distribution '" + s + "'");
}

inline NoiseType parse_noise(const std::string& s) {
  if (s == "uniform") return NoiseType::uniform;
  if (s == "asymmetric") return NoiseType::asymmetric;
  if (s == "systematic") return NoiseType::systematic;
  throw std::invalid_argument("unknown noise type '" + s + "'");
}

inline AnnotationMode parse_mode(const std::string& s) {
  if (s == "exclusive") return AnnotationMode::exclusive;
  if (s == "shared") return AnnotationMode::shared;
  throw std::invalid_argument("unknown annotation mode '" + s + "'");
}

inline Arch parse_arch(const std::string& s) {
  if (s == "linear") return Arch::linear;
  if (s == "mlp1") return Arch::mlp1;
  throw std::invalid_argument("unknown arch '" + s + "'");
}

inline ExpertiseVariant parse_variant(const std::string& s) {
  if (s == "scalar") return ExpertiseVariant::scalar;
  if (s == "matrix") return ExpertiseVariant::matrix;
  if (s == "state_dependent") return ExpertiseVariant::state_dependent;
  throw std::invalid_argument("unknown expertise variant '" + s + "'");
}

inline LrSchedule parse_schedule(const std::string& s) {
  if (s == "cosine") return LrSchedule::cosine;
  throw std::invalid_argument("unknown lr schedule '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(std::istream& is) {
  ExperimentConfig cfg;
  std::string section;
  std::string line;
  int line_no = 0;
  std::set<std::string> seen;  // "section.key", duplicate keys rejected

  auto fail = [&line_no](const std::string& msg) {
    throw std::invalid_argument("config line " + std::to_string(line_no) +
                                ": " + msg);
  };

  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (section != "dataset" && section != "annotation" &&
          section != "train")
        fail("unknown section '" + section + "'");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) fail("empty key");
    if (value.empty()) fail("empty value for key '" + key + "'");
    if (section.empty()) fail("key '" + key + "' outside any section");
    if (!seen.insert(section + "." + key).second)
      fail("duplicate key '" + key + "' in section [" + section + "]");

    try {
      if (section == "dataset") {
        if (key == "tasks")
          cfg.task_ks = detail::parse_list<int>(value, detail::config_int);
        else if (key == "vocab")
          cfg.vocab_size = detail::config_int(value);
        else if (key == "d_in")
          cfg.d_in = detail::config_int(value);
        else if (key == "n_train_per_task")
          cfg.n_train_per_task = detail::config_int(value);
        else if (key == "n_test_per_task")
          cfg.n_test_per_task = detail::config_int(value);
        else if (key == "load_dir")
          cfg.load_dir = value;
        else
          fail("unknown key '" + key + "' in section [dataset]");
      } else if (section == "annotation") {
        if (key == "n_annotators")
          cfg.n_annotators_values =
              detail::parse_list<int>(value, detail::config_int);
        else if (key == "distributions")
          cfg.distributions =
              detail::parse_list<DistPattern>(value, detail::parse_pattern);
        else if (key == "noise_types")
          cfg.noise_types =
              detail::parse_list<NoiseType>(value, detail::parse_noise);
        else if (key == "asymmetric_c")
          cfg.asymmetric_c = detail::config_double(value);
        else if (key == "asymmetric_alt_norm")
          cfg.asymmetric_alt_norm = detail::config_bool(value);
        else if (key == "mode")
          cfg.mode = detail::parse_mode(value);
        else
          fail("unknown key '" + key + "' in section [annotation]");
      } else {  // train
        if (key == "methods")
          cfg.methods = detail::parse_list<Method>(value, detail::parse_method);
        else if (key == "expertise_variant")
          cfg.expertise_variant = detail::parse_variant(value);
        else if (key == "expertise_lrs")
          cfg.expertise_lrs =
              detail::parse_list<double>(value, detail::config_double);
        else if (key == "model_lr")
          cfg.model_lr = detail::config_double(value);
        else if (key == "steps")
          cfg.steps = detail::config_int(value);
        else if (key == "batch_size")
          cfg.batch_size = detail::config_int(value);
        else if (key == "grad_accum")
          cfg.grad_accum = detail::config_int(value);
        else if (key == "lr_schedule")
          cfg.lr_schedule = detail::parse_schedule(value);
        else if (key == "arch")
          cfg.arch = detail::parse_arch(value);
        else if (key == "hidden")
          cfg.hidden = detail::config_int(value);
        else if (key == "d_embed")
          cfg.d_embed = detail::config_int(value);
        else if (key == "seeds")
          cfg.seeds = detail::config_int(value);
        else if (key == "freeze_expertise")
          cfg.freeze_expertise = detail::config_bool(value);
        else
          fail("unknown key '" + key + "' in section [train]");
      }
    } catch (const std::invalid_argument& e) {
      if (std::string(e.what()).rfind("config line", 0) == 0) throw;
      fail(e.what());
    }
  }

  if (cfg.methods.empty() || cfg.distributions.empty() ||
      cfg.noise_types.empty() || cfg.n_annotators_values.empty() ||
      cfg.expertise_lrs.empty())
    throw std::invalid_argument("config: empty grid axis");
  if (cfg.seeds < 1) throw std::invalid_argument("config: seeds must be >= 1");
  return cfg;
}

inline ExperimentConfig parse_experiment_config_string(const std::string& s) {
  std::istringstream is(s);
  return parse_experiment_config(is);
}

inline void write_experiment_config(const ExperimentConfig& cfg,
                                    std::ostream& os) {
  auto join_ints = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
      s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  auto join_doubles = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
      s += (i ? "," : "") + detail::fmt_double(v[i]);
    return s;
  };

  os << "[dataset]\n";
  os << "tasks = " << join_ints(cfg.task_ks) << "\n";
  os << "vocab = " << cfg.vocab_size << "\n";
  os << "d_in = " << cfg.d_in << "\n";
  os << "n_train_per_task = " << cfg.n_train_per_task << "\n";
  os << "n_test_per_task = " << cfg.n_test_per_task << "\n";
  if (!cfg.load_dir.empty()) os << "load_dir = " << cfg.load_dir << "\n";
  os << "\n[annotation]\n";
  os << "n_annotators = " << join_ints(cfg.n_annotators_values) << "\n";
  {
    std::string s;
    for (std::size_t i = 0; i < cfg.distributions.size(); ++i)
      s += std::string(i ? "," : "") + to_string(cfg.distributions[i]);
    os << "distributions = " << s << "\n";
  }
  {
    std::string s;
    for (std::size_t i = 0; i < cfg.noise_types.size(); ++i)
      s += std::string(i ? "," : "") + to_string(cfg.noise_types[i]);
    os << "noise_types = " << s << "\n";
  }
  os << "asymmetric_c = " << detail::fmt_double(cfg.asymmetric_c) << "\n";
  os << "asymmetric_alt_norm = " << (cfg.asymmetric_alt_norm ? "true" : "false")
     << "\n";
  os << "mode = " << to_string(cfg.mode) << "\n";
  os << "\n[train]\n";
  {
    std::string s;
    for (std::size_t i = 0; i < cfg.methods.size(); ++i)
      s += std::string(i ? "," : "") + to_string(cfg.methods[i]);
    os << "methods = " << s << "\n";
  }
  os << "expertise_variant = " << to_string(cfg.expertise_variant) << "\n";
  os << "expertise_lrs = " << join_doubles(cfg.expertise_lrs) << "\n";
  os << "model_lr = " << detail::fmt_double(cfg.model_lr) << "\n";
  os << "steps = " << cfg.steps << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "grad_accum = " << cfg.grad_accum << "\n";
  os << "lr_schedule = cosine\n";
  os << "arch = " << to_string(cfg.arch) << "\n";
  os << "hidden = " << cfg.hidden << "\n";
  os << "d_embed = " << cfg.d_embed << "\n";
  os << "seeds = " << cfg.seeds << "\n";
  os << "freeze_expertise = " << (cfg.freeze_expertise ? "true" : "false")
     << "\n";
}

inline std::string experiment_config_to_string(const ExperimentConfig& cfg) {
  std::ostringstream os;
  write_experiment_config(cfg, os);
  return os.str();
}

// ---------------------------------------------------------------------------
// Grid expansion
// ---------------------------------------------------------------------------

inline std::string format_axis_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Group key: every non-method axis, so each group holds exactly the rows the
// method columns of one table cell compare.
inline std::string group_key(DistPattern pattern, NoiseType noise,
                             int n_annotators, double expertise_lr) {
  return std::string(to_string(pattern)) + "-" + to_string(noise) + "-n" +
         std::to_string(n_annotators) + "-elr" +
         format_axis_double(expertise_lr);
}

inline std::vector<GridJob> expand_grid(const ExperimentConfig& cfg) {
  std::vector<GridJob> jobs;
  for (DistPattern pattern : cfg.distributions)
    for (NoiseType noise : cfg.noise_types)
      for (int n : cfg.n_annotators_values)
        for (double elr : cfg.expertise_lrs)
          for (Method method : cfg.methods) {
            GridJob job;
            job.pattern = pattern;
            job.group = group_key(pattern, noise, n, elr);
            RunConfig& rc = job.config;
            rc.seed = 0;
            rc.n_annotators = n;
            rc.method = method;
            rc.expertise_variant = cfg.expertise_variant;
            rc.noise_type = noise;
            rc.asymmetric_c = cfg.asymmetric_c;
            rc.asymmetric_alt_norm = cfg.asymmetric_alt_norm;
            rc.annotation_mode = cfg.mode;
            rc.model_lr = cfg.model_lr;
            rc.expertise_lr = elr;
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
            jobs.push_back(std::move(job));
          }
  return jobs;
}

}  // namespace realm
