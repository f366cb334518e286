#include <catch2/catch_amalgamated.hpp>

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <set>
#include <string>

#include "realm/config.hpp"
#include "realm/experiment.hpp"

#ifndef REALM_CLI_PATH
#error "REALM_CLI_PATH must point at the realm_cli binary"
#endif

using namespace realm;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, bool quiet_stderr = false) {
  std::string cmd = std::string("\"") + REALM_CLI_PATH + "\" " + args +
                    " >/dev/null";
  if (quiet_stderr) cmd += " 2>/dev/null";
  return std::system(cmd.c_str());
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("realm-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kTinyConfig = R"(# integration-sized experiment
[dataset]
tasks = 4
d_in = 8
n_train_per_task = 200
n_test_per_task = 60

[annotation]
n_annotators = 3
distributions = dist1, dist3
noise_types = uniform

[train]
methods = realm, noisy, oracle
steps = 10
batch_size = 4
grad_accum = 2
seeds = 2
)";

}  // namespace

TEST_CASE("empty config stream yields the documented defaults") {
  const ExperimentConfig cfg = parse_experiment_config_string("");
  CHECK(cfg == ExperimentConfig{});
  CHECK(cfg.task_ks == std::vector<int>{4});
  CHECK(cfg.methods == std::vector<Method>{Method::realm, Method::noisy});
  CHECK(cfg.seeds == 5);
}

TEST_CASE("config files parse comments, lists and every section") {
  const ExperimentConfig cfg = parse_experiment_config_string(R"(
# top comment
[dataset]
tasks = 4, 4, 5   # three tasks
vocab = 16
n_train_per_task = 400

[annotation]
n_annotators = 3, 5, 10
distributions = dist3
noise_types = uniform, asymmetric
asymmetric_c = 2.5
mode = shared

[train]
methods = realm
expertise_variant = matrix
expertise_lrs = 0.01, 0.1, 1.0
model_lr = 0.02
seeds = 3
freeze_expertise = false
)");
  CHECK(cfg.task_ks == std::vector<int>{4, 4, 5});
  CHECK(cfg.n_train_per_task == 400);
  CHECK(cfg.n_annotators_values == std::vector<int>{3, 5, 10});
  CHECK(cfg.distributions == std::vector<DistPattern>{DistPattern::dist3});
  CHECK(cfg.noise_types ==
        std::vector<NoiseType>{NoiseType::uniform, NoiseType::asymmetric});
  CHECK(cfg.asymmetric_c == 2.5);
  CHECK(cfg.mode == AnnotationMode::shared);
  CHECK(cfg.methods == std::vector<Method>{Method::realm});
  CHECK(cfg.expertise_variant == ExpertiseVariant::matrix);
  CHECK(cfg.expertise_lrs == std::vector<double>{0.01, 0.1, 1.0});
  CHECK(cfg.model_lr == 0.02);
  CHECK(cfg.seeds == 3);
}

TEST_CASE("config writer and parser round-trip") {
  ExperimentConfig cfg;
  cfg.task_ks = {4, 5};
  cfg.expertise_variant = ExpertiseVariant::matrix;
  cfg.n_annotators_values = {2, 4};
  cfg.distributions = {DistPattern::dist1, DistPattern::dist2};
  cfg.noise_types = {NoiseType::systematic};
  cfg.expertise_lrs = {0.01, 1.0};
  cfg.methods = {Method::realm, Method::noisy, Method::oracle};
  cfg.mode = AnnotationMode::shared;
  cfg.asymmetric_alt_norm = true;
  cfg.arch = Arch::mlp1;
  cfg.load_dir = "datasets";
  cfg.seeds = 2;
  const ExperimentConfig back =
      parse_experiment_config_string(experiment_config_to_string(cfg));
  CHECK(back == cfg);
}

TEST_CASE("config errors carry line numbers and reject typos") {
  auto message_of = [](const std::string& text) {
    try {
      parse_experiment_config_string(text);
      return std::string("no error");
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
  };

  CHECK(message_of("[dataset]\nvocabulary = 16\n").find(
            "unknown key 'vocabulary'") != std::string::npos);
  CHECK(message_of("[dataset]\nvocabulary = 16\n").find("line 2") !=
        std::string::npos);
  CHECK(message_of("[datasets]\n").find("unknown section") !=
        std::string::npos);
  CHECK(message_of("[dataset]\nvocab = 16\nvocab = 32\n").find(
            "duplicate key") != std::string::npos);
  CHECK(message_of("vocab = 16\n").find("outside any section") !=
        std::string::npos);
  CHECK(message_of("[dataset]\nvocab = many\n").find("bad integer") !=
        std::string::npos);
  CHECK(message_of("[train]\nfreeze_expertise = yes\n").find("bad boolean") !=
        std::string::npos);
  CHECK(message_of("[train]\nmethods = realm, cleanlab\n").find(
            "unknown method") != std::string::npos);
  CHECK(message_of("[dataset\n").find("unterminated") != std::string::npos);
  CHECK(message_of("[train]\nseeds = 0\n").find("seeds") != std::string::npos);
}

TEST_CASE("grid expansion multiplies the axes and keys groups by them") {
  ExperimentConfig cfg;
  cfg.n_train_per_task = 100;
  cfg.n_test_per_task = 50;
  cfg.distributions = {DistPattern::dist1, DistPattern::dist3};
  cfg.noise_types = {NoiseType::uniform, NoiseType::systematic};
  cfg.n_annotators_values = {3};
  cfg.expertise_lrs = {0.01, 1.0};
  cfg.methods = {Method::realm, Method::noisy, Method::oracle};

  const auto jobs = expand_grid(cfg);
  CHECK(jobs.size() == 2 * 2 * 1 * 2 * 3);

  std::set<std::string> groups;
  for (const GridJob& j : jobs) groups.insert(j.group);
  CHECK(groups.size() == 8);  // method shares its group with its baselines
  CHECK(groups.count("dist1-uniform-n3-elr1") == 1);
  CHECK(groups.count("dist3-systematic-n3-elr0.01") == 1);

  const GridJob& j0 = jobs.front();
  CHECK(j0.pattern == DistPattern::dist1);
  CHECK(j0.config.noise_type == NoiseType::uniform);
  CHECK(j0.config.expertise_lr == 0.01);
  CHECK(j0.config.n_train_per_task == 100);

  ExperimentConfig bad = cfg;
  bad.task_ks = {4, 4};  // scalar expertise cannot span two tasks
  CHECK_THROWS_AS(expand_grid(bad), std::invalid_argument);
}

TEST_CASE("run directory names are stable 16-digit hashes") {
  const std::string a = run_dir_name("dist1-uniform-n3-elr1", Method::realm, 0);
  const std::string b = run_dir_name("dist1-uniform-n3-elr1", Method::realm, 0);
  const std::string c = run_dir_name("dist1-uniform-n3-elr1", Method::noisy, 0);
  const std::string d = run_dir_name("dist1-uniform-n3-elr1", Method::realm, 1);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a != d);
  CHECK(a.size() == 16);
  for (char ch : a) CHECK(std::isxdigit(static_cast<unsigned char>(ch)));
}

TEST_CASE("expertise parameters round-trip through their file format") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 2.0);

  auto roundtrip = [](const ExpertiseParams& e) {
    std::ostringstream os;
    write_expertise(e, os);
    std::istringstream is(os.str());
    const ExpertiseParams back = read_expertise(is);
    CHECK(back.variant == e.variant);
    CHECK(back.n_annotators == e.n_annotators);
    CHECK(back.n_tasks == e.n_tasks);
    CHECK(back.raw == e.raw);  // bit-exact
  };

  auto sc = ExpertiseParams::make_scalar(3);
  for (double& v : sc.raw) v = normal(rng);
  roundtrip(sc);

  auto mx = ExpertiseParams::make_matrix(3, 4);
  for (double& v : mx.raw) v = normal(rng);
  roundtrip(mx);

  auto sd = ExpertiseParams::make_state_dependent(2, 3, 5, {});
  for (double& v : sd.raw) v = normal(rng);
  roundtrip(sd);

  std::istringstream bad("realm-params v9\n");
  CHECK_THROWS_AS(read_expertise(bad), std::runtime_error);
  std::istringstream truncated(
      "realm-expertise v1\n"
      "[expertise] variant=scalar n=3 m=1 d_embed=0 d_in=0 count=3\n"
      "0.5 0.25\n");
  CHECK_THROWS_AS(read_expertise(truncated), std::runtime_error);
  std::istringstream mismatched(
      "realm-expertise v1\n"
      "[expertise] variant=scalar n=3 m=1 d_embed=0 d_in=0 count=2\n"
      "0.5 0.25\n");
  CHECK_THROWS_AS(read_expertise(mismatched), std::runtime_error);
}

TEST_CASE("raw results CSV round-trips every field") {
  RunRecord realm_row;
  realm_row.group = "dist1-uniform-n3-elr1";
  realm_row.distribution = "dist1";
  realm_row.noise = "uniform";
  realm_row.n_annotators = 3;
  realm_row.expertise_lr = 1.0;
  realm_row.method = Method::realm;
  realm_row.seed = 4;
  realm_row.final_accuracy = 0.912345678901234567;
  realm_row.final_train_loss = 1.0 / 3.0;
  realm_row.per_task_accuracy = {0.9, 0.85};
  realm_row.has_recovery = true;
  realm_row.recovery_max_error = 0.07;
  realm_row.rank_agreement = true;
  realm_row.expertise_sigmas = {0.9, 0.1, 0.2};
  realm_row.run_dir = "runs/0123456789abcdef";

  RunRecord ce_row = realm_row;
  ce_row.method = Method::oracle;
  ce_row.has_recovery = false;
  ce_row.recovery_max_error = 0.0;
  ce_row.rank_agreement = false;
  ce_row.expertise_sigmas.clear();

  const std::string csv = raw_results_to_csv({realm_row, ce_row});
  const auto back = raw_results_from_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].group == realm_row.group);
  CHECK(back[0].final_accuracy == realm_row.final_accuracy);  // bit-exact
  CHECK(back[0].final_train_loss == realm_row.final_train_loss);
  CHECK(back[0].per_task_accuracy == realm_row.per_task_accuracy);
  CHECK(back[0].has_recovery);
  CHECK(back[0].recovery_max_error == 0.07);
  CHECK(back[0].rank_agreement);
  CHECK(back[0].expertise_sigmas == realm_row.expertise_sigmas);
  CHECK(back[0].seed == 4);
  CHECK_FALSE(back[1].has_recovery);
  CHECK(back[1].expertise_sigmas.empty());
  CHECK(back[1].method == Method::oracle);

  CHECK_THROWS_AS(raw_results_from_csv("group,other\n1,2\n"),
                  std::runtime_error);
  const std::string short_line = std::string(kRawResultsHeader) + "\na,b,c\n";
  CHECK_THROWS_AS(raw_results_from_csv(short_line), std::runtime_error);
}

TEST_CASE("trace CSV lays out accuracy and expertise columns") {
  TrainingTrace trace;
  Snapshot s0;
  s0.step = 0;
  s0.train_loss = 1.5;
  s0.test_accuracy = 0.25;
  s0.per_task_accuracy = {0.25};
  s0.expertise = {0.5, 0.5, 0.5};
  Snapshot s1 = s0;
  s1.step = 10;
  s1.test_accuracy = 0.75;
  s1.expertise = {0.9, 0.4, 0.1};
  trace.snapshots = {s0, s1};

  const auto sc = ExpertiseParams::make_scalar(3);
  const std::string csv = trace_to_csv(trace, 1, trace_beta_headers(sc));
  const auto lines = realm::detail::split(csv, '\n');
  REQUIRE(lines.size() >= 3);
  CHECK(lines[0] == "step,train_loss,test_accuracy,acc_task0,beta0,beta1,beta2");
  CHECK(lines[1].rfind("0,1.5,0.25,0.25,0.5,0.5,0.5", 0) == 0);
  CHECK(lines[2].rfind("10,", 0) == 0);

  const auto mx = ExpertiseParams::make_matrix(2, 2);
  const auto mh = trace_beta_headers(mx);
  CHECK(mh == std::vector<std::string>{"beta0_t0", "beta0_t1", "beta1_t0",
                                       "beta1_t1"});
  const auto sd = ExpertiseParams::make_state_dependent(2, 3, 4, {});
  CHECK(trace_beta_headers(sd) ==
        std::vector<std::string>{"rho_mean0", "rho_mean1"});
}

TEST_CASE("cli pipeline writes the full artifact tree") {
  const fs::path dir = fresh_dir("pipeline");
  const fs::path cfg_path = dir / "tiny.ini";
  write_text_file(cfg_path, kTinyConfig);
  const fs::path out = dir / "out";

  REQUIRE(run_cli("run --config \"" + cfg_path.string() + "\" --out \"" +
                  out.string() + "\" --jobs 3") == 0);

  // datasets: 2 distributions x 1 noise x 1 N x 2 seeds
  CHECK(fs::exists(out / "datasets" / "manifest.json"));
  CHECK(fs::exists(out / "datasets" / "ds-dist1-uniform-n3-seed0.txt"));
  CHECK(fs::exists(out / "datasets" / "ds-dist3-uniform-n3-seed1.txt"));

  // run artifacts: 2 groups x 3 methods x 2 seeds
  const auto rows =
      raw_results_from_csv(read_text_file(out / "raw_results.csv"));
  REQUIRE(rows.size() == 12);
  int realm_rows = 0;
  for (const RunRecord& r : rows) {
    const fs::path run_dir = out / r.run_dir;
    CHECK(fs::exists(run_dir / "trace.csv"));
    CHECK(fs::exists(run_dir / "model.txt"));
    if (r.method == Method::realm) {
      ++realm_rows;
      CHECK(r.has_recovery);
      CHECK(r.expertise_sigmas.size() == 3);
      CHECK(fs::exists(run_dir / "expertise.txt"));
      CHECK(fs::exists(run_dir / "recovery.csv"));
    } else {
      CHECK_FALSE(r.has_recovery);
      CHECK(r.expertise_sigmas.empty());
      CHECK_FALSE(fs::exists(run_dir / "expertise.txt"));
      CHECK_FALSE(fs::exists(run_dir / "recovery.csv"));
    }
    // the stored model parses and matches the run geometry
    const ModelParams m =
        model_from_string(read_text_file(run_dir / "model.txt"));
    CHECK(m.d_in == 8);
  }
  CHECK(realm_rows == 4);

  CHECK(fs::exists(out / "tables" / "accuracy.csv"));
  CHECK(fs::exists(out / "tables" / "per_task_accuracy.csv"));
  CHECK(fs::exists(out / "tables" / "recovery.csv"));
  CHECK(fs::exists(out / "curves.csv"));
  CHECK(fs::exists(out / "config.ini"));
  CHECK(fs::exists(out / "manifest.json"));

  // accuracy table: one line per group plus the header
  const auto acc_lines = realm::detail::split(
      read_text_file(out / "tables" / "accuracy.csv"), '\n');
  CHECK(acc_lines.size() == 1 + 2 + 1);  // header, 2 groups, trailing newline

  // curves: 12 runs x 3 snapshot rows (steps 0, 10 via cadence both hit 10)
  const auto curve_lines =
      realm::detail::split(read_text_file(out / "curves.csv"), '\n');
  CHECK(curve_lines.size() == 1 + 12 * 2 + 1);

  SUCCEED("pipeline output tree complete");
}

TEST_CASE("cli reruns are byte-identical regardless of parallelism") {
  const fs::path dir = fresh_dir("determinism");
  const fs::path cfg_path = dir / "tiny.ini";
  write_text_file(cfg_path, kTinyConfig);
  const fs::path a = dir / "a";
  const fs::path b = dir / "b";

  REQUIRE(run_cli("run --config \"" + cfg_path.string() + "\" --out \"" +
                  a.string() + "\" --jobs 4") == 0);
  REQUIRE(run_cli("run --config \"" + cfg_path.string() + "\" --out \"" +
                  b.string() + "\" --jobs 1") == 0);

  for (const char* rel :
       {"raw_results.csv", "curves.csv", "tables/accuracy.csv",
        "tables/per_task_accuracy.csv", "tables/recovery.csv", "config.ini",
        "manifest.json", "datasets/manifest.json"}) {
    INFO(rel);
    CHECK(read_text_file(a / rel) == read_text_file(b / rel));
  }

  // report is idempotent: re-running it rewrites identical tables
  const std::string before = read_text_file(a / "tables" / "accuracy.csv");
  REQUIRE(run_cli("report --out \"" + a.string() + "\"") == 0);
  CHECK(read_text_file(a / "tables" / "accuracy.csv") == before);
}

TEST_CASE("cli rejects broken input loudly") {
  const fs::path dir = fresh_dir("badinput");
  CHECK(run_cli("run --config \"" + (dir / "missing.ini").string() +
                    "\" --out \"" + (dir / "out").string() + "\"",
                true) != 0);

  const fs::path bad = dir / "bad.ini";
  write_text_file(bad, "[dataset]\nvocabulary = 16\n");
  CHECK(run_cli("run --config \"" + bad.string() + "\" --out \"" +
                    (dir / "out2").string() + "\"",
                true) != 0);

  // report without artifacts
  CHECK(run_cli("report --out \"" + (dir / "nothing").string() + "\"", true) !=
        0);
  // missing required --config
  CHECK(run_cli("simulate", true) != 0);
}

TEST_CASE("out root environment variable sets the default directory") {
  const fs::path dir = fresh_dir("outroot");
  const fs::path cfg_path = dir / "tiny.ini";
  write_text_file(cfg_path, kTinyConfig);
  const std::string cmd = "REALM_OUT_ROOT=\"" + dir.string() +
                          "\" \"" REALM_CLI_PATH "\" simulate --config \"" +
                          cfg_path.string() + "\" >/dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "tiny" / "datasets" / "manifest.json"));
}
