#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "realm/objective.hpp"

using namespace realm;

namespace {

ModelParams random_model(Arch arch, int d_in, int vocab, int hidden,
                         std::uint64_t seed) {
  ModelParams m = ModelParams::make(arch, d_in, vocab, hidden, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> normal(0.0, 0.5);
  for (double& v : m.data) v = normal(rng);
  return m;
}

std::vector<Example> random_examples(const TaskSpec& task, int n, int d_in,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, task.k - 1);
  std::vector<Example> out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> x(d_in);
    for (double& v : x) v = normal(rng);
    out.emplace_back(i, std::move(x), lab(rng), task);
  }
  return out;
}

LossBatch batch_over(const std::vector<Example>& exs, const TaskSpec& task,
                     int n_annotators, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ann(0, n_annotators - 1);
  std::uniform_int_distribution<int> lab(0, task.k - 1);
  LossBatch b;
  b.task_id = task.task_id;
  for (const Example& e : exs)
    b.records.push_back({&e, ann(rng), lab(rng)});
  return b;
}

}  // namespace

TEST_CASE("mixture probability closed form") {
  CHECK(mixture_prob(0.5, 0.9, 4) == Catch::Approx(0.475).epsilon(1e-15));
  CHECK(mixture_prob(0.7, 1.0, 4) == 0.7);           // full trust in the model
  CHECK(mixture_prob(0.7, 0.0, 4) == 0.25);          // pure uniform floor
  CHECK(mixture_prob(0.0, 0.5, 5) == Catch::Approx(0.1).epsilon(1e-15));
  CHECK_THROWS_AS(mixture_prob(0.5, 1.2, 4), std::invalid_argument);
  CHECK_THROWS_AS(mixture_prob(0.5, -0.1, 4), std::invalid_argument);
  CHECK_THROWS_AS(mixture_prob(0.5, 0.5, 1), std::invalid_argument);
}

TEST_CASE("single-record loss and gradients match hand computation") {
  // Bias log(3) on token 0 puts the model at p = [1/2, 1/6, 1/6, 1/6].
  // With omega = 0 (beta = 1/2) and the observed label 0:
  //   mix  = 1/2 * 1/2 + 1/2 * 1/4          = 3/8
  //   loss = -log(3/8)                      = 0.980829253011726...
  //   d/domega = -sigma'(0)(p - 1/4)/mix    = -(1/4)(1/4)/(3/8) = -1/6
  //   dz_0 = p_0(g_0 - g_0 p_0)             = -1/3,  dz_{j>0} = 1/9
  const auto tasks = make_task_specs({4}, 16);
  auto m = ModelParams::make(Arch::linear, 3, 16, 0, 0);
  m.data[m.b_off() + 0] = std::log(3.0);
  const Example ex(0, {0.0, 0.0, 0.0}, 0, tasks[0]);
  const auto expertise = ExpertiseParams::make_scalar(2, 0.0);

  LossBatch batch;
  batch.task_id = 0;
  batch.records.push_back({&ex, 1, 0});
  const LossOutput out = realm_loss(batch, m, expertise, tasks[0]);

  CHECK(out.loss == Catch::Approx(-std::log(0.375)).epsilon(1e-12));
  CHECK(out.loss == Catch::Approx(0.980829253011726).epsilon(1e-12));
  REQUIRE(out.grad_expertise.size() == 2);
  CHECK(out.grad_expertise[1] == Catch::Approx(-1.0 / 6).epsilon(1e-12));
  CHECK(out.grad_expertise[0] == 0.0);  // annotator 0 not in the batch
  CHECK(out.grad_model[m.b_off() + 0] == Catch::Approx(-1.0 / 3).epsilon(1e-12));
  CHECK(out.grad_model[m.b_off() + 1] == Catch::Approx(1.0 / 9).epsilon(1e-12));
  CHECK(out.grad_model[m.b_off() + 2] == Catch::Approx(1.0 / 9).epsilon(1e-12));
  // x = 0, so weight gradients vanish
  for (std::size_t i = m.w_off(); i < m.b_off(); ++i)
    CHECK(out.grad_model[i] == 0.0);
}

TEST_CASE("batch loss is the mean of per-record losses") {
  const auto tasks = make_task_specs({4}, 16);
  const auto m = random_model(Arch::linear, 5, 16, 0, 11);
  const auto exs = random_examples(tasks[0], 3, 5, 12);
  auto expertise = ExpertiseParams::make_scalar(3, 0.0);
  expertise.raw = {0.3, -0.8, 1.2};

  const auto batch = batch_over(exs, tasks[0], 3, 13);
  const LossOutput whole = realm_loss(batch, m, expertise, tasks[0]);

  double mean_loss = 0.0;
  std::vector<double> mean_gm(m.size(), 0.0);
  std::vector<double> mean_ge(expertise.size(), 0.0);
  for (const BatchRecord& r : batch.records) {
    LossBatch one;
    one.task_id = 0;
    one.records.push_back(r);
    const LossOutput o = realm_loss(one, m, expertise, tasks[0]);
    mean_loss += o.loss / 3;
    for (std::size_t i = 0; i < mean_gm.size(); ++i)
      mean_gm[i] += o.grad_model[i] / 3;
    for (std::size_t i = 0; i < mean_ge.size(); ++i)
      mean_ge[i] += o.grad_expertise[i] / 3;
  }
  CHECK(whole.loss == Catch::Approx(mean_loss).margin(1e-14));
  for (std::size_t i = 0; i < mean_gm.size(); ++i)
    CHECK(whole.grad_model[i] == Catch::Approx(mean_gm[i]).margin(1e-14));
  for (std::size_t i = 0; i < mean_ge.size(); ++i)
    CHECK(whole.grad_expertise[i] == Catch::Approx(mean_ge[i]).margin(1e-14));
}

TEST_CASE("expertise gradient pushes omega toward agreement with the model") {
  const auto tasks = make_task_specs({4}, 16);
  auto m = ModelParams::make(Arch::linear, 2, 16, 0, 0);
  m.data[m.b_off() + 0] = 2.0;  // model is confident in label 0
  const Example ex(0, {0.0, 0.0}, 0, tasks[0]);
  const auto expertise = ExpertiseParams::make_scalar(1, 0.0);

  LossBatch agree;
  agree.task_id = 0;
  agree.records.push_back({&ex, 0, 0});
  CHECK(realm_loss(agree, m, expertise, tasks[0]).grad_expertise[0] < 0.0);

  LossBatch disagree;
  disagree.task_id = 0;
  disagree.records.push_back({&ex, 0, 3});
  CHECK(realm_loss(disagree, m, expertise, tasks[0]).grad_expertise[0] > 0.0);
}

namespace {

// Central finite differences over both parameter blocks.
void gradcheck_realm(const LossBatch& batch, const ModelParams& m,
                     const ExpertiseParams& e, const TaskSpec& task) {
  const double step = 1e-5;
  const LossOutput out = realm_loss(batch, m, e, task);
  auto rel = [](double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
  };
  for (std::size_t i = 0; i < m.size(); ++i) {
    ModelParams plus = m, minus = m;
    plus.data[i] += step;
    minus.data[i] -= step;
    const double numeric = (realm_loss(batch, plus, e, task).loss -
                            realm_loss(batch, minus, e, task).loss) /
                           (2 * step);
    INFO("model param " << i);
    CHECK(rel(out.grad_model[i], numeric) < 1e-4);
  }
  for (std::size_t i = 0; i < e.size(); ++i) {
    ExpertiseParams plus = e, minus = e;
    plus.raw[i] += step;
    minus.raw[i] -= step;
    const double numeric = (realm_loss(batch, m, plus, task).loss -
                            realm_loss(batch, m, minus, task).loss) /
                           (2 * step);
    INFO("expertise param " << i);
    CHECK(rel(out.grad_expertise[i], numeric) < 1e-4);
  }
}

}  // namespace

TEST_CASE("scalar-expertise loss matches finite differences") {
  const auto tasks = make_task_specs({4}, 16);
  const auto m = random_model(Arch::linear, 4, 16, 0, 21);
  const auto exs = random_examples(tasks[0], 5, 4, 22);
  auto e = ExpertiseParams::make_scalar(3);
  e.raw = {0.4, -1.1, 0.9};
  gradcheck_realm(batch_over(exs, tasks[0], 3, 23), m, e, tasks[0]);
}

TEST_CASE("matrix-expertise loss matches finite differences on a later task") {
  const auto tasks = make_task_specs({3, 4}, 16);
  const auto m = random_model(Arch::mlp1, 4, 16, 3, 31);
  const auto exs = random_examples(tasks[1], 5, 4, 32);
  auto e = ExpertiseParams::make_matrix(2, 2);
  e.raw = {0.5, -0.5, 1.0, -1.0};
  gradcheck_realm(batch_over(exs, tasks[1], 2, 33), m, e, tasks[1]);
}

TEST_CASE("state-dependent expertise loss matches finite differences") {
  const auto tasks = make_task_specs({4}, 16);
  const int d_in = 4, d_embed = 3;
  const auto m = random_model(Arch::linear, d_in, 16, 0, 41);
  const auto exs = random_examples(tasks[0], 4, d_in, 42);

  std::mt19937_64 rng(43);
  std::normal_distribution<double> normal(0.0, 0.6);
  std::vector<double> raw(2 * d_embed + d_embed * d_in);
  for (double& v : raw) v = normal(rng);
  const auto e = ExpertiseParams::make_state_dependent(2, d_embed, d_in, raw);
  gradcheck_realm(batch_over(exs, tasks[0], 2, 44), m, e, tasks[0]);
}

TEST_CASE("cross-entropy baseline matches finite differences and log k") {
  const auto tasks = make_task_specs({4}, 16);
  const auto fresh = ModelParams::make(Arch::linear, 4, 16, 0, 0);
  const auto exs = random_examples(tasks[0], 6, 4, 51);
  const auto batch = batch_over(exs, tasks[0], 3, 52);

  const LossOutput at_init =
      baseline_ce(batch, fresh, tasks[0], LabelSource::observed);
  CHECK(at_init.loss == Catch::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(at_init.grad_expertise.empty());

  const auto m = random_model(Arch::linear, 4, 16, 0, 53);
  const LossOutput out = baseline_ce(batch, m, tasks[0], LabelSource::observed);
  const double step = 1e-5;
  for (std::size_t i = 0; i < m.size(); ++i) {
    ModelParams plus = m, minus = m;
    plus.data[i] += step;
    minus.data[i] -= step;
    const double numeric =
        (baseline_ce(batch, plus, tasks[0], LabelSource::observed).loss -
         baseline_ce(batch, minus, tasks[0], LabelSource::observed).loss) /
        (2 * step);
    const double rel = std::abs(out.grad_model[i] - numeric) /
                       std::max({std::abs(out.grad_model[i]),
                                 std::abs(numeric), 1e-6});
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("label source switches between annotation and ground truth") {
  const auto tasks = make_task_specs({4}, 16);
  const auto m = random_model(Arch::linear, 3, 16, 0, 61);
  const Example ex(0, {0.4, -0.2, 1.0}, 2, tasks[0]);
  LossBatch b;
  b.task_id = 0;
  b.records.push_back({&ex, 0, 1});  // annotator said 1, truth is 2

  const double obs = baseline_ce(b, m, tasks[0], LabelSource::observed).loss;
  const double tru = baseline_ce(b, m, tasks[0], LabelSource::true_label).loss;
  const auto probs = forward(m, ex.features, tasks[0]).probs;
  CHECK(obs == Catch::Approx(-std::log(probs[1])).epsilon(1e-12));
  CHECK(tru == Catch::Approx(-std::log(probs[2])).epsilon(1e-12));
}

TEST_CASE("saturated expertise reduces the mixture to cross-entropy") {
  const auto tasks = make_task_specs({4}, 16);
  const auto m = random_model(Arch::linear, 4, 16, 0, 71);
  const auto exs = random_examples(tasks[0], 8, 4, 72);
  const auto batch = batch_over(exs, tasks[0], 3, 73);
  const auto e = ExpertiseParams::make_scalar(3, 20.0);

  const LossOutput mixed = realm_loss(batch, m, e, tasks[0]);
  const LossOutput ce = baseline_ce(batch, m, tasks[0], LabelSource::observed);
  CHECK(mixed.loss == Catch::Approx(ce.loss).margin(1e-6));
  for (std::size_t i = 0; i < m.size(); ++i)
    CHECK(mixed.grad_model[i] == Catch::Approx(ce.grad_model[i]).margin(1e-6));
}

TEST_CASE("state-dependent expertise helpers agree with direct evaluation") {
  const int d_in = 3, d_embed = 2, n = 2;
  std::vector<double> raw{0.5, -1.0,   // skill 0
                          2.0, 0.25,   // skill 1
                          1.0, 0.0, -1.0,   // phi row 0
                          0.5, 0.5, 0.5};   // phi row 1
  const auto e = ExpertiseParams::make_state_dependent(n, d_embed, d_in, raw);
  const std::vector<double> x{1.0, 2.0, 3.0};

  const auto emb = embed_features(e, x);
  REQUIRE(emb.size() == 2);
  CHECK(emb[0] == Catch::Approx(-2.0).epsilon(1e-15));  // 1 + 0 - 3
  CHECK(emb[1] == Catch::Approx(3.0).epsilon(1e-15));   // (1+2+3)/2

  const auto rho = state_dependent_expertise(e, x);
  CHECK(rho[0] == Catch::Approx(sigmoid(0.5 * -2.0 + -1.0 * 3.0)).epsilon(1e-15));
  CHECK(rho[1] == Catch::Approx(sigmoid(2.0 * -2.0 + 0.25 * 3.0)).epsilon(1e-15));
}

TEST_CASE("one-hot embeddings read out matrix columns") {
  Matrix skills(2, 3);
  skills(0, 0) = 0.1; skills(0, 1) = 0.2; skills(0, 2) = 0.3;
  skills(1, 0) = -1.0; skills(1, 1) = 0.5; skills(1, 2) = 2.0;
  const std::vector<double> onehot{0.0, 1.0, 0.0};
  const auto out = expertise_from_embedding(skills, onehot);
  CHECK(out[0] == sigmoid(0.2));
  CHECK(out[1] == sigmoid(0.5));
  CHECK_THROWS_AS(expertise_from_embedding(skills, std::vector<double>{1.0}),
                  std::invalid_argument);
}

TEST_CASE("loss input validation") {
  const auto tasks = make_task_specs({4, 4}, 16);
  const auto m = ModelParams::make(Arch::linear, 3, 16, 0, 0);
  const auto e2 = ExpertiseParams::make_scalar(2);
  const Example ex(0, {0.0, 0.0, 0.0}, 0, tasks[0]);

  LossBatch empty;
  empty.task_id = 0;
  CHECK_THROWS_AS(realm_loss(empty, m, e2, tasks[0]), std::invalid_argument);

  LossBatch b;
  b.task_id = 0;
  b.records.push_back({&ex, 5, 0});  // annotator 5 of 2
  CHECK_THROWS_AS(realm_loss(b, m, e2, tasks[0]), std::invalid_argument);

  b.records[0] = {&ex, 0, 0};
  CHECK_THROWS_AS(realm_loss(b, m, e2, tasks[1]), std::invalid_argument);
  CHECK_NOTHROW(realm_loss(b, m, e2, tasks[0]));

  // scalar expertise cannot serve a multi-task batch on task 1
  const Example ex1(1, {0.0, 0.0, 0.0}, 0, tasks[1]);
  LossBatch b1;
  b1.task_id = 1;
  b1.records.push_back({&ex1, 0, 0});
  CHECK_THROWS_AS(realm_loss(b1, m, e2, tasks[1]), std::invalid_argument);
  const auto em = ExpertiseParams::make_matrix(2, 2);
  CHECK_NOTHROW(realm_loss(b1, m, em, tasks[1]));
}
