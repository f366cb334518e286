#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "realm/core.hpp"
#include "realm/dataset_io.hpp"

namespace realm {

// Classifier over a shared logit space of size V. Tasks see only their own
// answer-token logits through a restricted softmax, so one parameter vector
// serves every task. Storage is flat; offsets depend on the architecture:
//   linear:  W [V x d_in], b [V]
//   mlp1:    W1 [h x d_in], b1 [h], W2 [V x h], b2 [V], tanh hidden
struct ModelParams {
  Arch arch = Arch::linear;
  int d_in = 0;
  int vocab_size = 0;
  int hidden = 0;  // 0 for linear
  std::vector<double> data;

  std::size_t size() const { return data.size(); }

  // linear offsets
  std::size_t w_off() const { return 0; }
  std::size_t b_off() const {
    return static_cast<std::size_t>(vocab_size) * d_in;
  }
  // mlp1 offsets
  std::size_t w1_off() const { return 0; }
  std::size_t b1_off() const { return static_cast<std::size_t>(hidden) * d_in; }
  std::size_t w2_off() const { return b1_off() + hidden; }
  std::size_t b2_off() const {
    return w2_off() + static_cast<std::size_t>(vocab_size) * hidden;
  }

  static std::size_t param_count(Arch arch, int d_in, int vocab_size,
                                 int hidden) {
    if (arch == Arch::linear)
      return static_cast<std::size_t>(vocab_size) * d_in + vocab_size;
    return static_cast<std::size_t>(hidden) * d_in + hidden +
           static_cast<std::size_t>(vocab_size) * hidden + vocab_size;
  }

  // Output layer starts at zero so every task begins at the uniform
  // distribution; mlp1 hidden weights are spherical with scale 1/sqrt(d_in).
  static ModelParams make(Arch arch, int d_in, int vocab_size, int hidden,
                          std::uint64_t seed) {
    if (d_in < 1 || vocab_size < 2)
      throw std::invalid_argument("ModelParams: bad dimensions");
    if (arch == Arch::mlp1 && hidden < 1)
      throw std::invalid_argument("ModelParams: mlp1 needs hidden >= 1");
    ModelParams m;
    m.arch = arch;
    m.d_in = d_in;
    m.vocab_size = vocab_size;
    m.hidden = (arch == Arch::mlp1) ? hidden : 0;
    m.data.assign(param_count(arch, d_in, vocab_size, m.hidden), 0.0);
    if (arch == Arch::mlp1) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(d_in));
      for (int i = 0; i < hidden * d_in; ++i)
        m.data[m.w1_off() + i] = normal(rng);
    }
    return m;
  }

  void check_finite() const {
    if (!all_finite(data))
      throw std::runtime_error("ModelParams: non-finite entry");
  }
};

struct RestrictedDistribution {
  int task_id = 0;
  std::vector<double> probs;
};

namespace detail {

// Hidden activation for mlp1; returns tanh(W1 x + b1).
inline std::vector<double> hidden_activation(const ModelParams& m,
                                             std::span<const double> x) {
  std::vector<double> h(m.hidden);
  for (int j = 0; j < m.hidden; ++j) {
    const double* row = m.data.data() + m.w1_off() +
                        static_cast<std::size_t>(j) * m.d_in;
    double a = m.data[m.b1_off() + j];
    for (int i = 0; i < m.d_in; ++i) a += row[i] * x[i];
    h[j] = std::tanh(a);
  }
  return h;
}

inline double logit_for_token(const ModelParams& m, std::span<const double> x,
                              std::span<const double> h, int tok) {
  if (m.arch == Arch::linear) {
    const double* row =
        m.data.data() + m.w_off() + static_cast<std::size_t>(tok) * m.d_in;
    double z = m.data[m.b_off() + tok];
    for (int i = 0; i < m.d_in; ++i) z += row[i] * x[i];
    return z;
  }
  const double* row =
      m.data.data() + m.w2_off() + static_cast<std::size_t>(tok) * m.hidden;
  double z = m.data[m.b2_off() + tok];
  for (int j = 0; j < m.hidden; ++j) z += row[j] * h[j];
  return z;
}

inline std::vector<double> stable_softmax(std::vector<double> z) {
  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

}  // namespace detail

// Softmax over exactly the task's answer-token logits, max-subtracted.
// Logits outside the token list cannot influence the result.
inline RestrictedDistribution forward(const ModelParams& m,
                                      std::span<const double> x,
                                      const TaskSpec& task) {
  if (static_cast<int>(x.size()) != m.d_in)
    throw std::invalid_argument("forward: feature dimension mismatch");
  for (int tok : task.answer_token_ids)
    if (tok >= m.vocab_size)
      throw std::invalid_argument("forward: answer token outside model vocab");
  std::vector<double> h;
  if (m.arch == Arch::mlp1) h = detail::hidden_activation(m, x);
  std::vector<double> z(task.k);
  for (int j = 0; j < task.k; ++j)
    z[j] = detail::logit_for_token(m, x, h, task.answer_token_ids[j]);
  RestrictedDistribution out;
  out.task_id = task.task_id;
  out.probs = detail::stable_softmax(std::move(z));
  return out;
}

// Accumulates d(loss)/d(params) into grad given upstream d(loss)/d(probs).
// Softmax Jacobian: dz_j = p_j (g_j - sum_l g_l p_l). Non-answer output rows
// stay untouched.
inline void backward_accumulate(const ModelParams& m, std::span<const double> x,
                                const TaskSpec& task,
                                std::span<const double> grad_wrt_probs,
                                std::span<double> grad) {
  if (static_cast<int>(grad_wrt_probs.size()) != task.k)
    throw std::invalid_argument("backward: upstream gradient length mismatch");
  if (grad.size() != m.size())
    throw std::invalid_argument("backward: gradient shape mismatch");
  if (!all_finite(grad_wrt_probs))
    throw std::invalid_argument("backward: non-finite upstream gradient");

  std::vector<double> h;
  if (m.arch == Arch::mlp1) h = detail::hidden_activation(m, x);
  std::vector<double> z(task.k);
  for (int j = 0; j < task.k; ++j)
    z[j] = detail::logit_for_token(m, x, h, task.answer_token_ids[j]);
  const std::vector<double> p = detail::stable_softmax(std::move(z));

  double dot_gp = 0.0;
  for (int j = 0; j < task.k; ++j) dot_gp += grad_wrt_probs[j] * p[j];
  std::vector<double> dz(task.k);
  for (int j = 0; j < task.k; ++j)
    dz[j] = p[j] * (grad_wrt_probs[j] - dot_gp);

  if (m.arch == Arch::linear) {
    for (int j = 0; j < task.k; ++j) {
      const int tok = task.answer_token_ids[j];
      double* wrow = grad.data() + m.w_off() +
                     static_cast<std::size_t>(tok) * m.d_in;
      for (int i = 0; i < m.d_in; ++i) wrow[i] += dz[j] * x[i];
      grad[m.b_off() + tok] += dz[j];
    }
    return;
  }

  std::vector<double> dh(m.hidden, 0.0);
  for (int j = 0; j < task.k; ++j) {
    const int tok = task.answer_token_ids[j];
    const double* w2row =
        m.data.data() + m.w2_off() + static_cast<std::size_t>(tok) * m.hidden;
    double* gw2row =
        grad.data() + m.w2_off() + static_cast<std::size_t>(tok) * m.hidden;
    for (int l = 0; l < m.hidden; ++l) {
      gw2row[l] += dz[j] * h[l];
      dh[l] += dz[j] * w2row[l];
    }
    grad[m.b2_off() + tok] += dz[j];
  }
  for (int l = 0; l < m.hidden; ++l) {
    const double da = dh[l] * (1.0 - h[l] * h[l]);
    double* gw1row =
        grad.data() + m.w1_off() + static_cast<std::size_t>(l) * m.d_in;
    for (int i = 0; i < m.d_in; ++i) gw1row[i] += da * x[i];
    grad[m.b1_off() + l] += da;
  }
}

inline std::vector<double> backward(const ModelParams& m,
                                    std::span<const double> x,
                                    const TaskSpec& task,
                                    std::span<const double> grad_wrt_probs) {
  std::vector<double> grad(m.size(), 0.0);
  backward_accumulate(m, x, task, grad_wrt_probs, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization: "realm-model v1", header attributes, then the
// flat parameter vector, eight values per line, %.17g for exact round-trip.
// ---------------------------------------------------------------------------

inline void write_model(const ModelParams& m, std::ostream& os) {
  os << "realm-model v1\n";
  os << "[model] arch=" << to_string(m.arch) << " d_in=" << m.d_in
     << " vocab=" << m.vocab_size << " hidden=" << m.hidden
     << " count=" << m.data.size() << "\n";
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    os << detail::fmt_double(m.data[i]);
    os << ((i % 8 == 7 || i + 1 == m.data.size()) ? '\n' : ' ');
  }
}

inline std::size_t param_count_of(const ModelParams& m) {
  return ModelParams::param_count(m.arch, m.d_in, m.vocab_size, m.hidden);
}

inline ModelParams read_model(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "realm-model v1")
    throw std::runtime_error("read_model: bad magic");
  if (!std::getline(is, line))
    throw std::runtime_error("read_model: missing header");
  const auto fields = detail::split(line, ' ');
  ModelParams m;
  const std::string arch = detail::header_attr(fields, "arch", 2);
  if (arch == "linear")
    m.arch = Arch::linear;
  else if (arch == "mlp1")
    m.arch = Arch::mlp1;
  else
    throw std::runtime_error("read_model: unknown arch '" + arch + "'");
  m.d_in = detail::parse_int(detail::header_attr(fields, "d_in", 2), 2);
  m.vocab_size =
      detail::parse_int(detail::header_attr(fields, "vocab", 2), 2);
  m.hidden = detail::parse_int(detail::header_attr(fields, "hidden", 2), 2);
  const int count =
      detail::parse_int(detail::header_attr(fields, "count", 2), 2);
  if (static_cast<std::size_t>(count) !=
      param_count_of(m))
    throw std::runtime_error("read_model: count does not match shape");
  m.data.resize(count);
  for (int i = 0; i < count; ++i)
    if (!(is >> m.data[i]))
      throw std::runtime_error("read_model: truncated parameter block");
  m.check_finite();
  return m;
}

inline std::string model_to_string(const ModelParams& m) {
  std::ostringstream os;
  write_model(m, os);
  return os.str();
}

inline ModelParams model_from_string(const std::string& s) {
  std::istringstream is(s);
  return read_model(is);
}

}  // namespace realm
