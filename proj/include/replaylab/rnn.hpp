// Noisy leaky recurrent network
//   f(r, u, xi) = kappa r + phi(W_r r + W_in u + xi)
// together with the post-training replay modifiers: adaptation c (strength
// b_a, timescale tau_a) and momentum v (friction lambda_v), discretized as
//   dr~ = f(r, u, xi) - r
//   c+  = c + (-c + b_a r) / tau_a
//   v+  = (1 - lambda_v) v + dr~
//   r+  = r - c + v+
#pragma once

#include "score_oracle.hpp"
#include "stochastic_processes.hpp"

#include <cmath>
#include <string>

namespace replaylab {

// =============================================================================
// Activations
// =============================================================================

enum class ActivationKind { relu, leaky_relu, tanh, linear };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double slope = 0.01;  // negative-side slope of leaky_relu

  double apply(double x) const {
    switch (kind) {
      case ActivationKind::relu: return x > 0.0 ? x : 0.0;
      case ActivationKind::leaky_relu: return x > 0.0 ? x : slope * x;
      case ActivationKind::tanh: return std::tanh(x);
      case ActivationKind::linear: return x;
    }
    return x;
  }

  double derivative(double x) const {
    switch (kind) {
      case ActivationKind::relu: return x > 0.0 ? 1.0 : 0.0;
      case ActivationKind::leaky_relu: return x > 0.0 ? 1.0 : slope;
      case ActivationKind::tanh: {
        const double y = std::tanh(x);
        return 1.0 - y * y;
      }
      case ActivationKind::linear: return 1.0;
    }
    return 1.0;
  }

  template <typename Derived>
  auto operator()(const Eigen::MatrixBase<Derived>& x) const {
    return x.unaryExpr([this](double v) { return apply(v); });
  }

  std::string name() const {
    switch (kind) {
      case ActivationKind::relu: return "relu";
      case ActivationKind::leaky_relu: return "leaky_relu(" + shortest(slope) + ")";
      case ActivationKind::tanh: return "tanh";
      case ActivationKind::linear: return "linear";
    }
    return "?";
  }

  static Activation parse(const std::string& text) {
    if (text == "relu") return {ActivationKind::relu, 0.01};
    if (text == "tanh") return {ActivationKind::tanh, 0.01};
    if (text == "linear") return {ActivationKind::linear, 0.01};
    if (text == "leaky_relu") return {ActivationKind::leaky_relu, 0.01};
    const std::string prefix = "leaky_relu(";
    if (text.rfind(prefix, 0) == 0 && text.back() == ')') {
      const std::string inner =
          text.substr(prefix.size(), text.size() - prefix.size() - 1);
      double slope = 0.0;
      auto [ptr, ec] =
          std::from_chars(inner.data(), inner.data() + inner.size(), slope);
      if (ec == std::errc{} && ptr == inner.data() + inner.size())
        return {ActivationKind::leaky_relu, slope};
    }
    throw Error(ErrorKind::parameter, "unknown activation '" + text + "'");
  }
};

// =============================================================================
// Parameters and state
// =============================================================================

struct RnnParams {
  Mat w_rec;  // n x n
  Mat w_in;   // n x m
  Mat d_out;  // d x n
  double kappa = 0.5;
  double sigma_r = 0.1;
  Activation activation{};
  bool leak_enabled = true;

  Eigen::Index hidden() const { return w_rec.rows(); }
  Eigen::Index inputs() const { return w_in.cols(); }
  Eigen::Index outputs() const { return d_out.rows(); }

  /// Leakage coefficient actually applied (0 when leak is disabled).
  double effective_kappa() const { return leak_enabled ? kappa : 0.0; }

  void validate() const {
    const Eigen::Index n = w_rec.rows();
    require(n >= 1 && w_rec.cols() == n, ErrorKind::shape, "W_r must be n x n");
    require(w_in.rows() == n, ErrorKind::shape, "W_in must have n rows");
    require(d_out.cols() == n && d_out.rows() >= 1, ErrorKind::shape,
            "D must be d x n");
    require(kappa >= 0.0 && kappa <= 1.0, ErrorKind::parameter,
            "kappa must lie in [0, 1]");
    require(sigma_r >= 0.0 && std::isfinite(sigma_r), ErrorKind::parameter,
            "sigma_r must be finite and >= 0");
    require(w_rec.allFinite() && w_in.allFinite() && d_out.allFinite(),
            ErrorKind::parameter, "weights must be finite");
  }
};

struct InitOptions {
  double kappa = 0.5;
  double recurrent_gain = 0.5;  // W_r ~ N(0, gain^2 / n)
  double input_gain = 1.0;      // W_in ~ N(0, gain^2 / m)
  double output_gain = 1.0;     // D ~ N(0, gain^2 / n)
};

inline RnnParams init_params(Eigen::Index n, Eigen::Index m, Eigen::Index d,
                             Activation activation, double sigma_r,
                             bool leak_enabled, std::uint64_t seed,
                             const InitOptions& opts = {}) {
  require(n >= 1 && m >= 1 && d >= 1, ErrorKind::parameter,
          "network dimensions must be >= 1");
  Rng rng = make_rng(seed, 7);
  auto gaussian = [&rng](Eigen::Index rows, Eigen::Index cols, double std) {
    std::normal_distribution<double> normal(0.0, std);
    Mat out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
    return out;
  };
  RnnParams p;
  p.w_rec = gaussian(n, n, opts.recurrent_gain / std::sqrt(double(n)));
  p.w_in = gaussian(n, m, opts.input_gain / std::sqrt(double(m)));
  p.d_out = gaussian(d, n, opts.output_gain / std::sqrt(double(n)));
  p.kappa = leak_enabled ? opts.kappa : 0.0;
  p.sigma_r = sigma_r;
  p.activation = activation;
  p.leak_enabled = leak_enabled;
  return p;
}

/// Where the pre-scaled noise vector enters the update.
enum class NoiseMode {
  inside_activation,  // f = kappa r + phi(W_r r + W_in u + xi)
  additive,           // f = kappa r + phi(W_r r + W_in u) + xi
};

struct DynamicsConfig {
  double b_a = 0.0;
  double tau_a = 100.0;
  double lambda_v = 1.0;
  NoiseMode noise_mode = NoiseMode::inside_activation;
  bool sqrt2_noise = false;

  void validate() const {
    require(b_a >= 0.0 && std::isfinite(b_a), ErrorKind::parameter,
            "b_a must be >= 0");
    require(tau_a > 0.0 && std::isfinite(tau_a), ErrorKind::parameter,
            "tau_a must be > 0");
    require(lambda_v >= 0.0 && lambda_v <= 1.0, ErrorKind::parameter,
            "lambda_v must lie in [0, 1]");
  }
};

struct NetState {
  Vec r;
  Vec c;
  Vec v;

  static NetState at(Vec r) {
    const Eigen::Index n = r.size();
    return {std::move(r), Vec::Zero(n), Vec::Zero(n)};
  }
};

// =============================================================================
// Dynamics
// =============================================================================

/// Applies the adaptation / momentum pipeline to a proposed next state `f`.
/// r+ is evaluated as f + ((1 - lambda_v) v - c), which equals r - c + v+ and
/// reproduces f bit for bit when lambda_v = 1 and c = 0.
inline NetState apply_modifiers(const NetState& state, const Vec& f,
                                const DynamicsConfig& cfg) {
  NetState next;
  const Vec carried = (1.0 - cfg.lambda_v) * state.v;
  next.c = state.c + (-state.c + cfg.b_a * state.r) / cfg.tau_a;
  next.v = carried + (f - state.r);
  next.r = f + (carried - state.c);
  return next;
}

/// f(r, u, noise) under the given noise placement. `input` may be null.
inline Vec recurrent_map(const RnnParams& params, const Vec& r, const Vec* input,
                         const Vec& noise, NoiseMode mode) {
  Vec pre = params.w_rec * r;
  if (input) pre += params.w_in * *input;
  if (mode == NoiseMode::inside_activation) pre += noise;
  Vec f = params.activation(pre);
  if (params.leak_enabled) f += params.kappa * r;
  if (mode == NoiseMode::additive) f += noise;
  return f;
}

inline NetState step(const RnnParams& params, const NetState& state,
                     const Vec* input, const Vec& noise,
                     const DynamicsConfig& cfg) {
  const Eigen::Index n = params.hidden();
  require(state.r.size() == n && state.c.size() == n && state.v.size() == n,
          ErrorKind::shape, "state does not match hidden dimension");
  require(noise.size() == n, ErrorKind::shape, "noise must have n entries");
  require(!input || input->size() == params.inputs(), ErrorKind::shape,
          "input does not match W_in");
  return apply_modifiers(state, recurrent_map(params, state.r, input, noise,
                                              cfg.noise_mode),
                         cfg);
}

struct Rollout {
  Mat hidden;   // T x n, row t = r(t), row 0 = initial state
  Mat decoded;  // T x d
};

inline constexpr double kDivergenceNorm = 1e6;

inline double noise_scale(double sigma, const DynamicsConfig& cfg) {
  return cfg.sqrt2_noise ? std::sqrt(2.0) * sigma : sigma;
}

/// Runs T - 1 steps from `init` with fresh N(0, sigma_r^2) noise per step.
/// Input row t drives the transition r(t) -> r(t + 1).
inline Rollout rollout(const RnnParams& params, const NetState& init,
                       const Mat* inputs, int horizon,
                       const DynamicsConfig& cfg, std::uint64_t seed) {
  params.validate();
  cfg.validate();
  require(horizon >= 1, ErrorKind::parameter, "horizon must be >= 1");
  require(!inputs || (inputs->rows() >= horizon &&
                      inputs->cols() == params.inputs()),
          ErrorKind::shape, "inputs must be at least T x m");
  const Eigen::Index n = params.hidden();
  Rng rng = make_rng(seed, 11);
  const double sigma = noise_scale(params.sigma_r, cfg);

  Rollout out{Mat(horizon, n), Mat()};
  NetState state = init;
  out.hidden.row(0) = state.r.transpose();
  for (int t = 1; t < horizon; ++t) {
    const Vec noise = sigma * standard_normal(n, rng);
    if (inputs) {
      const Vec u = inputs->row(t - 1).transpose();
      state = step(params, state, &u, noise, cfg);
    } else {
      state = step(params, state, nullptr, noise, cfg);
    }
    if (!state.r.allFinite() || state.r.norm() > kDivergenceNorm)
      throw Error(ErrorKind::divergence,
                  "hidden state diverged at step " + std::to_string(t), t);
    out.hidden.row(t) = state.r.transpose();
  }
  out.decoded = out.hidden * params.d_out.transpose();
  return out;
}

// =============================================================================
// Hidden state initialization
// =============================================================================

/// Throws a rank error unless D has full row rank.
inline void require_full_row_rank(const Mat& d_out) {
  Eigen::JacobiSVD<Mat> svd(d_out);
  const Vec& sv = svd.singularValues();
  const double cutoff = 1e-12 * (sv.size() ? sv.maxCoeff() : 0.0);
  const auto rank = (sv.array() > cutoff).count();
  require(rank == d_out.rows() && sv.size() > 0 && sv.maxCoeff() > 0.0,
          ErrorKind::rank, "output map D must have full row rank");
}

/// Fixed per-(seed, direction) random vector projected onto the null space of
/// D and scaled to `norm`.
inline Vec direction_tag(const RnnParams& params, int direction_id,
                         std::uint64_t tag_seed, double norm) {
  const Eigen::Index n = params.hidden();
  Rng rng = make_rng(tag_seed, 1000 + static_cast<std::uint64_t>(direction_id));
  const Vec raw = standard_normal(n, rng);
  const Mat pinv = pseudo_inverse(params.d_out);
  const Vec tag = raw - pinv * (params.d_out * raw);
  const double len = tag.norm();
  if (len < 1e-300) return Vec::Zero(n);
  return tag * (norm / len);
}

inline constexpr std::uint64_t kDefaultTagSeed = 0x7a6;

/// r(0) = D+ s0 + tag(direction), c = v = 0. A negative direction id means
/// no tag; then D need not have full row rank and r(0) is the least-squares
/// preimage of s0.
inline NetState init_hidden_at(const Vec& s0, int direction_id,
                               const RnnParams& params, std::uint64_t tag_seed,
                               double tag_norm) {
  if (direction_id >= 0) require_full_row_rank(params.d_out);
  require(s0.size() == params.outputs(), ErrorKind::shape,
          "start state does not match output dimension");
  Vec r = pseudo_inverse(params.d_out) * s0;
  if (direction_id >= 0) r += direction_tag(params, direction_id, tag_seed, tag_norm);
  return NetState::at(std::move(r));
}

/// Default tag norm: half the largest hidden-space norm of an environment
/// endpoint, ||D+ e||.
inline double default_tag_norm(const EnvironmentSpec& env,
                               const RnnParams& params) {
  const Mat pinv = pseudo_inverse(params.d_out);
  double best = 0.0;
  for (const auto& e : env.endpoints) best = std::max(best, (pinv * e).norm());
  return 0.5 * best;
}

inline NetState init_hidden(const EnvironmentSpec& env, int direction_id,
                            const RnnParams& params,
                            std::uint64_t tag_seed = kDefaultTagSeed,
                            std::optional<double> tag_norm = std::nullopt) {
  const auto dirs = directions(env);
  require(direction_id >= 0 && direction_id < static_cast<int>(dirs.size()),
          ErrorKind::parameter, "unknown direction id");
  const Vec& start =
      env.endpoints[static_cast<std::size_t>(dirs[direction_id].start)];
  return init_hidden_at(start, direction_id, params, tag_seed,
                        tag_norm.value_or(default_tag_norm(env, params)));
}

// =============================================================================
// Analytic OU replay
// =============================================================================

/// Replay of the optimal scalar path integrator of an OU process: the drift is
/// the closed-form OU score with sigma_r^2 dt, the modifiers are applied as in
/// the network update and the noise sigma_r sqrt(dt) eta is added to f.
/// r(0) ~ N(0, sigma_0^2 + sigma_r^2 dt).
inline std::vector<Trajectory> analytic_ou_replay(const OuParams& params,
                                                  double sigma_r,
                                                  const DynamicsConfig& cfg,
                                                  int n, int horizon,
                                                  std::uint64_t seed) {
  params.validate();
  cfg.validate();
  require(params.dim() == 1, ErrorKind::shape, "analytic replay is scalar");
  require(sigma_r > 0.0, ErrorKind::parameter, "sigma_r must be > 0");
  require(n >= 1 && horizon >= 1, ErrorKind::parameter, "n, T must be >= 1");
  const double s2dt = sigma_r * sigma_r * params.dt;
  const double noise_std = noise_scale(sigma_r * std::sqrt(params.dt), cfg);
  const double init_std =
      std::sqrt(params.sigma_0 * params.sigma_0 + s2dt);
  Rng rng = make_rng(seed, 21);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Mat states(horizon, 1);
    NetState state = NetState::at(Vec::Constant(1, init_std * normal(rng)));
    states(0, 0) = state.r[0];
    for (int t = 1; t < horizon; ++t) {
      const double r = state.r[0];
      const double time = static_cast<double>(t - 1) * params.dt;
      const Vec f = Vec::Constant(
          1, r + ou_score(r, time, params, s2dt) + noise_std * normal(rng));
      state = apply_modifiers(state, f, cfg);
      states(t, 0) = state.r[0];
    }
    out.push_back({std::move(states), params.dt, 0});
  }
  return out;
}

}  // namespace replaylab
