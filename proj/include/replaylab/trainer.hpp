// Path-integration training: masked inputs, MSE loss, backprop through time
// over the noisy recurrence and an Adam optimizer with global-norm clipping.
#pragma once

#include "rnn.hpp"

#include <algorithm>
#include <ostream>
#include <vector>

namespace replaylab {

// =============================================================================
// Masking and loss
// =============================================================================

/// Keeps row t iff t mod k == 0, zeroes the rest.
inline Mat mask_inputs(const Mat& u, int k) {
  require(k >= 1, ErrorKind::parameter, "mask difficulty k must be >= 1");
  Mat out = u;
  for (Eigen::Index t = 0; t < out.rows(); ++t)
    if (t % k != 0) out.row(t).setZero();
  return out;
}

/// Mean over time and dimensions of the squared decoding error.
inline double loss(const Mat& decoded, const Mat& target) {
  require(decoded.rows() == target.rows() && decoded.cols() == target.cols(),
          ErrorKind::shape, "decoded and target shapes differ");
  require(decoded.size() > 0, ErrorKind::shape, "empty loss input");
  return (decoded - target).squaredNorm() / static_cast<double>(decoded.size());
}

// =============================================================================
// Backprop through time
// =============================================================================

struct TrainSample {
  Mat inputs;   // T x m (already masked)
  Mat targets;  // T x d
  Vec init;     // n
};

struct Gradients {
  Mat w_rec;
  Mat w_in;
  Mat d_out;
  double kappa = 0.0;
  double loss = 0.0;

  double squared_norm() const {
    return w_rec.squaredNorm() + w_in.squaredNorm() + d_out.squaredNorm() +
           kappa * kappa;
  }
};

/// Zeroes a kappa gradient that would push kappa outside [0, 1] under a
/// descent step.
inline double project_kappa_gradient(double kappa, double grad) {
  if (kappa <= 0.0 && grad > 0.0) return 0.0;
  if (kappa >= 1.0 && grad < 0.0) return 0.0;
  return grad;
}

namespace detail {

// Noise for sample b is drawn from its own stream: for each transition t,
// n standard normals, scaled by sigma_r.
inline std::vector<Mat> batch_noise(const RnnParams& params, std::size_t batch,
                                    Eigen::Index horizon,
                                    std::uint64_t noise_seed) {
  const Eigen::Index n = params.hidden();
  std::vector<Mat> noise(static_cast<std::size_t>(std::max<Eigen::Index>(horizon - 1, 0)),
                         Mat(n, static_cast<Eigen::Index>(batch)));
  for (std::size_t b = 0; b < batch; ++b) {
    Rng rng = make_rng(noise_seed, b);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& step : noise)
      for (Eigen::Index i = 0; i < n; ++i)
        step(i, static_cast<Eigen::Index>(b)) = params.sigma_r * normal(rng);
  }
  return noise;
}

}  // namespace detail

/// Exact reverse-mode gradients of the mean batch loss with respect to W_r,
/// W_in, D and kappa, with the noise held fixed (pathwise gradients). The
/// initial states are treated as constants.
inline Gradients bptt_grads(const RnnParams& params,
                            const std::vector<TrainSample>& batch,
                            std::uint64_t noise_seed) {
  params.validate();
  require(!batch.empty(), ErrorKind::parameter, "batch must be non-empty");
  const Eigen::Index n = params.hidden();
  const Eigen::Index m = params.inputs();
  const Eigen::Index d = params.outputs();
  const Eigen::Index horizon = batch.front().targets.rows();
  const auto bsz = static_cast<Eigen::Index>(batch.size());
  for (const auto& s : batch) {
    require(s.targets.rows() == horizon && s.targets.cols() == d,
            ErrorKind::shape, "all targets must be T x d with equal T");
    require(s.inputs.rows() >= horizon - 1 && s.inputs.cols() == m,
            ErrorKind::shape, "inputs must be at least (T-1) x m");
    require(s.init.size() == n, ErrorKind::shape, "init must have n entries");
  }
  require(horizon >= 1, ErrorKind::shape, "targets need at least one row");

  const auto steps = static_cast<std::size_t>(horizon);
  std::vector<Mat> hidden(steps, Mat(n, bsz));
  std::vector<Mat> pre(steps > 0 ? steps - 1 : 0, Mat(n, bsz));
  std::vector<Mat> in(steps > 0 ? steps - 1 : 0, Mat(m, bsz));
  std::vector<Mat> target(steps, Mat(d, bsz));
  for (Eigen::Index b = 0; b < bsz; ++b) {
    const auto& s = batch[static_cast<std::size_t>(b)];
    hidden[0].col(b) = s.init;
    for (std::size_t t = 0; t < steps; ++t) {
      target[t].col(b) = s.targets.row(static_cast<Eigen::Index>(t)).transpose();
      if (t + 1 < steps)
        in[t].col(b) = s.inputs.row(static_cast<Eigen::Index>(t)).transpose();
    }
  }
  const std::vector<Mat> noise = detail::batch_noise(params, batch.size(), horizon, noise_seed);
  const double kappa = params.effective_kappa();

  for (std::size_t t = 0; t + 1 < steps; ++t) {
    pre[t].noalias() = params.w_rec * hidden[t];
    pre[t].noalias() += params.w_in * in[t];
    pre[t] += noise[t];
    hidden[t + 1] = params.activation(pre[t]);
    if (params.leak_enabled) hidden[t + 1] += kappa * hidden[t];
  }

  Gradients g{Mat::Zero(n, n), Mat::Zero(n, m), Mat::Zero(d, n), 0.0, 0.0};
  const double scale = 1.0 / static_cast<double>(horizon * d * bsz);
  Mat carry = Mat::Zero(n, bsz);  // dL/dr(t) flowing back from t + 1
  Mat err(d, bsz), dpre(n, bsz);
  for (std::size_t tt = steps; tt-- > 0;) {
    err.noalias() = params.d_out * hidden[tt];
    err -= target[tt];
    g.loss += err.squaredNorm() * scale;
    err *= 2.0 * scale;
    g.d_out.noalias() += err * hidden[tt].transpose();
    carry.noalias() += params.d_out.transpose() * err;
    if (tt == 0) break;
    const Mat& p = pre[tt - 1];
    dpre = carry.cwiseProduct(
        p.unaryExpr([&params](double x) { return params.activation.derivative(x); }));
    g.w_rec.noalias() += dpre * hidden[tt - 1].transpose();
    g.w_in.noalias() += dpre * in[tt - 1].transpose();
    if (params.leak_enabled) g.kappa += carry.cwiseProduct(hidden[tt - 1]).sum();
    Mat prev = params.w_rec.transpose() * dpre;
    if (params.leak_enabled) prev += kappa * carry;
    carry = std::move(prev);
  }
  if (!std::isfinite(g.loss) || !std::isfinite(g.squared_norm()))
    throw Error(ErrorKind::divergence, "non-finite gradients");
  return g;
}

// =============================================================================
// Optimizer
// =============================================================================

/// Adam with bias correction.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double learning_rate, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(RnnParams& params, const Gradients& g) {
    if (steps_ == 0) {
      m_ = {Mat::Zero(g.w_rec.rows(), g.w_rec.cols()),
            Mat::Zero(g.w_in.rows(), g.w_in.cols()),
            Mat::Zero(g.d_out.rows(), g.d_out.cols()), 0.0, 0.0};
      v_ = m_;
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    update(params.w_rec, g.w_rec, m_.w_rec, v_.w_rec, c1, c2);
    update(params.w_in, g.w_in, m_.w_in, v_.w_in, c1, c2);
    update(params.d_out, g.d_out, m_.d_out, v_.d_out, c1, c2);
    if (params.leak_enabled) {
      m_.kappa = beta1_ * m_.kappa + (1.0 - beta1_) * g.kappa;
      v_.kappa = beta2_ * v_.kappa + (1.0 - beta2_) * g.kappa * g.kappa;
      params.kappa -= lr_ * (m_.kappa / c1) / (std::sqrt(v_.kappa / c2) + eps_);
      params.kappa = std::clamp(params.kappa, 0.0, 1.0);
    }
  }

 private:
  void update(Mat& w, const Mat& g, Mat& m, Mat& v, double c1, double c2) const {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseAbs2();
    w.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }

  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  Gradients m_, v_;
};

/// Rescales the gradient so its global norm is at most `max_norm`.
inline void clip_gradients(Gradients& g, double max_norm) {
  const double norm = std::sqrt(g.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    g.w_rec *= s;
    g.w_in *= s;
    g.d_out *= s;
    g.kappa *= s;
  }
}

// =============================================================================
// Training loop
// =============================================================================

struct CurriculumStage {
  int k = 1;
  int epochs = 1;
};

struct TrainConfig {
  std::vector<CurriculumStage> curriculum{{1, 100}};
  int batch_size = 64;
  double learning_rate = 1e-3;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(!curriculum.empty(), ErrorKind::parameter, "empty curriculum");
    for (const auto& s : curriculum)
      require(s.k >= 1 && s.epochs >= 1, ErrorKind::parameter,
              "curriculum stages need k >= 1 and epochs >= 1");
    require(batch_size >= 1, ErrorKind::parameter, "batch_size must be >= 1");
    require(learning_rate > 0.0, ErrorKind::parameter, "learning rate must be > 0");
    require(grad_clip >= 0.0, ErrorKind::parameter, "grad_clip must be >= 0");
  }
};

/// Scales every stage's epoch count by `factor` (at least one epoch each).
inline std::vector<CurriculumStage> scale_curriculum(
    std::vector<CurriculumStage> stages, double factor) {
  require(factor > 0.0, ErrorKind::parameter, "epoch factor must be > 0");
  for (auto& s : stages)
    s.epochs = std::max(1, static_cast<int>(std::lround(s.epochs * factor)));
  return stages;
}

/// Paths to integrate: unmasked inputs, targets, the direction tag of each
/// path (-1 for none) and the anchor points that set the tag norm.
struct TrainingSet {
  std::vector<Mat> inputs;
  std::vector<Mat> targets;
  std::vector<int> directions;
  std::vector<Vec> anchors;

  std::size_t size() const { return targets.size(); }
};

inline TrainingSet make_training_set(const std::vector<Trajectory>& paths,
                                     const std::vector<Vec>& anchors) {
  TrainingSet set;
  for (const auto& p : paths) {
    set.inputs.push_back(velocities(p));
    set.targets.push_back(p.states);
    set.directions.push_back(p.label.value_or(-1));
  }
  set.anchors = anchors;
  return set;
}

inline double tag_norm_for(const RnnParams& params, const std::vector<Vec>& anchors) {
  const Mat pinv = pseudo_inverse(params.d_out);
  double best = 0.0;
  for (const auto& a : anchors) best = std::max(best, (pinv * a).norm());
  return 0.5 * best;
}

inline TrainSample make_sample(const RnnParams& params, const TrainingSet& set,
                               std::size_t index, int k, double tag_norm) {
  const Mat& target = set.targets[index];
  const NetState init =
      init_hidden_at(target.row(0).transpose(), set.directions[index], params,
                     kDefaultTagSeed, tag_norm);
  return {mask_inputs(set.inputs[index], k), target, init.r};
}

struct LossLog {
  std::vector<double> loss;
  std::vector<int> k;
  std::vector<std::size_t> stage_starts;

  void write_csv(std::ostream& os) const {
    os << "epoch,k,loss\n";
    for (std::size_t e = 0; e < loss.size(); ++e)
      os << e << ',' << k[e] << ',' << sig17(loss[e]) << '\n';
  }

  /// Mean loss over the last `count` epochs of the final stage.
  double final_mean(std::size_t count = 50) const {
    const std::size_t begin = stage_starts.empty() ? 0 : stage_starts.back();
    const std::size_t from = std::max(begin, loss.size() - std::min(count, loss.size()));
    double sum = 0.0;
    for (std::size_t e = from; e < loss.size(); ++e) sum += loss[e];
    return sum / static_cast<double>(loss.size() - from);
  }
};

/// Mean loss of `params` over the whole set with masking k and a fixed noise
/// seed.
inline double evaluate_loss(const RnnParams& params, const TrainingSet& set,
                            int k, std::uint64_t noise_seed) {
  const double tag_norm = tag_norm_for(params, set.anchors);
  std::vector<TrainSample> batch;
  for (std::size_t i = 0; i < set.size(); ++i)
    batch.push_back(make_sample(params, set, i, k, tag_norm));
  return bptt_grads(params, batch, noise_seed).loss;
}

struct TrainResult {
  RnnParams params;
  LossLog log;
};

/// Runs the curriculum; one epoch is one optimizer step on a minibatch drawn
/// uniformly (with replacement) from the training set.
inline TrainResult train(const TrainingSet& set, RnnParams params,
                         const TrainConfig& cfg) {
  cfg.validate();
  params.validate();
  require(set.size() >= 1, ErrorKind::parameter, "training set is empty");
  Rng rng = make_rng(cfg.seed, 31);
  std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
  AdamOptimizer adam(cfg.learning_rate);
  LossLog log;
  long epoch = 0;
  for (const auto& stage : cfg.curriculum) {
    log.stage_starts.push_back(log.loss.size());
    for (int e = 0; e < stage.epochs; ++e, ++epoch) {
      const double tag_norm = tag_norm_for(params, set.anchors);
      std::vector<TrainSample> batch;
      batch.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (int b = 0; b < cfg.batch_size; ++b)
        batch.push_back(make_sample(params, set, pick(rng), stage.k, tag_norm));
      Gradients g;
      try {
        g = bptt_grads(params, batch,
                       cfg.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(epoch));
      } catch (const Error&) {
        throw Error(ErrorKind::training_diverged,
                    "training diverged at epoch " + std::to_string(epoch), epoch);
      }
      if (!std::isfinite(g.loss))
        throw Error(ErrorKind::training_diverged,
                    "training diverged at epoch " + std::to_string(epoch), epoch);
      log.loss.push_back(g.loss);
      log.k.push_back(stage.k);
      if (params.leak_enabled) g.kappa = project_kappa_gradient(params.kappa, g.kappa);
      clip_gradients(g, cfg.grad_clip);
      adam.step(params, g);
    }
  }
  return {std::move(params), std::move(log)};
}

}  // namespace replaylab
