// Fast self-checks run by `replaylab verify`: closed-form scores, gradients,
// the modifier reduction, the second-order adaptation form, decoding and
// transport metrics, each against an independent numerical reference.
#pragma once

#include "metrics.hpp"
#include "place_field.hpp"
#include "replay.hpp"
#include "trainer.hpp"

#include <functional>

namespace replaylab {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline Mat random_psd(Eigen::Index n, Rng& rng) {
  const Mat a = Eigen::Map<const Mat>(standard_normal(n * n, rng).data(), n, n);
  return a * a.transpose() / static_cast<double>(n);
}

inline double log_gaussian(const Vec& x, const Vec& mean, const Mat& cov) {
  const Eigen::LLT<Mat> llt(cov);
  const Vec z = llt.matrixL().solve(x - mean);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (z.squaredNorm() + logdet +
                 static_cast<double>(x.size()) * std::log(2.0 * M_PI));
}

}  // namespace detail

inline CheckResult check_leakage_spectrum(std::uint64_t seed) {
  Rng rng = make_rng(seed, 901);
  double worst_lo = 1.0, worst_hi = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index d = 1 + trial % 4, n = d + trial % 5;
    const Mat dmat = Eigen::Map<const Mat>(standard_normal(d * n, rng).data(), d, n);
    const GaussianMoments g = GaussianMoments::stationary(Vec::Zero(d), detail::random_psd(d, rng));
    const ScoreContext ctx = ScoreContext::from_output_map(dmat, 0.05);
    const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(leakage_matrix(0.0, g, ctx)).eigenvalues();
    worst_lo = std::min(worst_lo, ev.minCoeff());
    worst_hi = std::max(worst_hi, ev.maxCoeff());
  }
  const bool ok = worst_lo > 0.0 && worst_hi <= 1.0 + 1e-10;
  return {"leakage spectrum in (0, 1]", ok,
          "min " + shortest(worst_lo) + ", max " + shortest(worst_hi)};
}

inline CheckResult check_gaussian_score(std::uint64_t seed) {
  Rng rng = make_rng(seed, 902);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 3, n = 3;
    const Mat dmat = Mat::Identity(d, n) + 0.3 * Eigen::Map<const Mat>(standard_normal(9, rng).data(), 3, 3);
    const Vec mu = standard_normal(d, rng);
    const Mat cov = detail::random_psd(d, rng);
    const ScoreContext ctx = ScoreContext::from_output_map(dmat, 0.1);
    const GaussianMoments g = GaussianMoments::stationary(mu, cov);
    const Vec r = standard_normal(n, rng);
    const Vec mean = ctx.d_pinv * mu;
    const Mat c = ctx.sigma_r2_dt * Mat::Identity(n, n) +
                  ctx.d_pinv * cov * ctx.d_pinv.transpose();
    const Vec analytic = gaussian_score(r, 0.0, g, ctx);
    Vec fd(n);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < n; ++i) {
      Vec rp = r, rm = r;
      rp[i] += h;
      rm[i] -= h;
      fd[i] = ctx.sigma_r2_dt *
              (detail::log_gaussian(rp, mean, c) - detail::log_gaussian(rm, mean, c)) / (2 * h);
    }
    worst = std::max(worst, (analytic - fd).norm() / std::max(1e-12, fd.norm()));
  }
  return {"gaussian score vs log-density differences", worst < 1e-6,
          "max relative error " + shortest(worst)};
}

inline CheckResult check_bptt(std::uint64_t seed) {
  double worst = 0.0;
  const ActivationKind kinds[] = {ActivationKind::relu, ActivationKind::leaky_relu,
                                  ActivationKind::tanh, ActivationKind::linear};
  for (ActivationKind kind : kinds) {
    RnnParams p = init_params(5, 2, 2, Activation{kind, 0.1}, 0.05, true, seed + 3,
                              InitOptions{0.4, 0.8, 1.0, 1.0});
    Rng rng = make_rng(seed, 903);
    std::vector<TrainSample> batch;
    for (int b = 0; b < 2; ++b)
      batch.push_back({Eigen::Map<const Mat>(standard_normal(12, rng).data(), 6, 2),
                       Eigen::Map<const Mat>(standard_normal(12, rng).data(), 6, 2),
                       standard_normal(5, rng)});
    const Gradients g = bptt_grads(p, batch, 17);
    auto loss_at = [&](const RnnParams& q) { return bptt_grads(q, batch, 17).loss; };
    auto compare = [&](Mat& w, const Mat& grad) {
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double keep = w.data()[i];
        w.data()[i] = keep + 1e-5;
        const double up = loss_at(p);
        w.data()[i] = keep - 1e-5;
        const double down = loss_at(p);
        w.data()[i] = keep;
        const double fd = (up - down) / 2e-5;
        worst = std::max(worst, std::abs(fd - grad.data()[i]) /
                                    std::max(1e-6, std::abs(fd) + std::abs(grad.data()[i])));
      }
    };
    compare(p.w_rec, g.w_rec);
    compare(p.w_in, g.w_in);
    compare(p.d_out, g.d_out);
  }
  return {"backprop through time vs finite differences", worst < 1e-4,
          "max relative error " + shortest(worst)};
}

inline CheckResult check_modifier_reduction(std::uint64_t seed) {
  bool identical = true;
  for (int trial = 0; trial < 10 && identical; ++trial) {
    const RnnParams p = init_params(6, 2, 2, Activation{ActivationKind::leaky_relu, 0.01},
                                    0.1, true, seed + static_cast<std::uint64_t>(trial));
    Rng rng = make_rng(seed, 904 + static_cast<std::uint64_t>(trial));
    const NetState init = NetState::at(standard_normal(6, rng));
    const Rollout ro = rollout(p, init, nullptr, 30, DynamicsConfig{}, 5);
    Rng noise_rng = make_rng(5, 11);
    Vec r = init.r;
    for (int t = 1; t < 30 && identical; ++t) {
      const Vec noise = p.sigma_r * standard_normal(6, noise_rng);
      r = (p.kappa * r + p.activation(p.w_rec * r + noise)).eval();
      identical = (ro.hidden.row(t).transpose().array() == r.array()).all();
    }
  }
  return {"modifier-free replay equals the plain recurrence", identical,
          identical ? "bitwise identical" : "mismatch"};
}

inline CheckResult check_adaptation_order() {
  const GaussianMoments g = GaussianMoments::stationary(Vec::Zero(1), Mat::Identity(1, 1));
  DynamicsConfig cfg;
  cfg.b_a = 0.5;
  cfg.tau_a = 10.0;
  const double r1 = adaptation_second_order_residual(g, 1.0, cfg, 1e-2, 5.0, 1);
  const double r2 = adaptation_second_order_residual(g, 1.0, cfg, 5e-3, 5.0, 1);
  const double r3 = adaptation_second_order_residual(g, 1.0, cfg, 2.5e-3, 5.0, 1);
  const double a = r1 / r2, b = r2 / r3;
  const bool ok = a >= 1.5 && a <= 2.5 && b >= 1.5 && b <= 2.5;
  return {"adapted flow matches its second-order form at first order", ok,
          "ratios " + shortest(a) + ", " + shortest(b)};
}

inline CheckResult check_place_round_trip(std::uint64_t seed) {
  const auto box = EnvironmentSpec::box_env(Eigen::Vector2d(-0.5, -0.5), Eigen::Vector2d(0.5, 0.5));
  const PlaceCellMap map = make_place_cell_map(box, 512, seed);
  Rng rng = make_rng(seed, 905);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector2d p(u(rng), u(rng));
    const Vec a = encode_point(map, p);
    worst = std::max(worst, (decode_refine(map, a, decode_init(map, a)) - p).norm());
  }
  return {"place-cell decode round trip", worst < 1e-3, "max error " + shortest(worst)};
}

inline CheckResult check_transport() {
  const double shift = gaussian_w2(Vec::Zero(1), Mat::Identity(1, 1), Vec::Constant(1, 5.0),
                                   Mat::Identity(1, 1));
  const double scale = gaussian_w2(Vec::Zero(1), Mat::Identity(1, 1), Vec::Zero(1),
                                   Mat::Constant(1, 1, 4.0));
  Rng rng = make_rng(3, 906);
  const Mat a = Eigen::Map<const Mat>(standard_normal(200, rng).data(), 100, 2);
  const double self = sliced_wd(a, a, 64, 1);
  const bool ok = std::abs(shift - 5.0) < 1e-12 && std::abs(scale - 1.0) < 1e-12 && self == 0.0;
  return {"Wasserstein distances on closed-form cases", ok,
          "shift " + shortest(shift) + ", scale " + shortest(scale) + ", self " + shortest(self)};
}

inline std::vector<CheckResult> run_checks(std::uint64_t seed) {
  return {check_leakage_spectrum(seed), check_gaussian_score(seed), check_bptt(seed),
          check_modifier_reduction(seed), check_adaptation_order(),
          check_place_round_trip(seed), check_transport()};
}

}  // namespace replaylab
