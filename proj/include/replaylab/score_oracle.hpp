// Closed-form scores and leakage matrices of optimally path-integrating
// activity r(t) when the observed process s(t) is Gaussian.
//
// With p(r | s) = N(D+ s, sigma_r^2 dt I) and p(s(t)) = N(mu(t), Sigma(t)):
//   p(r(t)) = N(D+ mu(t), sigma_r^2 dt I + D+ Sigma(t) D+^T)
//   sigma_r^2 dt grad log p(r) = -Lambda(t) (r - D+ mu(t))
//   Lambda(t) = sigma_r^2 dt (sigma_r^2 dt I + D+ Sigma(t) D+^T)^-1
#pragma once

#include "stochastic_processes.hpp"

#include <functional>

namespace replaylab {

struct GaussianMoments {
  std::function<Vec(double)> mean_fn;
  std::function<Mat(double)> cov_fn;

  static GaussianMoments stationary(Vec mean, Mat cov) {
    return {[mean](double) { return mean; }, [cov](double) { return cov; }};
  }
};

/// Pseudo-inverse of a matrix via SVD; singular values below
/// `rel_tol * max_singular_value` are treated as zero.
inline Mat pseudo_inverse(const Mat& m, double rel_tol = 1e-12) {
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rel_tol * sv.maxCoeff() : 0.0;
  Vec inv = Vec::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cutoff) inv[i] = 1.0 / sv[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Holds D+ (n x d) and sigma_r^2 dt.
struct ScoreContext {
  Mat d_pinv;
  double sigma_r2_dt;

  static ScoreContext from_output_map(const Mat& d_out, double sigma_r2_dt) {
    require(sigma_r2_dt > 0.0 && std::isfinite(sigma_r2_dt),
            ErrorKind::parameter, "sigma_r^2 dt must be > 0");
    return {pseudo_inverse(d_out), sigma_r2_dt};
  }
};

namespace detail {

// sigma_r^2 dt I + D+ Sigma D+^T, symmetrized.
inline Mat activity_covariance(const Mat& cov, const ScoreContext& ctx) {
  require(cov.rows() == cov.cols() && cov.rows() == ctx.d_pinv.cols(),
          ErrorKind::shape, "covariance does not match output dimension");
  Mat m = ctx.d_pinv * cov * ctx.d_pinv.transpose();
  m = 0.5 * (m + m.transpose()).eval();
  m.diagonal().array() += ctx.sigma_r2_dt;
  return m;
}

}  // namespace detail

/// sigma_r^2 dt (sigma_r^2 dt I + D+ Sigma D+^T)^{-1}, assembled from the
/// spectrum of the projected covariance so its eigenvalues stay in (0, 1] even
/// when that covariance is badly conditioned.
inline Mat leakage_matrix(double t, const GaussianMoments& moments,
                          const ScoreContext& ctx) {
  require(ctx.sigma_r2_dt > 0.0, ErrorKind::parameter, "sigma_r^2 dt must be > 0");
  Mat m = detail::activity_covariance(moments.cov_fn(t), ctx);
  m.diagonal().array() -= ctx.sigma_r2_dt;
  const Eigen::SelfAdjointEigenSolver<Mat> eig(m);
  const Vec shrink = ctx.sigma_r2_dt /
                     (ctx.sigma_r2_dt + eig.eigenvalues().array().max(0.0));
  return eig.eigenvectors() * shrink.asDiagonal() * eig.eigenvectors().transpose();
}

inline Vec gaussian_score(const Vec& r, double t, const GaussianMoments& moments,
                          const ScoreContext& ctx) {
  require(ctx.sigma_r2_dt > 0.0, ErrorKind::parameter, "sigma_r^2 dt must be > 0");
  require(r.size() == ctx.d_pinv.rows(), ErrorKind::shape,
          "r does not match hidden dimension");
  const Vec mean = moments.mean_fn(t);
  require(mean.size() == ctx.d_pinv.cols(), ErrorKind::shape,
          "mean does not match output dimension");
  const Mat m = detail::activity_covariance(moments.cov_fn(t), ctx);
  return -ctx.sigma_r2_dt * m.ldlt().solve(r - ctx.d_pinv * mean);
}

// =============================================================================
// Scalar processes
// =============================================================================

struct ScalarMoments {
  double mean;
  double var;
};

/// Marginal moments of the scalar OU process in the closed form used by the
/// OU score:
///   mean = mu (1 - e^{-theta t})
///   var  = sigma_s^2 (1 - e^{-2 theta t}) / (2 theta) + sigma_0^2 e^{-theta t}
/// At theta -> 0 the first variance term becomes sigma_s^2 t. Uses mu[0].
inline ScalarMoments ou_moments(double t, const OuParams& params) {
  require(std::isfinite(t) && t >= 0.0, ErrorKind::parameter, "t must be >= 0");
  require(params.theta >= 0.0, ErrorKind::parameter, "theta must be >= 0");
  const double theta = params.theta;
  const double mu = params.mu[0];
  const double x = 2.0 * theta * t;
  // (1 - e^{-x}) / (2 theta) = t * (1 - x/2 + x^2/6 - ...)
  const double integral =
      x < 1e-8 ? t * (1.0 - 0.5 * x) : -std::expm1(-x) / (2.0 * theta);
  return {mu * -std::expm1(-theta * t),
          params.sigma_s * params.sigma_s * integral +
              params.sigma_0 * params.sigma_0 * std::exp(-theta * t)};
}

/// sigma_r^2 dt * d/dr log p(r_ou(t)).
inline double ou_score(double r, double t, const OuParams& params,
                       double sigma_r2_dt) {
  const ScalarMoments m = ou_moments(t, params);
  return sigma_r2_dt * -(r - m.mean) / (sigma_r2_dt + m.var);
}

/// sigma_r^2 dt * d/dr log p(r_w(t)) for a Wiener process started at 0.
inline double wiener_score(double r, double t, double sigma_s,
                           double sigma_r2_dt) {
  require(std::isfinite(t) && t >= 0.0, ErrorKind::parameter, "t must be >= 0");
  return sigma_r2_dt * -r / (sigma_s * sigma_s * t + sigma_r2_dt);
}

}  // namespace replaylab
