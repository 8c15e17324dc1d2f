// Replay statistics: Gaussian and sliced Wasserstein distances, reach times,
// path lengths, regions visited, mean displacement and per-time variance.
#pragma once

#include "stochastic_processes.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

namespace replaylab {

// =============================================================================
// Wasserstein distances
// =============================================================================

namespace detail {

inline void require_symmetric(const Mat& m, const char* name) {
  require(m.rows() == m.cols(), ErrorKind::shape, std::string(name) + " must be square");
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale,
          ErrorKind::parameter, std::string(name) + " must be symmetric");
}

/// Symmetric PSD square root; negative eigenvalues are clamped to zero.
inline Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  const Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// 2-Wasserstein distance between N(mu1, cov1) and N(mu2, cov2).
inline double gaussian_w2(const Vec& mu1, const Mat& cov1, const Vec& mu2,
                          const Mat& cov2) {
  require(mu1.size() == mu2.size() && cov1.rows() == mu1.size() &&
              cov2.rows() == mu2.size(),
          ErrorKind::shape, "moment dimensions differ");
  detail::require_symmetric(cov1, "cov1");
  detail::require_symmetric(cov2, "cov2");
  const Mat root2 = detail::psd_sqrt(cov2);
  const Mat cross = detail::psd_sqrt(root2 * cov1 * root2);
  const double trace = (cov1 + cov2 - 2.0 * cross).trace();
  return std::sqrt((mu1 - mu2).squaredNorm() + std::max(trace, 0.0));
}

/// Exact W2 between two 1D empirical distributions, integrating the squared
/// difference of their quantile functions over the merged quantile levels.
inline double w2_1d(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), ErrorKind::parameter, "empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double q = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double qa = static_cast<double>(i + 1) / na;
    const double qb = static_cast<double>(j + 1) / nb;
    const double next = std::min(qa, qb);
    const double diff = a[i] - b[j];
    total += diff * diff * (next - q);
    q = next;
    if (qa <= next) ++i;
    if (qb <= next) ++j;
  }
  return std::sqrt(std::max(total, 0.0));
}

/// Mean over `n_proj` random unit directions of the 1D W2 between projected
/// samples (rows are samples).
inline double sliced_wd(const Mat& a, const Mat& b, int n_proj, std::uint64_t seed) {
  require(a.rows() >= 1 && b.rows() >= 1, ErrorKind::parameter, "empty sample set");
  require(a.cols() == b.cols() && a.cols() >= 1, ErrorKind::shape,
          "sample dimensions differ");
  require(n_proj >= 1, ErrorKind::parameter, "n_proj must be >= 1");
  Rng rng = make_rng(seed, 61);
  double sum = 0.0;
  for (int k = 0; k < n_proj; ++k) {
    Vec dir = standard_normal(a.cols(), rng);
    dir /= dir.norm();
    const Vec pa = a * dir;
    const Vec pb = b * dir;
    sum += w2_1d(std::vector<double>(pa.data(), pa.data() + pa.size()),
                 std::vector<double>(pb.data(), pb.data() + pb.size()));
  }
  return sum / n_proj;
}

/// Stacks trajectories as rows of (T*d) time-major flattened states.
inline Mat flatten(const std::vector<const Trajectory*>& trajs) {
  require(!trajs.empty(), ErrorKind::insufficient_data, "no trajectories");
  const Eigen::Index steps = trajs.front()->steps();
  const Eigen::Index d = trajs.front()->dim();
  Mat out(static_cast<Eigen::Index>(trajs.size()), steps * d);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    require(trajs[i]->steps() == steps && trajs[i]->dim() == d, ErrorKind::shape,
            "trajectories must share length and dimension");
    for (Eigen::Index t = 0; t < steps; ++t)
      out.row(static_cast<Eigen::Index>(i)).segment(t * d, d) = trajs[i]->states.row(t);
  }
  return out;
}

struct GaussianFit {
  Vec mean;
  Mat cov;
};

/// Sample mean and unbiased covariance plus a 1e-9 ridge.
inline GaussianFit fit_gaussian(const Mat& samples) {
  require(samples.rows() >= 2, ErrorKind::insufficient_data,
          "need at least 2 samples for a covariance");
  GaussianFit fit;
  fit.mean = samples.colwise().mean().transpose();
  const Mat centered = samples.rowwise() - fit.mean.transpose();
  fit.cov = centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
  fit.cov.diagonal().array() += 1e-9;
  return fit;
}

enum class DistanceMode { per_direction_gaussian, sliced };

/// Awake vs replay path-distribution distance. Per-direction mode averages the
/// Gaussian W2 over labels present in both sets.
inline double trajectory_distribution_distance(const std::vector<Trajectory>& awake,
                                               const std::vector<Trajectory>& replay,
                                               DistanceMode mode, int n_proj = 256,
                                               std::uint64_t seed = 0) {
  if (mode == DistanceMode::sliced) {
    std::vector<const Trajectory*> a, r;
    for (const auto& t : awake) a.push_back(&t);
    for (const auto& t : replay) r.push_back(&t);
    require(!a.empty() && !r.empty(), ErrorKind::insufficient_data,
            "empty trajectory set");
    return sliced_wd(flatten(a), flatten(r), n_proj, seed);
  }
  std::map<int, std::vector<const Trajectory*>> by_a, by_r;
  for (const auto& t : awake) {
    require(t.label.has_value(), ErrorKind::parameter,
            "per-direction distance needs labelled trajectories");
    by_a[*t.label].push_back(&t);
  }
  for (const auto& t : replay) {
    require(t.label.has_value(), ErrorKind::parameter,
            "per-direction distance needs labelled trajectories");
    by_r[*t.label].push_back(&t);
  }
  double sum = 0.0;
  int count = 0;
  for (const auto& [label, list] : by_a) {
    auto it = by_r.find(label);
    if (it == by_r.end()) continue;
    require(list.size() >= 2 && it->second.size() >= 2, ErrorKind::insufficient_data,
            "need at least 2 trajectories per direction");
    const GaussianFit fa = fit_gaussian(flatten(list));
    const GaussianFit fr = fit_gaussian(flatten(it->second));
    sum += gaussian_w2(fa.mean, fa.cov, fr.mean, fr.cov);
    ++count;
  }
  require(count > 0, ErrorKind::insufficient_data, "no direction present in both sets");
  return sum / count;
}

// =============================================================================
// Speed and exploration
// =============================================================================

/// First step within frac * ||endpoint - start|| of `endpoint`.
inline std::optional<int> reach_time(const Trajectory& traj, const Vec& start,
                                     const Vec& endpoint, double frac = 0.1) {
  const double len = (endpoint - start).norm();
  require(len > 0.0, ErrorKind::parameter, "start and endpoint coincide");
  require(endpoint.size() == traj.dim(), ErrorKind::shape, "endpoint dimension");
  const double radius = frac * len;
  for (Eigen::Index t = 0; t < traj.steps(); ++t)
    if ((traj.states.row(t).transpose() - endpoint).norm() <= radius)
      return static_cast<int>(t);
  return std::nullopt;
}

/// Sum of step displacement norms.
inline double path_length(const Trajectory& traj) {
  double total = 0.0;
  for (Eigen::Index t = 0; t + 1 < traj.steps(); ++t)
    total += (traj.states.row(t + 1) - traj.states.row(t)).norm();
  return total;
}

/// Index of the nearest endpoint (lowest index on ties).
inline int nearest_region(const Vec& point, const std::vector<Vec>& endpoints) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    const double d = (point - endpoints[i]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

/// Counts dwells of at least `min_dwell` consecutive steps in one nearest-
/// endpoint region. Dwells in the same region separated only by shorter
/// excursions count once.
inline int regions_visited(const Trajectory& traj, const std::vector<Vec>& endpoints,
                           int min_dwell = 10) {
  require(endpoints.size() >= 2, ErrorKind::parameter, "need at least 2 endpoints");
  int visits = 0;
  int last_region = -1;
  int run_region = -1;
  int run_length = 0;
  auto close_run = [&] {
    if (run_length >= min_dwell && run_region != last_region) {
      ++visits;
      last_region = run_region;
    }
  };
  for (Eigen::Index t = 0; t < traj.steps(); ++t) {
    const int region = nearest_region(traj.states.row(t).transpose(), endpoints);
    if (region == run_region) {
      ++run_length;
    } else {
      close_run();
      run_region = region;
      run_length = 1;
    }
  }
  close_run();
  return visits;
}

struct DisplacementVariance {
  Vec displacement;  // E ||s(t) - s(0)||
  Vec variance;      // mean over coordinates of Var_i s_i(t)
};

inline DisplacementVariance displacement_and_variance(const std::vector<Trajectory>& trajs) {
  require(!trajs.empty(), ErrorKind::insufficient_data, "no trajectories");
  const Eigen::Index steps = trajs.front().steps();
  const Eigen::Index d = trajs.front().dim();
  for (const auto& t : trajs)
    require(t.steps() == steps && t.dim() == d, ErrorKind::shape,
            "trajectories must share length and dimension");
  const double n = static_cast<double>(trajs.size());
  DisplacementVariance out{Vec::Zero(steps), Vec::Zero(steps)};
  for (Eigen::Index t = 0; t < steps; ++t) {
    Vec mean = Vec::Zero(d);
    for (const auto& tr : trajs) {
      out.displacement[t] += (tr.states.row(t) - tr.states.row(0)).norm();
      mean += tr.states.row(t).transpose();
    }
    mean /= n;
    double var = 0.0;
    for (const auto& tr : trajs) var += (tr.states.row(t).transpose() - mean).squaredNorm();
    out.displacement[t] /= n;
    out.variance[t] = var / (n * static_cast<double>(d));
  }
  return out;
}

// =============================================================================
// Reports
// =============================================================================

/// Start and end point of every labelled direction plus the region anchors.
/// With a common `goal`, every path is measured from its own first state to
/// the goal and pooled under label 0.
struct PathGeometry {
  std::map<int, std::pair<Vec, Vec>> direction_ends;
  std::vector<Vec> regions;
  std::optional<Vec> goal;
};

inline PathGeometry geometry_of(const EnvironmentSpec& env) {
  PathGeometry g;
  for (const auto& dir : directions(env))
    g.direction_ends[dir.id] = {env.endpoints[static_cast<std::size_t>(dir.start)],
                                env.endpoints[static_cast<std::size_t>(dir.end)]};
  g.regions = env.endpoints;
  return g;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Reach times per direction label. Paths that never reach are censored at
/// their length (T).
inline std::map<int, std::vector<double>> reach_times_by_direction(
    const std::vector<Trajectory>& trajs, const PathGeometry& geom, double frac = 0.1) {
  std::map<int, std::vector<double>> out;
  for (const auto& t : trajs) {
    if (geom.goal) {
      const Vec start = t.states.row(0).transpose();
      if ((start - *geom.goal).norm() == 0.0) continue;
      const auto reach = reach_time(t, start, *geom.goal, frac);
      out[0].push_back(reach ? *reach : static_cast<double>(t.steps()));
      continue;
    }
    if (!t.label) continue;
    auto it = geom.direction_ends.find(*t.label);
    if (it == geom.direction_ends.end()) continue;
    const auto reach = reach_time(t, it->second.first, it->second.second, frac);
    out[*t.label].push_back(reach ? *reach : static_cast<double>(t.steps()));
  }
  return out;
}

struct MetricsReport {
  double wd = std::numeric_limits<double>::quiet_NaN();
  double reach_time_median = std::numeric_limits<double>::quiet_NaN();
  double reach_time_mean = std::numeric_limits<double>::quiet_NaN();
  double reach_median_change_pct = std::numeric_limits<double>::quiet_NaN();
  double reach_mean_change_pct = std::numeric_limits<double>::quiet_NaN();
  double path_length_mean = std::numeric_limits<double>::quiet_NaN();
  double regions_visited_mean = std::numeric_limits<double>::quiet_NaN();
  Vec displacement_curve;
  Vec variance_curve;
};

struct ReportOptions {
  DistanceMode mode = DistanceMode::per_direction_gaussian;
  int n_proj = 256;
  std::uint64_t seed = 0;
  int min_dwell = 10;
  bool compute_wd = true;
};

/// Metrics of one replay set against the awake set. Reach-time changes are
/// per-direction medians (means) relative to the awake ones, averaged over
/// directions.
inline MetricsReport compute_report(const std::vector<Trajectory>& awake,
                                    const std::vector<Trajectory>& replay,
                                    const PathGeometry& geom,
                                    const ReportOptions& opts = {}) {
  require(!replay.empty(), ErrorKind::insufficient_data, "empty replay set");
  MetricsReport rep;
  if (opts.compute_wd && !awake.empty() &&
      awake.front().steps() == replay.front().steps())
    try {
      rep.wd = trajectory_distribution_distance(awake, replay, opts.mode, opts.n_proj,
                                                opts.seed);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::insufficient_data) throw;
    }

  const auto rep_reach = reach_times_by_direction(replay, geom);
  const auto awake_reach = reach_times_by_direction(awake, geom);
  std::vector<double> all;
  std::vector<double> med_change, mean_change;
  for (const auto& [label, times] : rep_reach) {
    all.insert(all.end(), times.begin(), times.end());
    auto it = awake_reach.find(label);
    if (it == awake_reach.end()) continue;
    const double am = median(it->second), aa = mean(it->second);
    if (am > 0.0) med_change.push_back(100.0 * (median(times) - am) / am);
    if (aa > 0.0) mean_change.push_back(100.0 * (mean(times) - aa) / aa);
  }
  rep.reach_time_median = median(all);
  rep.reach_time_mean = mean(all);
  rep.reach_median_change_pct = mean(med_change);
  rep.reach_mean_change_pct = mean(mean_change);

  std::vector<double> lengths, regions;
  for (const auto& t : replay) {
    lengths.push_back(path_length(t));
    if (geom.regions.size() >= 2 && t.dim() == geom.regions.front().size())
      regions.push_back(regions_visited(t, geom.regions, opts.min_dwell));
  }
  rep.path_length_mean = mean(lengths);
  rep.regions_visited_mean = mean(regions);
  const auto dv = displacement_and_variance(replay);
  rep.displacement_curve = dv.displacement;
  rep.variance_curve = dv.variance;
  return rep;
}

}  // namespace replaylab
