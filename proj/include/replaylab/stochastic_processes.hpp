// Generators for the "awake" trajectory distributions: Ornstein-Uhlenbeck and
// Wiener processes, T-maze / triangle direction mixtures and rat-like random
// walks in a box.
#pragma once

#include "core.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace replaylab {

// =============================================================================
// Domain types
// =============================================================================

/// Parameters of an Ornstein-Uhlenbeck process
///   ds = theta (mu - s) dt + sigma_s dW,   s(0) ~ N(0, sigma_0^2 I).
/// `horizon` is the number of stored states (rows) of a trajectory.
struct OuParams {
  double theta = 2.0;
  Vec mu = Vec::Constant(1, 5.0);
  double sigma_s = 0.1;
  double sigma_0 = 0.2;
  double dt = 0.02;
  int horizon = 100;

  Eigen::Index dim() const { return mu.size(); }

  void validate() const {
    require(std::isfinite(theta) && std::isfinite(sigma_s) &&
                std::isfinite(sigma_0) && std::isfinite(dt) && mu.allFinite(),
            ErrorKind::parameter, "OU parameters must be finite");
    require(theta >= 0.0, ErrorKind::parameter, "theta must be >= 0");
    require(sigma_s >= 0.0, ErrorKind::parameter, "sigma_s must be >= 0");
    require(sigma_0 >= 0.0, ErrorKind::parameter, "sigma_0 must be >= 0");
    require(dt > 0.0, ErrorKind::parameter, "dt must be > 0");
    require(horizon >= 1, ErrorKind::parameter, "horizon must be >= 1");
    require(mu.size() >= 1, ErrorKind::parameter, "mu must be non-empty");
  }
};

/// Time-indexed states (one row per step) with their timestep.
struct Trajectory {
  Mat states;
  double dt = 1.0;
  std::optional<int> label;

  Eigen::Index steps() const { return states.rows(); }
  Eigen::Index dim() const { return states.cols(); }

  void validate() const {
    require(states.rows() >= 1, ErrorKind::shape, "trajectory needs >= 1 step");
    require(states.allFinite(), ErrorKind::parameter,
            "trajectory contains non-finite entries");
  }
};

enum class EnvKind { tmaze, triangle, box };

struct Box {
  Vec lo;
  Vec hi;
};

/// Geometry of a task. For tmaze the endpoints are (start, left arm end,
/// right arm end); for triangle they are the corners A, B, C.
struct EnvironmentSpec {
  EnvKind kind = EnvKind::triangle;
  std::vector<Vec> endpoints;
  std::optional<Box> box;

  static EnvironmentSpec tmaze() {
    return {EnvKind::tmaze,
            {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(-1.0, 1.0),
             Eigen::Vector2d(1.0, 1.0)},
            std::nullopt};
  }

  static EnvironmentSpec triangle() {
    return {EnvKind::triangle,
            {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 0.0),
             Eigen::Vector2d(0.5, std::sqrt(3.0) / 2.0)},
            std::nullopt};
  }

  static EnvironmentSpec box_env(Vec lo, Vec hi) {
    return {EnvKind::box, {}, Box{std::move(lo), std::move(hi)}};
  }

  Vec center() const {
    if (box) return 0.5 * (box->lo + box->hi);
    Vec c = Vec::Zero(endpoints.front().size());
    for (const auto& e : endpoints) c += e;
    return c / static_cast<double>(endpoints.size());
  }

  void validate() const {
    switch (kind) {
      case EnvKind::tmaze:
      case EnvKind::triangle:
        require(endpoints.size() == 3, ErrorKind::parameter,
                "tmaze and triangle environments need exactly 3 endpoints");
        for (const auto& e : endpoints)
          require(e.size() == endpoints.front().size() && e.allFinite(),
                  ErrorKind::parameter, "endpoints must be finite, same dim");
        break;
      case EnvKind::box:
        require(box.has_value(), ErrorKind::parameter, "box env needs bounds");
        require(box->lo.size() == box->hi.size() && box->lo.size() >= 1,
                ErrorKind::parameter, "box bounds dimension mismatch");
        require(box->lo.allFinite() && box->hi.allFinite(),
                ErrorKind::parameter, "box bounds must be finite");
        require((box->hi.array() > box->lo.array()).all(),
                ErrorKind::parameter, "box bounds must satisfy lo < hi");
        break;
    }
  }
};

/// One labelled direction of travel between two environment endpoints.
struct Direction {
  int id;
  int start;  // endpoint index
  int end;    // endpoint index
  std::string name;
};

inline std::vector<Direction> directions(const EnvironmentSpec& env) {
  switch (env.kind) {
    case EnvKind::tmaze:
      return {{0, 0, 1, "left"}, {1, 0, 2, "right"}};
    case EnvKind::triangle:
      return {{0, 0, 1, "AB"}, {1, 1, 2, "BC"}, {2, 2, 0, "CA"},
              {3, 0, 2, "AC"}, {4, 2, 1, "CB"}, {5, 1, 0, "BA"}};
    case EnvKind::box:
      return {};
  }
  return {};
}

/// Junction of the T-maze: midpoint between the two arm ends.
inline Vec tmaze_junction(const EnvironmentSpec& env) {
  return 0.5 * (env.endpoints[1] + env.endpoints[2]);
}

// =============================================================================
// Ornstein-Uhlenbeck and Wiener processes
// =============================================================================

enum class Integrator { euler_maruyama, exact };

namespace detail {

// Advances `s` in place over `steps` transitions toward `target`, writing rows
// [row0 + 1, row0 + steps] of `out`.
inline void ou_segment(Mat& out, Eigen::Index row0, Eigen::Index steps,
                       const Vec& target, double theta, double sigma_s,
                       double dt, Integrator integrator, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index d = out.cols();
  double decay = 1.0 - theta * dt;
  double noise_scale = sigma_s * std::sqrt(dt);
  if (integrator == Integrator::exact) {
    decay = std::exp(-theta * dt);
    noise_scale = theta > 0.0
                      ? sigma_s * std::sqrt(-std::expm1(-2.0 * theta * dt) /
                                            (2.0 * theta))
                      : sigma_s * std::sqrt(dt);
  }
  for (Eigen::Index k = 1; k <= steps; ++k) {
    const Eigen::Index t = row0 + k;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double prev = out(t - 1, j);
      const double eta = normal(rng);
      if (integrator == Integrator::exact) {
        out(t, j) = target[j] + (prev - target[j]) * decay + noise_scale * eta;
      } else {
        out(t, j) = prev + theta * (target[j] - prev) * dt + noise_scale * eta;
      }
    }
  }
}

}  // namespace detail

/// Simulates `n` OU trajectories with s(0) ~ N(0, sigma_0^2 I). Each
/// trajectory has `params.horizon` rows.
inline std::vector<Trajectory> simulate_ou(
    const OuParams& params, int n, std::uint64_t seed,
    Integrator integrator = Integrator::euler_maruyama) {
  params.validate();
  require(n >= 1, ErrorKind::parameter, "n must be >= 1");
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Mat states(params.horizon, params.dim());
    for (Eigen::Index j = 0; j < params.dim(); ++j)
      states(0, j) = params.sigma_0 * normal(rng);
    detail::ou_segment(states, 0, params.horizon - 1, params.mu, params.theta,
                       params.sigma_s, params.dt, integrator, rng);
    out.push_back({std::move(states), params.dt, std::nullopt});
  }
  return out;
}

/// Scalar Wiener process with s(0) = 0 and N(0, sigma_s^2 dt) increments.
inline std::vector<Trajectory> simulate_wiener(double sigma_s, double dt,
                                               int horizon, int n,
                                               std::uint64_t seed) {
  require(std::isfinite(sigma_s) && sigma_s >= 0.0, ErrorKind::parameter,
          "sigma_s must be finite and >= 0");
  require(std::isfinite(dt) && dt > 0.0, ErrorKind::parameter, "dt must be > 0");
  require(horizon >= 1 && n >= 1, ErrorKind::parameter,
          "horizon and n must be >= 1");
  Rng rng = make_rng(seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = sigma_s * std::sqrt(dt);
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Mat states = Mat::Zero(horizon, 1);
    for (int t = 1; t < horizon; ++t)
      states(t, 0) = states(t - 1, 0) + scale * normal(rng);
    out.push_back({std::move(states), dt, std::nullopt});
  }
  return out;
}

// =============================================================================
// Task paths
// =============================================================================

/// Directed random walks along every direction of a T-maze or triangle.
/// `params.mu` is ignored: each direction relaxes toward its own endpoint(s),
/// starting from its start point plus N(0, sigma_0^2 I). T-maze paths go to
/// the junction first and then to the arm end, with the transitions split
/// evenly between the two legs. Output is direction-major.
inline std::vector<Trajectory> generate_task_paths(const EnvironmentSpec& env,
                                                   const OuParams& params,
                                                   int n_per_direction,
                                                   std::uint64_t seed) {
  params.validate();
  env.validate();
  require(env.kind != EnvKind::box, ErrorKind::unsupported,
          "task paths are defined for tmaze and triangle environments only");
  require(n_per_direction >= 1, ErrorKind::parameter,
          "n_per_direction must be >= 1");
  const Eigen::Index d = env.endpoints.front().size();
  const Eigen::Index transitions = params.horizon - 1;
  std::vector<Trajectory> out;
  for (const Direction& dir : directions(env)) {
    Rng rng = make_rng(seed, 100 + static_cast<std::uint64_t>(dir.id));
    std::normal_distribution<double> normal(0.0, 1.0);
    const Vec& start = env.endpoints[static_cast<std::size_t>(dir.start)];
    const Vec& end = env.endpoints[static_cast<std::size_t>(dir.end)];
    for (int i = 0; i < n_per_direction; ++i) {
      Mat states(params.horizon, d);
      for (Eigen::Index j = 0; j < d; ++j)
        states(0, j) = start[j] + params.sigma_0 * normal(rng);
      if (env.kind == EnvKind::tmaze) {
        const Eigen::Index first = transitions / 2;
        detail::ou_segment(states, 0, first, tmaze_junction(env), params.theta,
                           params.sigma_s, params.dt, Integrator::euler_maruyama,
                           rng);
        detail::ou_segment(states, first, transitions - first, end,
                           params.theta, params.sigma_s, params.dt,
                           Integrator::euler_maruyama, rng);
      } else {
        detail::ou_segment(states, 0, transitions, end, params.theta,
                           params.sigma_s, params.dt,
                           Integrator::euler_maruyama, rng);
      }
      out.push_back({std::move(states), params.dt, dir.id});
    }
  }
  return out;
}

// =============================================================================
// Rat random walks
// =============================================================================

enum class RatKind { biased, unbiased };

/// Velocity is an OU process with correlation time `tau_v` and stationary
/// per-axis std `speed_std`. Biased walks add `drift * (center - position)`
/// to the position update.
struct RatWalkParams {
  double tau_v = 0.7;
  double speed_std = 0.25;
  double drift = 1.5;
};

namespace detail {

inline void reflect(double& pos, double& vel, double lo, double hi) {
  while (pos < lo || pos > hi) {
    if (pos < lo) pos = 2.0 * lo - pos;
    if (pos > hi) pos = 2.0 * hi - pos;
    vel = -vel;
  }
}

}  // namespace detail

inline std::vector<Trajectory> generate_rat_walk(RatKind kind,
                                                 const EnvironmentSpec& box_env,
                                                 double dt, int horizon, int n,
                                                 std::uint64_t seed,
                                                 const RatWalkParams& walk = {}) {
  require(box_env.kind == EnvKind::box, ErrorKind::unsupported,
          "rat walks need a box environment");
  box_env.validate();
  require(std::isfinite(dt) && dt > 0.0, ErrorKind::parameter, "dt must be > 0");
  require(horizon >= 1 && n >= 1, ErrorKind::parameter,
          "horizon and n must be >= 1");
  require(walk.tau_v > 0.0 && walk.speed_std >= 0.0 && walk.drift >= 0.0,
          ErrorKind::parameter, "invalid random walk parameters");
  const Box& box = *box_env.box;
  const Vec center = box_env.center();
  const Eigen::Index d = box.lo.size();
  const double drift = kind == RatKind::biased ? walk.drift : 0.0;
  const double vel_noise = walk.speed_std * std::sqrt(2.0 * dt / walk.tau_v);

  Rng rng = make_rng(seed, 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Mat states(horizon, d);
    Vec vel(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      states(0, j) = box.lo[j] + (box.hi[j] - box.lo[j]) * uniform(rng);
      vel[j] = walk.speed_std * normal(rng);
    }
    for (int t = 1; t < horizon; ++t) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double prev = states(t - 1, j);
        vel[j] += -vel[j] / walk.tau_v * dt + vel_noise * normal(rng);
        double pos = prev + (vel[j] + drift * (center[j] - prev)) * dt;
        detail::reflect(pos, vel[j], box.lo[j], box.hi[j]);
        states(t, j) = pos;
      }
    }
    out.push_back({std::move(states), dt, std::nullopt});
  }
  return out;
}

// =============================================================================
// Velocities
// =============================================================================

/// Forward differences (s(t+dt) - s(t)) / dt; the last row repeats the one
/// before it so the result has as many rows as the trajectory.
inline Mat velocities(const Trajectory& traj) {
  const Eigen::Index steps = traj.steps();
  require(steps >= 2, ErrorKind::shape, "velocities need at least 2 steps");
  Mat vel(steps, traj.dim());
  vel.topRows(steps - 1) =
      (traj.states.bottomRows(steps - 1) - traj.states.topRows(steps - 1)) /
      traj.dt;
  vel.row(steps - 1) = vel.row(steps - 2);
  return vel;
}

}  // namespace replaylab
