// Quiescent replay from trained networks, (b_a, lambda_v) sweeps with on-disk
// persistence, and the numerical check that adaptation turns the overdamped
// Gaussian flow into a second-order equation.
#pragma once

#include "checkpoint.hpp"
#include "rnn.hpp"
#include "trajectory_io.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <sstream>

namespace replaylab {

// =============================================================================
// Replay generation
// =============================================================================

/// Candidate initial condition: output-space state plus direction tag id.
struct ReplayStart {
  Vec state;
  int direction = -1;
};

inline std::vector<ReplayStart> replay_starts(const EnvironmentSpec& env) {
  std::vector<ReplayStart> out;
  for (const auto& dir : directions(env))
    out.push_back({env.endpoints[static_cast<std::size_t>(dir.start)], dir.id});
  return out;
}

struct ReplayInit {
  double tag_norm = 0.0;
  double jitter = 0.1;  // isotropic noise norm relative to ||r(0)||
  double dt = 1.0;      // timestep stamped on the decoded trajectories
};

/// Replay paths: each path picks a start uniformly, initializes
/// r(0) = D+ s0 + tag + jitter and rolls out without input. Decoded outputs
/// are returned, labelled with the start's direction id.
inline std::vector<Trajectory> generate_replay(const RnnParams& params,
                                               const std::vector<ReplayStart>& starts,
                                               const ReplayInit& init,
                                               const DynamicsConfig& cfg, int n,
                                               int horizon, std::uint64_t seed) {
  require(!starts.empty(), ErrorKind::parameter, "no replay starts");
  require(n >= 1 && horizon >= 1, ErrorKind::parameter, "n and T must be >= 1");
  Rng rng = make_rng(seed, 41);
  std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
  const auto nh = params.hidden();
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const ReplayStart& s = starts[pick(rng)];
    NetState state =
        init_hidden_at(s.state, s.direction, params, kDefaultTagSeed, init.tag_norm);
    const double jitter_std = init.jitter * state.r.norm() / std::sqrt(double(nh));
    state.r += jitter_std * standard_normal(nh, rng);
    const std::uint64_t roll_seed = seed * 0x100000001b3ull + static_cast<std::uint64_t>(i);
    Rollout ro = rollout(params, state, nullptr, horizon, cfg, roll_seed);
    std::optional<int> label;
    if (s.direction >= 0) label = s.direction;
    out.push_back({std::move(ro.decoded), init.dt, label});
  }
  return out;
}

inline std::vector<Trajectory> generate_replay(const RnnParams& params,
                                               const EnvironmentSpec& env,
                                               const DynamicsConfig& cfg, int n,
                                               int horizon, std::uint64_t seed) {
  return generate_replay(params, replay_starts(env),
                         ReplayInit{default_tag_norm(env, params), 0.1, 1.0}, cfg, n,
                         horizon, seed);
}

// =============================================================================
// Sweeps
// =============================================================================

struct SweepSpec {
  std::vector<double> b_a_values{0.0};
  std::vector<double> lambda_v_values{1.0};
  int n_paths = 50;
  int T_replay = 100;
  double tau_a = 100.0;
  std::vector<std::uint64_t> seeds{0};

  void validate() const {
    require(!b_a_values.empty() && !lambda_v_values.empty() && !seeds.empty(),
            ErrorKind::parameter, "sweep lists must be non-empty");
    require(n_paths >= 1 && T_replay >= 1, ErrorKind::parameter,
            "n_paths and T_replay must be >= 1");
    require(tau_a > 0.0, ErrorKind::parameter, "tau_a must be > 0");
  }
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<Trajectory> paths;
  std::optional<std::string> failure;
};

struct ReplayCell {
  double b_a = 0.0;
  double lambda_v = 1.0;
  std::vector<SeedRun> runs;
};

struct ReplaySet {
  SweepSpec spec;
  std::string checkpoint_id;
  std::string task;
  std::vector<ReplayCell> cells;  // b_a-major

  const ReplayCell& cell(std::size_t ba_index, std::size_t lv_index) const {
    return cells.at(ba_index * spec.lambda_v_values.size() + lv_index);
  }
};

/// Generator of one cell/seed: (dynamics, seed) -> paths.
using ReplayGenerator =
    std::function<std::vector<Trajectory>(const DynamicsConfig&, std::uint64_t)>;

/// Full factorial over (b_a, lambda_v, seed). Cells may run concurrently
/// (`jobs` workers); failures are recorded per seed and the sweep continues.
inline ReplaySet run_sweep(const ReplayGenerator& generator, const SweepSpec& spec,
                           const DynamicsConfig& base = {}, int jobs = 1) {
  spec.validate();
  ReplaySet set;
  set.spec = spec;
  for (double ba : spec.b_a_values)
    for (double lv : spec.lambda_v_values) set.cells.push_back({ba, lv, {}});

  auto run_cell = [&](ReplayCell& cell) {
    DynamicsConfig cfg = base;
    cfg.b_a = cell.b_a;
    cfg.lambda_v = cell.lambda_v;
    cfg.tau_a = spec.tau_a;
    for (std::uint64_t seed : spec.seeds) {
      SeedRun run{seed, {}, std::nullopt};
      try {
        run.paths = generator(cfg, seed);
      } catch (const Error& e) {
        run.failure = e.what();
      }
      cell.runs.push_back(std::move(run));
    }
  };

  if (jobs <= 1) {
    for (auto& cell : set.cells) run_cell(cell);
  } else {
    std::size_t next = 0;
    while (next < set.cells.size()) {
      std::vector<std::future<void>> batch;
      for (int j = 0; j < jobs && next < set.cells.size(); ++j, ++next)
        batch.push_back(std::async(std::launch::async, run_cell, std::ref(set.cells[next])));
      for (auto& f : batch) f.get();
    }
  }
  return set;
}

inline ReplaySet run_sweep(const RnnParams& params, const EnvironmentSpec& env,
                           const SweepSpec& spec, int jobs = 1) {
  const auto starts = replay_starts(env);
  const ReplayInit init{default_tag_norm(env, params), 0.1, 1.0};
  ReplaySet set = run_sweep(
      [&](const DynamicsConfig& cfg, std::uint64_t seed) {
        return generate_replay(params, starts, init, cfg, spec.n_paths, spec.T_replay, seed);
      },
      spec, DynamicsConfig{}, jobs);
  set.checkpoint_id = checkpoint_id(params);
  return set;
}

// =============================================================================
// Persistence: cell_{ba}_{lv}/seed_{s}/traj_{i}.csv plus a manifest
// =============================================================================

inline std::string cell_dir_name(double b_a, double lambda_v) {
  return "cell_" + shortest(b_a) + "_" + shortest(lambda_v);
}

namespace detail {

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) out += shortest(values[i]);
    else out += std::to_string(values[i]);
  }
  return out;
}

template <typename T>
std::vector<T> split_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if constexpr (std::is_floating_point_v<T>) out.push_back(std::stod(item));
    else out.push_back(static_cast<T>(std::stoull(item)));
  }
  return out;
}

}  // namespace detail

inline void write_replay_set(const std::filesystem::path& dir, const ReplaySet& set) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::io, "cannot create " + dir.string());
  std::ofstream manifest(dir / "manifest", std::ios::binary);
  require(static_cast<bool>(manifest), ErrorKind::io, "cannot write manifest");
  manifest << "replaylab-replay v1\n"
           << "task " << (set.task.empty() ? "-" : set.task) << '\n'
           << "checkpoint " << (set.checkpoint_id.empty() ? "-" : set.checkpoint_id) << '\n'
           << "b_a " << detail::join(set.spec.b_a_values) << '\n'
           << "lambda_v " << detail::join(set.spec.lambda_v_values) << '\n'
           << "tau_a " << shortest(set.spec.tau_a) << '\n'
           << "n_paths " << set.spec.n_paths << '\n'
           << "T " << set.spec.T_replay << '\n'
           << "seeds " << detail::join(set.spec.seeds) << '\n';
  for (const auto& cell : set.cells) {
    for (const auto& run : cell.runs) {
      const fs::path seed_dir =
          dir / cell_dir_name(cell.b_a, cell.lambda_v) / ("seed_" + std::to_string(run.seed));
      if (run.failure) {
        std::string reason = *run.failure;
        for (char& ch : reason)
          if (ch == '\n') ch = ' ';
        manifest << "failed " << shortest(cell.b_a) << ' ' << shortest(cell.lambda_v)
                 << ' ' << run.seed << ' ' << reason << '\n';
        continue;
      }
      fs::create_directories(seed_dir, ec);
      require(!ec, ErrorKind::io, "cannot create " + seed_dir.string());
      for (std::size_t i = 0; i < run.paths.size(); ++i)
        write_trajectory_csv(seed_dir / ("traj_" + std::to_string(i) + ".csv"), run.paths[i]);
    }
  }
  require(static_cast<bool>(manifest), ErrorKind::io, "manifest write failed");
}

inline ReplaySet read_replay_set(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(dir / "manifest", std::ios::binary);
  require(static_cast<bool>(manifest), ErrorKind::io,
          "missing manifest in " + dir.string());
  std::string line;
  require(static_cast<bool>(std::getline(manifest, line)) && line == "replaylab-replay v1",
          ErrorKind::parameter, "bad replay manifest");
  ReplaySet set;
  std::map<std::string, std::string> failures;
  while (std::getline(manifest, line)) {
    std::istringstream is(line);
    std::string key;
    is >> key;
    std::string rest;
    std::getline(is >> std::ws, rest);
    if (key == "task") set.task = rest == "-" ? "" : rest;
    else if (key == "checkpoint") set.checkpoint_id = rest == "-" ? "" : rest;
    else if (key == "b_a") set.spec.b_a_values = detail::split_list<double>(rest);
    else if (key == "lambda_v") set.spec.lambda_v_values = detail::split_list<double>(rest);
    else if (key == "tau_a") set.spec.tau_a = std::stod(rest);
    else if (key == "n_paths") set.spec.n_paths = std::stoi(rest);
    else if (key == "T") set.spec.T_replay = std::stoi(rest);
    else if (key == "seeds") set.spec.seeds = detail::split_list<std::uint64_t>(rest);
    else if (key == "failed") {
      std::istringstream fs_(rest);
      std::string ba, lv, seed;
      fs_ >> ba >> lv >> seed;
      std::string reason;
      std::getline(fs_ >> std::ws, reason);
      failures["cell_" + ba + "_" + lv + "/" + seed] = reason;
    }
  }
  set.spec.validate();
  for (double ba : set.spec.b_a_values) {
    for (double lv : set.spec.lambda_v_values) {
      ReplayCell cell{ba, lv, {}};
      for (std::uint64_t seed : set.spec.seeds) {
        SeedRun run{seed, {}, std::nullopt};
        auto it = failures.find(cell_dir_name(ba, lv) + "/" + std::to_string(seed));
        if (it != failures.end()) {
          run.failure = it->second;
        } else {
          const fs::path seed_dir = dir / cell_dir_name(ba, lv) / ("seed_" + std::to_string(seed));
          for (int i = 0;; ++i) {
            const fs::path p = seed_dir / ("traj_" + std::to_string(i) + ".csv");
            if (!fs::exists(p)) break;
            run.paths.push_back(read_trajectory_csv(p));
          }
          if (run.paths.empty()) run.failure = "missing trajectories";
        }
        cell.runs.push_back(std::move(run));
      }
      set.cells.push_back(std::move(cell));
    }
  }
  return set;
}

// =============================================================================
// Adaptation as a second-order equation
// =============================================================================
//
// Coupled linear system  dx = (A x + B y + m) dt,  dy = (C x + D y) dt  gives
//   x'' = (A + D) x' + (B C - A D) x - D m.
// The adapted Gaussian flow r' = K (mu - r) - c, c' = (-c + b_a r) / tau_a
// with K = sigma_r^2 dt Sigma^-1 is this system with
//   A = -K, B = -I, m = K mu, C = (b_a / tau_a) I, D = -(1 / tau_a) I.

struct LinearSecondOrder {
  Mat a, b, c, d;
  Vec m;

  Vec rhs(const Vec& x, const Vec& xdot) const {
    return (a + d) * xdot + (b * c - a * d) * x - d * m;
  }
};

inline LinearSecondOrder adaptation_system(const Mat& k, const Vec& mu, double b_a,
                                           double tau_a) {
  const Eigen::Index n = k.rows();
  const Mat eye = Mat::Identity(n, n);
  return {-k, -eye, (b_a / tau_a) * eye, -(1.0 / tau_a) * eye, k * mu};
}

/// Coefficient assignment C = -(1/tau_a) I, D = (b_a/tau_a) I, whose
/// second-order form is `printed_adaptation_rhs`.
inline LinearSecondOrder swapped_adaptation_system(const Mat& k, const Vec& mu,
                                                   double b_a, double tau_a) {
  const Eigen::Index n = k.rows();
  const Mat eye = Mat::Identity(n, n);
  return {-k, -eye, -(1.0 / tau_a) * eye, (b_a / tau_a) * eye, k * mu};
}

/// r'' = (b_a/tau_a I - K) r' - (b_a/tau_a) K (mu - r) + r / tau_a, the
/// commonly quoted form with the stochastic terms dropped.
inline Vec printed_adaptation_rhs(const Mat& k, const Vec& mu, double b_a,
                                  double tau_a, const Vec& r, const Vec& rdot) {
  const Eigen::Index n = k.rows();
  return ((b_a / tau_a) * Mat::Identity(n, n) - k) * rdot -
         (b_a / tau_a) * (k * (mu - r)) + r / tau_a;
}

struct AdaptationFlow {
  std::vector<Vec> r;
  double dt = 0.0;
  Mat k;
  Vec mu;
};

/// Noise-free forward-Euler simulation of the adapted flow over `duration`
/// time units. r(0) = mu + 2 z with z ~ N(0, Sigma); c(0) = 0.
inline AdaptationFlow simulate_adaptation_flow(const GaussianMoments& target,
                                               double sigma_r2_dt,
                                               const DynamicsConfig& cfg, double dt,
                                               double duration, std::uint64_t seed) {
  cfg.validate();
  require(dt > 0.0 && duration > 0.0, ErrorKind::parameter, "dt, duration must be > 0");
  require(sigma_r2_dt > 0.0, ErrorKind::parameter, "sigma_r^2 dt must be > 0");
  const Vec mu = target.mean_fn(0.0);
  const Mat sigma = target.cov_fn(0.0);
  const Eigen::Index n = mu.size();
  require(sigma.rows() == n && sigma.cols() == n, ErrorKind::shape,
          "covariance does not match mean");
  AdaptationFlow flow;
  flow.dt = dt;
  flow.mu = mu;
  flow.k = sigma_r2_dt * sigma.ldlt().solve(Mat::Identity(n, n));
  Rng rng = make_rng(seed, 71);
  const Eigen::LLT<Mat> chol(sigma);
  const Vec z = chol.matrixL() * standard_normal(n, rng);
  Vec r = mu + 2.0 * z;
  Vec c = Vec::Zero(n);
  const auto steps = static_cast<long>(std::llround(duration / dt));
  flow.r.reserve(static_cast<std::size_t>(steps + 1));
  flow.r.push_back(r);
  for (long i = 0; i < steps; ++i) {
    const Vec r_next = r + dt * (flow.k * (mu - r) - c);
    c = c + dt * (-c + cfg.b_a * r) / cfg.tau_a;
    r = r_next;
    flow.r.push_back(r);
  }
  return flow;
}

/// Max over interior points of |central second difference - rhs(r, central
/// first difference)|.
template <typename Rhs>
double second_order_residual(const AdaptationFlow& flow, Rhs&& rhs) {
  double worst = 0.0;
  const double dt = flow.dt;
  for (std::size_t i = 1; i + 1 < flow.r.size(); ++i) {
    const Vec second = (flow.r[i + 1] - 2.0 * flow.r[i] + flow.r[i - 1]) / (dt * dt);
    const Vec first = (flow.r[i + 1] - flow.r[i - 1]) / (2.0 * dt);
    worst = std::max(worst, (second - rhs(flow.r[i], first)).cwiseAbs().maxCoeff());
  }
  return worst;
}

/// Residual of the simulated adapted flow against its second-order form;
/// shrinks linearly with dt.
inline double adaptation_second_order_residual(const GaussianMoments& target,
                                               double sigma_r2_dt,
                                               const DynamicsConfig& cfg, double dt,
                                               double duration, std::uint64_t seed) {
  const AdaptationFlow flow =
      simulate_adaptation_flow(target, sigma_r2_dt, cfg, dt, duration, seed);
  const LinearSecondOrder sys = adaptation_system(flow.k, flow.mu, cfg.b_a, cfg.tau_a);
  return second_order_residual(flow, [&](const Vec& x, const Vec& xd) { return sys.rhs(x, xd); });
}

/// Same trajectory checked against `printed_adaptation_rhs`.
inline double printed_form_residual(const GaussianMoments& target, double sigma_r2_dt,
                                    const DynamicsConfig& cfg, double dt,
                                    double duration, std::uint64_t seed) {
  const AdaptationFlow flow =
      simulate_adaptation_flow(target, sigma_r2_dt, cfg, dt, duration, seed);
  return second_order_residual(flow, [&](const Vec& x, const Vec& xd) {
    return printed_adaptation_rhs(flow.k, flow.mu, cfg.b_a, cfg.tau_a, x, xd);
  });
}

}  // namespace replaylab
