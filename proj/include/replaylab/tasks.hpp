// Task presets: awake data, network shape and curriculum for each experiment.
#pragma once

#include "metrics.hpp"
#include "place_field.hpp"
#include "trainer.hpp"

namespace replaylab {

enum class Task { ou1d, tmaze, triangle, rat_biased, rat_unbiased };

inline std::string_view to_string(Task task) {
  switch (task) {
    case Task::ou1d: return "ou1d";
    case Task::tmaze: return "tmaze";
    case Task::triangle: return "triangle";
    case Task::rat_biased: return "rat_biased";
    case Task::rat_unbiased: return "rat_unbiased";
  }
  return "?";
}

inline Task parse_task(std::string_view name) {
  for (Task t : {Task::ou1d, Task::tmaze, Task::triangle, Task::rat_biased,
                 Task::rat_unbiased})
    if (to_string(t) == name) return t;
  throw Error(ErrorKind::parameter, "unknown task '" + std::string(name) + "'");
}

inline bool is_rat(Task task) {
  return task == Task::rat_biased || task == Task::rat_unbiased;
}

/// Everything needed to produce awake data and train a network for a task.
/// Only the OU values, the hidden sizes and the epoch counts of the mazes come
/// from the original experiments; the rest are local choices.
struct TaskPreset {
  Task task = Task::triangle;
  OuParams ou;
  EnvironmentSpec env;
  Eigen::Index hidden = 40;
  Activation activation{ActivationKind::leaky_relu, 0.01};
  double sigma_r = 0.1;
  std::vector<CurriculumStage> curriculum;
  int n_per_direction = 100;  // awake paths per direction (or in total)
  int replay_T = 100;
  int explore_T = 400;
  InitOptions init;
  // rat tasks
  int place_cells = 512;
  RatWalkParams walk;

  Eigen::Index input_dim() const { return is_rat(task) ? 2 : ou.dim(); }

  /// Per-step noise std of the network: eta ~ N(0, sigma_r^2) each step,
  /// independent of the timestep of the awake process.
  double step_noise() const { return sigma_r; }
};

inline TaskPreset task_preset(Task task) {
  TaskPreset p;
  p.task = task;
  switch (task) {
    case Task::ou1d:
      p.ou = OuParams{};
      p.env = EnvironmentSpec{EnvKind::box,
                              {Vec::Zero(1), Vec::Constant(1, 5.0)},
                              Box{Vec::Constant(1, -1.0), Vec::Constant(1, 6.0)}};
      p.hidden = 20;
      p.sigma_r = p.ou.sigma_s;
      p.curriculum = {{1, 5000}};
      p.n_per_direction = 500;
      p.explore_T = 100;
      break;
    case Task::tmaze:
      p.ou = OuParams{4.0, Vec::Zero(2), 0.1, 0.02, 0.02, 100};
      p.env = EnvironmentSpec::tmaze();
      p.hidden = 20;
      p.curriculum = {{1, 12000}, {2, 5000}, {3, 5000}};
      break;
    case Task::triangle:
      p.ou = OuParams{2.0, Vec::Zero(2), 0.1, 0.02, 0.02, 100};
      p.env = EnvironmentSpec::triangle();
      p.hidden = 40;
      p.curriculum = {{1, 20000}, {2, 5000}, {3, 5000}};
      break;
    case Task::rat_biased:
    case Task::rat_unbiased: {
      const bool biased = task == Task::rat_biased;
      p.ou = OuParams{0.0, Vec::Zero(2), 0.0, 0.0, 0.02, 100};
      p.env = EnvironmentSpec::box_env(Eigen::Vector2d(-0.5, -0.5),
                                       Eigen::Vector2d(0.5, 0.5));
      p.hidden = 128;
      p.activation = Activation{ActivationKind::relu, 0.01};
      p.curriculum = biased ? std::vector<CurriculumStage>{{1, 2000}, {2, 500}, {3, 500}}
                            : std::vector<CurriculumStage>{
                                  {1, 2000}, {2, 500}, {4, 500}, {6, 500}};
      p.n_per_direction = 500;
      p.explore_T = 500;
      break;
    }
  }
  return p;
}

/// Final mask difficulty of a preset's curriculum.
inline int final_mask(const TaskPreset& p) { return p.curriculum.back().k; }

/// Keeps the stages of `base` easier than `k` and finishes with a stage at k
/// (as long as the last stage of `base`).
inline std::vector<CurriculumStage> curriculum_to(const std::vector<CurriculumStage>& base,
                                                  int k) {
  require(k >= 1 && !base.empty(), ErrorKind::parameter, "mask k must be >= 1");
  std::vector<CurriculumStage> out;
  for (const auto& s : base)
    if (s.k < k) out.push_back(s);
  out.push_back({k, base.size() > 1 ? base.back().epochs : base.front().epochs});
  return out;
}

// =============================================================================
// Awake data
// =============================================================================

/// Awake paths in state space (2D positions for rat tasks).
inline std::vector<Trajectory> awake_paths(const TaskPreset& p, int n,
                                           std::uint64_t seed) {
  switch (p.task) {
    case Task::ou1d: {
      auto paths = simulate_ou(p.ou, n, seed);
      for (auto& t : paths) t.label = 0;
      return paths;
    }
    case Task::tmaze:
    case Task::triangle:
      return generate_task_paths(p.env, p.ou, n, seed);
    case Task::rat_biased:
    case Task::rat_unbiased:
      return generate_rat_walk(p.task == Task::rat_biased ? RatKind::biased
                                                          : RatKind::unbiased,
                               p.env, p.ou.dt, p.ou.horizon, n, seed, p.walk);
  }
  return {};
}

inline PlaceCellMap task_place_cells(const TaskPreset& p, std::uint64_t seed) {
  return make_place_cell_map(p.env, p.place_cells, seed);
}

/// Points whose hidden-space norms set the direction tag norm.
inline std::vector<Vec> task_anchors(const TaskPreset& p) {
  if (p.task == Task::ou1d) return {Vec::Zero(1)};
  return p.env.endpoints;
}

/// Training pairs: velocity inputs and state targets, or place-cell activity
/// targets for rat tasks.
inline TrainingSet training_set(const TaskPreset& p, const std::vector<Trajectory>& awake,
                                const PlaceCellMap* cells) {
  if (!is_rat(p.task)) {
    TrainingSet set = make_training_set(awake, p.task == Task::ou1d
                                                   ? std::vector<Vec>{}
                                                   : task_anchors(p));
    if (p.task == Task::ou1d)
      std::fill(set.directions.begin(), set.directions.end(), -1);
    return set;
  }
  require(cells != nullptr, ErrorKind::parameter, "rat tasks need a place cell map");
  TrainingSet set;
  for (const auto& t : awake) {
    set.inputs.push_back(velocities(t));
    set.targets.push_back(encode(*cells, t.states));
    set.directions.push_back(-1);
  }
  return set;
}

inline RnnParams initial_params(const TaskPreset& p, Eigen::Index outputs, bool leak,
                                std::uint64_t seed) {
  return init_params(p.hidden, p.input_dim(), outputs, p.activation, p.step_noise(), leak,
                     seed, p.init);
}

/// Geometry used by the report for reach times and regions.
inline PathGeometry task_geometry(const TaskPreset& p) {
  PathGeometry g;
  switch (p.task) {
    case Task::ou1d:
      g.direction_ends[0] = {Vec::Zero(1), p.ou.mu};
      break;
    case Task::tmaze:
    case Task::triangle:
      g = geometry_of(p.env);
      break;
    case Task::rat_biased:
      g.goal = p.env.center();
      break;
    case Task::rat_unbiased:
      break;
  }
  return g;
}

}  // namespace replaylab
