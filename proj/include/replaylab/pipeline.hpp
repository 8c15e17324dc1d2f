// End-to-end experiment commands: generate awake data, train, sweep replay and
// report metrics. Every command writes only below its output directory.
#pragma once

#include "checkpoint.hpp"
#include "replay.hpp"
#include "svg.hpp"
#include "tasks.hpp"

#include <cstdlib>
#include <iostream>

namespace replaylab {

namespace fs = std::filesystem;

/// Place-cell maps are fixed per task so that data, training and replay agree
/// without passing the map around.
inline constexpr std::uint64_t kPlaceCellSeed = 512;

/// REPLAYLAB_SEED when set, otherwise 0.
inline std::uint64_t default_seed() {
  if (const char* env = std::getenv("REPLAYLAB_SEED")) {
    std::uint64_t value = 0;
    const std::string_view text(env);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    require(ec == std::errc{} && ptr == text.data() + text.size(), ErrorKind::parameter,
            "REPLAYLAB_SEED is not an unsigned integer");
    return value;
  }
  return 0;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::io, "cannot create " + dir.string());
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path.string());
  os << text;
  require(static_cast<bool>(os), ErrorKind::io, "write failed: " + path.string());
}

// =============================================================================
// generate
// =============================================================================

struct GenerateOptions {
  Task task = Task::triangle;
  std::optional<int> n;  // per direction; total for unlabelled tasks
  std::uint64_t seed = 0;
  fs::path out = "out";
};

/// Awake paths go to dir_{label}/traj_{i}.csv (paths/traj_{i}.csv when
/// unlabelled). Rat tasks also get place_cells.csv.
inline std::size_t write_awake_dir(const fs::path& dir, const std::vector<Trajectory>& paths) {
  ensure_dir(dir);
  std::map<std::string, int> counters;
  for (const auto& p : paths) {
    const std::string sub = p.label ? "dir_" + std::to_string(*p.label) : "paths";
    ensure_dir(dir / sub);
    const int i = counters[sub]++;
    write_trajectory_csv(dir / sub / ("traj_" + std::to_string(i) + ".csv"), p);
  }
  return paths.size();
}

namespace detail {

inline std::vector<fs::path> numbered_files(const fs::path& dir, const std::string& prefix) {
  std::vector<std::pair<long, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind(prefix, 0) != 0) continue;
    const std::string rest = name.substr(prefix.size());
    long index = 0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), index);
    if (ec != std::errc{}) continue;
    found.emplace_back(index, entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(f.second);
  return out;
}

}  // namespace detail

inline std::vector<Trajectory> read_awake_dir(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::io, "no awake directory " + dir.string());
  std::vector<fs::path> subdirs = detail::numbered_files(dir, "dir_");
  if (fs::is_directory(dir / "paths")) subdirs.push_back(dir / "paths");
  std::vector<Trajectory> out;
  for (const auto& sub : subdirs)
    for (const auto& f : detail::numbered_files(sub, "traj_"))
      out.push_back(read_trajectory_csv(f));
  require(!out.empty(), ErrorKind::insufficient_data,
          "no trajectories under " + dir.string());
  return out;
}

inline std::size_t cmd_generate(const GenerateOptions& opt) {
  const TaskPreset preset = task_preset(opt.task);
  const int n = opt.n.value_or(preset.n_per_direction);
  require(n >= 1, ErrorKind::parameter, "--n must be >= 1");
  const auto paths = awake_paths(preset, n, opt.seed);
  const std::size_t written = write_awake_dir(opt.out, paths);
  if (is_rat(opt.task)) {
    std::ofstream os(opt.out / "place_cells.csv", std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::io, "cannot write place_cells.csv");
    write_place_cell_map(os, task_place_cells(preset, kPlaceCellSeed));
  }
  return written;
}

// =============================================================================
// train
// =============================================================================

struct TrainOptions {
  Task task = Task::triangle;
  std::optional<Eigen::Index> hidden;
  double epoch_scale = 0.1;
  std::optional<int> mask_k;
  bool leak = true;
  std::vector<std::uint64_t> seeds{0};
  std::optional<int> n;       // awake paths when generating internally
  std::optional<fs::path> data;  // awake directory from `generate`
  std::uint64_t data_seed = 0;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double grad_clip = 1.0;
  fs::path out = "out";
};

struct TrainedModel {
  std::uint64_t seed = 0;
  RnnParams params;
  LossLog log;
};

/// Trains one network per seed. With several seeds each one is written to
/// seed_{s}/; otherwise directly to the output directory.
inline std::vector<TrainedModel> cmd_train(const TrainOptions& opt) {
  TaskPreset preset = task_preset(opt.task);
  if (opt.hidden) preset.hidden = *opt.hidden;
  require(preset.hidden >= 1, ErrorKind::parameter, "--hidden must be >= 1");
  require(!opt.seeds.empty(), ErrorKind::parameter, "no training seeds");
  const auto awake = opt.data ? read_awake_dir(*opt.data)
                              : awake_paths(preset, opt.n.value_or(preset.n_per_direction),
                                            opt.data_seed);
  std::optional<PlaceCellMap> cells;
  if (is_rat(opt.task)) cells = task_place_cells(preset, kPlaceCellSeed);
  const TrainingSet set = training_set(preset, awake, cells ? &*cells : nullptr);
  const Eigen::Index outputs = set.targets.front().cols();

  TrainConfig cfg;
  cfg.curriculum = scale_curriculum(
      opt.mask_k ? curriculum_to(preset.curriculum, *opt.mask_k) : preset.curriculum,
      opt.epoch_scale);
  cfg.batch_size = opt.batch_size;
  cfg.learning_rate = opt.learning_rate;
  cfg.grad_clip = opt.grad_clip;

  ensure_dir(opt.out);
  std::vector<TrainedModel> out;
  for (std::uint64_t seed : opt.seeds) {
    cfg.seed = seed;
    TrainResult result =
        train(set, initial_params(preset, outputs, opt.leak, seed), cfg);
    const fs::path dir = opt.seeds.size() > 1 ? opt.out / ("seed_" + std::to_string(seed))
                                              : opt.out;
    ensure_dir(dir);
    save_checkpoint(dir / "model.ckpt", result.params);
    std::ostringstream loss_csv;
    result.log.write_csv(loss_csv);
    write_text(dir / "loss.csv", loss_csv.str());
    out.push_back({seed, std::move(result.params), std::move(result.log)});
  }
  return out;
}

// =============================================================================
// replay
// =============================================================================

struct ReplayOptions {
  Task task = Task::triangle;
  std::optional<fs::path> checkpoint;
  bool analytic_ou = false;
  SweepSpec spec;
  int jobs = 1;
  fs::path out = "out";
};

/// Replay starting points of a task: the direction starts of a maze, the
/// origin for ou1d and encoded uniform box positions for rat tasks.
inline std::vector<ReplayStart> task_replay_starts(const TaskPreset& preset,
                                                   const PlaceCellMap* cells) {
  switch (preset.task) {
    case Task::ou1d:
      return {{Vec::Zero(1), -1}};
    case Task::tmaze:
    case Task::triangle:
      return replay_starts(preset.env);
    case Task::rat_biased:
    case Task::rat_unbiased: {
      require(cells != nullptr, ErrorKind::parameter, "rat replay needs place cells");
      Rng rng = make_rng(kPlaceCellSeed, 81);
      const Box& box = *preset.env.box;
      std::uniform_real_distribution<double> uniform(0.0, 1.0);
      std::vector<ReplayStart> starts;
      for (int i = 0; i < 64; ++i) {
        Vec p(2);
        for (int j = 0; j < 2; ++j) p[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * uniform(rng);
        starts.push_back({encode_point(*cells, p), -1});
      }
      return starts;
    }
  }
  return {};
}

/// Replay generator for a trained network of `task`; rat outputs are decoded
/// back to 2D positions.
inline ReplayGenerator network_replay(const TaskPreset& preset, const RnnParams& params,
                                      const SweepSpec& spec) {
  std::optional<PlaceCellMap> cells;
  if (is_rat(preset.task)) cells = task_place_cells(preset, kPlaceCellSeed);
  require(params.outputs() == (cells ? cells->cells() : preset.ou.dim()), ErrorKind::shape,
          "checkpoint output dimension does not match task " +
              std::string(to_string(preset.task)));
  const auto starts = task_replay_starts(preset, cells ? &*cells : nullptr);
  const ReplayInit init{preset.task == Task::ou1d
                            ? 0.0
                            : tag_norm_for(params, task_anchors(preset)),
                        0.1, preset.ou.dt};
  return [=](const DynamicsConfig& cfg, std::uint64_t seed) {
    auto paths = generate_replay(params, starts, init, cfg, spec.n_paths, spec.T_replay, seed);
    if (cells)
      for (auto& p : paths) p.states = decode_positions(*cells, p.states);
    return paths;
  };
}

inline ReplayGenerator analytic_replay(const TaskPreset& preset, const SweepSpec& spec) {
  require(preset.task == Task::ou1d, ErrorKind::unsupported,
          "--analytic-ou requires --task ou1d");
  return [ou = preset.ou, sigma_r = preset.sigma_r, spec](const DynamicsConfig& cfg,
                                                          std::uint64_t seed) {
    return analytic_ou_replay(ou, sigma_r, cfg, spec.n_paths, spec.T_replay, seed);
  };
}

inline ReplaySet cmd_replay(const ReplayOptions& opt) {
  const TaskPreset preset = task_preset(opt.task);
  ReplaySet set;
  if (opt.analytic_ou) {
    DynamicsConfig base;
    base.noise_mode = NoiseMode::additive;
    set = run_sweep(analytic_replay(preset, opt.spec), opt.spec, base, opt.jobs);
    set.checkpoint_id = "analytic";
  } else {
    require(opt.checkpoint.has_value(), ErrorKind::parameter,
            "replay needs --ckpt (or --analytic-ou)");
    const RnnParams params = load_checkpoint(*opt.checkpoint);
    set = run_sweep(network_replay(preset, params, opt.spec), opt.spec, DynamicsConfig{},
                    opt.jobs);
    set.checkpoint_id = checkpoint_id(params);
  }
  set.task = std::string(to_string(opt.task));
  write_replay_set(opt.out, set);
  return set;
}

// =============================================================================
// report
// =============================================================================

struct ReportCommandOptions {
  std::optional<Task> task;  // defaults to the task in the replay manifest
  fs::path replay_dir;
  std::optional<fs::path> awake_dir;
  std::uint64_t awake_seed = 0;
  int n_proj = 256;
  fs::path out = "out";
};

/// Sweep table: one row per lambda_v, one column per b_a; NaN marks a gap.
struct SweepTable {
  std::string name;
  std::vector<double> b_a;
  std::vector<double> lambda_v;
  std::vector<std::vector<double>> values;  // [lv][ba]

  std::string csv() const {
    std::ostringstream os;
    os << "lambda_v";
    for (double b : b_a) os << ",b_a=" << shortest(b);
    os << '\n';
    for (std::size_t i = 0; i < lambda_v.size(); ++i) {
      os << shortest(lambda_v[i]);
      for (double v : values[i]) {
        os << ',';
        if (std::isfinite(v)) os << sig17(v);
      }
      os << '\n';
    }
    return os.str();
  }

  static SweepTable parse_csv(std::istream& is) {
    SweepTable t;
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), ErrorKind::parameter, "empty table");
    const auto header = detail::split_csv(line);
    require(!header.empty() && header.front() == "lambda_v", ErrorKind::parameter,
            "table header must start with lambda_v");
    for (std::size_t j = 1; j < header.size(); ++j) {
      require(header[j].rfind("b_a=", 0) == 0, ErrorKind::parameter, "bad column " + header[j]);
      t.b_a.push_back(detail::parse_double(header[j].substr(4)));
    }
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto f = detail::split_csv(line);
      require(f.size() == header.size(), ErrorKind::parameter, "bad table row");
      t.lambda_v.push_back(detail::parse_double(f[0]));
      std::vector<double> row;
      for (std::size_t j = 1; j < f.size(); ++j)
        row.push_back(f[j].empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : detail::parse_double(f[j]));
      t.values.push_back(std::move(row));
    }
    return t;
  }

  std::string svg(const std::string& title) const {
    std::vector<std::string> rows, cols;
    for (double lv : lambda_v) rows.push_back(shortest(lv));
    for (double b : b_a) cols.push_back(shortest(b));
    return svg::heatmap(title, rows, cols, values, "lambda_v", "b_a");
  }
};

struct CellSummary {
  double b_a = 0.0;
  double lambda_v = 1.0;
  int seeds_ok = 0;
  MetricsReport mean;  // metrics averaged over successful seeds
};

struct ReportResult {
  std::vector<CellSummary> cells;
  std::vector<SweepTable> tables;
};

namespace detail {

inline double nan_mean(const std::vector<double>& v) {
  double sum = 0.0;
  int n = 0;
  for (double x : v)
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Metrics of every sweep cell, averaged over seeds.
inline ReportResult summarize(const ReplaySet& set, const std::vector<Trajectory>& awake,
                              const TaskPreset& preset, int n_proj) {
  const PathGeometry geom = task_geometry(preset);
  ReportOptions ro;
  ro.mode = is_rat(preset.task) ? DistanceMode::sliced : DistanceMode::per_direction_gaussian;
  ro.n_proj = n_proj;
  ReportResult result;
  for (const auto& cell : set.cells) {
    CellSummary s{cell.b_a, cell.lambda_v, 0, {}};
    std::vector<double> wd, med, mean_, med_pct, mean_pct, len, reg;
    std::vector<Vec> disp, var;
    for (const auto& run : cell.runs) {
      if (run.failure || run.paths.empty()) continue;
      MetricsReport r;
      try {
        r = compute_report(awake, run.paths, geom, ro);
      } catch (const Error&) {
        continue;
      }
      ++s.seeds_ok;
      wd.push_back(r.wd);
      med.push_back(r.reach_time_median);
      mean_.push_back(r.reach_time_mean);
      med_pct.push_back(r.reach_median_change_pct);
      mean_pct.push_back(r.reach_mean_change_pct);
      len.push_back(r.path_length_mean);
      reg.push_back(r.regions_visited_mean);
      disp.push_back(r.displacement_curve);
      var.push_back(r.variance_curve);
    }
    s.mean.wd = detail::nan_mean(wd);
    s.mean.reach_time_median = detail::nan_mean(med);
    s.mean.reach_time_mean = detail::nan_mean(mean_);
    s.mean.reach_median_change_pct = detail::nan_mean(med_pct);
    s.mean.reach_mean_change_pct = detail::nan_mean(mean_pct);
    s.mean.path_length_mean = detail::nan_mean(len);
    s.mean.regions_visited_mean = detail::nan_mean(reg);
    if (!disp.empty()) {
      s.mean.displacement_curve = Vec::Zero(disp.front().size());
      s.mean.variance_curve = Vec::Zero(var.front().size());
      for (std::size_t i = 0; i < disp.size(); ++i) {
        s.mean.displacement_curve += disp[i];
        s.mean.variance_curve += var[i];
      }
      s.mean.displacement_curve /= static_cast<double>(disp.size());
      s.mean.variance_curve /= static_cast<double>(var.size());
    }
    result.cells.push_back(std::move(s));
  }

  const std::vector<std::pair<std::string, double MetricsReport::*>> fields = {
      {"wd", &MetricsReport::wd},
      {"reach_time_median", &MetricsReport::reach_time_median},
      {"reach_time_mean", &MetricsReport::reach_time_mean},
      {"reach_time_median_change_pct", &MetricsReport::reach_median_change_pct},
      {"reach_time_mean_change_pct", &MetricsReport::reach_mean_change_pct},
      {"path_length", &MetricsReport::path_length_mean},
      {"regions_visited", &MetricsReport::regions_visited_mean},
  };
  const auto& ba = set.spec.b_a_values;
  const auto& lv = set.spec.lambda_v_values;
  for (const auto& [name, field] : fields) {
    SweepTable t{name, ba, lv, {}};
    t.values.assign(lv.size(), std::vector<double>(ba.size()));
    for (std::size_t i = 0; i < ba.size(); ++i)
      for (std::size_t j = 0; j < lv.size(); ++j)
        t.values[j][i] = result.cells[i * lv.size() + j].mean.*field;
    result.tables.push_back(std::move(t));
  }
  return result;
}

inline std::string curves_csv(const ReportResult& r, bool displacement) {
  std::ostringstream os;
  os << "t";
  Eigen::Index len = 0;
  for (const auto& c : r.cells) {
    os << ",b_a=" << shortest(c.b_a) << ";lambda_v=" << shortest(c.lambda_v);
    const Vec& v = displacement ? c.mean.displacement_curve : c.mean.variance_curve;
    len = std::max(len, v.size());
  }
  os << '\n';
  for (Eigen::Index t = 0; t < len; ++t) {
    os << t;
    for (const auto& c : r.cells) {
      const Vec& v = displacement ? c.mean.displacement_curve : c.mean.variance_curve;
      os << ',';
      if (t < v.size()) os << sig17(v[t]);
    }
    os << '\n';
  }
  return os.str();
}

inline ReportResult cmd_report(const ReportCommandOptions& opt) {
  const ReplaySet set = read_replay_set(opt.replay_dir);
  require(opt.task || !set.task.empty(), ErrorKind::parameter,
          "report needs --task (manifest has none)");
  const Task task = opt.task ? *opt.task : parse_task(set.task);
  const TaskPreset preset = task_preset(task);
  const auto awake = opt.awake_dir
                         ? read_awake_dir(*opt.awake_dir)
                         : awake_paths(preset, preset.n_per_direction, opt.awake_seed);
  ReportResult result = summarize(set, awake, preset, opt.n_proj);

  ensure_dir(opt.out);
  static const std::map<std::string, std::string> kTitles = {
      {"wd", "Wasserstein distance to awake paths"},
      {"reach_time_median", "Median reach time (steps)"},
      {"reach_time_mean", "Mean reach time (steps)"},
      {"reach_time_median_change_pct", "Change (%) from awake median reach time"},
      {"reach_time_mean_change_pct", "Change (%) from awake mean reach time"},
      {"path_length", "Mean path length"},
      {"regions_visited", "Mean regions visited"},
  };
  for (const auto& t : result.tables) {
    write_text(opt.out / (t.name + ".csv"), t.csv());
    write_text(opt.out / (t.name + ".svg"), t.svg(kTitles.at(t.name)));
  }
  write_text(opt.out / "displacement.csv", curves_csv(result, true));
  write_text(opt.out / "variance.csv", curves_csv(result, false));
  std::vector<svg::Series> disp, var;
  for (const auto& c : result.cells) {
    const std::string name = "b_a=" + shortest(c.b_a) + ", lv=" + shortest(c.lambda_v);
    disp.push_back({name, {c.mean.displacement_curve.data(),
                           c.mean.displacement_curve.data() + c.mean.displacement_curve.size()}});
    var.push_back({name, {c.mean.variance_curve.data(),
                          c.mean.variance_curve.data() + c.mean.variance_curve.size()}});
  }
  write_text(opt.out / "displacement.svg",
             svg::line_plot("Mean displacement", disp, 1.0, "step", "E||s(t) - s(0)||"));
  write_text(opt.out / "variance.svg",
             svg::line_plot("Mean per-coordinate variance", var, 1.0, "step", "variance"));
  return result;
}

}  // namespace replaylab
