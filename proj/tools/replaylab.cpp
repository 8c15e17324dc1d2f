// replaylab command-line front end.
//
//   replaylab generate --task triangle --n 100 --out awake
//   replaylab train    --task tmaze --hidden 20 --out model
//   replaylab replay   --task tmaze --ckpt model/model.ckpt --ba 0,0.5,1 --lv 1,0.9,0.8,0.7
//   replaylab report   --replay replay --awake awake --out report
//   replaylab verify
//
// Every command accepts --config FILE; explicit flags override file values.
// Errors are reported as a single line on stderr with a nonzero exit status.

#include <replaylab/replaylab.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace replaylab;

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    T value{};
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    require(ec == std::errc{} && ptr == item.data() + item.size(), ErrorKind::parameter,
            std::string("bad ") + what + " list entry '" + item + "'");
    out.push_back(value);
  }
  require(!out.empty(), ErrorKind::parameter, std::string("empty ") + what + " list");
  return out;
}

/// Flag value if given on the command line, else config value, else fallback.
struct Settings {
  const CLI::App* app = nullptr;
  Config config;

  bool given(const std::string& flag) const { return app->count(flag) > 0; }

  std::string str(const std::string& flag, const std::string& cli, const std::string& key,
                  const std::string& fallback) const {
    if (given(flag)) return cli;
    return config.get(key).value_or(fallback);
  }
  double num(const std::string& flag, double cli, const std::string& key, double fallback) const {
    if (given(flag)) return cli;
    return config.get_double(key).value_or(fallback);
  }
  long integer(const std::string& flag, long cli, const std::string& key, long fallback) const {
    if (given(flag)) return cli;
    return config.get_int(key).value_or(fallback);
  }
  std::optional<long> maybe_int(const std::string& flag, long cli, const std::string& key) const {
    if (given(flag)) return cli;
    return config.get_int(key);
  }
};

Settings settings_for(const CLI::App* app, const std::string& config_path) {
  Settings s{app, {}};
  if (!config_path.empty()) s.config = Config::load(config_path);
  return s;
}

std::uint64_t seed_setting(const Settings& s, std::uint64_t cli) {
  if (s.given("--seed")) return cli;
  if (auto v = s.config.get_int("seed")) return static_cast<std::uint64_t>(*v);
  return default_seed();
}

std::vector<std::uint64_t> seed_list(const Settings& s, const std::string& cli,
                                     const std::string& key, std::uint64_t fallback) {
  const std::string text = s.str("--seeds", cli, key, "");
  if (text.empty()) return {fallback};
  return parse_list<std::uint64_t>(text, "seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replay in noisy recurrent networks: generate, train, replay, report"};
  app.require_subcommand(1);

  std::string config_path, task_name = "triangle", out = "out";
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file");
    sub->add_option("--task", task_name, "ou1d | tmaze | triangle | rat_biased | rat_unbiased");
    sub->add_option("--seed", seed, "global seed (default: REPLAYLAB_SEED or 0)");
    sub->add_option("--out", out, "output directory");
  };

  // generate
  auto* gen = app.add_subcommand("generate", "write awake trajectories");
  add_common(gen);
  long gen_n = 0;
  gen->add_option("--n", gen_n, "paths per direction");

  // train
  auto* tr = app.add_subcommand("train", "train a path-integrating network");
  add_common(tr);
  long hidden = 0, mask_k = 0, train_n = 0, batch = 64;
  double epoch_scale = 0.1, lr = 1e-3, clip = 1.0;
  bool no_leak = false;
  std::string data_dir, train_seeds;
  tr->add_option("--hidden", hidden, "hidden units");
  tr->add_option("--epoch-scale", epoch_scale, "multiplier on the curriculum epoch counts");
  tr->add_option("--mask-k", mask_k, "final mask difficulty");
  tr->add_flag("--no-leak", no_leak, "disable the learnable leak");
  tr->add_option("--data", data_dir, "awake directory written by generate");
  tr->add_option("--n", train_n, "awake paths per direction when generating internally");
  tr->add_option("--seeds", train_seeds, "comma-separated network seeds");
  tr->add_option("--batch", batch, "minibatch size");
  tr->add_option("--lr", lr, "learning rate");
  tr->add_option("--clip", clip, "gradient norm clip");

  // replay
  auto* rp = app.add_subcommand("replay", "generate quiescent replay over a sweep");
  add_common(rp);
  std::string ckpt, ba = "0", lv = "1", replay_seeds;
  long paths = 50, horizon = 100, jobs = 1;
  double tau_a = 100.0;
  bool analytic = false;
  rp->add_option("--ckpt", ckpt, "checkpoint file");
  rp->add_flag("--analytic-ou", analytic, "closed-form OU score instead of a network");
  rp->add_option("--ba", ba, "adaptation strengths, comma-separated");
  rp->add_option("--lv", lv, "friction values, comma-separated");
  rp->add_option("--T", horizon, "replay length in steps");
  rp->add_option("--n", paths, "replay paths per cell and seed");
  rp->add_option("--tau-a", tau_a, "adaptation timescale in steps");
  rp->add_option("--seeds", replay_seeds, "comma-separated replay seeds");
  rp->add_option("--jobs", jobs, "parallel sweep cells");

  // report
  auto* rep = app.add_subcommand("report", "metric tables and figures for a replay sweep");
  add_common(rep);
  std::string replay_dir, awake_dir;
  long n_proj = 256;
  rep->add_option("--replay", replay_dir, "replay directory")->required();
  rep->add_option("--awake", awake_dir, "awake directory (default: regenerate)");
  rep->add_option("--n-proj", n_proj, "projections for sliced distances");

  // verify
  auto* ver = app.add_subcommand("verify", "run the numerical self-checks");
  ver->add_option("--seed", seed, "check seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: kind=usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*gen) {
      const Settings s = settings_for(gen, config_path);
      GenerateOptions opt;
      opt.task = parse_task(s.str("--task", task_name, "task", "triangle"));
      opt.seed = seed_setting(s, seed);
      opt.out = s.str("--out", out, "out", "out");
      if (auto n = s.maybe_int("--n", gen_n, "generate.n")) opt.n = static_cast<int>(*n);
      const auto written = cmd_generate(opt);
      std::cout << "wrote " << written << " trajectories to " << opt.out.string() << '\n';
    } else if (*tr) {
      const Settings s = settings_for(tr, config_path);
      TrainOptions opt;
      opt.task = parse_task(s.str("--task", task_name, "task", "triangle"));
      opt.out = s.str("--out", out, "out", "out");
      const std::uint64_t base_seed = seed_setting(s, seed);
      opt.seeds = seed_list(s, train_seeds, "train.seeds", base_seed);
      opt.data_seed = base_seed;
      if (auto v = s.maybe_int("--hidden", hidden, "train.hidden")) opt.hidden = *v;
      if (auto v = s.maybe_int("--mask-k", mask_k, "train.mask_k")) opt.mask_k = static_cast<int>(*v);
      if (auto v = s.maybe_int("--n", train_n, "train.n")) opt.n = static_cast<int>(*v);
      opt.epoch_scale = s.num("--epoch-scale", epoch_scale, "train.epoch_scale", 0.1);
      opt.leak = s.given("--no-leak") ? false : s.config.get_bool("train.leak").value_or(true);
      const std::string data = s.str("--data", data_dir, "train.data", "");
      if (!data.empty()) opt.data = data;
      opt.batch_size = static_cast<int>(s.integer("--batch", batch, "train.batch_size", 64));
      opt.learning_rate = s.num("--lr", lr, "train.learning_rate", 1e-3);
      opt.grad_clip = s.num("--clip", clip, "train.grad_clip", 1.0);
      for (const auto& m : cmd_train(opt))
        std::cout << "seed " << m.seed << ": final loss " << m.log.loss.back() << ", kappa "
                  << m.params.kappa << ", checkpoint " << checkpoint_id(m.params) << '\n';
    } else if (*rp) {
      const Settings s = settings_for(rp, config_path);
      ReplayOptions opt;
      opt.task = parse_task(s.str("--task", task_name, "task", analytic ? "ou1d" : "triangle"));
      opt.out = s.str("--out", out, "out", "out");
      opt.analytic_ou = analytic || s.config.get_bool("replay.analytic_ou").value_or(false);
      const std::string path = s.str("--ckpt", ckpt, "replay.ckpt", "");
      if (!path.empty()) opt.checkpoint = path;
      opt.spec.b_a_values = parse_list<double>(s.str("--ba", ba, "replay.b_a", "0"), "b_a");
      opt.spec.lambda_v_values = parse_list<double>(s.str("--lv", lv, "replay.lambda_v", "1"), "lambda_v");
      opt.spec.T_replay = static_cast<int>(s.integer("--T", horizon, "replay.T", 100));
      opt.spec.n_paths = static_cast<int>(s.integer("--n", paths, "replay.n_paths", 50));
      opt.spec.tau_a = s.num("--tau-a", tau_a, "replay.tau_a", 100.0);
      opt.spec.seeds = seed_list(s, replay_seeds, "replay.seeds", seed_setting(s, seed));
      opt.jobs = static_cast<int>(s.integer("--jobs", jobs, "replay.jobs", 1));
      const ReplaySet set = cmd_replay(opt);
      int failed = 0;
      for (const auto& c : set.cells)
        for (const auto& r : c.runs)
          if (r.failure) {
            ++failed;
            std::cerr << "cell b_a=" << c.b_a << " lambda_v=" << c.lambda_v << " seed=" << r.seed
                      << " failed: " << *r.failure << '\n';
          }
      std::cout << "wrote " << set.cells.size() << " cells to " << opt.out.string();
      if (failed) std::cout << " (" << failed << " failed runs)";
      std::cout << '\n';
    } else if (*rep) {
      const Settings s = settings_for(rep, config_path);
      ReportCommandOptions opt;
      if (s.given("--task") || s.config.has("task"))
        opt.task = parse_task(s.str("--task", task_name, "task", "triangle"));
      opt.replay_dir = replay_dir;
      const std::string awake = s.str("--awake", awake_dir, "report.awake", "");
      if (!awake.empty()) opt.awake_dir = awake;
      opt.awake_seed = seed_setting(s, seed);
      opt.n_proj = static_cast<int>(s.integer("--n-proj", n_proj, "report.n_proj", 256));
      opt.out = s.str("--out", out, "out", "out");
      const ReportResult r = cmd_report(opt);
      std::cout << "reported " << r.cells.size() << " cells to " << opt.out.string() << '\n';
    } else if (*ver) {
      const std::uint64_t s = ver->count("--seed") ? seed : default_seed();
      bool all = true;
      for (const auto& c : run_checks(s)) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
        all = all && c.pass;
      }
      return all ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: kind=" << to_string(e.kind());
    if (e.index()) std::cerr << " index=" << *e.index();
    std::string msg = e.message();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << ": " << msg << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: kind=internal: " << msg << '\n';
    return 1;
  }
  return 0;
}
