// Noisy recurrent dynamics: the update order of the adaptation/momentum
// pipeline, modifier-free reduction, hidden-state initialization and the
// analytic OU replay rule.
#include <gtest/gtest.h>

#include <replaylab/checkpoint.hpp>
#include <replaylab/rnn.hpp>

#include <sstream>

using namespace replaylab;

namespace {

RnnParams small_net(std::uint64_t seed, Eigen::Index n = 6, ActivationKind kind = ActivationKind::leaky_relu) {
  return init_params(n, 2, 2, Activation{kind, 0.01}, 0.1, true, seed);
}

// The modifier pipeline written out step by step from its definition.
NetState reference_step(const RnnParams& p, const NetState& s, const Vec& noise,
                        const DynamicsConfig& cfg) {
  const Vec f = p.kappa * s.r + p.activation(p.w_rec * s.r + noise);
  const Vec dr = f - s.r;
  NetState out;
  out.c = s.c + (-s.c + cfg.b_a * s.r) / cfg.tau_a;
  out.v = (1.0 - cfg.lambda_v) * s.v + dr;
  out.r = s.r - s.c + out.v;
  return out;
}

}  // namespace

// =============================================================================
// Single steps
// =============================================================================

TEST(Step, PlainRecurrenceWhenModifiersOff) {
  const RnnParams p = small_net(1);
  Rng rng = make_rng(1, 1);
  const NetState s = NetState::at(standard_normal(6, rng));
  const Vec u = standard_normal(2, rng), noise = 0.1 * standard_normal(6, rng);
  const NetState next = step(p, s, &u, noise, DynamicsConfig{});
  const Vec f = p.kappa * s.r + p.activation(p.w_rec * s.r + p.w_in * u + noise);
  EXPECT_TRUE((next.r.array() == f.array()).all());
}

TEST(Step, NoAdaptationKeepsCZero) {
  const RnnParams p = small_net(2);
  Rng rng = make_rng(2, 1);
  DynamicsConfig cfg;
  cfg.lambda_v = 0.6;
  for (double tau : {1.0, 7.0, 100.0}) {
    cfg.tau_a = tau;
    NetState s = NetState::at(standard_normal(6, rng));
    for (int t = 0; t < 20; ++t) {
      s = step(p, s, nullptr, 0.1 * standard_normal(6, rng), cfg);
      EXPECT_TRUE((s.c.array() == 0.0).all());
    }
  }
}

TEST(Step, LinearPureIntegrator) {
  RnnParams p;
  p.w_rec = Mat::Zero(1, 1);
  p.w_in = Mat::Identity(1, 1);
  p.d_out = Mat::Identity(1, 1);
  p.kappa = 1.0;
  p.activation = Activation{ActivationKind::linear, 0.0};
  const Vec u = Vec::Ones(1);
  const NetState next = step(p, NetState::at(Vec::Constant(1, 2.5)), &u, Vec::Zero(1), DynamicsConfig{});
  EXPECT_DOUBLE_EQ(next.r[0], 3.5);
}

TEST(Step, FollowsSpecifiedUpdateOrder) {
  const RnnParams p = small_net(3);
  Rng rng = make_rng(3, 1);
  DynamicsConfig cfg;
  cfg.b_a = 0.8;
  cfg.tau_a = 5.0;
  cfg.lambda_v = 0.7;
  NetState s{standard_normal(6, rng), 0.3 * standard_normal(6, rng), 0.3 * standard_normal(6, rng)};
  NetState ref = s;
  for (int t = 0; t < 30; ++t) {
    const Vec noise = 0.1 * standard_normal(6, rng);
    s = step(p, s, nullptr, noise, cfg);
    ref = reference_step(p, ref, noise, cfg);
    EXPECT_LT((s.r - ref.r).norm(), 1e-12 * (1.0 + ref.r.norm()));
    EXPECT_LT((s.c - ref.c).norm(), 1e-12 * (1.0 + ref.c.norm()));
    EXPECT_LT((s.v - ref.v).norm(), 1e-12 * (1.0 + ref.v.norm()));
  }
}

TEST(Step, UsingOldMomentumWouldDiffer) {
  const RnnParams p = small_net(4);
  Rng rng = make_rng(4, 1);
  DynamicsConfig cfg;
  cfg.lambda_v = 0.5;
  const NetState s{standard_normal(6, rng), Vec::Zero(6), standard_normal(6, rng)};
  const Vec noise = Vec::Zero(6);
  const NetState next = step(p, s, nullptr, noise, cfg);
  const Vec wrong = s.r - s.c + s.v;  // r+ from the old v
  EXPECT_GT((next.r - wrong).norm(), 1e-3);
}

TEST(Step, DisabledLeakEqualsZeroKappa) {
  RnnParams off = small_net(5);
  off.leak_enabled = false;
  RnnParams zero = off;
  zero.leak_enabled = true;
  zero.kappa = 0.0;
  Rng rng = make_rng(5, 1);
  const NetState s = NetState::at(standard_normal(6, rng));
  const Vec noise = 0.1 * standard_normal(6, rng);
  EXPECT_TRUE((step(off, s, nullptr, noise, {}).r.array() ==
               step(zero, s, nullptr, noise, {}).r.array()).all());
}

TEST(Step, ShapeMismatchRejected) {
  const RnnParams p = small_net(6);
  try {
    step(p, NetState::at(Vec::Zero(6)), nullptr, Vec::Zero(5), {});
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
  const Vec u = Vec::Zero(3);
  EXPECT_THROW(step(p, NetState::at(Vec::Zero(6)), &u, Vec::Zero(6), {}), Error);
}

// =============================================================================
// Rollouts
// =============================================================================

TEST(Rollout, SameSeedSameRollout) {
  const RnnParams p = small_net(7);
  DynamicsConfig cfg;
  cfg.b_a = 0.5;
  cfg.lambda_v = 0.8;
  const NetState init = NetState::at(Vec::Constant(6, 0.2));
  const Rollout a = rollout(p, init, nullptr, 50, cfg, 9);
  const Rollout b = rollout(p, init, nullptr, 50, cfg, 9);
  EXPECT_TRUE((a.hidden.array() == b.hidden.array()).all());
  EXPECT_TRUE((a.decoded.array() == (a.hidden * p.d_out.transpose()).array()).all());
}

TEST(Rollout, ModifierFreeRolloutIsBitwisePlainRecurrence) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RnnParams p = small_net(seed, 8, seed % 2 ? ActivationKind::relu : ActivationKind::tanh);
    Rng rng = make_rng(seed, 2);
    const NetState init = NetState::at(standard_normal(8, rng));
    const Rollout ro = rollout(p, init, nullptr, 40, DynamicsConfig{}, seed);
    Rng noise_rng = make_rng(seed, 11);  // rollout's noise stream
    Vec r = init.r;
    for (int t = 1; t < 40; ++t) {
      const Vec noise = p.sigma_r * standard_normal(8, noise_rng);
      r = (p.kappa * r + p.activation(p.w_rec * r + noise)).eval();
      ASSERT_TRUE((ro.hidden.row(t).transpose().array() == r.array()).all()) << "seed " << seed;
    }
  }
}

TEST(Rollout, NoiselessIntegratorTracksInput) {
  RnnParams p;
  p.w_rec = Mat::Zero(2, 2);
  p.w_in = 0.02 * Mat::Identity(2, 2);
  p.d_out = Mat::Identity(2, 2);
  p.kappa = 1.0;
  p.sigma_r = 0.0;
  p.activation = Activation{ActivationKind::linear, 0.0};
  Mat u(30, 2);
  for (int t = 0; t < 30; ++t) u.row(t) << std::sin(0.3 * t), 1.0;
  const Rollout ro = rollout(p, NetState::at(Vec::Zero(2)), &u, 30, {}, 0);
  Vec s = Vec::Zero(2);
  for (int t = 1; t < 30; ++t) {
    s += 0.02 * u.row(t - 1).transpose();
    EXPECT_LT((ro.decoded.row(t).transpose() - s).norm(), 1e-12);
  }
}

TEST(Rollout, DivergenceNamesStep) {
  RnnParams p = small_net(8);
  p.w_rec = 50.0 * Mat::Identity(6, 6);
  p.activation = Activation{ActivationKind::linear, 0.0};
  try {
    rollout(p, NetState::at(Vec::Ones(6)), nullptr, 100, {}, 0);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::divergence);
    ASSERT_TRUE(e.index().has_value());
    EXPECT_EQ(*e.index(), 4);  // ||r(t)|| ~ sqrt(6) 50.5^t first exceeds 1e6 at t = 4
  }
}

TEST(Rollout, Sqrt2NoiseScalesDraws) {
  RnnParams p = small_net(9);
  p.activation = Activation{ActivationKind::linear, 0.0};
  p.w_rec.setZero();
  p.kappa = 0.0;
  DynamicsConfig cfg;
  const Rollout plain = rollout(p, NetState::at(Vec::Zero(6)), nullptr, 5, cfg, 3);
  cfg.sqrt2_noise = true;
  const Rollout scaled = rollout(p, NetState::at(Vec::Zero(6)), nullptr, 5, cfg, 3);
  EXPECT_LT((scaled.hidden - std::sqrt(2.0) * plain.hidden).norm(), 1e-14);
}

// =============================================================================
// Initialization
// =============================================================================

TEST(InitHidden, DecodesToStart) {
  const auto env = EnvironmentSpec::triangle();
  const RnnParams p = small_net(10, 12);
  for (const auto& dir : directions(env)) {
    const NetState s = init_hidden(env, dir.id, p);
    const Vec start = env.endpoints[static_cast<std::size_t>(dir.start)];
    EXPECT_LT((p.d_out * s.r - start).norm(), 1e-10);
    EXPECT_TRUE((s.c.array() == 0.0).all() && (s.v.array() == 0.0).all());
  }
}

TEST(InitHidden, TagsAreDistinctAndInvisible) {
  const RnnParams p = small_net(11, 12);
  const Vec start = Eigen::Vector2d(0.3, -0.2);
  const Vec t0 = init_hidden_at(start, 0, p, kDefaultTagSeed, 1.0).r -
                 pseudo_inverse(p.d_out) * start;
  const Vec t3 = init_hidden_at(start, 3, p, kDefaultTagSeed, 1.0).r -
                 pseudo_inverse(p.d_out) * start;
  EXPECT_NEAR(t0.norm(), 1.0, 1e-12);
  EXPECT_GT((t0 - t3).norm(), 0.1);
  EXPECT_LT((p.d_out * t0).norm(), 1e-12);
  EXPECT_LT((p.d_out * t3).norm(), 1e-12);
}

TEST(InitHidden, DefaultTagNormIsHalfLargestEndpointNorm) {
  const auto env = EnvironmentSpec::tmaze();
  const RnnParams p = small_net(12, 10);
  const Mat pinv = pseudo_inverse(p.d_out);
  double best = 0.0;
  for (const auto& e : env.endpoints) best = std::max(best, (pinv * e).norm());
  const NetState s = init_hidden(env, 1, p);
  EXPECT_NEAR((s.r - pinv * env.endpoints[0]).norm(), 0.5 * best, 1e-12);
}

TEST(InitHidden, RankDeficientOutputRejected) {
  RnnParams p = small_net(13);
  p.d_out.row(1) = 2.0 * p.d_out.row(0);
  try {
    init_hidden(EnvironmentSpec::triangle(), 0, p);
    FAIL() << "expected a rank error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::rank);
  }
}

// =============================================================================
// Analytic OU replay
// =============================================================================

// Without process noise the leakage is 1, so each overdamped step lands on
// the current mean and the path climbs monotonically toward mu.
TEST(AnalyticReplay, NoiselessOverdampedRelaxesMonotonically) {
  const OuParams ou{2.0, Vec::Constant(1, 5.0), 0.0, 0.0, 0.02, 300};
  const auto paths = analytic_ou_replay(ou, 1e-9, DynamicsConfig{}, 3, 300, 1);
  for (const auto& p : paths) {
    for (Eigen::Index t = 1; t < p.steps(); ++t) {
      EXPECT_NEAR(p.states(t, 0), ou_moments(double(t - 1) * ou.dt, ou).mean, 1e-8);
      EXPECT_GE(p.states(t, 0), p.states(t - 1, 0) - 1e-8);
    }
    EXPECT_NEAR(p.states(299, 0), 5.0, 1e-3);
  }
}

TEST(AnalyticReplay, UnderdampingReachesMuSooner) {
  const OuParams ou{2.0, Vec::Constant(1, 5.0), 0.1, 0.2, 0.02, 100};
  auto first_within = [&](double lambda_v) {
    DynamicsConfig cfg;
    cfg.lambda_v = lambda_v;
    const auto paths = analytic_ou_replay(ou, 0.1, cfg, 1000, 400, 3);
    for (Eigen::Index t = 0; t < 400; ++t) {
      double m = 0.0;
      for (const auto& p : paths) m += p.states(t, 0);
      if (std::abs(m / 1000.0 - 5.0) <= 0.5) return double(t);
    }
    return 400.0;
  };
  EXPECT_LT(first_within(0.5), first_within(1.0));
}

// =============================================================================
// Checkpoints
// =============================================================================

TEST(Checkpoint, RoundTripIsBitExact) {
  RnnParams p = small_net(14, 5);
  p.kappa = 0.123456789012345678;
  std::stringstream ss;
  write_checkpoint(ss, p);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "REPLAYLAB-CKPT v1");
  const RnnParams q = read_checkpoint(ss);
  EXPECT_TRUE((p.w_rec.array() == q.w_rec.array()).all());
  EXPECT_TRUE((p.w_in.array() == q.w_in.array()).all());
  EXPECT_TRUE((p.d_out.array() == q.d_out.array()).all());
  EXPECT_EQ(p.kappa, q.kappa);
  EXPECT_EQ(p.sigma_r, q.sigma_r);
  EXPECT_EQ(p.activation.name(), q.activation.name());
  EXPECT_EQ(checkpoint_text(q), text);
}

TEST(Checkpoint, TruncatedInputRejected) {
  std::stringstream ss;
  write_checkpoint(ss, small_net(15, 4));
  std::string text = ss.str();
  text.resize(text.size() / 2);
  std::stringstream cut(text);
  EXPECT_THROW(read_checkpoint(cut), Error);
}
