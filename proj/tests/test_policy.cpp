#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "resample/env.hpp"
#include "resample/grad_check.hpp"
#include "resample/policy.hpp"

using namespace resample;

namespace {

/// Trunk with all-zero weights and chosen head biases: mean and log_std are
/// state-independent, which pins the distribution exactly.
GaussianPolicy constant_policy(std::vector<double> mean, double log_std_bias) {
  const int d = static_cast<int>(mean.size());
  Mlp trunk({2, 4, 2 * d});
  for (int i = 0; i < d; ++i) {
    trunk.bias_at(1, i) = mean[static_cast<std::size_t>(i)];
    trunk.bias_at(1, d + i) = log_std_bias;
  }
  return GaussianPolicy(std::move(trunk), d);
}

Dataset single_pair_dataset(const std::vector<double>& s, const std::vector<double>& a) {
  Dataset ds("unit", 2, 2);
  Trajectory t;
  t.steps.push_back({s, a, 1.0, true, 0.0});
  t.succeeded = true;
  ds.add(annotate_returns(t, 0.99));
  ds.seal(0.99);
  return ds;
}

}  // namespace

TEST(PolicyTest, ClampedLogStdIsNearlyDeterministic) {
  GaussianPolicy p = constant_policy({2.0, 2.0}, -10.0);  // clamps to -5
  const std::vector<double> state{0.0, 0.0};
  const GaussianPolicy::Heads h = p.heads(state);
  EXPECT_EQ(h.log_std[0], -5.0);
  EXPECT_FALSE(h.in_clamp_range[0]);

  const std::vector<double> mode = p.mean_action(state);
  Rng rng(4);
  int within = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto s = p.sample(state, rng);
    const double dev = std::max(std::fabs(s.action[0] - mode[0]),
                                std::fabs(s.action[1] - mode[1]));
    within += dev < 1e-2 ? 1 : 0;
  }
  EXPECT_GT(static_cast<double>(within) / n, 0.999);
}

TEST(PolicyTest, MirroredWeightsMirrorTheActionDistribution) {
  Rng rng(6);
  GaussianPolicy p = GaussianPolicy::random(2, 2, {8, 8}, rng);
  GaussianPolicy m = p;
  // Negate first-layer input columns (x -> -x) and the mean-head rows:
  // the mirrored net's mean at -x is the negated mean of the original at x.
  Mlp& trunk = m.trunk();
  for (int o = 0; o < 8; ++o)
    for (int i = 0; i < 2; ++i) trunk.weight_at(0, o, i) = -trunk.weight_at(0, o, i);
  for (int o = 0; o < 2; ++o) {
    for (int i = 0; i < 8; ++i) trunk.weight_at(2, o, i) = -trunk.weight_at(2, o, i);
    trunk.bias_at(2, o) = -trunk.bias_at(2, o);
  }
  const std::vector<double> x{0.37, -0.11};
  const std::vector<double> neg_x{-0.37, 0.11};
  const auto a = p.mean_action(x);
  const auto am = m.mean_action(neg_x);
  EXPECT_NEAR(am[0], -a[0], 1e-15);
  EXPECT_NEAR(am[1], -a[1], 1e-15);
}

TEST(PolicyTest, PreSquashSampleMeanMatchesMeanHead) {
  GaussianPolicy p = constant_policy({0.4, -0.7}, -0.5);
  const std::vector<double> state{0.1, 0.2};
  const GaussianPolicy::Heads h = p.heads(state);
  const double sigma = std::exp(h.log_std[0]);
  Rng rng(11);
  const int n = 100000;
  double acc0 = 0.0, acc1 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto s = p.sample(state, rng);
    acc0 += std::atanh(s.action[0]);
    acc1 += std::atanh(s.action[1]);
  }
  const double tol = 3.0 * sigma / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(acc0 / n, h.mean[0], tol);
  EXPECT_NEAR(acc1 / n, h.mean[1], tol);
}

TEST(PolicyTest, ModeMaximizesLogProbOnAGrid) {
  // Zero mean: the squashed density's maximum sits exactly at the origin
  // whenever sigma^2 < 1/2.
  GaussianPolicy p = constant_policy({0.0, 0.0}, -1.0);
  const std::vector<double> state{0.0, 0.0};
  const std::vector<double> mode = p.mean_action(state);
  const double lp_mode = p.log_prob(state, mode);
  for (double x = -0.99; x <= 0.99; x += 0.02) {
    for (double y = -0.99; y <= 0.99; y += 0.02) {
      if (std::fabs(x) < 1e-12 && std::fabs(y) < 1e-12) continue;
      EXPECT_LE(p.log_prob(state, std::vector<double>{x, y}), lp_mode);
    }
  }
  // Non-zero mean with a small sigma: the mode is displaced only by
  // O(sigma^2), far below the grid resolution.
  GaussianPolicy q = constant_policy({0.5, -0.3}, -3.0);
  const std::vector<double> qmode = q.mean_action(state);
  const double lp_qmode = q.log_prob(state, qmode);
  double best = -1e300;
  for (double x = -0.99; x <= 0.99; x += 0.005)
    for (double y = -0.99; y <= 0.99; y += 0.005)
      best = std::max(best, q.log_prob(state, std::vector<double>{x, y}));
  EXPECT_LE(best, lp_qmode + 1e-3);
}

TEST(PolicyTest, SymmetricPreSquashActionsHaveEqualLogProb) {
  GaussianPolicy p = constant_policy({0.0, 0.0}, -0.7);
  const std::vector<double> state{0.3, 0.3};
  for (double delta : {0.1, 0.4, 1.2}) {
    const double a = std::tanh(delta);
    const double lp_pos = p.log_prob(state, std::vector<double>{a, a});
    const double lp_neg = p.log_prob(state, std::vector<double>{-a, -a});
    EXPECT_NEAR(lp_pos, lp_neg, 1e-12);
  }
}

TEST(PolicyTest, DensityIntegratesToOne) {
  GaussianPolicy p = constant_policy({0.2, -0.1}, -1.0);
  const std::vector<double> state{0.0, 0.0};
  const int n = 200;
  const double h = 2.0 / n;
  double integral = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double x = -1.0 + (i + 0.5) * h;
      const double y = -1.0 + (j + 0.5) * h;
      integral += std::exp(p.log_prob(state, std::vector<double>{x, y})) * h * h;
    }
  }
  EXPECT_NEAR(integral, 1.0, 0.01);
}

TEST(PolicyTest, SampleAndLogProbAgree) {
  Rng init(2);
  GaussianPolicy p = GaussianPolicy::random(2, 2, {16, 16}, init);
  const std::vector<double> state{0.4, -0.6};
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto s = p.sample(state, rng);
    EXPECT_TRUE(std::isfinite(s.log_prob));
    EXPECT_NEAR(p.log_prob(state, s.action), s.log_prob, 1e-9);
    for (double a : s.action) EXPECT_LT(std::fabs(a), 1.0);
  }
}

TEST(PolicyTest, BoundaryActionsRejected) {
  GaussianPolicy p = constant_policy({0.0, 0.0}, 0.0);
  const std::vector<double> state{0.0, 0.0};
  EXPECT_THROW(p.log_prob(state, std::vector<double>{1.0, 0.0}), BoundaryError);
  EXPECT_THROW(p.log_prob(state, std::vector<double>{0.0, -1.2}), BoundaryError);
  EXPECT_NO_THROW(p.log_prob(state, clip_action_inward(std::vector<double>{1.0, -1.2})));
}

TEST(PolicyTest, ArgmaxByLogProbIsShiftInvariant) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> lps(10);
    for (auto& v : lps) v = rng.uniform(-8.0, 0.0);
    const double shift = rng.uniform(-5.0, 5.0);
    const auto pick = [](const std::vector<double>& v) {
      return std::distance(v.begin(), std::max_element(v.begin(), v.end()));
    };
    std::vector<double> shifted = lps;
    for (auto& v : shifted) v += shift;
    EXPECT_EQ(pick(lps), pick(shifted));
  }
}

TEST(BcTest, SinglePairInterpolation) {
  const std::vector<double> s{0.2, -0.3};
  const std::vector<double> a{0.3, -0.5};
  const Dataset ds = single_pair_dataset(s, a);
  Rng init(3);
  GaussianPolicy p = GaussianPolicy::random(2, 2, {16}, init);
  BcConfig cfg;
  cfg.epochs = 2500;
  cfg.batch = 0;  // full batch
  cfg.lr = 1e-2;
  Rng rng(5);
  bc_train(p, ds, cfg, rng);
  const auto mode = p.mean_action(s);
  EXPECT_NEAR(mode[0], a[0], 1e-2);
  EXPECT_NEAR(mode[1], a[1], 1e-2);
}

TEST(BcTest, DuplicatedDatasetGivesSameFullBatchCurve) {
  Rng data_rng(8);
  auto make = [&](int copies) {
    Dataset ds("unit", 2, 2);
    for (int c = 0; c < copies; ++c) {
      for (int i = 0; i < 3; ++i) {
        Trajectory t;
        const double v = 0.2 * (i + 1);
        t.steps.push_back({{v, -v}, {0.5 * v, v}, 1.0, true, 0.0});
        t.succeeded = true;
        ds.add(annotate_returns(t, 0.99));
      }
    }
    ds.seal(0.99);
    return ds;
  };
  const Dataset once = make(1);
  const Dataset twice = make(2);

  BcConfig cfg;
  cfg.epochs = 60;
  cfg.batch = 0;
  cfg.lr = 1e-3;
  Rng init(12);
  const GaussianPolicy p0 = GaussianPolicy::random(2, 2, {8}, init);

  GaussianPolicy pa = p0;
  Rng ra(1);
  const BcResult a = bc_train(pa, once, cfg, ra);
  GaussianPolicy pb = p0;
  Rng rb(1);
  const BcResult b = bc_train(pb, twice, cfg, rb);
  ASSERT_EQ(a.loss_curve.size(), b.loss_curve.size());
  for (std::size_t i = 0; i < a.loss_curve.size(); ++i)
    EXPECT_NEAR(a.loss_curve[i], b.loss_curve[i], 1e-9 * std::fabs(a.loss_curve[i]) + 1e-12);
}

TEST(BcTest, TrainingNeverMutatesTheDataset) {
  const Dataset ds = single_pair_dataset({0.1, 0.1}, {0.2, 0.2});
  const Dataset copy = ds;
  Rng init(3);
  GaussianPolicy p = GaussianPolicy::random(2, 2, {8}, init);
  BcConfig cfg;
  cfg.epochs = 10;
  Rng rng(4);
  bc_train(p, ds, cfg, rng);
  EXPECT_TRUE(ds == copy);
}

TEST(BcTest, NllGradientIsScaledL2GradientForFixedStd) {
  // Zero out the log_std head's weights so log_std is a pure bias: the
  // mean-path gradient of the NLL must equal the L2 gradient times
  // 1/sigma^2 (checked on the shared trunk parameters).
  const double log_std = -0.8;
  Rng init(21);
  GaussianPolicy p = GaussianPolicy::random(2, 2, {8}, init);
  Mlp& trunk = p.trunk();
  for (int o = 2; o < 4; ++o) {
    for (int i = 0; i < 8; ++i) trunk.weight_at(1, o, i) = 0.0;
    trunk.bias_at(1, o) = log_std;
  }
  const double sigma2 = std::exp(2.0 * log_std);

  Rng rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<double> s{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    const std::vector<double> a{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
    const auto out = trunk.forward(s);
    const GaussianPolicy::Heads h = p.heads_from_output(out);

    std::vector<double> up_nll(4, 0.0), up_l2(4, 0.0);
    for (int i = 0; i < 2; ++i) {
      const double z = std::atanh(a[static_cast<std::size_t>(i)]);
      const double u = (z - h.mean[static_cast<std::size_t>(i)]) / std::sqrt(sigma2);
      up_nll[static_cast<std::size_t>(i)] = -u / std::sqrt(sigma2);
      up_l2[static_cast<std::size_t>(i)] = h.mean[static_cast<std::size_t>(i)] - z;
      // NLL also moves the (frozen-by-zero-weights) log_std bias; the L2
      // loss does not. That head is excluded below.
      up_nll[static_cast<std::size_t>(i) + 2] = 1.0 - u * u;
    }
    const auto g_nll = trunk.backward(s, up_nll);
    const auto g_l2 = trunk.backward(s, up_l2);

    // Identify the last-layer log_std rows to exclude them.
    const double* base = trunk.params().data();
    const auto lsw_begin = static_cast<std::size_t>(&trunk.weight_at(1, 2, 0) - base);
    const auto lsb0 = static_cast<std::size_t>(&trunk.bias_at(1, 2) - base);
    const auto lsb1 = static_cast<std::size_t>(&trunk.bias_at(1, 3) - base);
    for (std::size_t k = 0; k < g_nll.param_grad.size(); ++k) {
      if ((k >= lsw_begin && k < lsw_begin + 16) || k == lsb0 || k == lsb1) continue;
      EXPECT_NEAR(g_nll.param_grad[k] * sigma2, g_l2.param_grad[k],
                  1e-10 * std::max(1.0, std::fabs(g_l2.param_grad[k])));
    }
  }
}

TEST(BcTest, ClonedExpertSolvesTheTaskUnperturbed) {
  EnvSpec spec;
  Rng demo_rng(1001);
  Dataset ds("bottleneck", 2, 2);
  int collected = 0;
  while (collected < 60) {
    EnvState st = reset(spec, demo_rng);
    Trajectory t;
    t.provenance = Provenance::Demo;
    while (!st.done) {
      const Vec2 a = scripted_expert(spec, st, default_expert_noise(spec), demo_rng);
      const StepResult res = step(spec, st, a);
      t.steps.push_back({{st.agent[0], st.agent[1]}, {a[0], a[1]}, res.reward, res.done, 0.0});
      st = res.state;
    }
    t.succeeded = st.succeeded;
    if (!t.succeeded) continue;
    ds.add(annotate_returns(t, 0.99));
    ++collected;
  }
  ds.seal(0.99);

  Rng init(7);
  GaussianPolicy p = GaussianPolicy::random(2, 2, {32, 32}, init);
  BcConfig cfg;
  Rng train(8);
  const BcResult r = bc_train(p, ds, cfg, train);
  EXPECT_TRUE(std::isfinite(r.final_loss));

  Rng eval_rng(9);
  int success = 0;
  for (int ep = 0; ep < 200; ++ep) {
    EnvState st = reset(spec, eval_rng);
    while (!st.done) {
      const auto a = p.mean_action(std::vector<double>{st.agent[0], st.agent[1]});
      st = step(spec, st, {a[0], a[1]}).state;
    }
    success += st.succeeded ? 1 : 0;
  }
  EXPECT_GE(success, 180);  // >= 90% of 200
}
