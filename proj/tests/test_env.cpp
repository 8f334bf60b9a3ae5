#include <gtest/gtest.h>

#include <cmath>

#include "resample/env.hpp"

using namespace resample;

namespace {

struct EpisodeLog {
  bool succeeded = false;
  int steps = 0;
  std::vector<Vec2> positions;
  double episode_return = 0.0;
};

EpisodeLog run_expert_episode(const EnvSpec& spec, double noise_std, Rng& rng) {
  EpisodeLog log;
  EnvState st = reset(spec, rng);
  log.positions.push_back(st.agent);
  while (!st.done) {
    const Vec2 a = scripted_expert(spec, st, noise_std, rng);
    const StepResult res = step(spec, st, a);
    st = res.state;
    log.episode_return += res.reward;
    log.positions.push_back(st.agent);
  }
  log.succeeded = st.succeeded;
  log.steps = st.t;
  return log;
}

bool crosses_wall_outside_gap(const EnvSpec& spec, const Vec2& p0, const Vec2& p1) {
  const double y0 = p0[1] - spec.wall_y, y1 = p1[1] - spec.wall_y;
  if (y0 * y1 >= 0.0) return false;
  const double t = y0 / (y0 - y1);
  const double xc = p0[0] + t * (p1[0] - p0[0]);
  return !(xc > spec.gap_left() && xc < spec.gap_right());
}

}  // namespace

TEST(EnvTest, DegenerateStartRegionIsExact) {
  EnvSpec spec;
  spec.start_region.lo = {0.2, -0.7};
  spec.start_region.hi = {0.2, -0.7};
  Rng rng(1);
  const EnvState st = reset(spec, rng);
  EXPECT_EQ(st.agent[0], 0.2);
  EXPECT_EQ(st.agent[1], -0.7);
  EXPECT_EQ(st.t, 0);
  EXPECT_FALSE(st.done);
  EXPECT_FALSE(st.succeeded);
}

TEST(EnvTest, SeededResetIsDeterministic) {
  EnvSpec spec;
  for (int trial = 0; trial < 3; ++trial) {
    Rng a(99), b(99);
    const EnvState s1 = reset(spec, a);
    const EnvState s2 = reset(spec, b);
    EXPECT_EQ(s1.agent, s2.agent);
  }
}

TEST(EnvTest, StartDistributionIsUniform) {
  EnvSpec spec;
  Rng rng(2024);
  const double mx = 0.5 * (spec.start_region.lo[0] + spec.start_region.hi[0]);
  const double my = 0.5 * (spec.start_region.lo[1] + spec.start_region.hi[1]);
  int bins[4] = {0, 0, 0, 0};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const EnvState st = reset(spec, rng);
    const int b = (st.agent[0] >= mx ? 1 : 0) + (st.agent[1] >= my ? 2 : 0);
    ++bins[b];
  }
  double chi2 = 0.0;
  for (int b = 0; b < 4; ++b) {
    const double diff = bins[b] - n / 4.0;
    chi2 += diff * diff / (n / 4.0);
  }
  EXPECT_LT(chi2, 11.345);  // chi-square(3) critical value at p = 0.01
}

TEST(EnvTest, AtGoalZeroActionSucceeds) {
  EnvSpec spec;
  EnvState st;
  st.agent = spec.goal;
  const StepResult res = step(spec, st, {0.0, 0.0});
  EXPECT_EQ(res.reward, 1.0);
  EXPECT_TRUE(res.done);
  EXPECT_TRUE(res.state.succeeded);
}

TEST(EnvTest, WallBlocksMotionOutsideGap) {
  EnvSpec spec;  // gap at x in (-0.1, 0.1)
  EnvState st;
  st.agent = {-0.5, -0.03};
  const StepResult res = step(spec, st, {0.0, 1.0});  // straight up into the wall
  EXPECT_EQ(res.reward, 0.0);
  EXPECT_LT(res.state.agent[1], spec.wall_y);
  EXPECT_NEAR(res.state.agent[1], spec.wall_y, 1e-8);
  EXPECT_EQ(res.state.agent[0], -0.5);
}

TEST(EnvTest, MotionThroughGapPasses) {
  EnvSpec spec;
  EnvState st;
  st.agent = {0.0, -0.03};
  const StepResult res = step(spec, st, {0.0, 1.0});
  EXPECT_GT(res.state.agent[1], spec.wall_y);
}

TEST(EnvTest, SteppingFinishedEpisodeIsUsageError) {
  EnvSpec spec;
  EnvState st;
  st.agent = spec.goal;
  const StepResult res = step(spec, st, {0.0, 0.0});
  EXPECT_THROW(step(spec, res.state, {0.0, 0.0}), UsageError);
}

TEST(EnvTest, DynamicsAreDeterministic) {
  EnvSpec spec;
  EnvState st;
  st.agent = {0.05, -0.4};
  const StepResult a = step(spec, st, {0.3, 0.8});
  const StepResult b = step(spec, st, {0.3, 0.8});
  EXPECT_EQ(a.state.agent, b.state.agent);
  EXPECT_EQ(a.reward, b.reward);
}

TEST(EnvTest, ExpertSucceedsFromAlmostEveryStart) {
  EnvSpec spec;
  Rng rng(7);
  int success = 0;
  for (int i = 0; i < 1000; ++i)
    success += run_expert_episode(spec, default_expert_noise(spec), rng).succeeded ? 1 : 0;
  EXPECT_GE(success, 990);
}

TEST(EnvTest, ExpertRobustToTripleNoise) {
  EnvSpec spec;
  Rng rng(8);
  int success = 0;
  for (int i = 0; i < 500; ++i)
    success += run_expert_episode(spec, 0.3 * spec.action_scale, rng).succeeded ? 1 : 0;
  EXPECT_GE(success, 450);
}

TEST(EnvTest, ExpertHeadsToGoalOncePastTheWall) {
  EnvSpec spec;
  EnvState st;
  st.agent = {-0.2, 0.2};
  Rng rng(1);
  const Vec2 a = scripted_expert(spec, st, 0.0, rng);
  const Vec2 to_goal{spec.goal[0] - st.agent[0], spec.goal[1] - st.agent[1]};
  const double cosine = (a[0] * to_goal[0] + a[1] * to_goal[1]) /
                        (std::hypot(a[0], a[1]) * std::hypot(to_goal[0], to_goal[1]));
  EXPECT_GT(cosine, 0.99);
}

TEST(EnvTest, ExpertHeadsToGapFromBelow) {
  EnvSpec spec;
  EnvState st;
  st.agent = {-0.6, -0.6};  // far from the gap, below the wall
  Rng rng(1);
  const Vec2 a = scripted_expert(spec, st, 0.0, rng);
  // The staging waypoint sits under the gap center.
  const Vec2 to_gap{spec.gap_center - st.agent[0],
                    (spec.wall_y - 3.0 * spec.action_scale) - st.agent[1]};
  const double cosine = (a[0] * to_gap[0] + a[1] * to_gap[1]) /
                        (std::hypot(a[0], a[1]) * std::hypot(to_gap[0], to_gap[1]));
  EXPECT_GT(cosine, 0.99);
  EXPECT_GT(a[0], 0.0);  // moving right, toward the gap
}

TEST(EnvTest, NoLoggedSegmentCrossesTheWallOutsideTheGap) {
  EnvSpec spec;
  Rng rng(31);
  for (int ep = 0; ep < 50; ++ep) {
    const EpisodeLog log = run_expert_episode(spec, 0.3 * spec.action_scale, rng);
    for (std::size_t i = 0; i + 1 < log.positions.size(); ++i)
      ASSERT_FALSE(crosses_wall_outside_gap(spec, log.positions[i], log.positions[i + 1]));
  }
}

TEST(EnvTest, EpisodeReturnIsBinaryAndMatchesSuccess) {
  EnvSpec spec;
  Rng rng(17);
  for (int ep = 0; ep < 200; ++ep) {
    const EpisodeLog log = run_expert_episode(spec, 0.5 * spec.action_scale, rng);
    EXPECT_TRUE(log.episode_return == 0.0 || log.episode_return == 1.0);
    EXPECT_EQ(log.episode_return == 1.0, log.succeeded);
  }
}

TEST(EnvTest, TaskFamilyMembersShareDynamics) {
  const auto family = make_task_family(3, 4);
  ASSERT_EQ(family.size(), 4u);
  for (std::size_t i = 0; i < family.size(); ++i) {
    EXPECT_EQ(family[i].horizon, family[0].horizon);
    EXPECT_EQ(family[i].action_scale, family[0].action_scale);
    EXPECT_EQ(family[i].gap_width, family[0].gap_width);
    for (std::size_t j = i + 1; j < family.size(); ++j) {
      EXPECT_NE(family[i].gap_center, family[j].gap_center);
      EXPECT_NE(family[i].id, family[j].id);
    }
  }
}

TEST(EnvTest, ExpertMastersEveryFamilyMember) {
  for (const auto& spec : make_task_family(5, 4)) {
    Rng rng(11);
    int success = 0;
    for (int i = 0; i < 200; ++i)
      success += run_expert_episode(spec, default_expert_noise(spec), rng).succeeded ? 1 : 0;
    EXPECT_GE(success, 180) << spec.id;
  }
}

TEST(EnvTest, InvalidSpecsAreRejected) {
  EnvSpec bad;
  bad.gap_center = 0.99;  // gap sticks out of the arena
  EXPECT_THROW(bad.validate(), InvalidArgumentError);
  EnvSpec bad2;
  bad2.horizon = 0;
  EXPECT_THROW(bad2.validate(), InvalidArgumentError);
  EnvSpec bad3;
  bad3.start_region.lo[1] = 0.5;  // straddles the wall
  bad3.start_region.hi[1] = 0.6;
  EXPECT_THROW(bad3.validate(), InvalidArgumentError);
}

TEST(EnvTest, ObservationNoiseOnlyAffectsObservation) {
  EnvSpec spec;
  spec.perturbation = 0.05;
  EnvState st;
  st.agent = {0.1, -0.5};
  Rng rng(3);
  const auto obs = observe(spec, st, rng);
  EXPECT_NE(obs[0], st.agent[0]);  // noisy view
  EXPECT_EQ(st.agent[0], 0.1);     // true state untouched
}
