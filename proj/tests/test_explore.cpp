#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "roe/explore.hpp"

using namespace roe;

namespace {

void set_dist(QTable& t, ObsId id, std::size_t a, const std::vector<double>& v) {
  auto out = t.mutable_dist(id, a);
  std::copy(v.begin(), v.end(), out.begin());
}

QTable random_table(std::mt19937_64& rng, std::size_t actions, std::size_t n) {
  QTable t(actions, n);
  const ObsId id = t.intern("s");
  std::normal_distribution<double> nd(0.0, 2.0);
  for (std::size_t a = 0; a < actions; ++a) {
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    std::sort(v.begin(), v.end());
    set_dist(t, id, a, v);
  }
  return t;
}

}  // namespace

TEST(EpsilonSchedule, Examples) {
  const EpsilonSchedule s;
  EXPECT_EQ(epsilon_at(s, 0), 1.0);
  EXPECT_EQ(epsilon_at(s, 50000), 0.05);
  EXPECT_EQ(epsilon_at(s, 90000), 0.05);
  EXPECT_DOUBLE_EQ(epsilon_at(s, 25000), 0.525);
  EXPECT_THROW((EpsilonSchedule{0.1, 0.5, 10}.validate()), DomainError);
  EXPECT_THROW((EpsilonSchedule{1.0, 0.0, 0}.validate()), UsageError);
}

TEST(RoeSchedule, Examples) {
  const RoeSchedule s{1.0, 0.0, 4};
  EXPECT_EQ(roe_interval_at(s, 0), RiskInterval(1.0, 1.0));
  EXPECT_EQ(roe_interval_at(s, 2), RiskInterval(0.5, 1.0));
  EXPECT_EQ(roe_interval_at(s, 4), RiskInterval(0.0, 1.0));
  EXPECT_EQ(roe_interval_at(s, 1000), RiskInterval(0.0, 1.0));
  EXPECT_THROW((RoeSchedule{1.5, 0.0, 4}.validate()), DomainError);
  EXPECT_THROW((RoeSchedule{1.0, 0.0, 0}.validate()), UsageError);
}

TEST(RoeSchedule, ClosedFormMatchesRecurrence) {
  for (const RoeSchedule s : {RoeSchedule{1.0, 0.0, 10000}, RoeSchedule{1.0, -1.0, 777},
                              RoeSchedule{0.3, 0.3, 50}, RoeSchedule{-0.2, 0.9, 123}}) {
    double w = s.omega_0;
    const double delta = s.step_size();
    for (std::uint64_t t = 0; t <= s.k + 5; ++t) {
      const double expected = t >= s.k ? s.omega_k : w;
      EXPECT_NEAR(roe_level_at(s, t), expected, 1e-12) << "t=" << t;
      w -= delta;
    }
    EXPECT_EQ(roe_level_at(s, 0), s.omega_0);
    EXPECT_EQ(roe_level_at(s, s.k), s.omega_k);
  }
}

TEST(RoeSchedule, SeekingToNeutralIsMonotone) {
  const RoeSchedule s{1.0, 0.0, 1000};
  double prev = 2.0;
  for (std::uint64_t t = 0; t <= 1100; ++t) {
    const auto r = roe_interval_at(s, t);
    EXPECT_EQ(r.beta(), 1.0);
    EXPECT_LE(r.alpha(), prev);
    prev = r.alpha();
  }
}

TEST(TwoPhaseSchedule, Waypoints) {
  const TwoPhaseSchedule averse{0.99, 0.25, 1000};
  const auto p1 = averse.phase1_steps();
  EXPECT_EQ(p1, 569u);  // round(1000 * 0.99 / 1.74)
  EXPECT_EQ(two_phase_interval_at(averse, 0), RiskInterval(0.99, 1.0));
  EXPECT_EQ(two_phase_interval_at(averse, p1), RiskInterval(0.0, 1.0));
  EXPECT_EQ(two_phase_interval_at(averse, 1000), RiskInterval(0.0, 0.25));
  EXPECT_EQ(two_phase_interval_at(averse, 5000), RiskInterval(0.0, 0.25));
  const TwoPhaseSchedule neutral{0.99, 1.0, 1000};
  EXPECT_EQ(neutral.phase1_steps(), 1000u);
  EXPECT_EQ(two_phase_interval_at(neutral, 500), RiskInterval(0.495, 1.0));
  EXPECT_EQ(two_phase_interval_at(neutral, 1000), RiskInterval(0.0, 1.0));
}

TEST(TwoPhaseSchedule, PhasesAreMonotone) {
  const TwoPhaseSchedule s{0.99, 0.25, 777};
  double pa = 2.0, pb = 2.0;
  bool beta_moving = false;
  for (std::uint64_t t = 0; t <= 800; ++t) {
    const auto r = two_phase_interval_at(s, t);
    EXPECT_LE(r.alpha(), pa);
    EXPECT_LE(r.beta(), pb);
    if (r.beta() < 1.0) beta_moving = true;
    if (beta_moving) {
      EXPECT_EQ(r.alpha(), 0.0);
    }
    pa = r.alpha();
    pb = r.beta();
  }
}

TEST(Dltv, CoefficientAndExample) {
  const DltvConfig c1{1.0};
  EXPECT_DOUBLE_EQ(dltv_coefficient(c1, 0), std::sqrt(std::log(2.0) / 2.0));
  EXPECT_DOUBLE_EQ(dltv_coefficient(c1, 100), std::sqrt(std::log(100.0) / 100.0));
  QTable t(2, 2);
  const ObsId id = t.intern("s");
  set_dist(t, id, 0, {-1, 3});  // mean 1, left truncated variance 4
  set_dist(t, id, 1, {2, 2});   // mean 2, variance 0
  EXPECT_DOUBLE_EQ(left_truncated_variance(t.dist(id, 0)), 4.0);
  const double score0 = 1.0 + dltv_coefficient(c1, 2) * 2.0;
  EXPECT_NEAR(score0, 2.177, 1e-3);
  std::mt19937_64 rng(0);
  EXPECT_EQ(select_dltv(t, id, 2, c1, rng), 0u);
  EXPECT_EQ(select_dltv(t, id, 2, DltvConfig{0.0}, rng), 1u);
  EXPECT_THROW(DltvConfig{-1.0}.validate(), DomainError);
}

TEST(Dltv, ZeroVarianceReducesToGreedyOnMean) {
  std::mt19937_64 rng(1);
  QTable t(3, 4);
  const ObsId id = t.intern("s");
  set_dist(t, id, 0, {1, 1, 1, 1});
  set_dist(t, id, 1, {3, 3, 3, 3});
  set_dist(t, id, 2, {2, 2, 2, 2});
  for (std::uint64_t step : {2u, 10u, 1000u}) EXPECT_EQ(select_dltv(t, id, step, DltvConfig{50.0}, rng), 1u);
}

TEST(EpsilonGreedy, FullyRandomIsUniform) {
  std::mt19937_64 rng(2);
  QTable t(4, 2);
  const ObsId id = t.intern("s");
  set_dist(t, id, 3, {9, 9});
  constexpr int draws = 10000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < draws; ++i) ++counts[select_epsilon_greedy_at(t, id, 1.0, rng)];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - draws / 4.0) * (c - draws / 4.0) / (draws / 4.0);
  EXPECT_LT(chi2, 16.27);  // chi-square, 3 dof, p = 0.001
}

TEST(EpsilonGreedy, ZeroIsGreedyAndHalfMixes) {
  std::mt19937_64 rng(3);
  QTable t(4, 2);
  const ObsId id = t.intern("s");
  set_dist(t, id, 2, {9, 9});
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(select_epsilon_greedy_at(t, id, 0.0, rng), 2u);
  constexpr int draws = 10000;
  int greedy = 0;
  for (int i = 0; i < draws; ++i) greedy += select_epsilon_greedy_at(t, id, 0.5, rng) == 2u;
  const double p = 0.5 + 0.5 / 4.0;
  EXPECT_NEAR(greedy, draws * p, 3.0 * std::sqrt(draws * p * (1 - p)));
}

TEST(StaticRisk, Presets) {
  EXPECT_EQ(presets::neutral(), RiskInterval(0.0, 1.0));
  EXPECT_EQ(presets::seeking(), RiskInterval(0.75, 1.0));
  EXPECT_EQ(presets::averse(), RiskInterval(0.0, 0.25));
  EXPECT_EQ(presets::drima_averse(), RiskInterval(0.0, 0.1));
  EXPECT_EQ(presets::drima_neutral(), RiskInterval(0.4, 0.5));
  EXPECT_EQ(presets::drima_seeking(), RiskInterval(0.9, 1.0));
}

TEST(RoeSelection, ExtremeSeekingPicksTopQuantileAndLateNeutralIsMeanGreedy) {
  std::mt19937_64 rng(4);
  const RoeSchedule s{1.0, 0.0, 100};
  for (int trial = 0; trial < 500; ++trial) {
    auto t = random_table(rng, 4, 8);
    const ObsId id = *t.find("s");
    std::vector<double> top, means;
    for (std::size_t a = 0; a < 4; ++a) {
      top.push_back(t.dist(id, a).back());
      means.push_back(mean(t.dist(id, a)));
    }
    const auto best_top = static_cast<std::size_t>(std::max_element(top.begin(), top.end()) - top.begin());
    const auto best_mean = static_cast<std::size_t>(std::max_element(means.begin(), means.end()) - means.begin());
    EXPECT_EQ(select_roe(t, id, 0, s, rng), best_top);
    EXPECT_EQ(select_roe(t, id, 100, s, rng), best_mean);
    EXPECT_EQ(select_roe(t, id, 5000, s, rng), best_mean);
  }
}

TEST(RoeSelection, StaticScheduleMatchesStaticRisk) {
  std::mt19937_64 a(5), b(5), gen(6);
  const RoeSchedule s{0.5, 0.5, 10};
  for (int trial = 0; trial < 300; ++trial) {
    const auto t = random_table(gen, 3, 4);
    const ObsId id = *t.find("s");
    EXPECT_EQ(select_roe(t, id, static_cast<std::uint64_t>(trial), s, a),
              select_static_risk(t, id, RiskInterval(0.5, 1.0), b));
  }
}

TEST(RoeSelection, ExtremeSeekingScoreDominatesNeutral) {
  std::mt19937_64 rng(7);
  const RoeSchedule s{1.0, 0.0, 100};
  for (int trial = 0; trial < 2000; ++trial) {
    const auto t = random_table(rng, 3, 2 + 2 * (trial % 16));
    const ObsId id = *t.find("s");
    for (std::size_t a = 0; a < 3; ++a)
      EXPECT_GE(range_mean(t.dist(id, a), roe_interval_at(s, 0)), mean(t.dist(id, a)));
  }
}

TEST(StepContext, SharedIntervalAndPolicyFields) {
  const PolicySpec roe = RoeScalarPolicy{RoeSchedule{1.0, 0.0, 10}};
  const auto c = step_context(roe, 5);
  EXPECT_EQ(c.interval, RiskInterval(0.5, 1.0));
  EXPECT_FALSE(c.uses_epsilon);
  const PolicySpec eps = EpsilonGreedyPolicy{EpsilonSchedule{1.0, 0.0, 10}};
  const auto e = step_context(eps, 5);
  EXPECT_TRUE(e.uses_epsilon);
  EXPECT_DOUBLE_EQ(e.epsilon, 0.5);
  EXPECT_EQ(e.interval, RiskInterval::neutral());
  const PolicySpec dltv = DltvPolicy{DltvConfig{2.0}};
  EXPECT_DOUBLE_EQ(step_context(dltv, 10).dltv_coef, dltv_coefficient(DltvConfig{2.0}, 10));
  const PolicySpec two = RoeTwoPhasePolicy{TwoPhaseSchedule{0.99, 0.25, 100}};
  EXPECT_EQ(step_context(two, 0).interval, RiskInterval(0.99, 1.0));
  EXPECT_STREQ(policy_type_name(two), "roe_two_phase");
}
