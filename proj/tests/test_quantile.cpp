#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "roe/quantile.hpp"

using namespace roe;

namespace {

// Oracle: scan the empirical CDF F(y) = #{theta_i <= y} / N and return the
// smallest support point with tau <= F(y).
double scan_inverse_cdf(const std::vector<double>& sorted, double tau) {
  const double n = static_cast<double>(sorted.size());
  for (double y : sorted) {
    const double count = static_cast<double>(std::count_if(sorted.begin(), sorted.end(), [&](double v) { return v <= y; }));
    if (tau <= count / n + 1e-15) return y;
  }
  return sorted.back();
}

std::vector<double> random_sorted(std::mt19937_64& rng, std::size_t n, double lo = -5, double hi = 5) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& e : v) e = u(rng);
  std::sort(v.begin(), v.end());
  return v;
}

// Oracle: piecewise integral of the step inverse CDF over [a, b], by
// intersecting with each atom's interval ((i-1)/N, i/N].
double integral_oracle(const std::vector<double>& v, double a, double b) {
  const double n = static_cast<double>(v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double lo = std::max(a, static_cast<double>(i) / n);
    const double hi = std::min(b, static_cast<double>(i + 1) / n);
    if (hi > lo) s += (hi - lo) * v[i];
  }
  return s;
}

}  // namespace

TEST(QuantileDistribution, RejectsUnsortedAndNonFinite) {
  EXPECT_THROW(QuantileDistribution({2.0, 1.0}), DomainError);
  EXPECT_THROW(QuantileDistribution({1.0, NAN}), DomainError);
  EXPECT_THROW(QuantileDistribution({1.0, INFINITY}), DomainError);
  EXPECT_THROW(QuantileDistribution(std::vector<double>{}), UsageError);
  EXPECT_NO_THROW(QuantileDistribution({1.0, 1.0, 2.0}));
  EXPECT_EQ(QuantileDistribution::from_unsorted({3, 1, 2}), QuantileDistribution({1, 2, 3}));
}

TEST(RiskIntervalType, Validation) {
  EXPECT_THROW(RiskInterval(0.6, 0.5), DomainError);
  EXPECT_THROW(RiskInterval(-0.1, 0.5), DomainError);
  EXPECT_THROW(RiskInterval(0.1, 1.1), DomainError);
  EXPECT_NO_THROW(RiskInterval(0.3, 0.3));
  EXPECT_THROW(RiskLevel(1.5), DomainError);
}

TEST(InverseCdf, Examples) {
  const QuantileDistribution d({1, 2, 3, 4});
  EXPECT_EQ(inverse_cdf(d, 0.0), 1.0);
  EXPECT_EQ(inverse_cdf(d, 0.5), 2.0);
  EXPECT_EQ(inverse_cdf(d, 0.51), 3.0);
  EXPECT_EQ(inverse_cdf(d, 1.0), 4.0);
  EXPECT_THROW(inverse_cdf(d, 1.01), DomainError);
  EXPECT_THROW(inverse_cdf(d, -0.01), DomainError);
}

TEST(InverseCdf, MatchesStepCdfScan) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto v = random_sorted(rng, 1 + trial % 9);
    const double tau = trial % 7 == 0 ? static_cast<double>(trial % 5) / 4.0 : u(rng);
    EXPECT_EQ(inverse_cdf(v, tau), scan_inverse_cdf(v, tau)) << "tau=" << tau;
  }
}

TEST(Mean, Examples) {
  EXPECT_EQ(mean(QuantileDistribution({1, 1, 1, 1})), 1.0);
  EXPECT_EQ(mean(QuantileDistribution({1, 2, 3, 4})), 2.5);
  EXPECT_EQ(mean(QuantileDistribution({-2, 10})), 4.0);
}

TEST(RangeMean, Examples) {
  const QuantileDistribution d({1, 2, 3, 4});
  EXPECT_EQ(range_mean(d, {0, 1}), 2.5);
  EXPECT_DOUBLE_EQ(range_mean(d, {0.75, 1}), 4.0);
  EXPECT_DOUBLE_EQ(range_mean(QuantileDistribution({0, 10}), {0.5, 1}), 10.0);
  EXPECT_EQ(range_mean(d, {0.6, 0.6}), inverse_cdf(d, 0.6));
  EXPECT_EQ(range_mean(d, {1, 1}), 4.0);
  EXPECT_EQ(range_mean(d, {0, 0}), 1.0);
}

TEST(RangeMean, MatchesPiecewiseIntegral) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5000; ++trial) {
    const auto v = random_sorted(rng, 1 + trial % 12);
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    if (b - a < 1e-9) continue;
    EXPECT_NEAR(range_mean(v, {a, b}), integral_oracle(v, a, b) / (b - a), 1e-9);
  }
}

TEST(RangeMean, MonteCarloWithinFourStandardErrors) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Case {
    std::vector<double> d;
    double a, b;
  };
  std::vector<Case> cases{{{1, 2, 3, 4}, 0.75, 1.0}, {{0, 10}, 0.5, 1.0}};
  for (int i = 0; i < 4; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    cases.push_back({random_sorted(rng, 8), a, b});
  }
  constexpr int draws = 1'000'000;
  for (const auto& c : cases) {
    std::uniform_real_distribution<double> tau(c.a, c.b);
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double x = inverse_cdf(c.d, tau(rng));
      s += x;
      ss += x * x;
    }
    const double m = s / draws;
    const double se = std::sqrt(std::max(ss / draws - m * m, 0.0) / draws);
    EXPECT_LE(std::abs(range_mean(c.d, {c.a, c.b}) - m), 4.0 * se + 1e-9 * (1.0 + std::abs(m)));
  }
}

TEST(Project, Examples) {
  const QuantileDistribution d({1, 2, 3, 4});
  EXPECT_EQ(project(d, {0, 1}), d);
  EXPECT_EQ(project(d, {0.5, 1}), QuantileDistribution({3, 3, 4, 4}));
  const QuantileDistribution c({5, 5, 5, 5});
  EXPECT_EQ(project(c, {0.2, 0.3}), c);
}

TEST(Project, ComposedInverseCdfOracle) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + trial % 10;
    const auto v = random_sorted(rng, n);
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const auto p = project(QuantileDistribution(v), {a, b});
    for (std::size_t i = 0; i < n; ++i) {
      const double mid = (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n));
      EXPECT_EQ(p[i], scan_inverse_cdf(v, (b - a) * mid + a));
    }
    EXPECT_TRUE(std::is_sorted(p.values().begin(), p.values().end()));
  }
}

TEST(Project, IdentityOnFullInterval) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 500; ++trial) {
    const QuantileDistribution d(random_sorted(rng, 1 + trial % 40));
    EXPECT_EQ(project(d, RiskInterval::neutral()), d);
  }
}

TEST(Project, NonExpansive) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t n = 1 + trial % 33;
    const QuantileDistribution d1(random_sorted(rng, n)), d2(random_sorted(rng, n));
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    EXPECT_LE(wasserstein_inf(project(d1, {a, b}), project(d2, {a, b})), wasserstein_inf(d1, d2) + 1e-12);
  }
}

TEST(Wasserstein, Examples) {
  const QuantileDistribution a({1, 2, 3});
  EXPECT_EQ(wasserstein_inf(a, a), 0.0);
  EXPECT_EQ(wasserstein_inf(QuantileDistribution({0, 0}), QuantileDistribution({1, 3})), 3.0);
  EXPECT_EQ(wasserstein_inf(QuantileDistribution({1, 2, 3, 4}), QuantileDistribution({2, 2, 3, 6})), 2.0);
  EXPECT_THROW(wasserstein_inf(a, QuantileDistribution({1, 2})), UsageError);
  EXPECT_EQ(wasserstein_p(a, a, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(wasserstein_p(QuantileDistribution({0, 0}), QuantileDistribution({1, 3}), 1.0), 2.0);
  EXPECT_NEAR(wasserstein_p(QuantileDistribution({0, 0}), QuantileDistribution({1, 3}), 2.0), 2.2360679, 1e-7);
  EXPECT_THROW(wasserstein_p(a, a, 0.5), DomainError);
}

TEST(Wasserstein, MatchesNumericIntegration) {
  // Midpoint rule on a grid that aligns with every atom boundary.
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 6;
    const auto v1 = random_sorted(rng, n), v2 = random_sorted(rng, n);
    for (double p : {1.0, 2.0, 3.0}) {
      const int steps = 600 * static_cast<int>(n);
      double s = 0.0;
      for (int k = 0; k < steps; ++k) {
        const double tau = (k + 0.5) / steps;
        s += std::pow(std::abs(inverse_cdf(v1, tau) - inverse_cdf(v2, tau)), p) / steps;
      }
      EXPECT_NEAR(wasserstein_p(v1, v2, p), std::pow(s, 1.0 / p), 1e-9);
    }
  }
}

TEST(Wasserstein, MetricAxioms) {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_sorted(rng, 6), b = random_sorted(rng, 6), c = random_sorted(rng, 6);
    for (double p : {1.0, 2.0, 4.5}) {
      EXPECT_EQ(wasserstein_p(a, a, p), 0.0);
      EXPECT_NEAR(wasserstein_p(a, b, p), wasserstein_p(b, a, p), 1e-12);
      EXPECT_LE(wasserstein_p(a, c, p), wasserstein_p(a, b, p) + wasserstein_p(b, c, p) + 1e-9);
    }
  }
}

TEST(Huber, LossExamples) {
  EXPECT_EQ(huber_quantile_loss(0.0, 0.7, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(huber_quantile_loss(2.0, 0.5, 1.0), 0.75);
  EXPECT_DOUBLE_EQ(huber_quantile_loss(-0.5, 0.25, 1.0), 0.09375);
}

TEST(Huber, GradExamplesAndFiniteDifferences) {
  EXPECT_EQ(huber_quantile_grad(0.0, 0.3, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(huber_quantile_grad(2.0, 0.5, 1.0), -0.5);
  EXPECT_DOUBLE_EQ(huber_quantile_grad(-0.5, 0.25, 1.0), 0.375);
  // The loss is a function of theta through delta = target - theta.
  auto fd = [](double delta, double tau, double k) {
    const double h = 1e-6;
    return (huber_quantile_loss(delta - h, tau, k) - huber_quantile_loss(delta + h, tau, k)) / (2 * h);
  };
  EXPECT_NEAR(fd(2.0, 0.5, 1.0), -0.5, 1e-6);
  EXPECT_NEAR(fd(-0.5, 0.25, 1.0), 0.375, 1e-6);
}

TEST(LeftTruncatedVariance, Examples) {
  EXPECT_EQ(left_truncated_variance(QuantileDistribution({3, 3, 3, 3})), 0.0);
  EXPECT_DOUBLE_EQ(left_truncated_variance(QuantileDistribution({0, 0, 0, 2})), 0.5);
  EXPECT_DOUBLE_EQ(left_truncated_variance(QuantileDistribution({1, 2, 3, 4})), 0.625);
  EXPECT_THROW(left_truncated_variance(QuantileDistribution({1, 2, 3})), UsageError);
}

TEST(LeftTruncatedVariance, MatchesDirectSum) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 * (1 + trial % 16);
    const auto v = random_sorted(rng, n);
    double s = 0.0;
    for (std::size_t j = n / 2; j <= n; ++j) s += std::pow(v[j - 1] - v[n / 2 - 1], 2);
    EXPECT_NEAR(left_truncated_variance(v), s / (2.0 * static_cast<double>(n)), 1e-12);
  }
}

TEST(RiskLevelMapping, AlgorithmTable) {
  EXPECT_EQ(risk_level_to_interval(1.0), RiskInterval(1.0, 1.0));
  EXPECT_EQ(risk_level_to_interval(0.5), RiskInterval(0.5, 1.0));
  EXPECT_EQ(risk_level_to_interval(0.0), RiskInterval(0.0, 1.0));
  EXPECT_EQ(risk_level_to_interval(-0.5), RiskInterval(0.0, 0.5));
  EXPECT_EQ(risk_level_to_interval(-1.0), RiskInterval(0.0, 0.0));
  EXPECT_THROW(risk_level_to_interval(1.5), DomainError);
}

TEST(Optimism, UpperRangeMeanDominatesMeanAndIsMonotone) {
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5000; ++trial) {
    const auto v = random_sorted(rng, 1 + trial % 32);
    const double a1 = u(rng), a2 = u(rng);
    const double lo = std::min(a1, a2), hi = std::max(a1, a2);
    EXPECT_GE(range_mean(v, {lo, 1.0}), mean(v));
    EXPECT_LE(range_mean(v, {lo, 1.0}), range_mean(v, {hi, 1.0}) + 1e-12);
    EXPECT_EQ(range_mean(v, {0.0, 1.0}), mean(v));
  }
}
