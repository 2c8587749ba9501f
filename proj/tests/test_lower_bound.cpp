#include <cmath>

#include <gtest/gtest.h>

#include "gdro/lower_bound.hpp"
#include "gdro/solvers.hpp"

using namespace gdro;

TEST(LowerBound, SampleExamples) {
  const double d = 0.1;
  LowerBoundInstance zero_mu = LowerBoundInstance::base(4, d);
  zero_mu.mu.setZero();
  LowerBoundInstance one_mu = LowerBoundInstance::base(4, d);
  one_mu.mu.setOnes();
  CounterRng rng(1, 0);
  EXPECT_DOUBLE_EQ(lb_sample(zero_mu, 0, 1.0, rng), 0.0);
  EXPECT_DOUBLE_EQ(lb_sample(one_mu, 3, 1.0, rng), d + 1.0);
  EXPECT_THROW((void)lb_sample(zero_mu, 4, 0.5, rng), std::out_of_range);
  EXPECT_THROW((void)lb_sample(zero_mu, 0, 1.5, rng), std::invalid_argument);
}

TEST(LowerBound, MonteCarloMean) {
  const double d = 0.2;
  const LowerBoundInstance p0 = LowerBoundInstance::base(3, d);
  CounterRng rng(2, 0);
  const int N = 1000000;
  double sum = 0.0;
  for (int k = 0; k < N; ++k) sum += lb_sample(p0, 0, 0.3, rng);
  const double expected = d * 0.7 + 0.5;
  EXPECT_DOUBLE_EQ(lb_expected_loss(p0, 0, 0.3), expected);
  EXPECT_LE(std::abs(sum / N - expected), 3.0 * 0.5 / std::sqrt(static_cast<double>(N)));
}

TEST(LowerBound, ExpectedLossExamples) {
  const double d = 0.15;
  const LowerBoundInstance p0 = LowerBoundInstance::base(5, d);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(lb_expected_loss(p0, i, 0.5), d / 2 + 0.5);
  const LowerBoundOptimum opt = lb_minimax_value(p0);
  EXPECT_DOUBLE_EQ(opt.theta, 0.5);
  EXPECT_DOUBLE_EQ(opt.value, 0.5 + d / 2);
  EXPECT_DOUBLE_EQ(lb_worst_group_loss(p0, 0.0), d + 0.5);
  EXPECT_NEAR(lb_gap(p0, 0.75), d / 4, 1e-15);

  const LowerBoundInstance p1 = LowerBoundInstance::perturbed(5, d, 2);
  EXPECT_DOUBLE_EQ(lb_expected_loss(p1, 2, 1.0), 0.5 + d);
  EXPECT_DOUBLE_EQ(lb_worst_group_loss(p1, 1.0), 0.5 + d);
  const LowerBoundOptimum opt1 = lb_minimax_value(p1);
  EXPECT_DOUBLE_EQ(opt1.theta, 1.0);
  EXPECT_DOUBLE_EQ(opt1.value, 0.5 + d);
}

TEST(LowerBound, MinimaxMatchesGridSearch) {
  for (double d : {0.0, 0.05, 0.2}) {
    for (std::size_t m : {2u, 3u, 8u}) {
      const LowerBoundInstance p0 = LowerBoundInstance::base(m, d);
      double best = 1e9, best_theta = 0.0;
      for (int k = 0; k <= 10000; ++k) {
        const double th = k / 10000.0;
        const double v = lb_worst_group_loss(p0, th);
        if (v < best - 1e-15) {
          best = v;
          best_theta = th;
        }
      }
      EXPECT_NEAR(lb_minimax_value(p0).value, best, 1e-12);
      EXPECT_NEAR(lb_minimax_value(p0).value, 0.5 + d / 2, 1e-15);
      if (d > 0) {
        EXPECT_NEAR(best_theta, 0.5, 1e-4);
      }
    }
  }
}

TEST(LowerBound, SeparationExampleAndGrid) {
  EXPECT_GE(lb_check_separation(0.1, 0, 4, 1e-4), 0.025 - 1e-4 * 0.1);
  for (double d : {0.02, 0.1, 0.24}) {
    for (std::size_t m : {2u, 4u, 16u}) {
      for (std::size_t star = 0; star + 1 < m; star += std::max<std::size_t>(1, m / 4)) {
        const double s = lb_check_separation(d, star, m, 1e-4);
        EXPECT_GE(s, d / 4 - 1e-4 * d) << "delta " << d << " m " << m << " star " << star;
        EXPECT_LE(s, d / 4 + 1e-4 * d);
      }
    }
  }
  EXPECT_NEAR(lb_check_separation(0.0, 0, 4, 1e-3), 0.0, 1e-15);
  EXPECT_LE(lb_check_separation(1e-6, 0, 4, 1e-3), 1e-6);
}

TEST(LowerBound, Validation) {
  EXPECT_THROW((void)LowerBoundInstance::base(1, 0.1), std::invalid_argument);
  EXPECT_THROW((void)LowerBoundInstance::base(3, 0.25), std::invalid_argument);
  EXPECT_THROW((void)LowerBoundInstance::base(3, -0.01), std::invalid_argument);
  EXPECT_THROW((void)LowerBoundInstance::perturbed(3, 0.1, 2), std::invalid_argument);
  EXPECT_THROW((void)LowerBoundInstance::base(3, 0.1, 0.0), std::invalid_argument);
}

TEST(Kl, Examples) {
  EXPECT_EQ(kl_bernoulli(0.3, 0.3), 0.0);
  const double v = 0.5 * std::log(0.5 / 0.6) + 0.5 * std::log(0.5 / 0.4);
  EXPECT_DOUBLE_EQ(kl_bernoulli(0.5, 0.6), v);
  EXPECT_NEAR(kl_bernoulli(0.5, 0.6), 0.020411, 1e-6);
  for (double d : {0.01, 0.05, 0.1, 0.2}) EXPECT_LE(kl_bernoulli(0.5, 0.5 + d), 8 * d * d);
  EXPECT_THROW((void)kl_bernoulli(0.0, 0.5), std::invalid_argument);
  EXPECT_THROW((void)kl_bernoulli(0.5, 1.0), std::invalid_argument);
}

TEST(Kl, NonnegativeAndZeroOnlyOnDiagonal) {
  for (int a = 1; a < 20; ++a)
    for (int b = 1; b < 20; ++b) {
      const double p = a / 20.0, q = b / 20.0;
      if (a == b) {
        EXPECT_EQ(kl_bernoulli(p, q), 0.0);
      } else {
        EXPECT_GT(kl_bernoulli(p, q), 0.0);
      }
    }
}

TEST(LowerBoundProblem, ScaleAndGradients) {
  const LowerBoundProblem prob(LowerBoundInstance::perturbed(3, 0.2, 0, 2.0));
  const Vector L = prob.group_losses(Vector::Constant(1, 0.25));
  EXPECT_DOUBLE_EQ(L(0), 2.0 * (0.2 * 0.75 + 0.7));
  EXPECT_DOUBLE_EQ(L(2), 2.0 * (0.2 * 0.25 + 0.5));
  EXPECT_EQ(prob.constants().range_M, 4.0);
  Vector g = Vector::Zero(1);
  prob.add_loss_grad(Vector::Constant(1, 0.3), {0, true}, 0.5, g);
  EXPECT_DOUBLE_EQ(g(0), 0.5 * 2.0 * -0.2);
  EXPECT_DOUBLE_EQ(prob.project(Vector::Constant(1, 1.7))(0), 1.0);
  EXPECT_DOUBLE_EQ(prob.project(Vector::Constant(1, -0.2))(0), 0.0);
}

TEST(LowerBoundProblem, SolverQueryCountsSumToBudget) {
  for (bool perturbed : {false, true}) {
    const LowerBoundInstance inst =
        perturbed ? LowerBoundInstance::perturbed(4, 0.1, 1) : LowerBoundInstance::base(4, 0.1);
    const LowerBoundProblem prob(inst);
    for (Algorithm a : {Algorithm::gdro_exp3, Algorithm::gdro_tinf, Algorithm::sagawa, Algorithm::gdro_exp3p}) {
      SolverConfig cfg;
      cfg.algorithm = a;
      cfg.iterations = 3000;
      cfg.minibatch = 1;
      cfg.q_step = 0.02;
      cfg.seed = 5;
      const Trajectory t = run_solver(prob, cfg);
      std::uint64_t total = 0;
      for (auto n : t.group_queries) total += n;
      EXPECT_EQ(total, 3000u);
      EXPECT_GE(t.final().theta_avg(0), 0.0);
      EXPECT_LE(t.final().theta_avg(0), 1.0);
      EXPECT_GE(t.final().objective, lb_minimax_value(inst).value - 1e-15);
    }
  }
}
