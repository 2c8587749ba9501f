#include <gtest/gtest.h>

#include <cmath>

#include "gdro/problem.hpp"

using namespace gdro;

namespace {
DataPoint point(std::initializer_list<double> a, double b) {
  DataPoint p;
  p.features = Vector(static_cast<Eigen::Index>(a.size()));
  Eigen::Index i = 0;
  for (double v : a) p.features(i++) = v;
  p.label = b;
  return p;
}
}  // namespace

TEST(Loss, HingeValues) {
  const Vector theta = Vector::Zero(2);
  EXPECT_DOUBLE_EQ(eval_loss(LossKind::hinge, theta, point({1, 2}, 1)), 1.0);
  Vector t(2);
  t << 2, 0;
  EXPECT_DOUBLE_EQ(eval_loss(LossKind::hinge, t, point({1, 0}, 1)), 0.0);
  EXPECT_DOUBLE_EQ(eval_loss(LossKind::hinge, t, point({1, 0}, -1)), 3.0);
}

TEST(Loss, LogisticValuesAndStability) {
  const Vector theta = Vector::Zero(1);
  EXPECT_NEAR(eval_loss(LossKind::logistic, theta, point({3}, 1)), std::log(2.0), 1e-15);
  Vector big(1);
  big << 1000;
  EXPECT_NEAR(eval_loss(LossKind::logistic, big, point({1}, -1)), 1000.0, 1e-9);
  EXPECT_GE(eval_loss(LossKind::logistic, big, point({1}, 1)), 0.0);
  EXPECT_TRUE(std::isfinite(eval_loss(LossKind::logistic, big, point({1}, 1))));
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  Vector theta(3);
  theta << 0.3, -0.2, 0.5;
  const DataPoint p = point({0.7, 1.1, -0.4}, -1);
  const Vector g = eval_loss_grad(LossKind::logistic, theta, p);
  for (Eigen::Index j = 0; j < 3; ++j) {
    Vector e = Vector::Zero(3);
    e(j) = 1e-6;
    const double fd = (eval_loss(LossKind::logistic, theta + e, p) - eval_loss(LossKind::logistic, theta - e, p)) / 2e-6;
    EXPECT_NEAR(g(j), fd, 1e-8);
  }
}

TEST(Loss, HingeSubgradientAtKinkAndFlatPart) {
  Vector theta(1);
  theta << 1.0;
  EXPECT_DOUBLE_EQ(eval_loss_grad(LossKind::hinge, theta, point({1}, 1))(0), -1.0);
  theta << 2.0;
  EXPECT_DOUBLE_EQ(eval_loss_grad(LossKind::hinge, theta, point({1}, 1))(0), 0.0);
}

TEST(Loss, DimensionMismatchThrows) {
  EXPECT_THROW(eval_loss(LossKind::hinge, Vector::Zero(2), point({1, 2, 3}, 1)), std::invalid_argument);
  EXPECT_THROW(eval_loss_grad(LossKind::hinge, Vector::Zero(2), point({1}, 1)), std::invalid_argument);
}

TEST(Loss, NamesRoundTrip) {
  EXPECT_EQ(loss_kind_from_string(to_string(LossKind::hinge)), LossKind::hinge);
  EXPECT_EQ(loss_kind_from_string(to_string(LossKind::logistic)), LossKind::logistic);
  EXPECT_THROW(loss_kind_from_string("squared"), std::invalid_argument);
}

TEST(ProjectBall, Examples) {
  Vector inside(2);
  inside << 3.0, 4.0;
  EXPECT_TRUE((project_ball(inside, 10.0).array() == inside.array()).all());
  Vector outside(2);
  outside << 6.0, 8.0;
  const Vector p = project_ball(outside, 5.0);
  EXPECT_NEAR(p(0), 3.0, 1e-15);
  EXPECT_NEAR(p(1), 4.0, 1e-15);
  EXPECT_NEAR(p.norm(), 5.0, 1e-14);
  EXPECT_TRUE(project_ball(Vector::Zero(3), 2.0).isZero(0.0));
  EXPECT_THROW(project_ball(outside, 0.0), std::invalid_argument);
  EXPECT_THROW(project_ball(Vector::Constant(2, NAN), 1.0), std::invalid_argument);
}

TEST(ProjectBall, IdempotentBitwise) {
  CounterRng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    Vector x(4);
    for (Eigen::Index j = 0; j < 4; ++j) x(j) = 10.0 * rng.normal();
    const Vector once = project_ball(x, 3.0);
    const Vector twice = project_ball(once, 3.0);
    ASSERT_TRUE((once.array() == twice.array()).all());
    ASSERT_LE(once.norm(), 3.0);
  }
}

TEST(Loss, SpecGradientExamples) {
  Vector theta = Vector::Zero(2);
  const Vector g0 = eval_loss_grad(LossKind::logistic, theta, point({1, 0}, 1));
  EXPECT_NEAR(g0(0), -0.5, 1e-15);
  EXPECT_EQ(g0(1), 0.0);
  theta << 1.0, 0.0;
  const Vector g1 = eval_loss_grad(LossKind::logistic, theta, point({1, 0}, -1));
  EXPECT_NEAR(g1(0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(g1(0), 0.731059, 1e-6);
}

TEST(Loss, RandomGradientsMatchFiniteDifferences) {
  CounterRng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    Vector theta(3);
    DataPoint p;
    p.features = Vector(3);
    for (Eigen::Index j = 0; j < 3; ++j) {
      theta(j) = rng.normal();
      p.features(j) = rng.normal();
    }
    p.label = rng.bernoulli(0.5) ? 1.0 : -1.0;
    for (LossKind kind : {LossKind::logistic, LossKind::hinge}) {
      const double margin = p.label * p.features.dot(theta);
      if (kind == LossKind::hinge && std::abs(margin - 1.0) < 1e-3) continue;
      const Vector g = eval_loss_grad(kind, theta, p);
      for (Eigen::Index j = 0; j < 3; ++j) {
        Vector e = Vector::Zero(3);
        e(j) = 1e-6;
        const double fd = (eval_loss(kind, theta + e, p) - eval_loss(kind, theta - e, p)) / 2e-6;
        EXPECT_NEAR(g(j), fd, 1e-5 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(UncertaintySet, RankWeights) {
  EXPECT_EQ(UncertaintySetSpec::simplex().rank_weights(3), (Vector(3) << 1, 0, 0).finished());
  const Vector k = UncertaintySetSpec::k_set(0.5).rank_weights(4);
  EXPECT_NEAR(k(0), 0.5, 1e-15);
  EXPECT_NEAR(k(1), 0.5, 1e-15);
  EXPECT_EQ(k(2), 0.0);
  const Vector frac = UncertaintySetSpec::k_set(0.3).rank_weights(5);  // cap 2/3
  EXPECT_NEAR(frac(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(frac(1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(frac.sum(), 1.0, 1e-15);
  const Vector u = UncertaintySetSpec::k_set(1.0).rank_weights(4);
  EXPECT_NEAR((u.array() - 0.25).abs().maxCoeff(), 0.0, 1e-15);
}

TEST(UncertaintySet, Validation) {
  EXPECT_THROW(UncertaintySetSpec::k_set(0.0), std::invalid_argument);
  EXPECT_THROW(UncertaintySetSpec::k_set(1.5), std::invalid_argument);
  EXPECT_THROW(UncertaintySetSpec::permutahedron((Vector(3) << 0.2, 0.5, 0.3).finished()), std::invalid_argument);
  EXPECT_THROW(UncertaintySetSpec::permutahedron((Vector(2) << 0.6, 0.6).finished()), std::invalid_argument);
  const auto spec = UncertaintySetSpec::permutahedron((Vector(3) << 0.5, 0.3, 0.2).finished());
  EXPECT_THROW(spec.validate(4), std::invalid_argument);
  EXPECT_NO_THROW(spec.validate(3));
}

TEST(ProblemConstants, Validation) {
  ProblemConstants c;
  EXPECT_NO_THROW(c.validate());
  c.range_M = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
