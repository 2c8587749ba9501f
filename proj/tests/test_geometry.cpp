#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gdro/geometry.hpp"
#include "gdro/rng.hpp"
#include "oracles.hpp"

using namespace gdro;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vector random_positive(CounterRng& rng, Eigen::Index m, double spread) {
  Vector v(m);
  for (Eigen::Index i = 0; i < m; ++i) v(i) = std::exp(spread * (rng.uniform01() - 0.5));
  return v;
}

Vector random_simplex(CounterRng& rng, Eigen::Index m) {
  Vector v = random_positive(rng, m, 6.0);
  return v / v.sum();
}

Vector random_alpha(CounterRng& rng, Eigen::Index m) {
  Vector a(m);
  for (Eigen::Index i = 0; i < m; ++i) a(i) = rng.uniform01() < 0.2 ? 0.0 : rng.uniform01();
  if (a.sum() == 0.0) a(0) = 1.0;
  std::sort(a.data(), a.data() + m, std::greater<>());
  return a / a.sum();
}

// sum_i (c_i - a)^{-2} = 1 by bisection, c_i = q~_i^{-1/2}.
double bisect_tsallis_alpha(const Vector& q_tilde) {
  const Vector c = q_tilde.array().rsqrt();
  double lo = c.minCoeff() - 100.0, hi = c.minCoeff();
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = (c.array() - mid).square().inverse().sum();
    (s > 1.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

oracle::Mirror mirror(Regularizer r) { return r == Regularizer::entropy ? oracle::Mirror::entropy : oracle::Mirror::tsallis; }

}  // namespace

TEST(Regularizer, ValuesGradientsHessians) {
  const Vector x = vec({0.2, 0.8});
  EXPECT_NEAR(psi(Regularizer::entropy, x), 0.2 * std::log(0.2) + 0.8 * std::log(0.8) - 1.0, 1e-15);
  EXPECT_NEAR(psi(Regularizer::tsallis, x), 2.0 * (1.0 - std::sqrt(0.2) - std::sqrt(0.8)), 1e-15);
  EXPECT_NEAR(psi(Regularizer::euclidean, x), 0.34, 1e-15);
  for (Regularizer r : {Regularizer::entropy, Regularizer::tsallis, Regularizer::euclidean}) {
    const Vector g = psi_grad(r, x);
    const Vector h = psi_hessian_diag(r, x);
    for (Eigen::Index i = 0; i < 2; ++i) {
      Vector e = Vector::Zero(2);
      e(i) = 1e-6;
      EXPECT_NEAR(g(i), (psi(r, x + e) - psi(r, x - e)) / 2e-6, 1e-7);
      EXPECT_NEAR(h(i), (psi_grad(r, x + e)(i) - psi_grad(r, x - e)(i)) / 2e-6, 1e-5 * std::abs(h(i)));
      EXPECT_NEAR(psi_link_inverse(r, g(i)), x(i), 1e-14);
    }
  }
  EXPECT_NEAR(psi_hessian_diag(Regularizer::tsallis, vec({0.25}))(0), 0.5 * 8.0, 1e-12);
}

TEST(Regularizer, NamesRoundTrip) {
  for (Regularizer r : {Regularizer::entropy, Regularizer::tsallis, Regularizer::euclidean})
    EXPECT_EQ(regularizer_from_string(to_string(r)), r);
  EXPECT_THROW(regularizer_from_string("l1"), std::invalid_argument);
}

TEST(BregmanDivergence, Examples) {
  EXPECT_EQ(bregman_divergence(Regularizer::entropy, vec({0.5, 0.5}), vec({0.5, 0.5})), 0.0);
  const Vector u = Vector::Constant(4, 0.25);
  EXPECT_NEAR(bregman_divergence(Regularizer::entropy, u, u), 0.0, 1e-15);
  const double eps = 1e-6;
  const Vector corner = vec({1 - 3 * eps, eps, eps, eps});
  EXPECT_LE(bregman_divergence(Regularizer::entropy, corner, u), std::log(4.0));
  EXPECT_LE(bregman_divergence(Regularizer::tsallis, corner, u), 2.0);
  EXPECT_THROW(bregman_divergence(Regularizer::entropy, vec({0.0, 1.0}), u.head(2)), std::invalid_argument);
}

TEST(BregmanDivergence, MatchesDefinitionAndIsNonnegative) {
  CounterRng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector x = random_simplex(rng, 5), y = random_simplex(rng, 5);
    for (Regularizer r : {Regularizer::entropy, Regularizer::tsallis, Regularizer::euclidean}) {
      const double def = psi(r, x) - psi(r, y) - psi_grad(r, y).dot(x - y);
      const double d = bregman_divergence(r, x, y);
      EXPECT_NEAR(d, def, 1e-12);
      EXPECT_GT(d, 0.0);
    }
  }
}

TEST(WeightVector, Validation) {
  EXPECT_THROW(WeightVector(vec({0.5, 0.6})), std::invalid_argument);
  EXPECT_THROW(WeightVector(vec({1.0, 0.0})), std::invalid_argument);
  EXPECT_NO_THROW(WeightVector(vec({0.25, 0.75})));
  EXPECT_EQ(WeightVector::uniform(4)[2], 0.25);
}

TEST(EntropySimplexProject, Examples) {
  EXPECT_EQ(entropy_simplex_project(vec({2, 2})).values(), vec({0.5, 0.5}));
  EXPECT_EQ(entropy_simplex_project(vec({1, 3})).values(), vec({0.25, 0.75}));
  EXPECT_LE((entropy_simplex_project(vec({0.2, 0.3, 0.5})).values() - vec({0.2, 0.3, 0.5})).lpNorm<Eigen::Infinity>(),
            1e-16);
  EXPECT_THROW(entropy_simplex_project(vec({1, 0})), std::invalid_argument);
  EXPECT_THROW(entropy_simplex_project(vec({1, NAN})), std::invalid_argument);
}

TEST(EntropySimplexProject, SumsToOne) {
  CounterRng rng(2);
  for (int m : {2, 10, 100}) {
    const Vector q = entropy_simplex_project(random_positive(rng, m, 20.0)).values();
    EXPECT_NEAR(q.sum(), 1.0, 1e-15 * m);
  }
}

// The corrected normalization q_i = (q~_i^{-1/2} - alpha)^{-2}.
TEST(TsallisSimplexProject, SymmetricInputGivesUniform) {
  const auto p = tsallis_simplex_project(vec({0.25, 0.25}));
  EXPECT_NEAR(p.q[0], 0.5, 1e-15);
  EXPECT_NEAR(p.q[1], 0.5, 1e-15);
}

TEST(TsallisSimplexProject, UniformIsFixedWithZeroOffset) {
  for (int m : {2, 3, 10, 100}) {
    const auto p = tsallis_simplex_project(Vector::Constant(m, 1.0 / m));
    EXPECT_NEAR(p.alpha, 0.0, 1e-12);
    EXPECT_LT(p.residual, 1e-12);
    EXPECT_NEAR((p.q.values().array() - 1.0 / m).abs().maxCoeff(), 0.0, 1e-15);
  }
}

TEST(TsallisSimplexProject, TwoPointExampleMatchesBisection) {
  const Vector qt = vec({1.0, 0.04});
  const auto p = tsallis_simplex_project(qt);
  const double a = bisect_tsallis_alpha(qt);  // (1 - a)^-2 + (5 - a)^-2 = 1
  EXPECT_NEAR(p.alpha, a, 1e-10);
  EXPECT_NEAR(std::pow(1 - a, -2) + std::pow(5 - a, -2), 1.0, 1e-12);
  EXPECT_NEAR(p.q.values().sum(), 1.0, 1e-12);
  EXPECT_LT(p.alpha, 1.0);
  EXPECT_GT(p.q[0], p.q[1]);
}

TEST(TsallisSimplexProject, ResidualAndWarmStart) {
  CounterRng rng(4);
  std::optional<double> warm;
  for (int trial = 0; trial < 200; ++trial) {
    const Vector qt = random_positive(rng, 1 + trial % 50, 12.0);
    const auto p = tsallis_simplex_project(qt, 1e-12, warm);
    EXPECT_LT(p.residual, 1e-12);
    EXPECT_LT(p.alpha, qt.array().rsqrt().minCoeff());
    warm = p.alpha;
  }
}

TEST(SolveInverseSquareOffset, FailsLoudlyWhenIterationsRunOut) {
  std::vector<double> c{1.0, 2.0, 3.0};
  EXPECT_THROW(solve_inverse_square_offset(c, 1.0, std::nullopt, 1e-300, 1), NumericError);
}

TEST(PermutahedronProject, FeasiblePointIsFixed) {
  const auto spec = UncertaintySetSpec::permutahedron(vec({0.5, 0.3, 0.2}));
  const Vector q = vec({0.3, 0.45, 0.25});
  for (Regularizer r : {Regularizer::entropy, Regularizer::tsallis})
    EXPECT_LE((permutahedron_bregman_project(q, spec, r).values() - q).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(PermutahedronProject, SimplexAlphaMatchesSimplexProjection) {
  CounterRng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector qt = random_positive(rng, 6, 8.0);
    const auto spec = UncertaintySetSpec::permutahedron(vec({1, 0, 0, 0, 0, 0}));
    EXPECT_LE((permutahedron_bregman_project(qt, spec, Regularizer::entropy).values() -
               entropy_simplex_project(qt).values())
                  .lpNorm<Eigen::Infinity>(),
              1e-12);
    EXPECT_LE((permutahedron_bregman_project(qt, spec, Regularizer::tsallis).values() -
               tsallis_simplex_project(qt).q.values())
                  .lpNorm<Eigen::Infinity>(),
              1e-12);
  }
}

TEST(CappedProject, FullCapGivesUniform) {
  CounterRng rng(6);
  const Vector qt = random_positive(rng, 5, 10.0);
  for (Regularizer r : {Regularizer::entropy, Regularizer::tsallis}) {
    const Vector q = bregman_project(qt, UncertaintySetSpec::k_set(1.0), r).values();
    EXPECT_NEAR((q.array() - 0.2).abs().maxCoeff(), 0.0, 1e-15);
  }
}

TEST(CappedProject, ThreeGroupExampleMatchesOracle) {
  const Vector qt = vec({0.8, 0.15, 0.05});
  const Vector q = bregman_project(qt, UncertaintySetSpec::k_set(2.0 / 3.0), Regularizer::entropy).values();
  const Vector ref = oracle::project_permutahedron(oracle::Mirror::entropy, qt, vec({0.5, 0.5, 0.0}));
  EXPECT_LE((q - ref).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_NEAR(q(0), 0.5, 1e-12);
  EXPECT_NEAR(q(1) / q(2), 3.0, 1e-10);
}

TEST(PermutahedronProject, MatchesFaceEnumerationOracle) {
  CounterRng rng(7);
  for (int trial = 0; trial < 120; ++trial) {
    const Eigen::Index m = 2 + trial % 3;
    const Vector qt = random_positive(rng, m, 6.0);
    const Vector alpha = random_alpha(rng, m);
    const auto spec = UncertaintySetSpec::permutahedron(alpha);
    for (Regularizer r : {Regularizer::entropy, Regularizer::tsallis}) {
      const Vector q = permutahedron_bregman_project(qt, spec, r).values();
      const Vector ref = oracle::project_permutahedron(mirror(r), qt, alpha);
      ASSERT_EQ(ref.size(), m);
      EXPECT_LE((q - ref).lpNorm<Eigen::Infinity>(), 1e-6) << "trial " << trial;
    }
  }
}

TEST(PermutahedronProject, CappedAndPavAgree) {
  CounterRng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index m = 2 + trial % 9;
    const double p = 0.05 + 0.95 * rng.uniform01();
    const auto kset = UncertaintySetSpec::k_set(p);
    const auto perm = UncertaintySetSpec::permutahedron(kset.rank_weights(static_cast<std::size_t>(m)));
    const Vector qt = random_positive(rng, m, 10.0);
    for (Regularizer r : {Regularizer::entropy, Regularizer::tsallis}) {
      const Vector a = capped_simplex_bregman_project(qt, kset.cap(static_cast<std::size_t>(m)), r).values();
      const Vector b = permutahedron_bregman_project(qt, perm, r).values();
      EXPECT_LE((a - b).lpNorm<Eigen::Infinity>(), 1e-10);
      EXPECT_TRUE(is_in_uncertainty_set(a, kset, 1e-12));
    }
  }
}

TEST(PermutahedronProject, PythagoreanInequalityOnGrid) {
  CounterRng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index m = 3;
    const Vector alpha = random_alpha(rng, m);
    const auto spec = UncertaintySetSpec::permutahedron(alpha);
    const Vector qt = random_positive(rng, m, 6.0);
    for (Regularizer r : {Regularizer::entropy, Regularizer::tsallis}) {
      const Vector proj = permutahedron_bregman_project(qt, spec, r).values();
      for (int a = 1; a < 40; ++a)
        for (int b = 1; a + b < 40; ++b) {
          const Vector q = vec({a / 40.0, b / 40.0, (40 - a - b) / 40.0});
          if (!oracle::in_permutahedron(q, alpha, 0.0)) continue;
          EXPECT_LE(bregman_divergence(r, q, proj), bregman_divergence(r, q, qt) + 1e-10);
        }
    }
  }
}

TEST(PermutahedronProject, PreservesRankingAndMajorization) {
  CounterRng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index m = 2 + trial % 20;
    const Vector alpha = random_alpha(rng, m);
    const auto spec = UncertaintySetSpec::permutahedron(alpha);
    const Vector qt = random_positive(rng, m, 10.0);
    for (Regularizer r : {Regularizer::entropy, Regularizer::tsallis}) {
      const Vector q = permutahedron_bregman_project(qt, spec, r).values();
      EXPECT_TRUE(is_in_uncertainty_set(q, spec, 1e-10));
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
          if (qt(i) > qt(j)) {
            EXPECT_GE(q(i), q(j) - 1e-15);
          }
        }
    }
  }
}

TEST(BregmanProject, DualFormMatchesPrimalForm) {
  CounterRng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index m = 2 + trial % 6;
    const Vector qt = random_positive(rng, m, 6.0);
    for (const auto& spec : {UncertaintySetSpec::simplex(), UncertaintySetSpec::k_set(0.5),
                             UncertaintySetSpec::permutahedron(random_alpha(rng, m))})
      for (Regularizer r : {Regularizer::entropy, Regularizer::tsallis}) {
        const Vector a = bregman_project(qt, spec, r).values();
        const Vector b = bregman_project_dual(psi_grad(r, qt), spec, r).values();
        EXPECT_LE((a - b).lpNorm<Eigen::Infinity>(), 1e-12);
      }
  }
}

TEST(BregmanProject, RejectsEuclideanAndBadDuals) {
  EXPECT_THROW(bregman_project(vec({0.5, 0.5}), UncertaintySetSpec::simplex(), Regularizer::euclidean),
               std::invalid_argument);
  EXPECT_THROW(bregman_project_dual(vec({-1.0, 0.5}), UncertaintySetSpec::simplex(), Regularizer::tsallis),
               std::invalid_argument);
}

TEST(WeightFloor, KeepsEntriesAboveFloor) {
  Vector q = vec({1.0, 1e-20, 1e-30});
  apply_weight_floor(q);
  EXPECT_GE(q.minCoeff(), kWeightFloor);
  EXPECT_NEAR(q.sum(), 1.0, 1e-15);
  const Vector out = entropy_simplex_project(vec({1.0, 1e-200})).values();
  EXPECT_GE(out.minCoeff(), kWeightFloor);
}
