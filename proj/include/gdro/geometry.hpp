#ifndef GDRO_GEOMETRY_HPP
#define GDRO_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gdro/problem.hpp"

namespace gdro {

/// Lower bound kept on every entry of a q-iterate so that 1/q_i stays finite.
inline constexpr double kWeightFloor = 1e-12;

enum class Regularizer { entropy, tsallis, euclidean };

inline std::string_view to_string(Regularizer r) {
  switch (r) {
    case Regularizer::entropy:
      return "entropy";
    case Regularizer::tsallis:
      return "tsallis";
    case Regularizer::euclidean:
      return "euclidean";
  }
  return "?";
}

inline Regularizer regularizer_from_string(std::string_view s) {
  if (s == "entropy") return Regularizer::entropy;
  if (s == "tsallis") return Regularizer::tsallis;
  if (s == "euclidean") return Regularizer::euclidean;
  throw std::invalid_argument("unknown regularizer '" + std::string(s) + "'");
}

/// A point of the probability simplex with strictly positive entries.
class WeightVector {
 public:
  explicit WeightVector(Vector q) : q_(std::move(q)) {
    if (q_.size() == 0) throw std::invalid_argument("WeightVector: empty");
    if (!q_.allFinite() || (q_.array() <= 0.0).any())
      throw std::invalid_argument("WeightVector: entries must be finite and positive");
    if (std::abs(q_.sum() - 1.0) > sum_tolerance(q_.size()))
      throw std::invalid_argument("WeightVector: entries must sum to 1");
  }

  static WeightVector uniform(std::size_t m) {
    if (m == 0) throw std::invalid_argument("WeightVector: m must be positive");
    return WeightVector(Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m)));
  }

  static double sum_tolerance(Eigen::Index m) { return 1e-12 * std::max<double>(1.0, static_cast<double>(m)); }

  [[nodiscard]] const Vector& values() const { return q_; }
  [[nodiscard]] double operator[](Eigen::Index i) const { return q_(i); }
  [[nodiscard]] Eigen::Index size() const { return q_.size(); }

 private:
  Vector q_;
};

// ---------------------------------------------------------------------------
// Regularizers

namespace detail {

inline void require_positive(const Vector& x, const char* who) {
  if (!x.allFinite() || (x.array() <= 0.0).any())
    throw std::invalid_argument(std::string(who) + ": entries must be finite and positive");
}

}  // namespace detail

/// Entropy: sum x log x - x.  Tsallis: 2 (1 - sum sqrt x).  Euclidean: |x|^2 / 2.
inline double psi(Regularizer reg, const Vector& x) {
  switch (reg) {
    case Regularizer::entropy:
      detail::require_positive(x, "psi");
      return (x.array() * x.array().log() - x.array()).sum();
    case Regularizer::tsallis:
      detail::require_positive(x, "psi");
      return 2.0 * (1.0 - x.array().sqrt().sum());
    case Regularizer::euclidean:
      return 0.5 * x.squaredNorm();
  }
  return 0.0;
}

inline Vector psi_grad(Regularizer reg, const Vector& x) {
  switch (reg) {
    case Regularizer::entropy:
      detail::require_positive(x, "psi_grad");
      return x.array().log();
    case Regularizer::tsallis:
      detail::require_positive(x, "psi_grad");
      return -x.array().rsqrt();
    case Regularizer::euclidean:
      return x;
  }
  return x;
}

/// Diagonal of the Hessian: 1/x, x^{-3/2}/2, or 1.
inline Vector psi_hessian_diag(Regularizer reg, const Vector& x) {
  switch (reg) {
    case Regularizer::entropy:
      detail::require_positive(x, "psi_hessian_diag");
      return x.array().inverse();
    case Regularizer::tsallis:
      detail::require_positive(x, "psi_hessian_diag");
      return 0.5 * x.array().pow(-1.5);
    case Regularizer::euclidean:
      return Vector::Ones(x.size());
  }
  return x;
}

/// Inverse of the scalar link psi'(x); for Tsallis the argument must be negative.
inline double psi_link_inverse(Regularizer reg, double y) {
  switch (reg) {
    case Regularizer::entropy:
      return std::exp(y);
    case Regularizer::tsallis:
      return 1.0 / (y * y);
    case Regularizer::euclidean:
      return y;
  }
  return y;
}

/// D(x, y) = psi(x) - psi(y) - psi'(y)'(x - y).
inline double bregman_divergence(Regularizer reg, const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw std::invalid_argument("bregman_divergence: size mismatch");
  switch (reg) {
    case Regularizer::entropy: {
      detail::require_positive(x, "bregman_divergence");
      detail::require_positive(y, "bregman_divergence");
      const double d = (x.array() * (x.array() / y.array()).log() - x.array() + y.array()).sum();
      return std::max(0.0, d);
    }
    case Regularizer::tsallis: {
      detail::require_positive(x, "bregman_divergence");
      detail::require_positive(y, "bregman_divergence");
      return ((x.array().sqrt() - y.array().sqrt()).square() / y.array().sqrt()).sum();
    }
    case Regularizer::euclidean:
      return 0.5 * (x - y).squaredNorm();
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Projections

/// Raises entries below kWeightFloor to the floor and rescales the others so the
/// total stays 1.
inline void apply_weight_floor(Vector& q) {
  for (int pass = 0; pass < 4; ++pass) {
    double floored_mass = 0.0;
    double free_mass = 0.0;
    bool any = false;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      if (q(i) <= kWeightFloor) {
        any = any || q(i) < kWeightFloor;
        q(i) = kWeightFloor;
        floored_mass += kWeightFloor;
      } else {
        free_mass += q(i);
      }
    }
    if (!any || free_mass <= 0.0) break;
    const double scale = (1.0 - floored_mass) / free_mass;
    for (Eigen::Index i = 0; i < q.size(); ++i)
      if (q(i) > kWeightFloor) q(i) *= scale;
  }
}

namespace detail {

inline WeightVector finish_weights(Vector q) {
  q /= q.sum();
  apply_weight_floor(q);
  return WeightVector(std::move(q));
}

inline double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace detail

/// Root of sum_i (c_i - a)^{-2} = target with a < min_i c_i.
struct OffsetRoot {
  double offset = 0.0;
  double residual = 0.0;  // |sum - target| / target
  int iterations = 0;
};

/// Safeguarded Newton on the increasing convex map a -> sum (c_i - a)^{-2}.
/// `warm` seeds the iteration when it lies inside the bracket.
inline OffsetRoot solve_inverse_square_offset(std::span<const double> c, double target,
                                              std::optional<double> warm = std::nullopt,
                                              double tol = 1e-12, int max_iter = 100) {
  if (c.empty() || !(target > 0.0)) throw std::invalid_argument("solve_inverse_square_offset: bad input");
  const double cmin = *std::min_element(c.begin(), c.end());
  double hi = cmin;
  double lo = cmin - std::sqrt(static_cast<double>(c.size()) / target);
  auto eval = [&](double a, double& deriv) {
    double f = 0.0;
    deriv = 0.0;
    for (double ci : c) {
      const double r = 1.0 / (ci - a);
      const double r2 = r * r;
      f += r2;
      deriv += 2.0 * r2 * r;
    }
    return f / target - 1.0;
  };
  double a = (warm && *warm > lo && *warm < hi) ? *warm : lo;
  OffsetRoot out;
  double deriv = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    const double f = eval(a, deriv);
    out.offset = a;
    out.residual = std::abs(f);
    out.iterations = it;
    if (out.residual <= tol) return out;
    if (f < 0.0)
      lo = a;
    else
      hi = a;
    double next = a - f * target / deriv;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == a || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(a))) {
      // Bracket exhausted at machine resolution; accept the better endpoint.
      double d2 = 0.0;
      const double flo = std::abs(eval(lo, d2));
      if (flo < out.residual) {
        out.offset = lo;
        out.residual = flo;
      }
      if (out.residual <= tol) return out;
      break;
    }
    a = next;
  }
  throw NumericError("inverse-square offset solve did not converge", out.residual);
}

/// Entropic Bregman projection onto the simplex: plain normalization.
inline WeightVector entropy_simplex_project(const Vector& q_tilde) {
  detail::require_positive(q_tilde, "entropy_simplex_project");
  return detail::finish_weights(q_tilde / q_tilde.sum());
}

struct TsallisProjection {
  WeightVector q;
  double alpha = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

/// Tsallis Bregman projection onto the simplex: q_i = (q~_i^{-1/2} - alpha)^{-2}
/// with alpha chosen so that sum q = 1.
inline TsallisProjection tsallis_simplex_project(const Vector& q_tilde, double tol = 1e-12,
                                                 std::optional<double> warm_alpha = std::nullopt) {
  detail::require_positive(q_tilde, "tsallis_simplex_project");
  if (!(tol > 0.0)) throw std::invalid_argument("tsallis_simplex_project: tol must be positive");
  std::vector<double> c(static_cast<std::size_t>(q_tilde.size()));
  for (Eigen::Index i = 0; i < q_tilde.size(); ++i) c[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(q_tilde(i));
  const OffsetRoot root = solve_inverse_square_offset(c, 1.0, warm_alpha, tol);
  Vector q(q_tilde.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const double d = c[static_cast<std::size_t>(i)] - root.offset;
    q(i) = 1.0 / (d * d);
  }
  return {detail::finish_weights(std::move(q)), root.offset, root.residual, root.iterations};
}

namespace detail {

inline std::vector<Eigen::Index> order_descending(const Vector& v) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return v(a) > v(b); });
  return idx;
}

inline void require_mirror_regularizer(Regularizer reg, const char* who) {
  if (reg == Regularizer::euclidean)
    throw std::invalid_argument(std::string(who) + ": regularizer must be entropy or tsallis");
}

// Offset mu with sum_j g(theta_j - mu) = mass over a run of sorted dual values.
// For Tsallis, theta_j = -c_j and g(theta - mu) = (c + mu)^{-2}.
inline double block_offset(Regularizer reg, std::span<const double> theta, double mass,
                           double tol) {
  if (mass <= 0.0) return std::numeric_limits<double>::infinity();
  if (reg == Regularizer::entropy) return log_sum_exp(theta) - std::log(mass);
  std::vector<double> c(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) c[j] = -theta[j];
  return -solve_inverse_square_offset(c, mass, std::nullopt, tol).offset;
}

}  // namespace detail

namespace detail {

// Capped-simplex projection from a dual point psi'(q~).
inline WeightVector capped_simplex_project_dual(const Vector& dual, double cap, Regularizer reg, double tol) {
  const auto m = dual.size();
  const double md = static_cast<double>(m);
  if (cap * md < 1.0 - 1e-12) throw std::invalid_argument("capped simplex is empty: cap < 1/m");
  if (cap * md <= 1.0 + 1e-12) return WeightVector::uniform(static_cast<std::size_t>(m));

  const auto order = order_descending(dual);
  std::vector<double> theta(order.size());
  for (std::size_t j = 0; j < order.size(); ++j) theta[j] = dual(order[j]);

  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double rest = 1.0 - static_cast<double>(k) * cap;
    if (rest <= 0.0) break;
    std::span<const double> tail(theta.data() + k, theta.size() - k);
    const double mu = block_offset(reg, tail, rest, tol);
    const double top = psi_link_inverse(reg, theta[k] - mu);
    if (top > cap * (1.0 + 1e-12)) continue;
    Vector q(m);
    for (std::size_t j = 0; j < theta.size(); ++j)
      q(order[j]) = j < k ? cap : psi_link_inverse(reg, theta[j] - mu);
    return finish_weights(std::move(q));
  }
  return WeightVector::uniform(static_cast<std::size_t>(m));
}

// Pool-adjacent-violators over the sorted dual point; see permutahedron_bregman_project.
inline WeightVector permutahedron_project_dual(const Vector& dual, const Vector& alpha, Regularizer reg, double tol) {
  const auto m = static_cast<std::size_t>(dual.size());
  const auto order = order_descending(dual);
  std::vector<double> theta(m);
  for (std::size_t j = 0; j < m; ++j) theta[j] = dual(order[j]);

  struct Block {
    std::size_t begin, end;  // [begin, end)
    double mass;
    double mu;
  };
  std::vector<Block> stack;
  stack.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double a = alpha(static_cast<Eigen::Index>(j));
    stack.push_back({j, j + 1, a, block_offset(reg, std::span<const double>(&theta[j], 1), a, tol)});
    while (stack.size() >= 2 && stack[stack.size() - 2].mu < stack.back().mu) {
      const Block top = stack.back();
      stack.pop_back();
      Block& prev = stack.back();
      prev.end = top.end;
      prev.mass += top.mass;
      prev.mu = block_offset(reg, std::span<const double>(theta.data() + prev.begin, prev.end - prev.begin),
                             prev.mass, tol);
    }
  }

  Vector q(dual.size());
  for (const Block& b : stack)
    for (std::size_t j = b.begin; j < b.end; ++j) q(order[j]) = psi_link_inverse(reg, theta[j] - b.mu);
  return finish_weights(std::move(q));
}

inline void require_valid_dual(const Vector& dual, Regularizer reg) {
  if (!dual.allFinite()) throw std::invalid_argument("bregman projection: non-finite dual point");
  if (reg == Regularizer::tsallis && (dual.array() >= 0.0).any())
    throw std::invalid_argument("bregman projection: Tsallis dual point must be negative");
}

}  // namespace detail

/// Bregman projection onto {q in simplex : q_i <= cap}.
inline WeightVector capped_simplex_bregman_project(const Vector& q_tilde, double cap, Regularizer reg,
                                                   double tol = 1e-12) {
  detail::require_positive(q_tilde, "capped_simplex_bregman_project");
  detail::require_mirror_regularizer(reg, "capped_simplex_bregman_project");
  return detail::capped_simplex_project_dual(psi_grad(reg, q_tilde), cap, reg, tol);
}

/// Bregman projection onto the permutahedron of `spec`'s rank weights.
///
/// Sorts the dual point psi'(q~) in decreasing order and runs pool-adjacent-
/// violators over prefix-sum constraints: each block B carries one offset mu_B
/// with sum_{j in B} g(theta_j - mu_B) = sum_{j in B} alpha_j, and adjacent
/// blocks merge while the offsets fail to be nonincreasing. O(m log m) for
/// entropy; Tsallis adds one scalar root solve per merge. The output keeps the
/// ranking of q~.
inline WeightVector permutahedron_bregman_project(const Vector& q_tilde, const UncertaintySetSpec& spec,
                                                  Regularizer reg, double tol = 1e-12) {
  detail::require_positive(q_tilde, "permutahedron_bregman_project");
  detail::require_mirror_regularizer(reg, "permutahedron_bregman_project");
  const Vector alpha = spec.rank_weights(static_cast<std::size_t>(q_tilde.size()));
  return detail::permutahedron_project_dual(psi_grad(reg, q_tilde), alpha, reg, tol);
}

/// Bregman projection onto Q given the dual point psi'(q~) instead of q~, so
/// that entropy updates can stay in log space.
inline WeightVector bregman_project_dual(const Vector& dual, const UncertaintySetSpec& spec, Regularizer reg,
                                         double tol = 1e-12) {
  detail::require_mirror_regularizer(reg, "bregman_project_dual");
  detail::require_valid_dual(dual, reg);
  const auto m = static_cast<std::size_t>(dual.size());
  switch (spec.kind()) {
    case UncertaintySetSpec::Kind::simplex:
      if (reg == Regularizer::entropy) {
        Vector w = (dual.array() - dual.maxCoeff()).exp();
        return detail::finish_weights(std::move(w));
      } else {
        std::vector<double> c(m);
        for (std::size_t i = 0; i < m; ++i) c[i] = -dual(static_cast<Eigen::Index>(i));
        const OffsetRoot root = solve_inverse_square_offset(c, 1.0, std::nullopt, tol);
        Vector q(dual.size());
        for (std::size_t i = 0; i < m; ++i) q(static_cast<Eigen::Index>(i)) = 1.0 / ((c[i] - root.offset) * (c[i] - root.offset));
        return detail::finish_weights(std::move(q));
      }
    case UncertaintySetSpec::Kind::k_set:
      return detail::capped_simplex_project_dual(dual, spec.cap(m), reg, tol);
    case UncertaintySetSpec::Kind::permutahedron:
      return detail::permutahedron_project_dual(dual, spec.rank_weights(m), reg, tol);
  }
  throw std::invalid_argument("bregman_project_dual: unknown uncertainty set");
}

/// Bregman projection onto Q under `reg`, dispatching on the kind of Q.
inline WeightVector bregman_project(const Vector& q_tilde, const UncertaintySetSpec& spec, Regularizer reg,
                                    double tol = 1e-12) {
  const auto m = static_cast<std::size_t>(q_tilde.size());
  switch (spec.kind()) {
    case UncertaintySetSpec::Kind::simplex:
      if (reg == Regularizer::entropy) return entropy_simplex_project(q_tilde);
      if (reg == Regularizer::tsallis) return tsallis_simplex_project(q_tilde, tol).q;
      break;
    case UncertaintySetSpec::Kind::k_set:
      return capped_simplex_bregman_project(q_tilde, spec.cap(m), reg, tol);
    case UncertaintySetSpec::Kind::permutahedron:
      return permutahedron_bregman_project(q_tilde, spec, reg, tol);
  }
  throw std::invalid_argument("bregman_project: unsupported regularizer for the simplex");
}

/// Whether q lies in Q: partial sums of the sorted entries are dominated by
/// the partial sums of the rank weights.
inline bool is_in_uncertainty_set(const Vector& q, const UncertaintySetSpec& spec, double tol = 1e-12) {
  if ((q.array() < -tol).any() || std::abs(q.sum() - 1.0) > tol * std::max<double>(1.0, double(q.size())))
    return false;
  const Vector alpha = spec.rank_weights(static_cast<std::size_t>(q.size()));
  std::vector<double> sorted(q.data(), q.data() + q.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double sq = 0.0, sa = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    sq += sorted[k];
    sa += alpha(static_cast<Eigen::Index>(k));
    if (sq > sa + tol) return false;
  }
  return true;
}

}  // namespace gdro

#endif
