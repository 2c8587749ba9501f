#ifndef GDRO_PROBLEM_HPP
#define GDRO_PROBLEM_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "gdro/rng.hpp"

namespace gdro {

using Vector = Eigen::VectorXd;

/// Raised when an iterative numeric routine fails; carries the last residual.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  [[nodiscard]] double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

enum class LossKind { logistic, hinge };

inline std::string_view to_string(LossKind k) {
  return k == LossKind::logistic ? "logistic" : "hinge";
}

inline LossKind loss_kind_from_string(std::string_view s) {
  if (s == "logistic") return LossKind::logistic;
  if (s == "hinge") return LossKind::hinge;
  throw std::invalid_argument("unknown loss kind '" + std::string(s) + "'");
}

/// A labelled example (a, b) with b in {-1, +1}.
struct DataPoint {
  Vector features;
  double label = 1.0;
};

/// Constants of the convergence bounds. `diameter_D` is the Euclidean
/// diameter of the feasible set (twice the ball radius).
struct ProblemConstants {
  double lipschitz_G = 0.0;
  double diameter_D = 1.0;
  double range_M = 1.0;
  std::size_t num_groups_m = 1;
  std::size_t dim_n = 1;

  void validate() const {
    if (!(lipschitz_G >= 0.0) || !(diameter_D > 0.0) || !(range_M > 0.0) || num_groups_m == 0 ||
        dim_n == 0)
      throw std::invalid_argument("ProblemConstants: G >= 0 and D, M, m, n > 0 required");
  }
};

namespace detail {

inline void check_dims(const Vector& theta, const DataPoint& point) {
  if (theta.size() != point.features.size())
    throw std::invalid_argument("dimension mismatch: theta has " + std::to_string(theta.size()) +
                                " entries, features have " +
                                std::to_string(point.features.size()));
}

// log(1 + exp(-z)) without overflow.
inline double softplus_neg(double z) {
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

}  // namespace detail

/// Loss of a linear classifier on one example, as a function of the margin b * a'theta.
inline double loss_from_margin(LossKind kind, double margin) {
  if (kind == LossKind::logistic) return detail::softplus_neg(margin);
  return std::max(0.0, 1.0 - margin);
}

/// d loss / d margin. The hinge kink (margin == 1) takes the slope -1.
inline double loss_slope_from_margin(LossKind kind, double margin) {
  if (kind == LossKind::logistic) return -1.0 / (1.0 + std::exp(margin));
  return margin <= 1.0 ? -1.0 : 0.0;
}

inline double eval_loss(LossKind kind, const Vector& theta, const DataPoint& point) {
  detail::check_dims(theta, point);
  return loss_from_margin(kind, point.label * point.features.dot(theta));
}

inline Vector eval_loss_grad(LossKind kind, const Vector& theta, const DataPoint& point) {
  detail::check_dims(theta, point);
  const double slope = loss_slope_from_margin(kind, point.label * point.features.dot(theta));
  return (slope * point.label) * point.features;
}

/// Euclidean projection onto the origin-centred ball of the given radius.
inline Vector project_ball(Vector theta, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("project_ball: radius must be positive");
  if (!theta.allFinite()) throw std::invalid_argument("project_ball: non-finite input");
  const double norm = theta.norm();
  if (norm > radius) {
    theta *= radius / norm;
    // Rescaling can land a few ulps outside; pull it back so the map is idempotent.
    while (theta.norm() > radius) theta *= 1.0 - 0x1.0p-52;
  }
  return theta;
}

/// The uncertainty set Q.
class UncertaintySetSpec {
 public:
  enum class Kind { simplex, k_set, permutahedron };

  static UncertaintySetSpec simplex() { return UncertaintySetSpec(Kind::simplex, 1.0, {}); }

  /// Simplex with every coordinate capped at 1 / (p m).
  static UncertaintySetSpec k_set(double p) {
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("k_set: p must lie in (0, 1]");
    return UncertaintySetSpec(Kind::k_set, p, {});
  }

  /// Convex hull of the permutations of a nonincreasing alpha in the simplex.
  static UncertaintySetSpec permutahedron(Vector alpha) {
    validate_rank_weights(alpha);
    return UncertaintySetSpec(Kind::permutahedron, 1.0, std::move(alpha));
  }

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] double p() const { return p_; }

  /// Coordinate cap of the k-set form; +inf for the simplex.
  [[nodiscard]] double cap(std::size_t m) const {
    switch (kind_) {
      case Kind::simplex:
        return 1.0;
      case Kind::k_set: {
        const double pm = p_ * static_cast<double>(m);
        const double k = std::round(pm);
        if (k >= 1.0 && std::abs(pm - k) <= 1e-9 * pm) return 1.0 / k;
        return 1.0 / pm;
      }
      case Kind::permutahedron:
        return alpha_.size() > 0 ? alpha_(0) : 1.0;
    }
    return 1.0;
  }

  /// Rank weights alpha of the equivalent permutahedron. The simplex maps to
  /// e_1 and the k-set polytope to (c, ..., c, 1 - k c, 0, ..., 0) with c its cap.
  [[nodiscard]] Vector rank_weights(std::size_t m) const {
    if (m == 0) throw std::invalid_argument("rank_weights: m must be positive");
    Vector alpha = Vector::Zero(static_cast<Eigen::Index>(m));
    switch (kind_) {
      case Kind::simplex:
        alpha(0) = 1.0;
        break;
      case Kind::k_set: {
        const double c = cap(m);
        if (c * static_cast<double>(m) < 1.0 - 1e-12)
          throw std::invalid_argument("k_set: cap 1/(p m) below 1/m makes Q empty");
        const double inv = 1.0 / c;
        auto full = static_cast<Eigen::Index>(std::floor(inv + 1e-9));
        full = std::min<Eigen::Index>(full, alpha.size());
        for (Eigen::Index i = 0; i < full; ++i) alpha(i) = c;
        const double rest = 1.0 - static_cast<double>(full) * c;
        if (full < alpha.size() && rest > 1e-15) alpha(full) = rest;
        break;
      }
      case Kind::permutahedron:
        if (static_cast<std::size_t>(alpha_.size()) != m)
          throw std::invalid_argument("permutahedron: rank weights have " +
                                      std::to_string(alpha_.size()) + " entries, expected " +
                                      std::to_string(m));
        alpha = alpha_;
        break;
    }
    return alpha;
  }

  void validate(std::size_t m) const { (void)rank_weights(m); }

  static void validate_rank_weights(const Vector& alpha) {
    if (alpha.size() == 0) throw std::invalid_argument("rank weights must be nonempty");
    for (Eigen::Index i = 0; i < alpha.size(); ++i) {
      if (!(alpha(i) >= 0.0)) throw std::invalid_argument("rank weights must be nonnegative");
      if (i > 0 && alpha(i) > alpha(i - 1))
        throw std::invalid_argument("rank weights must be nonincreasing");
    }
    if (std::abs(alpha.sum() - 1.0) > 1e-12) throw std::invalid_argument("rank weights must sum to 1");
  }

  [[nodiscard]] std::string describe() const {
    switch (kind_) {
      case Kind::simplex:
        return "simplex";
      case Kind::k_set:
        return "k_set(p=" + std::to_string(p_) + ")";
      case Kind::permutahedron:
        return "permutahedron(m=" + std::to_string(alpha_.size()) + ")";
    }
    return "?";
  }

  [[nodiscard]] const Vector& stored_rank_weights() const { return alpha_; }

 private:
  UncertaintySetSpec(Kind kind, double p, Vector alpha) : kind_(kind), p_(p), alpha_(std::move(alpha)) {}

  Kind kind_;
  double p_;
  Vector alpha_;
};

/// What the solvers need from a problem instance: oracle access to each group,
/// per-sample loss and gradient, projection onto Theta, and exact group losses
/// for reporting.
template <class P>
concept StochasticDroProblem = requires(const P& p, const Vector& theta, std::size_t group,
                                        CounterRng& rng, const typename P::sample_type& z,
                                        Vector& out) {
  typename P::sample_type;
  { p.num_groups() } -> std::convertible_to<std::size_t>;
  { p.dim() } -> std::convertible_to<std::size_t>;
  { p.draw(group, rng) } -> std::convertible_to<typename P::sample_type>;
  { p.loss(theta, z) } -> std::convertible_to<double>;
  p.add_loss_grad(theta, z, 1.0, out);
  { p.project(theta) } -> std::convertible_to<Vector>;
  { p.group_losses(theta) } -> std::convertible_to<Vector>;
  { p.uncertainty_set() } -> std::convertible_to<const UncertaintySetSpec&>;
  { p.initial_point() } -> std::convertible_to<Vector>;
};

}  // namespace gdro

#endif
