#ifndef GDRO_LOWER_BOUND_HPP
#define GDRO_LOWER_BOUND_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

#include "gdro/problem.hpp"
#include "gdro/rng.hpp"

namespace gdro {

/// Two-point instance family on theta in [0, 1]. Group i < m - 1 (0-based)
/// has loss delta (1 - theta) + Z, the last group delta theta + Z, with
/// Z ~ Ber(mu_i). All losses are multiplied by `scale`.
struct LowerBoundInstance {
  std::size_t m = 2;
  double delta = 0.1;
  Vector mu;
  std::optional<std::size_t> star_index;
  double scale = 1.0;

  /// mu = (1/2, ..., 1/2).
  static LowerBoundInstance base(std::size_t m, double delta, double scale = 1.0) {
    LowerBoundInstance inst;
    inst.m = m;
    inst.delta = delta;
    inst.mu = Vector::Constant(static_cast<Eigen::Index>(m), 0.5);
    inst.scale = scale;
    inst.validate();
    return inst;
  }

  /// Base instance with mu_{star} raised to 1/2 + delta; star must not be the last group.
  static LowerBoundInstance perturbed(std::size_t m, double delta, std::size_t star, double scale = 1.0) {
    LowerBoundInstance inst = base(m, delta, scale);
    if (star + 1 >= m) throw std::invalid_argument("LowerBoundInstance: star index must be below m - 1");
    inst.star_index = star;
    inst.mu(static_cast<Eigen::Index>(star)) = 0.5 + delta;
    return inst;
  }

  void validate() const {
    if (m < 2) throw std::invalid_argument("LowerBoundInstance: m must be at least 2");
    if (!(delta >= 0.0 && delta < 0.25)) throw std::invalid_argument("LowerBoundInstance: delta must lie in [0, 1/4)");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("LowerBoundInstance: scale must be positive");
    if (static_cast<std::size_t>(mu.size()) != m || (mu.array() < 0.0).any() || (mu.array() > 1.0).any())
      throw std::invalid_argument("LowerBoundInstance: mu must have m entries in [0, 1]");
  }
};

namespace detail {

inline void check_lb_args(const LowerBoundInstance& inst, std::size_t group, double theta) {
  if (group >= inst.m) throw std::out_of_range("lower bound: group index out of range");
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("lower bound: theta must lie in [0, 1]");
}

inline double lb_deterministic_part(const LowerBoundInstance& inst, std::size_t group, double theta) {
  return group + 1 < inst.m ? inst.delta * (1.0 - theta) : inst.delta * theta;
}

}  // namespace detail

/// One realized loss for `group` at `theta`.
inline double lb_sample(const LowerBoundInstance& inst, std::size_t group, double theta, CounterRng& rng) {
  detail::check_lb_args(inst, group, theta);
  const double z = rng.bernoulli(inst.mu(static_cast<Eigen::Index>(group))) ? 1.0 : 0.0;
  return inst.scale * (detail::lb_deterministic_part(inst, group, theta) + z);
}

inline double lb_expected_loss(const LowerBoundInstance& inst, std::size_t group, double theta) {
  detail::check_lb_args(inst, group, theta);
  return inst.scale * (detail::lb_deterministic_part(inst, group, theta) + inst.mu(static_cast<Eigen::Index>(group)));
}

/// max_i E[loss_i(theta)].
inline double lb_worst_group_loss(const LowerBoundInstance& inst, double theta) {
  double v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < inst.m; ++i) v = std::max(v, lb_expected_loss(inst, i, theta));
  return v;
}

struct LowerBoundOptimum {
  double theta = 0.5;
  double value = 0.0;
};

/// Exact minimizer of the worst-group loss over [0, 1]. The objective is the
/// maximum of a decreasing and an increasing line, so the optimum sits at
/// their crossing clamped to [0, 1]; with delta = 0 it is flat and 1/2 is returned.
inline LowerBoundOptimum lb_minimax_value(const LowerBoundInstance& inst) {
  inst.validate();
  double a = 0.0;
  for (std::size_t i = 0; i + 1 < inst.m; ++i) a = std::max(a, inst.mu(static_cast<Eigen::Index>(i)));
  const double b = inst.mu(static_cast<Eigen::Index>(inst.m - 1));
  LowerBoundOptimum opt;
  if (inst.delta > 0.0) opt.theta = std::clamp((a - b + inst.delta) / (2.0 * inst.delta), 0.0, 1.0);
  opt.value = lb_worst_group_loss(inst, opt.theta);
  return opt;
}

/// R(theta, P) = worst-group loss at theta minus the minimax value.
inline double lb_gap(const LowerBoundInstance& inst, double theta) {
  return lb_worst_group_loss(inst, theta) - lb_minimax_value(inst).value;
}

/// min over a theta grid on [0, 1] of max{R(theta, P0), R(theta, P1)}.
inline double lb_check_separation(double delta, std::size_t star_index, std::size_t m, double theta_grid_step) {
  if (!(theta_grid_step > 0.0)) throw std::invalid_argument("lb_check_separation: grid step must be positive");
  const LowerBoundInstance p0 = LowerBoundInstance::base(m, delta);
  const LowerBoundInstance p1 = LowerBoundInstance::perturbed(m, delta, star_index);
  const double v0 = lb_minimax_value(p0).value;
  const double v1 = lb_minimax_value(p1).value;
  const auto steps = static_cast<std::size_t>(std::floor(1.0 / theta_grid_step));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= steps + 1; ++k) {
    const double theta = std::min(1.0, static_cast<double>(k) * theta_grid_step);
    const double r = std::max(lb_worst_group_loss(p0, theta) - v0, lb_worst_group_loss(p1, theta) - v1);
    best = std::min(best, r);
  }
  return best;
}

/// KL(Ber(p) || Ber(q)) for p, q in (0, 1).
inline double kl_bernoulli(double p, double q) {
  if (!(p > 0.0 && p < 1.0) || !(q > 0.0 && q < 1.0))
    throw std::invalid_argument("kl_bernoulli: p and q must lie in (0, 1)");
  return std::max(0.0, p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q)));
}

/// The instance as a stochastic DRO problem over the simplex; theta is a
/// 1-vector clamped to [0, 1] and each oracle call reveals one Z.
class LowerBoundProblem {
 public:
  struct sample_type {
    std::size_t group = 0;
    bool z = false;
  };

  explicit LowerBoundProblem(LowerBoundInstance inst) : inst_(std::move(inst)) { inst_.validate(); }

  [[nodiscard]] const LowerBoundInstance& instance() const { return inst_; }
  [[nodiscard]] std::size_t num_groups() const { return inst_.m; }
  [[nodiscard]] std::size_t dim() const { return 1; }
  [[nodiscard]] const UncertaintySetSpec& uncertainty_set() const { return spec_; }

  [[nodiscard]] ProblemConstants constants() const {
    ProblemConstants c;
    c.lipschitz_G = inst_.scale * inst_.delta;
    c.diameter_D = 1.0;
    c.range_M = 2.0 * inst_.scale;
    c.num_groups_m = inst_.m;
    c.dim_n = 1;
    return c;
  }

  [[nodiscard]] sample_type draw(std::size_t group, CounterRng& rng) const {
    if (group >= inst_.m) throw std::out_of_range("LowerBoundProblem: group index out of range");
    return {group, rng.bernoulli(inst_.mu(static_cast<Eigen::Index>(group)))};
  }

  [[nodiscard]] double loss(const Vector& theta, const sample_type& z) const {
    return inst_.scale * (detail::lb_deterministic_part(inst_, z.group, theta(0)) + (z.z ? 1.0 : 0.0));
  }

  void add_loss_grad(const Vector&, const sample_type& z, double scale, Vector& out) const {
    const double slope = z.group + 1 < inst_.m ? -inst_.delta : inst_.delta;
    out(0) += scale * inst_.scale * slope;
  }

  [[nodiscard]] Vector project(Vector theta) const {
    theta(0) = std::clamp(theta(0), 0.0, 1.0);
    return theta;
  }

  [[nodiscard]] Vector group_losses(const Vector& theta) const {
    Vector out(static_cast<Eigen::Index>(inst_.m));
    for (std::size_t i = 0; i < inst_.m; ++i) out(static_cast<Eigen::Index>(i)) = lb_expected_loss(inst_, i, theta(0));
    return out;
  }

  [[nodiscard]] Vector initial_point() const { return Vector::Constant(1, 0.5); }

 private:
  LowerBoundInstance inst_;
  UncertaintySetSpec spec_ = UncertaintySetSpec::simplex();
};

static_assert(StochasticDroProblem<LowerBoundProblem>);

}  // namespace gdro

#endif
