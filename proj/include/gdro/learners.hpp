#ifndef GDRO_LEARNERS_HPP
#define GDRO_LEARNERS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gdro/geometry.hpp"
#include "gdro/problem.hpp"

namespace gdro {

/// eta_t = value (fixed) or value / sqrt(t) (inverse_sqrt), t >= 1.
struct StepSchedule {
  enum class Kind { fixed, inverse_sqrt };
  Kind kind = Kind::inverse_sqrt;
  double value = 1.0;

  static StepSchedule fixed(double eta) { return {Kind::fixed, eta}; }
  static StepSchedule inverse_sqrt(double c) { return {Kind::inverse_sqrt, c}; }

  [[nodiscard]] double at(std::uint64_t t) const {
    if (t == 0) throw std::invalid_argument("StepSchedule: rounds are numbered from 1");
    return kind == Kind::fixed ? value : value / std::sqrt(static_cast<double>(t));
  }

  void validate() const {
    if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument("StepSchedule: value must be positive");
  }
};

/// A one-hot gradient estimate value * e_index for the q-player.
struct SparseLossEstimate {
  std::size_t index = 0;
  double value = 0.0;
};

/// Clip threshold on the Tsallis factor 1 - eta * g * sqrt(q_i).
inline constexpr double kTsallisClip = 1e-6;

struct TsallisStats {
  std::size_t clip_events = 0;
  std::optional<double> warm_alpha;
};

namespace detail {

inline void check_estimate(const WeightVector& q, const SparseLossEstimate& est) {
  if (est.index >= static_cast<std::size_t>(q.size()))
    throw std::out_of_range("estimate index " + std::to_string(est.index) + " out of range");
  if (!(est.value >= 0.0) || !std::isfinite(est.value))
    throw std::invalid_argument("estimate value must be finite and nonnegative");
}

// exp(log q + shift) normalized, computed with max-subtraction.
inline WeightVector normalize_log_weights(Vector logw) {
  logw.array() -= logw.maxCoeff();
  Vector w = logw.array().exp();
  return finish_weights(std::move(w));
}

}  // namespace detail

/// theta <- proj_ball(theta - eta * grad).
inline Vector ogd_step(const Vector& theta, const Vector& grad, double eta, double radius) {
  if (!(eta > 0.0)) throw std::invalid_argument("ogd_step: eta must be positive");
  if (!grad.allFinite()) throw std::invalid_argument("ogd_step: non-finite gradient");
  return project_ball(theta - eta * grad, radius);
}

/// Hedge on a dense signed gain vector: q_i <- q_i exp(eta g_i), normalized.
/// Pass g = -loss for the loss-minimizing form.
inline WeightVector hedge_dense_step(const WeightVector& q, const Vector& gain, double eta) {
  if (gain.size() != q.size()) throw std::invalid_argument("hedge_dense_step: size mismatch");
  if (!gain.allFinite()) throw std::invalid_argument("hedge_dense_step: non-finite gain");
  return detail::normalize_log_weights(q.values().array().log().matrix() + eta * gain);
}

/// EXP3 reward update: entry est.index is multiplied by exp(eta * est.value).
inline WeightVector hedge_step(const WeightVector& q, const SparseLossEstimate& est, double eta) {
  detail::check_estimate(q, est);
  if (est.value == 0.0) return q;
  Vector logw = q.values().array().log();
  logw(static_cast<Eigen::Index>(est.index)) += eta * est.value;
  return detail::normalize_log_weights(std::move(logw));
}

/// Tsallis-INF on a dense signed gain vector, in the dual coordinates
/// q~_i^{-1/2} = q_i^{-1/2} - eta g_i, followed by the simplex projection.
/// Coordinates whose factor 1 - eta g_i sqrt(q_i) falls below kTsallisClip are
/// clamped and counted in `stats`.
inline WeightVector tsallis_dense_step(const WeightVector& q, const Vector& gain, double eta, TsallisStats& stats,
                                       double tol = 1e-12) {
  if (gain.size() != q.size()) throw std::invalid_argument("tsallis_dense_step: size mismatch");
  if (!gain.allFinite()) throw std::invalid_argument("tsallis_dense_step: non-finite gain");
  Vector q_tilde(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    double factor = 1.0 - eta * gain(i) * std::sqrt(q[i]);
    if (factor < kTsallisClip) {
      factor = kTsallisClip;
      ++stats.clip_events;
    }
    q_tilde(i) = q[i] / (factor * factor);
  }
  TsallisProjection proj = tsallis_simplex_project(q_tilde, tol, stats.warm_alpha);
  stats.warm_alpha = proj.alpha;
  return std::move(proj.q);
}

/// Tsallis-INF reward update for a one-hot estimate.
inline WeightVector tinf_step(const WeightVector& q, const SparseLossEstimate& est, double eta, TsallisStats& stats,
                              double tol = 1e-12) {
  detail::check_estimate(q, est);
  Vector gain = Vector::Zero(q.size());
  gain(static_cast<Eigen::Index>(est.index)) = est.value;
  return tsallis_dense_step(q, gain, eta, stats, tol);
}

struct Exp3pParams {
  double mix_gamma = 0.0;
  double bias_beta = 0.0;

  /// gamma = min(1, sqrt(m log m / T)), beta = sqrt(log m / (m T)).
  static Exp3pParams defaults(std::size_t m, std::uint64_t horizon) {
    const double md = static_cast<double>(m);
    const double td = static_cast<double>(std::max<std::uint64_t>(horizon, 1));
    const double lm = std::log(std::max(md, 1.0));
    return {std::min(1.0, std::sqrt(md * lm / td)), std::sqrt(lm / (md * td))};
  }

  void validate() const {
    if (!(mix_gamma >= 0.0 && mix_gamma <= 1.0))
      throw std::invalid_argument("EXP3P: mix_gamma must lie in [0, 1]");
    if (!(bias_beta >= 0.0)) throw std::invalid_argument("EXP3P: bias_beta must be nonnegative");
  }

  friend bool operator==(const Exp3pParams&, const Exp3pParams&) = default;
};

/// Weights after the EXP3P gain update, before mixing: every coordinate gains
/// beta / q_j and the sampled one also gains est.value.
inline WeightVector exp3p_weights_step(const WeightVector& q, const SparseLossEstimate& est, double eta,
                                       double bias_beta) {
  detail::check_estimate(q, est);
  Vector gain = bias_beta * q.values().array().inverse();
  gain(static_cast<Eigen::Index>(est.index)) += est.value;
  return hedge_dense_step(q, gain, eta);
}

/// Mixes with the uniform distribution: (1 - gamma) q + gamma / m.
inline WeightVector mix_uniform(const WeightVector& q, double gamma) {
  const double m = static_cast<double>(q.size());
  Vector out = (1.0 - gamma) * q.values().array() + gamma / m;
  return detail::finish_weights(std::move(out));
}

/// EXP3P step: biased Hedge update followed by uniform mixing, so min_i q_i >= gamma / m.
inline WeightVector exp3p_step(const WeightVector& q, const SparseLossEstimate& est, double eta, double mix_gamma,
                               double bias_beta) {
  Exp3pParams{mix_gamma, bias_beta}.validate();
  if (mix_gamma >= 1.0) {
    detail::check_estimate(q, est);
    return WeightVector::uniform(static_cast<std::size_t>(q.size()));
  }
  return mix_uniform(exp3p_weights_step(q, est, eta, bias_beta), mix_gamma);
}

// ---------------------------------------------------------------------------
// Regret accounting

/// One round of a linearized online problem: the iterate played and the
/// gradient it was charged with (loss orientation).
struct LinearRound {
  Vector iterate;
  Vector gradient;
};

/// sum_t g_t'x_t - sum_t g_t'comparator.
inline double regret_audit(std::span<const LinearRound> rounds, const Vector& comparator) {
  double total = 0.0;
  for (const LinearRound& r : rounds) total += r.gradient.dot(r.iterate - comparator);
  return total;
}

/// The simplex vertex minimizing sum_t g_t'x, i.e. the best fixed action in hindsight.
inline Vector best_simplex_vertex(std::span<const LinearRound> rounds) {
  if (rounds.empty()) throw std::invalid_argument("best_simplex_vertex: no rounds");
  Vector cumulative = Vector::Zero(rounds.front().gradient.size());
  for (const LinearRound& r : rounds) cumulative += r.gradient;
  Eigen::Index best = 0;
  cumulative.minCoeff(&best);
  Vector e = Vector::Zero(cumulative.size());
  e(best) = 1.0;
  return e;
}

/// The point of the radius-r ball minimizing sum_t g_t'x.
inline Vector best_ball_point(std::span<const LinearRound> rounds, double radius) {
  if (rounds.empty()) throw std::invalid_argument("best_ball_point: no rounds");
  Vector cumulative = Vector::Zero(rounds.front().gradient.size());
  for (const LinearRound& r : rounds) cumulative += r.gradient;
  const double norm = cumulative.norm();
  if (norm == 0.0) return Vector::Zero(cumulative.size());
  return -radius / norm * cumulative;
}

/// ||g||^2 in the dual local norm (hess Psi(q))^{-1}.
inline double local_norm_sq(Regularizer reg, const Vector& q, const Vector& g) {
  return (g.array().square() / psi_hessian_diag(reg, q).array()).sum();
}

/// E_{i ~ q} [ (hess Psi(q))^{-1}_{ii} / q_i^2 ]: m for entropy, 2 sum sqrt(q_i) for Tsallis.
inline double expected_local_norm(Regularizer reg, const Vector& q) {
  const Vector inv_hess = psi_hessian_diag(reg, q).array().inverse();
  return (q.array() * inv_hess.array() / q.array().square()).sum();
}

}  // namespace gdro

#endif
