#ifndef GDRO_SOLVERS_HPP
#define GDRO_SOLVERS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gdro/evaluation.hpp"
#include "gdro/geometry.hpp"
#include "gdro/learners.hpp"
#include "gdro/problem.hpp"
#include "gdro/rng.hpp"
#include "gdro/trajectory.hpp"

namespace gdro {

enum class Algorithm { generic_omd, gdro_exp3, gdro_tinf, sagawa, gdro_exp3p };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::generic_omd:
      return "omd";
    case Algorithm::gdro_exp3:
      return "gdro-exp3";
    case Algorithm::gdro_tinf:
      return "gdro-tinf";
    case Algorithm::sagawa:
      return "sagawa";
    case Algorithm::gdro_exp3p:
      return "gdro-exp3p";
  }
  return "?";
}

inline Algorithm algorithm_from_string(std::string_view s) {
  if (s == "omd") return Algorithm::generic_omd;
  if (s == "gdro-exp3") return Algorithm::gdro_exp3;
  if (s == "gdro-tinf") return Algorithm::gdro_tinf;
  if (s == "sagawa") return Algorithm::sagawa;
  if (s == "gdro-exp3p") return Algorithm::gdro_exp3p;
  throw std::invalid_argument("unknown algorithm '" + std::string(s) + "'");
}

struct SolverConfig {
  Algorithm algorithm = Algorithm::gdro_exp3;
  /// Mirror map of the generic driver; ignored by the other algorithms.
  Regularizer omd_regularizer = Regularizer::tsallis;
  StepSchedule theta_schedule = StepSchedule::inverse_sqrt(1.0);
  double q_step = 0.1;
  std::uint64_t iterations = 1000;
  std::size_t minibatch = 10;
  std::uint64_t seed = 0;
  /// Checkpoint every this many rounds; 0 selects the geometric schedule.
  std::uint64_t checkpoint_every = 0;
  double checkpoint_ratio = 1.2;
  /// EXP3P parameters; defaults from (m, T) when empty.
  std::optional<Exp3pParams> exp3p;
  bool record_iterates = false;

  void validate() const {
    if (iterations == 0) throw std::invalid_argument("SolverConfig: iterations must be at least 1");
    if (minibatch == 0) throw std::invalid_argument("SolverConfig: minibatch must be at least 1");
    if (!(q_step > 0.0) || !std::isfinite(q_step)) throw std::invalid_argument("SolverConfig: q_step must be positive");
    if (checkpoint_every == 0 && !(checkpoint_ratio > 1.0))
      throw std::invalid_argument("SolverConfig: checkpoint_ratio must exceed 1");
    theta_schedule.validate();
    if (algorithm == Algorithm::generic_omd && omd_regularizer == Regularizer::euclidean)
      throw std::invalid_argument("SolverConfig: generic OMD needs the entropy or Tsallis regularizer");
    if (exp3p) exp3p->validate();
  }
};

/// Checkpoint times: ceil(ratio^k) deduplicated (or multiples of `every`), always ending at T.
inline std::vector<std::uint64_t> checkpoint_times(const SolverConfig& cfg) {
  std::vector<std::uint64_t> out;
  const std::uint64_t T = cfg.iterations;
  if (cfg.checkpoint_every > 0) {
    for (std::uint64_t t = cfg.checkpoint_every; t < T; t += cfg.checkpoint_every) out.push_back(t);
  } else {
    for (double x = 1.0; x < static_cast<double>(T); x *= cfg.checkpoint_ratio) {
      const auto t = static_cast<std::uint64_t>(std::ceil(x - 1e-9));
      if (t >= T) break;
      if (out.empty() || t > out.back()) out.push_back(t);
    }
  }
  out.push_back(T);
  return out;
}

/// Inverse-CDF draw of i ~ q.
inline std::size_t sample_group(const WeightVector& q, CounterRng& rng) {
  const double u = rng.uniform01();
  double cumulative = 0.0;
  const auto m = static_cast<std::size_t>(q.size());
  for (std::size_t i = 0; i + 1 < m; ++i) {
    cumulative += q[static_cast<Eigen::Index>(i)];
    if (u < cumulative) return i;
  }
  return m - 1;
}

struct Estimates {
  Vector grad_theta;
  SparseLossEstimate est_q;
  double mean_loss = 0.0;
};

namespace detail {

template <class Batch, class LossFn, class GradFn>
Estimates batch_means(std::size_t dim, const Batch& batch, LossFn&& loss, GradFn&& add_grad) {
  if (batch.empty()) throw std::invalid_argument("make_estimates: empty batch");
  Estimates e;
  e.grad_theta = Vector::Zero(static_cast<Eigen::Index>(dim));
  const double w = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& z : batch) {
    total += loss(z);
    add_grad(z, w, e.grad_theta);
  }
  e.mean_loss = total * w;
  return e;
}

inline void check_group(const WeightVector& q, std::size_t i) {
  if (i >= static_cast<std::size_t>(q.size())) throw std::out_of_range("make_estimates: group index out of range");
}

}  // namespace detail

/// Batch-mean gradient and importance-weighted loss estimate (mean loss / q_i) e_i.
template <StochasticDroProblem P>
Estimates make_estimates(const P& problem, const Vector& theta, const WeightVector& q, std::size_t i,
                         std::span<const typename P::sample_type> batch) {
  detail::check_group(q, i);
  Estimates e = detail::batch_means(
      problem.dim(), batch, [&](const auto& z) { return problem.loss(theta, z); },
      [&](const auto& z, double w, Vector& out) { problem.add_loss_grad(theta, z, w, out); });
  e.est_q = {i, e.mean_loss / q[static_cast<Eigen::Index>(i)]};
  return e;
}

inline Estimates make_estimates(LossKind loss, const Vector& theta, const WeightVector& q, std::size_t i,
                                std::span<const DataPoint> batch) {
  detail::check_group(q, i);
  Estimates e = detail::batch_means(
      static_cast<std::size_t>(theta.size()), batch, [&](const DataPoint& z) { return eval_loss(loss, theta, z); },
      [&](const DataPoint& z, double w, Vector& out) { out += w * eval_loss_grad(loss, theta, z); });
  e.est_q = {i, e.mean_loss / q[static_cast<Eigen::Index>(i)]};
  return e;
}

/// Estimates for uniformly sampled i: gradient scaled by m q_i, loss estimate m * mean loss.
template <StochasticDroProblem P>
Estimates make_estimates_sagawa(const P& problem, const Vector& theta, const WeightVector& q, std::size_t i,
                                std::span<const typename P::sample_type> batch) {
  Estimates e = make_estimates(problem, theta, q, i, batch);
  const double m = static_cast<double>(q.size());
  e.grad_theta *= m * q[static_cast<Eigen::Index>(i)];
  e.est_q.value = m * e.mean_loss;
  return e;
}

inline Estimates make_estimates_sagawa(LossKind loss, const Vector& theta, const WeightVector& q, std::size_t i,
                                       std::span<const DataPoint> batch) {
  Estimates e = make_estimates(loss, theta, q, i, batch);
  const double m = static_cast<double>(q.size());
  e.grad_theta *= m * q[static_cast<Eigen::Index>(i)];
  e.est_q.value = m * e.mean_loss;
  return e;
}

namespace detail {

// Kahan-compensated running sum of the theta iterates.
class CompensatedSum {
 public:
  explicit CompensatedSum(Eigen::Index n) : sum_(Vector::Zero(n)), comp_(Vector::Zero(n)) {}
  void add(const Vector& x) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double y = x(j) - comp_(j);
      const double t = sum_(j) + y;
      comp_(j) = (t - sum_(j)) - y;
      sum_(j) = t;
    }
  }
  [[nodiscard]] Vector mean(std::uint64_t count) const { return sum_ / static_cast<double>(count); }

 private:
  Vector sum_, comp_;
};

// Generic mirror ascent step on a one-hot gain, written through grad Psi and
// projected onto Q. Tsallis duals are clipped like the specialized step.
inline WeightVector generic_omd_step(const WeightVector& q, const SparseLossEstimate& est, double eta,
                                     Regularizer reg, const UncertaintySetSpec& spec, TsallisStats& stats) {
  Vector dual = psi_grad(reg, q.values());
  const auto i = static_cast<Eigen::Index>(est.index);
  if (reg == Regularizer::tsallis) {
    const double c = -dual(i);
    double c_new = c - eta * est.value;
    if (c_new < kTsallisClip * c) {
      c_new = kTsallisClip * c;
      ++stats.clip_events;
    }
    dual(i) = -c_new;
  } else {
    dual(i) += eta * est.value;
  }
  return bregman_project_dual(dual, spec, reg);
}

}  // namespace detail

/// Runs T rounds of the configured no-regret dynamics from q_1 = uniform and
/// theta_1 = problem.initial_point(). Checkpoints hold the running average of
/// theta_1..theta_t and its robust objective.
template <StochasticDroProblem P>
Trajectory run_solver(const P& problem, const SolverConfig& cfg) {
  cfg.validate();
  const std::size_t m = problem.num_groups();
  const UncertaintySetSpec& spec = problem.uncertainty_set();
  spec.validate(m);
  if (cfg.algorithm != Algorithm::generic_omd && spec.kind() != UncertaintySetSpec::Kind::simplex)
    throw std::invalid_argument(std::string("run_solver: ") + std::string(to_string(cfg.algorithm)) +
                                " supports only the simplex; use the generic driver");

  CounterRng rng(cfg.seed, streams::kSolver);
  Vector theta = problem.initial_point();
  detail::CompensatedSum theta_sum(theta.size());
  WeightVector q = WeightVector::uniform(m);
  WeightVector played = q;
  TsallisStats stats;
  const Exp3pParams exp3p = cfg.exp3p.value_or(Exp3pParams::defaults(m, cfg.iterations));

  Trajectory traj;
  traj.group_queries.assign(m, 0);
  const std::vector<std::uint64_t> times = checkpoint_times(cfg);
  traj.checkpoints.reserve(times.size());
  std::size_t next_checkpoint = 0;

  std::vector<typename P::sample_type> batch(cfg.minibatch);
  Vector grad(theta.size());
  const double md = static_cast<double>(m);

  for (std::uint64_t t = 1; t <= cfg.iterations; ++t) {
    const std::size_t i = cfg.algorithm == Algorithm::sagawa ? static_cast<std::size_t>(rng.uniform_index(m))
                                                             : sample_group(played, rng);
    ++traj.group_queries[i];
    if (cfg.record_iterates) {
      traj.theta_iterates.push_back(theta);
      traj.q_iterates.push_back(played.values());
      traj.sampled_groups.push_back(i);
    }

    grad.setZero();
    double mean_loss = 0.0;
    const double w = 1.0 / static_cast<double>(cfg.minibatch);
    for (auto& z : batch) {
      z = problem.draw(i, rng);
      mean_loss += problem.loss(theta, z);
      problem.add_loss_grad(theta, z, w, grad);
    }
    mean_loss *= w;

    theta_sum.add(theta);
    if (t == times[next_checkpoint]) {
      Checkpoint c;
      c.t = t;
      c.theta_avg = theta_sum.mean(t);
      c.objective = robust_objective(problem.group_losses(c.theta_avg), spec);
      c.q = played.values();
      traj.checkpoints.push_back(std::move(c));
      ++next_checkpoint;
    }

    const double qi = played[static_cast<Eigen::Index>(i)];
    const double theta_scale = cfg.algorithm == Algorithm::sagawa ? md * qi : 1.0;
    theta = problem.project(theta - (cfg.theta_schedule.at(t) * theta_scale) * grad);

    switch (cfg.algorithm) {
      case Algorithm::gdro_exp3:
        q = hedge_step(q, {i, mean_loss / qi}, cfg.q_step);
        played = q;
        break;
      case Algorithm::gdro_tinf:
        q = tinf_step(q, {i, mean_loss / qi}, cfg.q_step, stats);
        played = q;
        break;
      case Algorithm::sagawa:
        q = hedge_step(q, {i, md * mean_loss}, cfg.q_step);
        played = q;
        break;
      case Algorithm::gdro_exp3p: {
        Vector gain = exp3p.bias_beta * played.values().array().inverse();
        gain(static_cast<Eigen::Index>(i)) += mean_loss / qi;
        q = hedge_dense_step(q, gain, cfg.q_step);
        played = exp3p.mix_gamma >= 1.0 ? WeightVector::uniform(m) : mix_uniform(q, exp3p.mix_gamma);
        break;
      }
      case Algorithm::generic_omd:
        q = detail::generic_omd_step(q, {i, mean_loss / qi}, cfg.q_step, cfg.omd_regularizer, spec, stats);
        played = q;
        break;
    }
  }
  traj.clip_events = stats.clip_events;
  return traj;
}

/// Closed-form rate at the optimized step sizes. The generic driver uses the
/// bound of its regularizer.
inline double theoretical_rate(Algorithm algorithm, const ProblemConstants& c, std::uint64_t T,
                               Regularizer omd_regularizer = Regularizer::tsallis) {
  if (T == 0) throw std::invalid_argument("theoretical_rate: T must be at least 1");
  c.validate();
  const double gd2 = c.lipschitz_G * c.lipschitz_G * c.diameter_D * c.diameter_D;
  const double m2 = c.range_M * c.range_M;
  const double m = static_cast<double>(c.num_groups_m);
  const double lm = std::log(m);
  const double td = static_cast<double>(T);
  switch (algorithm) {
    case Algorithm::generic_omd:
      if (omd_regularizer == Regularizer::entropy) return theoretical_rate(Algorithm::gdro_exp3, c, T);
      if (omd_regularizer == Regularizer::tsallis) return theoretical_rate(Algorithm::gdro_tinf, c, T);
      throw std::invalid_argument("theoretical_rate: no bound for this regularizer");
    case Algorithm::gdro_exp3:
    case Algorithm::gdro_exp3p:
      return std::sqrt(2.0) * std::sqrt(gd2 + 2.0 * m2 * m * lm) / std::sqrt(td);
    case Algorithm::gdro_tinf:
      return std::sqrt(2.0) * std::sqrt(gd2 + 4.0 * m2 * m) / std::sqrt(td);
    case Algorithm::sagawa:
      return std::sqrt(2.0) * m * std::sqrt((gd2 + 2.0 * m2 * lm) / td);
  }
  throw std::invalid_argument("theoretical_rate: unknown algorithm");
}

/// The expected-gap bound for given step sizes, before optimizing them:
/// (1/T) [ G'^2/2 sum eta_t + D^2/(2 eta_T) + M'^2/2 eta_q T E + Div / eta_q ]
/// with E the expected local norm factor and Div the largest divergence from
/// the uniform start.
inline double step_size_bound(Algorithm algorithm, const ProblemConstants& c, const StepSchedule& theta_schedule,
                              double q_step, std::uint64_t T, Regularizer omd_regularizer = Regularizer::tsallis) {
  if (T == 0) throw std::invalid_argument("step_size_bound: T must be at least 1");
  c.validate();
  theta_schedule.validate();
  const double m = static_cast<double>(c.num_groups_m);
  double eta_sum = 0.0;
  for (std::uint64_t t = 1; t <= T; ++t) eta_sum += theta_schedule.at(t);
  const double eta_last = theta_schedule.at(T);
  double g2 = c.lipschitz_G * c.lipschitz_G;
  double local = 0.0;
  double div = 0.0;
  Regularizer reg = Regularizer::entropy;
  switch (algorithm) {
    case Algorithm::gdro_exp3:
    case Algorithm::gdro_exp3p:
      reg = Regularizer::entropy;
      break;
    case Algorithm::gdro_tinf:
      reg = Regularizer::tsallis;
      break;
    case Algorithm::generic_omd:
      reg = omd_regularizer;
      break;
    case Algorithm::sagawa:
      reg = Regularizer::entropy;
      g2 *= m * m;
      break;
  }
  const double M2 = c.range_M * c.range_M;
  if (algorithm == Algorithm::sagawa) {
    local = m * m * M2;
    div = std::log(m);
  } else if (reg == Regularizer::entropy) {
    local = m * M2;
    div = std::log(m);
  } else {
    local = 2.0 * std::sqrt(m) * M2;
    div = 2.0 * (std::sqrt(m) - 1.0);
  }
  const double td = static_cast<double>(T);
  return (0.5 * g2 * eta_sum + c.diameter_D * c.diameter_D / (2.0 * eta_last) + 0.5 * q_step * td * local +
          div / q_step) /
         td;
}

}  // namespace gdro

#endif
