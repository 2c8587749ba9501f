#ifndef GDRO_REFERENCE_HPP
#define GDRO_REFERENCE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gdro/evaluation.hpp"
#include "gdro/linear_problem.hpp"
#include "gdro/parallel.hpp"
#include "gdro/solvers.hpp"

namespace gdro {

struct SubgradientOptions {
  std::uint64_t iterations = 10000;
  /// Step k is initial_step / sqrt(k) along the normalized subgradient.
  double initial_step = 1.0;
};

struct SubgradientResult {
  Vector theta;
  double value = 0.0;
};

/// Robust objective and one subgradient at theta: sum_i q*_i grad L_i with q*
/// a worst-case weight vector.
inline std::pair<double, Vector> robust_value_and_subgradient(const LinearDroProblem& problem, const Vector& theta) {
  const Vector L = problem.group_losses(theta);
  const Vector q = worst_case_weights(L, problem.uncertainty_set());
  const Eigen::MatrixXd grads = group_loss_gradients(theta, problem.dataset(), problem.loss_kind());
  return {robust_objective(L, problem.uncertainty_set()), grads * q};
}

/// Deterministic projected subgradient method on the exact robust objective,
/// returning the best point visited.
inline SubgradientResult full_gradient_subgradient(const LinearDroProblem& problem, Vector theta,
                                                   const SubgradientOptions& opts) {
  if (!(opts.initial_step > 0.0)) throw std::invalid_argument("subgradient: initial_step must be positive");
  theta = problem.project(std::move(theta));
  SubgradientResult best{theta, std::numeric_limits<double>::infinity()};
  for (std::uint64_t k = 1; k <= opts.iterations; ++k) {
    auto [value, g] = robust_value_and_subgradient(problem, theta);
    if (value < best.value) best = {theta, value};
    const double norm = g.norm();
    if (norm == 0.0) break;
    theta = problem.project(theta - (opts.initial_step / std::sqrt(static_cast<double>(k)) / norm) * g);
  }
  const double last = robust_objective(problem.group_losses(theta), problem.uncertainty_set());
  if (last < best.value) best = {theta, last};
  return best;
}

struct ReferenceProtocol {
  std::uint64_t multiplier = 10;
  std::vector<std::uint64_t> seeds{1001, 1002, 1003, 1004, 1005};
  SubgradientOptions subgradient{};
  /// Subgradient step relative to the radius.
  double subgradient_step_fraction = 0.003;
};

/// Best robust objective over long stochastic runs of every supplied solver
/// configuration, with T and the q-step rescaled to the longer horizon, then
/// refined by the subgradient method from the best point found. Ties go to
/// the earliest (configuration, seed) pair, so the result does not depend on
/// `threads`.
inline ReferenceSolution compute_reference(const LinearDroProblem& problem,
                                           const std::vector<SolverConfig>& configs,
                                           const ReferenceProtocol& protocol, std::size_t threads = 1) {
  if (configs.empty()) throw std::invalid_argument("compute_reference: no solver configurations");
  if (protocol.seeds.empty() || protocol.multiplier == 0)
    throw std::invalid_argument("compute_reference: need at least one seed and a positive multiplier");
  ReferenceSolution ref;
  ref.value = std::numeric_limits<double>::infinity();
  ref.provenance.dataset_fingerprint = problem.dataset().fingerprint();
  ref.provenance.uncertainty_set = problem.uncertainty_set().describe();
  ref.provenance.loss = std::string(to_string(problem.loss_kind()));
  ref.provenance.seeds = protocol.seeds;

  const std::size_t runs = configs.size() * protocol.seeds.size();
  std::vector<SolverConfig> tasks(runs);
  std::vector<Checkpoint> finals(runs);
  for (std::size_t c = 0; c < configs.size(); ++c) {
    for (std::size_t s = 0; s < protocol.seeds.size(); ++s) {
      SolverConfig cfg = configs[c];
      cfg.iterations = configs[c].iterations * protocol.multiplier;
      cfg.q_step = configs[c].q_step / std::sqrt(static_cast<double>(protocol.multiplier));
      cfg.seed = protocol.seeds[s];
      cfg.checkpoint_every = cfg.iterations;
      tasks[c * protocol.seeds.size() + s] = cfg;
    }
  }
  parallel_for(runs, threads, [&](std::size_t k) { finals[k] = run_solver(problem, tasks[k]).final(); });
  for (std::size_t k = 0; k < runs; ++k) {
    if (finals[k].objective < ref.value) {
      ref.value = finals[k].objective;
      ref.theta = finals[k].theta_avg;
      ref.provenance.algorithm = std::string(to_string(tasks[k].algorithm));
      ref.provenance.iterations = tasks[k].iterations;
    }
  }

  SubgradientOptions sg = protocol.subgradient;
  sg.initial_step = protocol.subgradient_step_fraction * problem.radius();
  if (sg.iterations > 0) {
    const SubgradientResult refined = full_gradient_subgradient(problem, ref.theta, sg);
    if (refined.value < ref.value) {
      ref.value = refined.value;
      ref.theta = refined.theta;
      ref.provenance.algorithm += "+subgradient";
    }
  }
  return ref;
}

}  // namespace gdro

#endif
