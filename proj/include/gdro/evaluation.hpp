#ifndef GDRO_EVALUATION_HPP
#define GDRO_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gdro/data.hpp"
#include "gdro/problem.hpp"
#include "gdro/trajectory.hpp"

namespace gdro {

/// Per-group empirical mean losses L_i(theta), summed in row order.
inline Vector group_losses(const Vector& theta, const GroupedDataset& data, LossKind loss) {
  if (static_cast<std::size_t>(theta.size()) != data.dim())
    throw std::invalid_argument("group_losses: theta has dimension " + std::to_string(theta.size()) +
                                ", dataset has " + std::to_string(data.dim()));
  Vector out(static_cast<Eigen::Index>(data.num_groups()));
  for (std::size_t g = 0; g < data.num_groups(); ++g) {
    const auto& grp = data.group(g);
    const Vector margins = (grp.features * theta).cwiseProduct(grp.labels);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < margins.size(); ++j) sum += loss_from_margin(loss, margins(j));
    out(static_cast<Eigen::Index>(g)) = sum / static_cast<double>(margins.size());
  }
  return out;
}

/// Per-group mean loss gradients, one column per group.
inline Eigen::MatrixXd group_loss_gradients(const Vector& theta, const GroupedDataset& data, LossKind loss) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.dim()), static_cast<Eigen::Index>(data.num_groups()));
  for (std::size_t g = 0; g < data.num_groups(); ++g) {
    const auto& grp = data.group(g);
    Vector margins = (grp.features * theta).cwiseProduct(grp.labels);
    for (Eigen::Index j = 0; j < margins.size(); ++j)
      margins(j) = loss_slope_from_margin(loss, margins(j)) * grp.labels(j);
    out.col(static_cast<Eigen::Index>(g)) = grp.features.transpose() * margins / static_cast<double>(margins.size());
  }
  return out;
}

/// A maximizer of q'L over Q: rank weights assigned by decreasing loss.
inline Vector worst_case_weights(const Vector& losses, const UncertaintySetSpec& spec) {
  const auto m = static_cast<std::size_t>(losses.size());
  const Vector alpha = spec.rank_weights(m);
  std::vector<Eigen::Index> order(m);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return losses(a) > losses(b); });
  Vector q(losses.size());
  for (std::size_t r = 0; r < m; ++r) q(order[r]) = alpha(static_cast<Eigen::Index>(r));
  return q;
}

/// max_{q in Q} q'L = sum_i alpha_i L_(i) with L sorted nonincreasing. For the
/// k-set polytope alpha is the greedy fill, which is the LP optimum for a
/// fractional cap as well.
inline double robust_objective(const Vector& losses, const UncertaintySetSpec& spec) {
  if (spec.kind() == UncertaintySetSpec::Kind::simplex) return losses.maxCoeff();
  const Vector alpha = spec.rank_weights(static_cast<std::size_t>(losses.size()));
  std::vector<double> sorted(losses.data(), losses.data() + losses.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double value = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) value += alpha(static_cast<Eigen::Index>(i)) * sorted[i];
  return value;
}

/// Best-known solution used as the stand-in for the minimax value.
struct ReferenceSolution {
  struct Provenance {
    std::string algorithm;
    std::uint64_t iterations = 0;
    std::vector<std::uint64_t> seeds;
    std::uint64_t dataset_fingerprint = 0;
    std::string uncertainty_set;
    std::string loss;
  };

  Vector theta;
  double value = 0.0;
  Provenance provenance;
};

/// robust_objective(group_losses(theta)) - ref.value. Not clamped.
inline double optimality_gap(const Vector& theta, const GroupedDataset& data, LossKind loss,
                             const UncertaintySetSpec& spec, const ReferenceSolution& ref) {
  if (ref.provenance.dataset_fingerprint != data.fingerprint())
    throw std::invalid_argument("optimality_gap: reference was computed on a different dataset");
  if (ref.provenance.uncertainty_set != spec.describe() || ref.provenance.loss != to_string(loss))
    throw std::invalid_argument("optimality_gap: reference was computed for a different problem");
  return robust_objective(group_losses(theta, data, loss), spec) - ref.value;
}

/// Floor applied to gaps before taking logs for plots.
inline constexpr double kGapPlotFloor = 1e-12;

/// Least-squares slope of log(gap) against log(t), skipping the first
/// `burn_in_fraction` of the points and any nonpositive gaps.
inline double fit_convergence_slope(std::span<const std::pair<double, double>> points, double burn_in_fraction) {
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0))
    throw std::invalid_argument("fit_convergence_slope: burn_in_fraction must lie in [0, 1)");
  const auto skip = static_cast<std::size_t>(std::floor(burn_in_fraction * static_cast<double>(points.size())));
  if (points.size() < skip + 10)
    throw std::invalid_argument("fit_convergence_slope: need at least 10 points after burn-in");
  std::vector<std::pair<double, double>> logs;
  for (std::size_t i = skip; i < points.size(); ++i) {
    const auto [t, gap] = points[i];
    if (t > 0.0 && gap > 0.0 && std::isfinite(gap)) logs.emplace_back(std::log(t), std::log(gap));
  }
  if (logs.size() < 5) throw std::invalid_argument("fit_convergence_slope: fewer than 5 positive gaps");
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : logs) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(logs.size());
  my /= static_cast<double>(logs.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : logs) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_convergence_slope: all points share one t");
  return sxy / sxx;
}

inline double fit_convergence_slope(const Trajectory& trajectory, double burn_in_fraction) {
  std::vector<std::pair<double, double>> points;
  points.reserve(trajectory.checkpoints.size());
  for (const Checkpoint& c : trajectory.checkpoints) points.emplace_back(static_cast<double>(c.t), c.gap);
  return fit_convergence_slope(points, burn_in_fraction);
}

}  // namespace gdro

#endif
