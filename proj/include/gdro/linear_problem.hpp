#ifndef GDRO_LINEAR_PROBLEM_HPP
#define GDRO_LINEAR_PROBLEM_HPP

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <utility>

#include "gdro/data.hpp"
#include "gdro/evaluation.hpp"
#include "gdro/problem.hpp"

namespace gdro {

/// A sampled row of a grouped dataset.
struct RowRef {
  std::size_t group = 0;
  std::size_t row = 0;
};

/// Constants for a linear classifier over the radius-r ball on `data`:
/// G = max |a|, D = 2r, and M the largest loss value at margin -r max |a|.
inline ProblemConstants compute_constants(const GroupedDataset& data, LossKind loss, double radius) {
  double max_norm = 0.0;
  for (std::size_t g = 0; g < data.num_groups(); ++g)
    max_norm = std::max(max_norm, data.group(g).features.rowwise().norm().maxCoeff());
  ProblemConstants c;
  c.lipschitz_G = max_norm;
  c.diameter_D = 2.0 * radius;
  c.range_M = loss_from_margin(loss, -radius * max_norm);
  c.num_groups_m = data.num_groups();
  c.dim_n = data.dim();
  return c;
}

/// Linear classification with a convex margin loss over per-group empirical
/// distributions, with theta restricted to a Euclidean ball.
class LinearDroProblem {
 public:
  using sample_type = RowRef;

  LinearDroProblem(std::shared_ptr<const GroupedDataset> data, LossKind loss, double radius, UncertaintySetSpec spec)
      : data_(std::move(data)), loss_(loss), radius_(radius), spec_(std::move(spec)) {
    if (!data_) throw std::invalid_argument("LinearDroProblem: null dataset");
    if (!(radius_ > 0.0) || !std::isfinite(radius_))
      throw std::invalid_argument("LinearDroProblem: radius must be positive");
    spec_.validate(data_->num_groups());
  }

  [[nodiscard]] std::size_t num_groups() const { return data_->num_groups(); }
  [[nodiscard]] std::size_t dim() const { return data_->dim(); }
  [[nodiscard]] const GroupedDataset& dataset() const { return *data_; }
  [[nodiscard]] std::shared_ptr<const GroupedDataset> dataset_ptr() const { return data_; }
  [[nodiscard]] LossKind loss_kind() const { return loss_; }
  [[nodiscard]] double radius() const { return radius_; }
  [[nodiscard]] const UncertaintySetSpec& uncertainty_set() const { return spec_; }
  [[nodiscard]] ProblemConstants constants() const { return compute_constants(*data_, loss_, radius_); }

  [[nodiscard]] RowRef draw(std::size_t group, CounterRng& rng) const {
    return {group, oracle_sample_index(*data_, group, rng)};
  }

  [[nodiscard]] double loss(const Vector& theta, const RowRef& z) const {
    return loss_from_margin(loss_, margin(theta, z));
  }

  void add_loss_grad(const Vector& theta, const RowRef& z, double scale, Vector& out) const {
    const auto& grp = data_->group(z.group);
    const auto r = static_cast<Eigen::Index>(z.row);
    const double y = grp.labels(r);
    const double slope = loss_slope_from_margin(loss_, y * grp.features.row(r).dot(theta));
    if (slope != 0.0) out.noalias() += (scale * slope * y) * grp.features.row(r).transpose();
  }

  [[nodiscard]] Vector project(Vector theta) const { return project_ball(std::move(theta), radius_); }
  [[nodiscard]] Vector group_losses(const Vector& theta) const { return gdro::group_losses(theta, *data_, loss_); }
  [[nodiscard]] Vector initial_point() const { return Vector::Zero(static_cast<Eigen::Index>(dim())); }

 private:
  [[nodiscard]] double margin(const Vector& theta, const RowRef& z) const {
    const auto& grp = data_->group(z.group);
    const auto r = static_cast<Eigen::Index>(z.row);
    return grp.labels(r) * grp.features.row(r).dot(theta);
  }

  std::shared_ptr<const GroupedDataset> data_;
  LossKind loss_;
  double radius_;
  UncertaintySetSpec spec_;
};

static_assert(StochasticDroProblem<LinearDroProblem>);

}  // namespace gdro

#endif
