#ifndef GDRO_TRAJECTORY_HPP
#define GDRO_TRAJECTORY_HPP

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "gdro/problem.hpp"

namespace gdro {

/// State of a run at iteration t: the running average of theta_1..theta_t, its
/// robust objective, and the q-iterate played at round t.
struct Checkpoint {
  std::uint64_t t = 0;
  Vector theta_avg;
  double objective = 0.0;
  double gap = std::numeric_limits<double>::quiet_NaN();
  Vector q;
};

struct Trajectory {
  std::vector<Checkpoint> checkpoints;
  /// Rounds in which the Tsallis factor hit the clip threshold.
  std::size_t clip_events = 0;
  /// Number of rounds whose oracle call went to group i (sums to T).
  std::vector<std::uint64_t> group_queries;
  /// Per-round iterates (theta_t, q_t, i_t), filled only when requested.
  std::vector<Vector> theta_iterates;
  std::vector<Vector> q_iterates;
  std::vector<std::size_t> sampled_groups;

  [[nodiscard]] const Checkpoint& final() const { return checkpoints.back(); }

  /// Fills `gap` as objective - reference_value.
  void apply_reference(double reference_value) {
    for (Checkpoint& c : checkpoints) c.gap = c.objective - reference_value;
  }
};

}  // namespace gdro

#endif
