#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "cdhmm/geometry.hpp"

namespace cdhmm {

struct Assignment {
  /// column assigned to each row
  std::vector<std::size_t> row_to_col;
  double cost = 0.0;
};

/// Minimum-cost linear sum assignment (Kuhn-Munkres with potentials, O(n^2 m)).
/// Requires rows <= cols; every row receives a distinct column.
Assignment solve_assignment(const Eigen::MatrixXd& cost);

enum class ZoneDistance { Euclidean, L1 };

/// Assigns each defender (by t = 0 position) to a distinct zone mean. Counts must match.
Assignment assign_zones(const std::vector<Vec2>& defender_positions, const std::vector<Vec2>& zone_means,
                        ZoneDistance metric = ZoneDistance::Euclidean);

}  // namespace cdhmm
