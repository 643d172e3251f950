#include "cdhmm/assignment.hpp"

#include <limits>

#include "cdhmm/errors.hpp"

namespace cdhmm {

Assignment solve_assignment(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  const auto m = static_cast<std::size_t>(cost.cols());
  if (n > m) throw ValidationError("solve_assignment: more rows than columns");
  if (!cost.allFinite()) throw ValidationError("solve_assignment: non-finite cost");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based shortest augmenting path formulation; column 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);

  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) -
                           u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  out.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (match[j] != 0) out.row_to_col[match[j] - 1] = j - 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.cost += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out.row_to_col[i]));
  }
  return out;
}

Assignment assign_zones(const std::vector<Vec2>& defender_positions, const std::vector<Vec2>& zone_means,
                        ZoneDistance metric) {
  if (defender_positions.size() != zone_means.size()) {
    throw ValidationError("assign_zones: " + std::to_string(defender_positions.size()) +
                          " defenders but " + std::to_string(zone_means.size()) + " zones");
  }
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(defender_positions.size()),
                       static_cast<Eigen::Index>(zone_means.size()));
  for (std::size_t j = 0; j < defender_positions.size(); ++j) {
    for (std::size_t z = 0; z < zone_means.size(); ++z) {
      const Vec2 d = defender_positions[j] - zone_means[z];
      cost(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(z)) =
          metric == ZoneDistance::Euclidean ? d.norm() : d.cwiseAbs().sum();
    }
  }
  return solve_assignment(cost);
}

}  // namespace cdhmm
