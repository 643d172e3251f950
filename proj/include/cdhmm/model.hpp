#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cdhmm/covariates.hpp"
#include "cdhmm/geometry.hpp"
#include "cdhmm/tracking_data.hpp"

namespace cdhmm::hmm {

/// Floor applied to zone covariance eigenvalues and to per-bin marking variances (m^2).
inline constexpr double kVarianceFloor = 1e-4;

/// States 0..K-1 mark attacker k; state K is the zonal state.
struct StateSpace {
  std::size_t attackers = 10;

  std::size_t size() const { return attackers + 1; }
  std::size_t zonal() const { return attackers; }
  bool is_marking(std::size_t state) const { return state < attackers; }
  bool operator==(const StateSpace&) const = default;
};

struct ZonalGaussian {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();

  bool operator==(const ZonalGaussian&) const = default;
};

/// Clamps the eigenvalues of a symmetric 2x2 matrix to at least `floor`.
Mat2 floor_eigenvalues(const Mat2& cov, double floor = kVarianceFloor);

/// Marking tightness for one bin. gamma_g is always 1 - gamma_o.
struct MarkingBin {
  double gamma_o = 0.8;
  double sigma2 = 1.0;

  double gamma_g() const { return 1.0 - gamma_o; }
  bool operator==(const MarkingBin&) const = default;
};

/// Fixed 3 m x 3 m bins over the canonical penalty-area region. Positions
/// outside the grid map to the nearest bin.
class MarkingBinGrid {
 public:
  MarkingBinGrid() = default;
  MarkingBinGrid(Vec2 origin, double bin_size, std::size_t nx, std::size_t ny, MarkingBin init = {});

  /// Grid covering x in [goal line, goal line + 30], y in [-21, 21].
  static MarkingBinGrid penalty_area(const PitchGeometry& pitch = {}, MarkingBin init = {});

  std::size_t locate(const Vec2& p) const;
  /// Bins within `hops` (Chebyshev distance) of `bin`, including itself.
  std::vector<std::size_t> neighbours(std::size_t bin, std::size_t hops) const;

  std::size_t size() const { return cells_.size(); }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  const Vec2& origin() const { return origin_; }
  double bin_size() const { return bin_size_; }

  MarkingBin& operator[](std::size_t i) { return cells_[i]; }
  const MarkingBin& operator[](std::size_t i) const { return cells_[i]; }
  std::vector<MarkingBin>& cells() { return cells_; }
  const std::vector<MarkingBin>& cells() const { return cells_; }

  bool operator==(const MarkingBinGrid&) const = default;

 private:
  Vec2 origin_ = Vec2::Zero();
  double bin_size_ = 3.0;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<MarkingBin> cells_;
};

using PairWeights = Eigen::Matrix<double, features::kPairDim, 1>;
using ZonalWeights = Eigen::Matrix<double, features::kZonalDim, 1>;

struct TransitionWeights {
  PairWeights man = PairWeights::Zero();
  ZonalWeights zonal = ZonalWeights::Zero();
  PairWeights switching = PairWeights::Zero();

  bool operator==(const TransitionWeights&) const = default;
};

/// Every learned quantity for one (team, delivery type) model.
struct CdhmmParams {
  std::string team_id;
  data::DeliveryType delivery_type = data::DeliveryType::Inswing;
  StateSpace states;
  std::vector<ZonalGaussian> zones;
  MarkingBinGrid grid;
  TransitionWeights beta;
  std::vector<double> initial;  // length states.size()
  Vec2 goal_center = Vec2(-11.0, 0.0);
  features::StandardizationStats standardizer;

  bool operator==(const CdhmmParams&) const = default;

  /// Throws ValidationError if an invariant is broken.
  void validate() const;
};

}  // namespace cdhmm::hmm
