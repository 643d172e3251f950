#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "cdhmm/geometry.hpp"
#include "cdhmm/tracking_data.hpp"

namespace cdhmm::features {

/// Length of the man-marking and switching covariate vectors (bias included).
inline constexpr std::size_t kPairDim = 8;
/// Length of the zonal covariate vector (bias included).
inline constexpr std::size_t kZonalDim = 6;
/// Inverse-distance features are clipped here before standardisation.
inline constexpr double kInverseClip = 1e6;

enum class CovariateKind { ManMark, Zonal, Switch };

using PairCovariates = std::array<double, kPairDim>;
using ZonalCovariates = std::array<double, kZonalDim>;

/// (v_k - v_j) . (p_k - p_j) / (|p_k - p_j| + eps). Negative when closing.
double convergence(const Vec2& def_pos, const Vec2& def_vel, const Vec2& att_pos, const Vec2& att_vel);

/// Magnitude of the relative velocity orthogonal to the defender->attacker line.
double tangential_relative_velocity(const Vec2& def_pos, const Vec2& def_vel, const Vec2& att_pos,
                                    const Vec2& att_vel);

/// Cosine of the angle between the two velocity vectors, eps-guarded.
double heading_alignment(const Vec2& def_vel, const Vec2& att_vel);

/// sqrt((x - mu)^T cov^-1 (x - mu)). Throws ValidationError for a non-SPD covariance.
double mahalanobis(const Vec2& point, const Vec2& mean, const Mat2& cov);

/// Scalar projection of the defender velocity onto the unit vector towards the zone mean.
double velocity_toward(const Vec2& def_pos, const Vec2& def_vel, const Vec2& target);

/// Raw (unstandardised) man-marking covariates for defender at `def` against attacker `att`.
/// The switching covariates are identical feature-for-feature.
PairCovariates pair_covariates(const data::PlayerState& def, const data::PlayerState& att,
                               const data::Player& attacker);

ZonalCovariates zonal_covariates(const data::PlayerState& def, const data::Player& defender,
                                 const Vec2& zone_mean, const Mat2& zone_cov);

/// Per-kind column statistics. Index 0 (the bias) is never standardised, so the
/// arrays hold dim - 1 entries. A zero standard deviation marks a degenerate
/// feature that is mapped to 0.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool operator==(const FeatureStats&) const = default;
};

struct StandardizationStats {
  FeatureStats man;
  FeatureStats zonal;
  FeatureStats switching;

  bool operator==(const StandardizationStats&) const = default;

  const FeatureStats& of(CovariateKind kind) const;
};

/// Population mean/std of each non-bias column of row-major `samples` (dim columns).
FeatureStats fit_feature_stats(std::span<const double> samples, std::size_t dim);

/// Standardises in place. values[0] (bias) is left untouched.
void apply_standardizer(std::span<double> values, const FeatureStats& stats);

/// Identity statistics (mean 0, std 1) for `dim`-length vectors.
FeatureStats identity_stats(std::size_t dim);

}  // namespace cdhmm::features
