#pragma once

#include <Eigen/Core>

namespace cdhmm {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Frame rate of all tracking data (Hz).
inline constexpr double kFrameRate = 25.0;
inline constexpr double kFrameInterval = 1.0 / kFrameRate;

/// Guard used wherever a distance or speed appears in a denominator.
inline constexpr double kEpsilon = 1e-8;

inline constexpr double kMetresPerYard = 0.9144;

/// Canonical pitch frame.
///
/// Origin at the defending team's penalty spot. The defended goal line is the
/// vertical line x = goal_line_x (to the left of the origin); the pitch
/// interior has x > goal_line_x. Every corner is delivered from the +y
/// touchline.
struct PitchGeometry {
  double goal_line_x = -11.0;
  double six_yard_line_x = -5.5;
  double six_yard_half_width = 9.16;
  double penalty_area_depth = 16.5;
  double penalty_area_half_width = 20.16;
  double penalty_spot_distance = 11.0;
  double pitch_length = 105.0;
  double pitch_width = 68.0;

  Vec2 goal_center() const { return {goal_line_x, 0.0}; }
};

}  // namespace cdhmm
