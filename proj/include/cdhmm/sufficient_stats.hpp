#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cdhmm/covariates.hpp"
#include "cdhmm/geometry.hpp"

namespace cdhmm::train {

/// Occupancy-weighted moments of defender positions in one zone.
struct ZoneAccumulator {
  double w0 = 0.0;                 // sum of gamma at t = 0
  Vec2 s1_0 = Vec2::Zero();        // sum of gamma * D at t = 0
  double w = 0.0;                  // sum of gamma over all frames
  Vec2 s1 = Vec2::Zero();          // sum of gamma * D
  Mat2 s2 = Mat2::Zero();          // sum of gamma * D D^T

  void add(const Vec2& x, double weight, bool first_frame);
  ZoneAccumulator& operator+=(const ZoneAccumulator& o);
  ZoneAccumulator scaled(double f) const;
};

/// ZoneAccumulator whose true value is exp(log_scale) * acc. Lets 1/L weights
/// with log L in the hundreds accumulate without overflow.
struct ScaledZoneAccumulator {
  double log_scale = -std::numeric_limits<double>::infinity();
  ZoneAccumulator acc;

  void add(const ZoneAccumulator& track, double log_weight);
  ScaledZoneAccumulator& operator+=(const ScaledZoneAccumulator& o);
};

/// Weighted regression sums for the 1D least squares of (D - G) on (O - G).
struct BinAccumulator {
  double w = 0.0;
  double sxx = 0.0;  // sum w |O - G|^2
  double sxy = 0.0;  // sum w (O - G).(D - G)
  double syy = 0.0;  // sum w |D - G|^2

  void add(const Vec2& x, const Vec2& y, double weight);
  BinAccumulator& operator+=(const BinAccumulator& o);
};

/// Posterior transition mass leaving frame t for one defender, compressed to
/// what the transition Q-function needs. Per-attacker aggregates live in
/// SufficientStats::aggregates at agg_offset, in blocks of `attackers`:
/// stay_i = xi(i,i), leave_i = sum_{l != i} xi(i,l),
/// enter_l = sum_{i != l} xi(i,l), from_zonal_l = xi(N,l).
struct TransitionStep {
  std::uint32_t attackers = 0;
  std::size_t man_offset = 0;
  std::size_t switch_offset = 0;
  std::size_t agg_offset = 0;
  double zonal_stay = 0.0;   // xi(N,N)
  double zonal_leave = 0.0;  // sum_l xi(N,l)
  features::ZonalCovariates zonal{};  // standardised, for the current zone parameters
  // Raw inputs to recompute `zonal` when the zone changes.
  std::uint32_t zone = 0;
  Vec2 def_pos = Vec2::Zero();
  Vec2 def_vel = Vec2::Zero();
  double height = 0.0;
  double weight = 0.0;
};

/// E-step output. Every field is additive across sequences.
struct SufficientStats {
  double loglik = 0.0;
  std::size_t frames = 0;
  std::size_t tracks = 0;

  std::vector<ZoneAccumulator> zones;
  std::vector<ScaledZoneAccumulator> zones_inverse_lik;
  std::vector<BinAccumulator> bins;
  std::vector<double> initial;  // sum over tracks of gamma_0

  std::vector<TransitionStep> steps;
  std::vector<double> pair_covariates;
  std::vector<double> aggregates;

  SufficientStats() = default;
  SufficientStats(std::size_t zone_count, std::size_t bin_count, std::size_t states);

  void merge(const SufficientStats& other);

  /// Appends one step from a full N x N xi matrix (N = attackers + 1) and the
  /// standardised covariates at the source frame. `switching` may alias `man`.
  TransitionStep& add_step(std::span<const double> man, std::span<const double> switching,
                           const features::ZonalCovariates& zonal, const Eigen::MatrixXd& xi);

  std::span<const double> man(const TransitionStep& s) const;
  std::span<const double> switching(const TransitionStep& s) const;
  std::span<const double> stay(const TransitionStep& s) const;
  std::span<const double> leave(const TransitionStep& s) const;
  std::span<const double> enter(const TransitionStep& s) const;
  std::span<const double> from_zonal(const TransitionStep& s) const;
};

}  // namespace cdhmm::train
