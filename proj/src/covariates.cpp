#include "cdhmm/covariates.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "cdhmm/errors.hpp"

namespace cdhmm::features {

double convergence(const Vec2& def_pos, const Vec2& def_vel, const Vec2& att_pos, const Vec2& att_vel) {
  const Vec2 dp = att_pos - def_pos;
  return (att_vel - def_vel).dot(dp) / (dp.norm() + kEpsilon);
}

double tangential_relative_velocity(const Vec2& def_pos, const Vec2& def_vel, const Vec2& att_pos,
                                    const Vec2& att_vel) {
  const Vec2 dp = att_pos - def_pos;
  const Vec2 r_hat = dp / (dp.norm() + kEpsilon);
  const Vec2 v_rel = att_vel - def_vel;
  return (v_rel - v_rel.dot(r_hat) * r_hat).norm();
}

double heading_alignment(const Vec2& def_vel, const Vec2& att_vel) {
  return def_vel.dot(att_vel) / (def_vel.norm() * att_vel.norm() + kEpsilon);
}

double mahalanobis(const Vec2& point, const Vec2& mean, const Mat2& cov) {
  const double a = cov(0, 0), b = cov(0, 1), c = cov(1, 0), d = cov(1, 1);
  const double det = a * d - b * c;
  if (!(std::abs(b - c) <= 1e-12 * std::max(1.0, std::abs(b))) || !(a > 0.0) || !(det > 0.0)) {
    throw ValidationError("mahalanobis: covariance is not symmetric positive definite");
  }
  const Vec2 r = point - mean;
  const double q = (d * r.x() * r.x() - 2.0 * b * r.x() * r.y() + a * r.y() * r.y()) / det;
  return std::sqrt(std::max(q, 0.0));
}

double velocity_toward(const Vec2& def_pos, const Vec2& def_vel, const Vec2& target) {
  const Vec2 d = target - def_pos;
  return def_vel.dot(d) / (d.norm() + kEpsilon);
}

PairCovariates pair_covariates(const data::PlayerState& def, const data::PlayerState& att,
                               const data::Player& attacker) {
  const double dist = (att.position - def.position).norm();
  return {1.0,
          dist,
          std::min(1.0 / (dist + kEpsilon), kInverseClip),
          tangential_relative_velocity(def.position, def.velocity, att.position, att.velocity),
          heading_alignment(def.velocity, att.velocity),
          convergence(def.position, def.velocity, att.position, att.velocity),
          attacker.height,
          attacker.weight};
}

ZonalCovariates zonal_covariates(const data::PlayerState& def, const data::Player& defender,
                                 const Vec2& zone_mean, const Mat2& zone_cov) {
  const double m = mahalanobis(def.position, zone_mean, zone_cov);
  return {1.0,
          m,
          std::min(1.0 / (m + kEpsilon), kInverseClip),
          velocity_toward(def.position, def.velocity, zone_mean),
          defender.height,
          defender.weight};
}

const FeatureStats& StandardizationStats::of(CovariateKind kind) const {
  switch (kind) {
    case CovariateKind::ManMark: return man;
    case CovariateKind::Zonal: return zonal;
    case CovariateKind::Switch: return switching;
  }
  return man;
}

FeatureStats fit_feature_stats(std::span<const double> samples, std::size_t dim) {
  if (dim < 2 || samples.size() % dim != 0) {
    throw ValidationError("fit_feature_stats: sample buffer does not match dimension");
  }
  const std::size_t n = samples.size() / dim;
  if (n < 2) throw ValidationError("fit_feature_stats: need at least 2 samples per feature");

  FeatureStats stats;
  stats.mean.assign(dim - 1, 0.0);
  stats.stddev.assign(dim - 1, 0.0);
  for (std::size_t f = 1; f < dim; ++f) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += samples[i * dim + f];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = samples[i * dim + f] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double sd = std::sqrt(var);
    // Treat round-off level spread of a constant column as zero variance.
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      spdlog::warn("covariate feature {} has zero variance; it will be mapped to 0", f);
      sd = 0.0;
    }
    stats.mean[f - 1] = mean;
    stats.stddev[f - 1] = sd;
  }
  return stats;
}

void apply_standardizer(std::span<double> values, const FeatureStats& stats) {
  for (std::size_t f = 1; f < values.size(); ++f) {
    const double sd = stats.stddev[f - 1];
    values[f] = sd > 0.0 ? (values[f] - stats.mean[f - 1]) / sd : 0.0;
  }
}

FeatureStats identity_stats(std::size_t dim) {
  return {std::vector<double>(dim - 1, 0.0), std::vector<double>(dim - 1, 1.0)};
}

}  // namespace cdhmm::features
