#include "cdhmm/sufficient_stats.hpp"

#include <algorithm>
#include <cmath>

#include "cdhmm/errors.hpp"

namespace cdhmm::train {

void ZoneAccumulator::add(const Vec2& x, double weight, bool first_frame) {
  if (first_frame) {
    w0 += weight;
    s1_0 += weight * x;
  }
  w += weight;
  s1 += weight * x;
  s2 += weight * x * x.transpose();
}

ZoneAccumulator& ZoneAccumulator::operator+=(const ZoneAccumulator& o) {
  w0 += o.w0;
  s1_0 += o.s1_0;
  w += o.w;
  s1 += o.s1;
  s2 += o.s2;
  return *this;
}

ZoneAccumulator ZoneAccumulator::scaled(double f) const {
  ZoneAccumulator out;
  out.w0 = w0 * f;
  out.s1_0 = s1_0 * f;
  out.w = w * f;
  out.s1 = s1 * f;
  out.s2 = s2 * f;
  return out;
}

void ScaledZoneAccumulator::add(const ZoneAccumulator& track, double log_weight) {
  ScaledZoneAccumulator single;
  single.log_scale = log_weight;
  single.acc = track;
  *this += single;
}

ScaledZoneAccumulator& ScaledZoneAccumulator::operator+=(const ScaledZoneAccumulator& o) {
  if (!std::isfinite(o.log_scale)) return *this;
  if (!std::isfinite(log_scale)) {
    *this = o;
    return *this;
  }
  const double top = std::max(log_scale, o.log_scale);
  ZoneAccumulator merged = acc.scaled(std::exp(log_scale - top));
  merged += o.acc.scaled(std::exp(o.log_scale - top));
  acc = merged;
  log_scale = top;
  return *this;
}

void BinAccumulator::add(const Vec2& x, const Vec2& y, double weight) {
  w += weight;
  sxx += weight * x.squaredNorm();
  sxy += weight * x.dot(y);
  syy += weight * y.squaredNorm();
}

BinAccumulator& BinAccumulator::operator+=(const BinAccumulator& o) {
  w += o.w;
  sxx += o.sxx;
  sxy += o.sxy;
  syy += o.syy;
  return *this;
}

SufficientStats::SufficientStats(std::size_t zone_count, std::size_t bin_count, std::size_t states)
    : zones(zone_count), zones_inverse_lik(zone_count), bins(bin_count), initial(states, 0.0) {}

void SufficientStats::merge(const SufficientStats& o) {
  if (zones.empty() && bins.empty() && initial.empty()) {
    zones.resize(o.zones.size());
    zones_inverse_lik.resize(o.zones_inverse_lik.size());
    bins.resize(o.bins.size());
    initial.assign(o.initial.size(), 0.0);
  }
  if (o.zones.size() != zones.size() || o.bins.size() != bins.size() || o.initial.size() != initial.size()) {
    throw ValidationError("SufficientStats::merge: incompatible shapes");
  }
  loglik += o.loglik;
  frames += o.frames;
  tracks += o.tracks;
  for (std::size_t z = 0; z < zones.size(); ++z) {
    zones[z] += o.zones[z];
    zones_inverse_lik[z] += o.zones_inverse_lik[z];
  }
  for (std::size_t b = 0; b < bins.size(); ++b) bins[b] += o.bins[b];
  for (std::size_t n = 0; n < initial.size(); ++n) initial[n] += o.initial[n];

  const std::size_t cov_base = pair_covariates.size();
  const std::size_t agg_base = aggregates.size();
  pair_covariates.insert(pair_covariates.end(), o.pair_covariates.begin(), o.pair_covariates.end());
  aggregates.insert(aggregates.end(), o.aggregates.begin(), o.aggregates.end());
  steps.reserve(steps.size() + o.steps.size());
  for (TransitionStep s : o.steps) {
    s.man_offset += cov_base;
    s.switch_offset += cov_base;
    s.agg_offset += agg_base;
    steps.push_back(s);
  }
}

TransitionStep& SufficientStats::add_step(std::span<const double> man, std::span<const double> switching,
                                          const features::ZonalCovariates& zonal, const Eigen::MatrixXd& xi) {
  const auto K = static_cast<std::size_t>(xi.rows()) - 1;
  if (man.size() != K * features::kPairDim || switching.size() != man.size()) {
    throw ValidationError("add_step: covariate block does not match xi");
  }
  TransitionStep s;
  s.attackers = static_cast<std::uint32_t>(K);
  s.man_offset = pair_covariates.size();
  pair_covariates.insert(pair_covariates.end(), man.begin(), man.end());
  if (switching.data() == man.data()) {
    s.switch_offset = s.man_offset;
  } else {
    s.switch_offset = pair_covariates.size();
    pair_covariates.insert(pair_covariates.end(), switching.begin(), switching.end());
  }
  s.agg_offset = aggregates.size();
  aggregates.resize(aggregates.size() + 4 * K, 0.0);
  double* stay = aggregates.data() + s.agg_offset;
  double* leave = stay + K;
  double* enter = leave + K;
  double* from_zonal = enter + K;
  const auto Ni = static_cast<Eigen::Index>(K);
  for (std::size_t i = 0; i < K; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    stay[i] = xi(ii, ii);
    for (std::size_t l = 0; l < K; ++l) {
      if (l == i) continue;
      const double v = xi(ii, static_cast<Eigen::Index>(l));
      leave[i] += v;
      enter[l] += v;
    }
    from_zonal[i] = xi(Ni, ii);
    s.zonal_leave += xi(Ni, ii);
  }
  s.zonal_stay = xi(Ni, Ni);
  s.zonal = zonal;
  steps.push_back(s);
  return steps.back();
}

std::span<const double> SufficientStats::man(const TransitionStep& s) const {
  return {pair_covariates.data() + s.man_offset, s.attackers * features::kPairDim};
}
std::span<const double> SufficientStats::switching(const TransitionStep& s) const {
  return {pair_covariates.data() + s.switch_offset, s.attackers * features::kPairDim};
}
std::span<const double> SufficientStats::stay(const TransitionStep& s) const {
  return {aggregates.data() + s.agg_offset, s.attackers};
}
std::span<const double> SufficientStats::leave(const TransitionStep& s) const {
  return {aggregates.data() + s.agg_offset + s.attackers, s.attackers};
}
std::span<const double> SufficientStats::enter(const TransitionStep& s) const {
  return {aggregates.data() + s.agg_offset + 2 * s.attackers, s.attackers};
}
std::span<const double> SufficientStats::from_zonal(const TransitionStep& s) const {
  return {aggregates.data() + s.agg_offset + 3 * s.attackers, s.attackers};
}

}  // namespace cdhmm::train
