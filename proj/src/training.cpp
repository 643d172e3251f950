#include "cdhmm/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/LU>
#include <spdlog/spdlog.h>

#include "cdhmm/bounded_lbfgs.hpp"
#include "cdhmm/errors.hpp"
#include "cdhmm/inference.hpp"

namespace cdhmm::train {

using hmm::CdhmmParams;
using hmm::ZonalGaussian;

namespace {

constexpr double kMinMass = 1e-10;

features::ZonalCovariates step_zonal(const TransitionStep& s, const ZonalGaussian& zone,
                                     const features::StandardizationStats& stats) {
  data::PlayerState state{s.def_pos, s.def_vel};
  data::Player player;
  player.height = s.height;
  player.weight = s.weight;
  auto x = features::zonal_covariates(state, player, zone.mean, zone.cov);
  features::apply_standardizer(x, stats.zonal);
  return x;
}

double sigmoid_dot(const features::ZonalCovariates& x, const hmm::ZonalWeights& w) {
  double b = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) b += x[i] * w[static_cast<Eigen::Index>(i)];
  return b;
}

double initial_objective(const std::vector<double>& counts, const std::vector<double>& pi) {
  double q = 0.0;
  for (std::size_t n = 0; n < counts.size(); ++n) {
    if (counts[n] == 0.0) continue;
    if (pi[n] <= 0.0) return -std::numeric_limits<double>::infinity();
    q += counts[n] * std::log(pi[n]);
  }
  return q;
}

hmm::MarkingBin fit_bin(const BinAccumulator& acc, const hmm::MarkingBin& old, const EmConfig& cfg) {
  if (acc.w <= kMinMass || acc.sxx <= kMinMass) return old;
  hmm::MarkingBin b;
  b.gamma_o = std::clamp(acc.sxy / acc.sxx, cfg.gamma_o_min, cfg.gamma_o_max);
  const double rss = acc.syy - 2.0 * b.gamma_o * acc.sxy + b.gamma_o * b.gamma_o * acc.sxx;
  b.sigma2 = std::max(hmm::kVarianceFloor, rss / (2.0 * acc.w));
  return b;
}

template <class Vec>
Eigen::VectorXd to_dynamic(const Vec& v) {
  return Eigen::VectorXd(v);
}

// Minimises -q over one weight block inside the box; keeps `beta` unless the
// optimum does not decrease the block objective.
template <class Vec, class QFn>
bool optimise_block(Vec& beta, QFn q_fn, const EmConfig& cfg, const char* name) {
  const auto n = beta.size();
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -cfg.beta_bound);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, cfg.beta_bound);
  const double q_old = q_fn(beta, nullptr);
  optim::Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    Vec b = x;
    Vec g;
    const double q = q_fn(b, &g);
    grad = -to_dynamic(g);
    return -q;
  };
  optim::BoundedLbfgsOptions opt;
  opt.max_iterations = cfg.inner_max_iterations;
  optim::BoundedLbfgsResult res;
  try {
    res = optim::minimize_bounded(f, to_dynamic(beta), lo, hi, opt);
  } catch (const std::exception& e) {
    spdlog::warn("beta_{} optimiser failed ({}); keeping previous weights", name, e.what());
    return false;
  }
  const Vec candidate = res.x;
  const double q_new = q_fn(candidate, nullptr);
  if (!(q_new >= q_old) || !candidate.allFinite()) {
    if (!(q_new >= q_old - 1e-10)) {
      spdlog::debug("beta_{} update rejected ({} < {}): {}", name, q_new, q_old, res.message);
    }
    return false;
  }
  beta = candidate;
  return true;
}

}  // namespace

void EmConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (penalties.man < 0.0 || penalties.zonal < 0.0 || penalties.switching < 0.0) {
    throw ValidationError("penalties must be non-negative");
  }
  if (tolerance < 0.0) throw ValidationError("tolerance must be non-negative");
  if (gamma_o_min > gamma_o_max) throw ValidationError("gamma_o bounds are inverted");
  if (pi_ridge < 0.0) throw ValidationError("pi_ridge must be non-negative");
  if (!(beta_bound > 0.0)) throw ValidationError("beta_bound must be positive");
}

CdhmmParams initialize(std::uint64_t seed, std::size_t attackers, std::size_t zones, const EmConfig& config,
                       const PitchGeometry& pitch) {
  config.validate();
  if (attackers < 2) throw ValidationError("initialize: need at least 2 attackers");
  if (zones < 1) throw ValidationError("initialize: need at least 1 zone");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> along(-pitch.six_yard_half_width, pitch.six_yard_half_width);
  std::uniform_real_distribution<double> across(pitch.six_yard_line_x - 5.0, pitch.six_yard_line_x + 5.0);
  std::normal_distribution<double> weight(0.0, 0.1);

  CdhmmParams p;
  p.states.attackers = attackers;
  p.zones.resize(zones);
  for (auto& z : p.zones) {
    const double y = along(rng);
    const double x = across(rng);
    z.mean = Vec2(x, y);
    z.cov = 2.0 * Mat2::Identity();
  }
  for (Eigen::Index i = 0; i < p.beta.man.size(); ++i) p.beta.man[i] = weight(rng);
  for (Eigen::Index i = 0; i < p.beta.zonal.size(); ++i) p.beta.zonal[i] = weight(rng);
  for (Eigen::Index i = 0; i < p.beta.switching.size(); ++i) p.beta.switching[i] = weight(rng);
  p.grid = hmm::MarkingBinGrid::penalty_area(pitch, hmm::MarkingBin{0.8, 1.0});
  p.initial.assign(p.states.size(), 1.0 / static_cast<double>(p.states.size()));
  p.goal_center = pitch.goal_center();
  p.standardizer.man = features::identity_stats(features::kPairDim);
  p.standardizer.switching = features::identity_stats(features::kPairDim);
  p.standardizer.zonal = features::identity_stats(features::kZonalDim);
  return p;
}

features::StandardizationStats fit_standardizer(const data::Dataset& ds, const CdhmmParams& params,
                                                ZoneDistance metric) {
  std::vector<double> pair;
  std::vector<double> zonal;
  for (const auto& seq : ds.sequences()) {
    hmm::check_compatible(params, seq);
    hmm::append_raw_pair_covariates(seq, pair);
    const auto assignment = hmm::sequence_zones(params, seq, metric);
    const auto defs = seq.defenders();
    for (const auto& frame : seq.frames) {
      for (std::size_t j = 0; j < defs.size(); ++j) {
        const auto& z = params.zones[assignment.row_to_col[j]];
        const auto x = features::zonal_covariates(frame.players[defs[j]], seq.roster[defs[j]], z.mean, z.cov);
        zonal.insert(zonal.end(), x.begin(), x.end());
      }
    }
  }
  features::StandardizationStats s;
  s.man = features::fit_feature_stats(pair, features::kPairDim);
  s.switching = s.man;
  s.zonal = features::fit_feature_stats(zonal, features::kZonalDim);
  return s;
}

SufficientStats e_step(const CdhmmParams& params, const data::Dataset& ds, ZoneDistance metric) {
  const std::size_t K = params.states.attackers;
  const auto Kz = static_cast<Eigen::Index>(K);
  SufficientStats stats(params.zones.size(), params.grid.size(), params.states.size());
  for (const auto& seq : ds.sequences()) {
    hmm::check_compatible(params, seq);
    const auto zones = hmm::sequence_zones(params, seq, metric);
    const hmm::SequenceCovariates cov(seq, params.standardizer);
    const auto defs = seq.defenders();
    const auto atts = seq.attackers();
    const std::size_t T = seq.frames.size();
    stats.frames += T;

    // Attacker bins and regressors are shared by every defender of the frame.
    std::vector<std::size_t> bin(T * K);
    std::vector<Vec2> rel_att(T * K);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        const Vec2& O = seq.frames[t].players[atts[k]].position;
        bin[t * K + k] = params.grid.locate(O);
        rel_att[t * K + k] = O - params.goal_center;
      }
    }

    for (std::size_t j = 0; j < defs.size(); ++j) {
      const std::size_t z = zones.row_to_col[j];
      const auto track = hmm::build_track(params, seq, cov, j, z);
      hmm::PosteriorSummary post;
      try {
        post = hmm::forward_backward(track);
      } catch (const NumericalError& e) {
        throw NumericalError(seq.sequence_id + ", defender " + seq.roster[defs[j]].id + ": " + e.what());
      }
      stats.loglik += post.loglik;
      ++stats.tracks;

      ZoneAccumulator track_zone;
      for (std::size_t t = 0; t < T; ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        const auto& ps = seq.frames[t].players[defs[j]];
        track_zone.add(ps.position, post.gamma(ti, Kz), t == 0);
        const Vec2 rel_def = ps.position - params.goal_center;
        for (std::size_t k = 0; k < K; ++k) {
          const double g = post.gamma(ti, static_cast<Eigen::Index>(k));
          if (g > 0.0) stats.bins[bin[t * K + k]].add(rel_att[t * K + k], rel_def, g);
        }
      }
      stats.zones[z] += track_zone;
      stats.zones_inverse_lik[z].add(track_zone, -post.loglik);
      for (std::size_t n = 0; n < params.states.size(); ++n) {
        stats.initial[n] += post.gamma(0, static_cast<Eigen::Index>(n));
      }

      for (std::size_t t = 0; t + 1 < T; ++t) {
        const auto& ps = seq.frames[t].players[defs[j]];
        const auto zonal = hmm::standardized_zonal(seq, t, j, params.zones[z], params.standardizer);
        auto& step = stats.add_step(cov.man(t, j), cov.switching(t, j), zonal, post.xi[t]);
        step.zone = static_cast<std::uint32_t>(z);
        step.def_pos = ps.position;
        step.def_vel = ps.velocity;
        step.height = seq.roster[defs[j]].height;
        step.weight = seq.roster[defs[j]].weight;
      }
    }
  }
  return stats;
}

double beta_penalty(const hmm::TransitionWeights& beta, const Penalties& p) {
  return -0.5 * (p.man * beta.man.squaredNorm() + p.zonal * beta.zonal.squaredNorm() +
                 p.switching * beta.switching.squaredNorm());
}

double zone_objective(const ZonalGaussian& zone, std::size_t z, const SufficientStats& stats,
                      const CdhmmParams& params) {
  const ZoneAccumulator& a = stats.zones.at(z);
  double q = 0.0;
  if (a.w > 0.0) {
    const Mat2 inv = zone.cov.inverse();
    const Vec2& m = zone.mean;
    const Mat2 scatter = a.s2 - a.s1 * m.transpose() - m * a.s1.transpose() + a.w * m * m.transpose();
    q = -a.w * (std::log(2.0 * std::numbers::pi) + 0.5 * std::log(zone.cov.determinant())) -
        0.5 * (inv * scatter).trace();
  }
  for (const auto& s : stats.steps) {
    if (s.zone != z || (s.zonal_stay == 0.0 && s.zonal_leave == 0.0)) continue;
    const double b = sigmoid_dot(step_zonal(s, zone, params.standardizer), params.beta.zonal);
    q += s.zonal_stay * hmm::log_sigmoid(b) + s.zonal_leave * hmm::log_sigmoid(-b);
  }
  return q;
}

double bin_objective(const hmm::MarkingBin& bin, const BinAccumulator& acc) {
  if (acc.w <= 0.0) return 0.0;
  const double rss = acc.syy - 2.0 * bin.gamma_o * acc.sxy + bin.gamma_o * bin.gamma_o * acc.sxx;
  return -acc.w * std::log(2.0 * std::numbers::pi * bin.sigma2) - rss / (2.0 * bin.sigma2);
}

ZonalGaussian zone_estimate(const ZoneAccumulator& a, bool all_frame_mean) {
  ZonalGaussian z;
  z.mean = all_frame_mean ? Vec2(a.s1 / a.w) : Vec2(a.s1_0 / a.w0);
  const Vec2& m = z.mean;
  Mat2 cov = (a.s2 - a.s1 * m.transpose() - m * a.s1.transpose() + a.w * m * m.transpose()) / a.w;
  cov = 0.5 * (cov + cov.transpose());
  z.cov = hmm::floor_eigenvalues(cov);
  return z;
}

void refresh_zonal_covariates(SufficientStats& stats, const std::vector<ZonalGaussian>& zones,
                              const features::StandardizationStats& standardizer) {
  for (auto& s : stats.steps) s.zonal = step_zonal(s, zones.at(s.zone), standardizer);
}

std::size_t m_step_zones(CdhmmParams& params, SufficientStats& stats, const EmConfig& cfg) {
  std::size_t accepted = 0;
  for (std::size_t z = 0; z < params.zones.size(); ++z) {
    const ZoneAccumulator& plain = stats.zones[z];
    const ZoneAccumulator& weighted = cfg.inverse_likelihood_weights ? stats.zones_inverse_lik[z].acc : plain;
    const double mass = cfg.zone_means_all_frames ? weighted.w : weighted.w0;
    if (!(mass > kMinMass * std::max(1.0, weighted.w))) {
      spdlog::warn("zone {} has no occupancy mass; keeping it unchanged", z);
      continue;
    }
    const double q_old = zone_objective(params.zones[z], z, stats, params);
    ZonalGaussian proposal = zone_estimate(weighted, cfg.zone_means_all_frames);
    double q_new = zone_objective(proposal, z, stats, params);
    if (!(q_new >= q_old)) {
      // Fall back to the maximiser of the emission term alone.
      proposal = zone_estimate(plain, true);
      q_new = zone_objective(proposal, z, stats, params);
    }
    if (q_new >= q_old && proposal.mean.allFinite() && proposal.cov.allFinite()) {
      params.zones[z] = proposal;
      ++accepted;
    } else {
      spdlog::debug("zone {} update rejected", z);
    }
  }
  refresh_zonal_covariates(stats, params.zones, params.standardizer);
  return accepted;
}

std::size_t m_step_gamma(CdhmmParams& params, const SufficientStats& stats, const EmConfig& cfg) {
  auto& grid = params.grid;
  std::vector<hmm::MarkingBin> next = grid.cells();
  std::size_t accepted = 0;
  for (std::size_t l = 0; l < grid.size(); ++l) {
    BinAccumulator pooled;
    for (std::size_t n : grid.neighbours(l, cfg.neighbour_hops)) pooled += stats.bins[n];
    const BinAccumulator& own = stats.bins[l];
    const hmm::MarkingBin& old = grid[l];
    const double q_old = bin_objective(old, own);
    hmm::MarkingBin proposal = fit_bin(pooled, old, cfg);
    if (!(bin_objective(proposal, own) >= q_old)) proposal = fit_bin(own, old, cfg);
    if (bin_objective(proposal, own) >= q_old && !(proposal == old)) {
      next[l] = proposal;
      ++accepted;
    }
  }
  grid.cells() = std::move(next);
  return accepted;
}

std::size_t m_step_beta(CdhmmParams& params, const SufficientStats& stats, const EmConfig& cfg) {
  const auto& p = cfg.penalties;
  std::size_t accepted = 0;
  accepted += optimise_block(
      params.beta.man,
      [&](const hmm::PairWeights& b, hmm::PairWeights* g) { return q_man(b, stats, p.man, g); }, cfg, "m");
  accepted += optimise_block(
      params.beta.zonal,
      [&](const hmm::ZonalWeights& b, hmm::ZonalWeights* g) { return q_zonal(b, stats, p.zonal, g); }, cfg,
      "z");
  accepted += optimise_block(
      params.beta.switching,
      [&](const hmm::PairWeights& b, hmm::PairWeights* g) { return q_switch(b, stats, p.switching, g); }, cfg,
      "s");
  return accepted;
}

bool m_step_initial(CdhmmParams& params, const SufficientStats& stats, const EmConfig& cfg) {
  const std::size_t N = params.states.size();
  double total = 0.0;
  for (double c : stats.initial) total += c;
  if (!(total > 0.0)) return false;
  std::vector<double> pi(N);
  const double denom = total + static_cast<double>(N) * cfg.pi_ridge;
  for (std::size_t n = 0; n < N; ++n) pi[n] = (stats.initial[n] + cfg.pi_ridge) / denom;
  if (!(initial_objective(stats.initial, pi) >= initial_objective(stats.initial, params.initial))) return false;
  params.initial = std::move(pi);
  return true;
}

namespace {

void m_step(CdhmmParams& params, SufficientStats& stats, const EmConfig& cfg, bool update_zones) {
  if (update_zones) m_step_zones(params, stats, cfg);
  m_step_beta(params, stats, cfg);
  m_step_initial(params, stats, cfg);
  m_step_gamma(params, stats, cfg);
}

}  // namespace

FitResult em_fit(const data::Dataset& ds, const EmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (ds.empty()) throw ValidationError("em_fit: empty dataset");
  const auto& first = ds[0];
  const std::size_t K = first.attackers().size();
  const std::size_t J = first.defenders().size();
  for (const auto& seq : ds.sequences()) {
    if (seq.attackers().size() != K || seq.defenders().size() != J) {
      throw ValidationError("em_fit: sequence " + seq.sequence_id + " has a different player count");
    }
    if (seq.defending_team_id != first.defending_team_id || seq.delivery_type != first.delivery_type) {
      throw ValidationError("em_fit: dataset mixes teams or delivery types");
    }
  }

  FitResult out;
  out.seed = seed;
  CdhmmParams& params = out.params;
  params = initialize(seed, K, J, cfg);
  params.team_id = first.defending_team_id;
  params.delivery_type = first.delivery_type;
  params.standardizer = fit_standardizer(ds, params, cfg.zone_metric);

  auto record = [&](const SufficientStats& s) {
    out.ll_trace.push_back(s.loglik);
    out.penalized_trace.push_back(s.loglik + beta_penalty(params.beta, cfg.penalties));
  };
  SufficientStats stats = e_step(params, ds, cfg.zone_metric);
  out.frames = stats.frames;
  record(stats);

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const CdhmmParams previous = params;
    m_step(params, stats, cfg, true);
    SufficientStats next = e_step(params, ds, cfg.zone_metric);
    const double before = out.penalized_trace.back();
    const double after = next.loglik + beta_penalty(params.beta, cfg.penalties);
    if (after < before && params.zones != previous.zones) {
      // New zone means can change the t = 0 assignment, which the expected
      // complete-data objective does not see. Redo the step with zones held.
      spdlog::debug("iteration {}: zone reassignment lowered the objective ({} -> {}); holding zones", it + 1,
                    before, after);
      params = previous;
      refresh_zonal_covariates(stats, params.zones, params.standardizer);
      m_step(params, stats, cfg, false);
      next = e_step(params, ds, cfg.zone_metric);
    }
    stats = std::move(next);
    record(stats);
    spdlog::debug("seed {} iteration {}: loglik {:.6f}", seed, it + 1, stats.loglik);
    if (cfg.tolerance > 0.0) {
      const auto n = out.ll_trace.size();
      if (std::abs(out.ll_trace[n - 1] - out.ll_trace[n - 2]) < cfg.tolerance) break;
    }
  }
  return out;
}

TrainedModelBundle batch_train(const data::Dataset& ds, const EmConfig& cfg) {
  cfg.validate();
  TrainedModelBundle bundle;
  bundle.config = cfg;
  bool any = false;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    const std::uint64_t seed = cfg.seed + b;
    bundle.seeds.push_back(seed);
    try {
      FitResult fit = em_fit(ds, cfg, seed);
      const double ll = fit.final_loglik();
      spdlog::info("seed {}: final loglik {:.6f}", seed, ll);
      bundle.final_loglik.push_back(ll);
      bundle.ll_traces.push_back(fit.ll_trace);
      bundle.penalized_traces.push_back(fit.penalized_trace);
      if (!any || ll > best) {
        best = ll;
        bundle.best = std::move(fit.params);
        bundle.best_index = b;
        any = true;
      }
    } catch (const NumericalError& e) {
      spdlog::warn("seed {} failed: {}", seed, e.what());
      bundle.final_loglik.push_back(std::numeric_limits<double>::quiet_NaN());
      bundle.ll_traces.emplace_back();
      bundle.penalized_traces.emplace_back();
    }
  }
  if (!any) throw Error("batch_train: every seed failed");
  return bundle;
}

}  // namespace cdhmm::train
