#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cdhmm/assignment.hpp"
#include "cdhmm/model.hpp"
#include "cdhmm/q_function.hpp"
#include "cdhmm/sufficient_stats.hpp"
#include "cdhmm/tracking_data.hpp"

namespace cdhmm::train {

struct EmConfig {
  std::size_t iterations = 15;
  std::size_t batch_size = 10;
  Penalties penalties;
  std::size_t inner_max_iterations = 100;
  std::uint64_t seed = 0;
  /// Early stop when |LL_i - LL_{i-1}| < tolerance. 0 disables it.
  double tolerance = 0.0;

  /// Weight each track's zone statistics by 1 / L_pj.
  bool inverse_likelihood_weights = true;
  /// Estimate zone means from every frame instead of t = 0 only.
  bool zone_means_all_frames = false;
  ZoneDistance zone_metric = ZoneDistance::Euclidean;

  std::size_t neighbour_hops = 1;
  double gamma_o_min = 0.0;
  double gamma_o_max = 1.2;
  double pi_ridge = 1e-3;
  double beta_bound = 50.0;

  void validate() const;
};

/// Random starting point with `zones` zonal Gaussians. The standardiser is left
/// empty; see fit_standardizer.
hmm::CdhmmParams initialize(std::uint64_t seed, std::size_t attackers, std::size_t zones, const EmConfig& config,
                            const PitchGeometry& pitch = {});

/// Pair statistics from every (t, j, k) of `ds`; zonal statistics from every
/// (t, j) against the zones assigned under `params`.
features::StandardizationStats fit_standardizer(const data::Dataset& ds, const hmm::CdhmmParams& params,
                                                ZoneDistance metric = ZoneDistance::Euclidean);

/// Forward-backward over every (sequence, defender) and accumulation of the statistics.
SufficientStats e_step(const hmm::CdhmmParams& params, const data::Dataset& ds,
                       ZoneDistance metric = ZoneDistance::Euclidean);

/// Sum of -lambda/2 |beta|^2 over the three blocks.
double beta_penalty(const hmm::TransitionWeights& beta, const Penalties& penalties);

/// Zone-z part of the expected complete-data objective: zonal emission term plus
/// the zonal-continuation transitions of defenders assigned to z.
double zone_objective(const hmm::ZonalGaussian& zone, std::size_t z, const SufficientStats& stats,
                      const hmm::CdhmmParams& params);

/// Bin-l emission part of the expected complete-data objective.
double bin_objective(const hmm::MarkingBin& bin, const BinAccumulator& acc);

/// Closed-form zone estimates straight from the accumulated moments.
hmm::ZonalGaussian zone_estimate(const ZoneAccumulator& acc, bool all_frame_mean);

/// Recomputes the standardised zonal covariates of every step for `zones`.
void refresh_zonal_covariates(SufficientStats& stats, const std::vector<hmm::ZonalGaussian>& zones,
                              const features::StandardizationStats& standardizer);

/// Each m_step_* returns the number of blocks whose proposal was accepted.
std::size_t m_step_zones(hmm::CdhmmParams& params, SufficientStats& stats, const EmConfig& config);
std::size_t m_step_gamma(hmm::CdhmmParams& params, const SufficientStats& stats, const EmConfig& config);
std::size_t m_step_beta(hmm::CdhmmParams& params, const SufficientStats& stats, const EmConfig& config);
bool m_step_initial(hmm::CdhmmParams& params, const SufficientStats& stats, const EmConfig& config);

struct FitResult {
  hmm::CdhmmParams params;
  /// Observation log-likelihood of the parameters entering each iteration, plus
  /// one final entry for the returned parameters.
  std::vector<double> ll_trace;
  /// ll_trace minus the beta penalty.
  std::vector<double> penalized_trace;
  std::size_t frames = 0;
  std::uint64_t seed = 0;

  double final_loglik() const { return ll_trace.back(); }
};

FitResult em_fit(const data::Dataset& ds, const EmConfig& config, std::uint64_t seed);

struct TrainedModelBundle {
  hmm::CdhmmParams best;
  std::size_t best_index = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> final_loglik;
  std::vector<std::vector<double>> ll_traces;
  std::vector<std::vector<double>> penalized_traces;
  EmConfig config;
};

/// Trains config.batch_size models with seeds config.seed, config.seed + 1, ...
/// and keeps the one with the highest final observation log-likelihood.
TrainedModelBundle batch_train(const data::Dataset& ds, const EmConfig& config);

}  // namespace cdhmm::train
