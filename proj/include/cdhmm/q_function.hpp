#pragma once

#include "cdhmm/model.hpp"
#include "cdhmm/sufficient_stats.hpp"

namespace cdhmm::train {

struct Penalties {
  double man = 100.0;
  double zonal = 100.0;
  double switching = 1000.0;
};

// Expected complete-data log-likelihood of the transition model, split by weight
// vector. Each block includes its own -lambda/2 |beta|^2 penalty. Summed, the
// three blocks equal the full transition Q:
//   sum_t sum_i xi(i,i) log p_m + sum_{l != i} xi(i,l) log[(1 - p_m) softmax_{l' != i}(l)]
//       + xi(N,N) log p_z + sum_i xi(N,i) log[(1 - p_z) softmax(i)]
//   - (lambda_m |beta_m|^2 + lambda_z |beta_z|^2 + lambda_s |beta_s|^2) / 2.
// Gradients use sum_l xi(i,l) = gamma_i for the man-marking rows.

double q_man(const hmm::PairWeights& beta, const SufficientStats& stats, double lambda,
             hmm::PairWeights* gradient = nullptr);

double q_zonal(const hmm::ZonalWeights& beta, const SufficientStats& stats, double lambda,
               hmm::ZonalWeights* gradient = nullptr);

/// Zonal block restricted to steps whose defender is assigned `zone`, without penalty.
double q_zonal_for_zone(const hmm::ZonalWeights& beta, const SufficientStats& stats, std::uint32_t zone);

double q_switch(const hmm::PairWeights& beta, const SufficientStats& stats, double lambda,
                hmm::PairWeights* gradient = nullptr);

double q_transition(const hmm::TransitionWeights& beta, const SufficientStats& stats, const Penalties& penalties);

hmm::TransitionWeights q_gradients(const hmm::TransitionWeights& beta, const SufficientStats& stats,
                                   const Penalties& penalties);

}  // namespace cdhmm::train
