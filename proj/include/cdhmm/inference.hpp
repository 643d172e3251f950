#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cdhmm/assignment.hpp"
#include "cdhmm/covariates.hpp"
#include "cdhmm/model.hpp"
#include "cdhmm/tracking_data.hpp"

namespace cdhmm::hmm {

double log_sigmoid(double a);

/// Standardised pair covariates of one sequence, laid out [t][defender][attacker][feature].
/// Defender and attacker indices are positions within CornerSequence::defenders()
/// and attackers(). Switching covariates are the same features as man-marking
/// ones; a separate table is kept only if their standardisers differ.
class SequenceCovariates {
 public:
  SequenceCovariates(const data::CornerSequence& seq, const features::StandardizationStats& stats);

  std::span<const double> man(std::size_t t, std::size_t j) const;
  std::span<const double> switching(std::size_t t, std::size_t j) const;

  std::size_t frames() const { return frames_; }
  std::size_t defenders() const { return defenders_; }
  std::size_t attackers() const { return attackers_; }

 private:
  std::size_t frames_ = 0, defenders_ = 0, attackers_ = 0;
  std::vector<double> man_;
  std::vector<double> switch_;
};

/// Raw (unstandardised) pair covariates for every (t, j, k) of a sequence,
/// appended row-major to `out`.
void append_raw_pair_covariates(const data::CornerSequence& seq, std::vector<double>& out);

/// Standardised zonal covariates of modelled defender j at frame t against `zone`.
features::ZonalCovariates standardized_zonal(const data::CornerSequence& seq, std::size_t t, std::size_t j,
                                             const ZonalGaussian& zone,
                                             const features::StandardizationStats& stats);

/// Log of the N x N transition matrix from frame t-1 to t, given covariates at t-1.
/// Man-marking -> zonal entries are -inf.
Eigen::MatrixXd log_transition_matrix(const TransitionWeights& beta, std::span<const double> man,
                                      std::span<const double> switching, std::span<const double> zonal,
                                      std::size_t attackers);

/// Row-stochastic transition matrix (exp of log_transition_matrix).
Eigen::MatrixXd transition_matrix(const TransitionWeights& beta, std::span<const double> man,
                                  std::span<const double> switching, std::span<const double> zonal,
                                  std::size_t attackers);

/// Isotropic 2D Gaussian log-density log N(x; mean, sigma2 I).
double isotropic_logpdf(const Vec2& x, const Vec2& mean, double sigma2);
/// Full 2D Gaussian log-density.
double gaussian_logpdf(const Vec2& x, const Vec2& mean, const Mat2& cov);

/// Emission mean of a defender marking an attacker at `attacker_pos`.
Vec2 marking_mean(const MarkingBin& bin, const Vec2& attacker_pos, const Vec2& goal);

/// log p(D_{t,j} | s_t = state). `zone` is the zone assigned to defender j.
double emission_loglik(const CdhmmParams& params, const data::CornerSequence& seq, std::size_t t,
                       std::size_t j, std::size_t state, std::size_t zone);

/// Everything forward-backward needs for one defender track, in log space.
struct TrackModel {
  Eigen::VectorXd log_initial;                    // N
  Eigen::MatrixXd log_emission;                   // T x N
  std::vector<Eigen::MatrixXd> log_transition;    // T-1 entries; [t] maps frame t -> t+1

  std::size_t frames() const { return static_cast<std::size_t>(log_emission.rows()); }
  std::size_t states() const { return static_cast<std::size_t>(log_emission.cols()); }
};

TrackModel build_track(const CdhmmParams& params, const data::CornerSequence& seq,
                       const SequenceCovariates& covariates, std::size_t j, std::size_t zone);

struct PosteriorSummary {
  Eigen::MatrixXd gamma;              // T x N smoothed occupancies
  std::vector<Eigen::MatrixXd> xi;    // T-1 entries, N x N
  Eigen::MatrixXd filtered;           // T x N forward-only occupancies
  std::vector<std::size_t> path;      // Viterbi path (filled by decode helpers)
  double loglik = 0.0;
};

enum class ForwardBackwardMethod { LogSpace, Scaled };

/// Exact smoothed posteriors for a time-inhomogeneous HMM.
/// Throws NumericalError naming the frame if every state has zero probability.
PosteriorSummary forward_backward(const TrackModel& track,
                                  ForwardBackwardMethod method = ForwardBackwardMethod::LogSpace);

struct ViterbiResult {
  std::vector<std::size_t> path;
  double log_prob = 0.0;
};

/// Most probable path; ties go to the lower state index.
ViterbiResult viterbi(const TrackModel& track);

struct DefenderDecoding {
  std::size_t roster_index = 0;
  std::size_t zone = 0;
  PosteriorSummary posterior;
  double viterbi_log_prob = 0.0;
};

struct SequenceDecoding {
  Assignment zones;
  std::vector<DefenderDecoding> defenders;
  double loglik = 0.0;
};

struct DecodeOptions {
  bool viterbi = true;
  ZoneDistance zone_metric = ZoneDistance::Euclidean;
  ForwardBackwardMethod method = ForwardBackwardMethod::LogSpace;
};

/// Zone assignment from t = 0 positions.
Assignment sequence_zones(const CdhmmParams& params, const data::CornerSequence& seq,
                          ZoneDistance metric = ZoneDistance::Euclidean);

/// Forward-backward (and optionally Viterbi) for every modelled defender of `seq`.
SequenceDecoding decode_sequence(const CdhmmParams& params, const data::CornerSequence& seq,
                                 const DecodeOptions& options = {});

/// Sum over defenders of per-defender log-likelihoods.
double sequence_loglik(const CdhmmParams& params, const data::CornerSequence& seq,
                       ZoneDistance metric = ZoneDistance::Euclidean);

/// Throws ValidationError when `seq` cannot be scored by `params`.
void check_compatible(const CdhmmParams& params, const data::CornerSequence& seq);

}  // namespace cdhmm::hmm
