#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cdhmm/inference.hpp"
#include "cdhmm/model.hpp"
#include "cdhmm/tracking_data.hpp"
#include "cdhmm/training.hpp"

namespace cdhmm::metrics {

/// 18 yards in metres.
inline constexpr double kEvasionRadius = 18.0 * kMetresPerYard;

/// State paths of one sequence, indexed [defender][frame]. Values < K mark
/// attacker k, K is zonal.
using Paths = std::vector<std::vector<std::size_t>>;

Paths viterbi_paths(const hmm::SequenceDecoding& decoding);

/// Mean number of defenders marking attacker k per frame.
double attention(const Paths& paths, std::size_t k);
/// Same with posterior occupancies in place of hard assignments.
double soft_attention(const std::vector<Eigen::MatrixXd>& gammas, std::size_t k);

struct AttentionRecord {
  std::string sequence_id;
  std::string attacker_id;
  std::string team_id;  // defending team w(p)
  double attention = 0.0;
};

std::vector<AttentionRecord> attention_records(const data::CornerSequence& seq, const hmm::SequenceDecoding& decoding,
                                               bool soft = false);

/// Per defending team: mean over its sequences of the mean attention per attacker.
std::map<std::string, double> team_baselines(const std::vector<AttentionRecord>& records);

/// Per attacker id: mean over its sequences of A_k - baseline of that sequence's team.
std::map<std::string, double> context_aware_attention(const std::vector<AttentionRecord>& records);
/// Throws ValidationError if the attacker never appears.
double context_aware_attention(const std::vector<AttentionRecord>& records, const std::string& attacker_id);

/// 1 - min(r, d_goal) / r with r = 18 yd.
double goal_weight(double d_goal);

/// ES for attacker roster index `attacker` of `seq`, given paths of the modelled
/// defenders. nullopt when the attacker is never marked before first contact or
/// the sequence lacks a first-contact annotation.
std::optional<double> evasion_score(const data::CornerSequence& seq, const Paths& paths, std::size_t attacker,
                                    const Vec2& goal = PitchGeometry{}.goal_center());

/// First man-marking target in a path (zonal frames are skipped).
std::optional<std::size_t> initial_assignment(const std::vector<std::size_t>& path, std::size_t attackers);

/// exp of the natural-log entropy of the empirical distribution given by `counts`.
double effective_number(const std::vector<double>& counts);

/// Mean over games of exp(entropy) of the initial-assignment distribution. Each
/// inner vector lists the attacker ids a defender initially marked in one game.
std::optional<double> effective_initial_assignments(const std::vector<std::vector<std::string>>& per_game);

/// Man-to-man target changes divided by T - 1. With `include_zonal_entry`,
/// zonal -> man entries count as well.
double switch_rate(const std::vector<std::size_t>& path, std::size_t attackers, bool include_zonal_entry = false);

struct PlayerProfile {
  std::string player_id;
  std::size_t sequences_observed = 0;
  std::optional<double> context_aware_attention;
  std::optional<double> evasion_score;
  std::optional<double> effective_assignments;
  std::optional<double> switch_rate;
  std::optional<double> first_contact_proximity;
};

struct ProfileOptions {
  std::size_t min_sequences = 20;
  bool soft = false;
  bool include_zonal_entry = false;
};

/// Profiles for every player observed in at least options.min_sequences sequences.
/// `decodings[i]` belongs to `ds[i]`.
std::vector<PlayerProfile> player_profiles(const data::Dataset& ds,
                                           const std::vector<hmm::SequenceDecoding>& decodings,
                                           const ProfileOptions& options = {});

/// Closed-form 2-Wasserstein distance between two 2D Gaussians.
double wasserstein2(const hmm::ZonalGaussian& a, const hmm::ZonalGaussian& b);
/// Symmetric PSD square root through the eigendecomposition (negative eigenvalues floored at 0).
Mat2 sqrtm_psd(const Mat2& m);

/// Minimum total W2 over bijections between the two zone sets.
double zone_disagreement(const std::vector<hmm::ZonalGaussian>& a, const std::vector<hmm::ZonalGaussian>& b);

struct BetaDisagreement {
  double man = 0.0;
  double zonal = 0.0;
  double switching = 0.0;
};
/// Mean pairwise l2 distance per weight block. Needs at least two models.
BetaDisagreement beta_disagreement(const std::vector<hmm::TransitionWeights>& models);

/// Total observation log-likelihood divided by the total frame count.
double normalized_loglik(const hmm::CdhmmParams& params, const data::Dataset& ds);

/// (mean_a - mean_b) / pooled standard deviation.
double cohens_d(const std::vector<double>& a, const std::vector<double>& b);

double median(std::vector<double> v);
/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct SensitivityOptions {
  std::size_t step = 10;
  std::size_t seeds = 10;
  train::EmConfig em;  // em.seed is the first seed
  /// 0 uses every available size.
  std::size_t max_size = 0;
};

struct SensitivityPoint {
  std::size_t size = 0;
  std::vector<double> zone_disagreements;  // every seed pair
  double zone_disagreement_median = 0.0;
  BetaDisagreement beta;
  std::vector<double> normalized_loglik;  // per seed, on its training set
};

/// Sample sizes step, 2 step, ... not exceeding the dataset size.
std::vector<std::size_t> sensitivity_sizes(std::size_t available, std::size_t step, std::size_t max_size = 0);

/// Trains options.seeds models on the first n sequences (file order is
/// chronological) for every size and records their disagreement.
std::vector<SensitivityPoint> sensitivity(const data::Dataset& ds, const SensitivityOptions& options);

}  // namespace cdhmm::metrics
