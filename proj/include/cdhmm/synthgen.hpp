#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cdhmm/inference.hpp"
#include "cdhmm/model.hpp"
#include "cdhmm/tracking_data.hpp"

namespace cdhmm::synth {

struct MotionSpec {
  enum class Kind { OrnsteinUhlenbeck, RandomWalk };
  Kind kind = Kind::OrnsteinUhlenbeck;
  double speed_cap = 9.0;   // m/s
  double reversion = 0.8;   // 1/s, pull of the velocity towards the run target
  double noise = 3.0;       // m/s per sqrt(s)
  // Start positions and run targets are drawn uniformly from this box.
  Vec2 box_min = Vec2(-9.0, -12.0);
  Vec2 box_max = Vec2(4.0, 12.0);
};

struct ScenarioSpec {
  hmm::CdhmmParams truth;
  /// Outfield defenders; must equal truth.zones.size().
  std::size_t defenders = 10;
  std::size_t frames = 75;
  std::size_t delivery_frame = 25;
  MotionSpec motion;
  bool goalkeepers = true;
  /// AR(1) correlation of defender emission noise between frames. 0 gives the
  /// model's own independent emissions.
  double noise_correlation = 0.0;
  std::size_t max_rejections = 100000;

  void validate() const;
};

struct TruthOptions {
  std::size_t attackers = 10;
  double marking_sigma2 = 0.25;
  double zone_variance = 1.0;
  double gamma_o = 0.8;
  double zonal_initial = 0.5;
};

/// Well-separated zones in two rows along the six-yard box, a uniform marking
/// grid and transition weights on the distance features. The standardiser is
/// fixed to typical corner-kick feature scales.
hmm::CdhmmParams truth_params(const TruthOptions& options = {});

struct GeneratedSequence {
  data::CornerSequence sequence;
  std::vector<std::size_t> zones;                 // per modelled defender
  std::vector<std::vector<std::size_t>> states;   // [defender][frame]
  /// Kernel rows used to draw states[j][t + 1], when requested. [defender][t]
  std::vector<std::vector<Eigen::VectorXd>> kernel;
};

/// One sequence from the generative model. Attackers follow the motion spec;
/// each defender's state path is drawn from pi and the covariate-dependent kernel
/// evaluated on the evolving scene, and positions from the state's emission.
/// Frame 0 is redrawn until the Hungarian zone assignment reproduces the zones
/// the zonal defenders were drawn from.
GeneratedSequence generate_sequence(const ScenarioSpec& spec, std::uint64_t seed, std::string sequence_id = {},
                                    bool record_kernel = false);

std::vector<GeneratedSequence> generate_dataset(const ScenarioSpec& spec, std::size_t count, std::uint64_t seed,
                                                const std::string& id_prefix = "syn");

data::Dataset to_dataset(const std::vector<GeneratedSequence>& generated);

/// Sidecar with the latent truth, one JSON object per line.
void write_latents(std::ostream& out, const std::vector<GeneratedSequence>& generated);
void save_latents(const std::filesystem::path& path, const std::vector<GeneratedSequence>& generated);

struct LatentRecord {
  std::string sequence_id;
  std::vector<std::string> defender_ids;
  std::vector<std::size_t> zones;
  std::vector<std::vector<std::size_t>> states;
};
std::vector<LatentRecord> load_latents(const std::filesystem::path& path);

struct EnumeratedPosterior {
  Eigen::MatrixXd gamma;
  std::vector<Eigen::MatrixXd> xi;
  double loglik = 0.0;
  std::vector<std::size_t> best_path;
  double best_log_prob = 0.0;
};

/// Exact posteriors by summing over every state path. Throws ValidationError
/// when N^T exceeds 1024.
EnumeratedPosterior enumerate_posterior(const hmm::TrackModel& track);
EnumeratedPosterior enumerate_posterior(const hmm::CdhmmParams& params, const data::CornerSequence& seq,
                                        std::size_t j);

}  // namespace cdhmm::synth
