#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cdhmm/inference.hpp"
#include "cdhmm/model.hpp"
#include "cdhmm/tracking_data.hpp"

namespace cdhmm::ghost {

/// Player positions of one frame, possibly with one player moved.
struct Scene {
  const data::CornerSequence* seq = nullptr;
  std::size_t frame = 0;
  std::vector<Vec2> positions;  // roster order

  static Scene observed(const data::CornerSequence& seq, std::size_t frame);
  Scene with(std::size_t roster_index, const Vec2& position) const;
};

enum class Capability { Reception, Threat, Recovery };
/// Whether the defending side wants the outcome low (reception) or high.
enum class Direction { Minimize, Maximize };

std::string to_string(Capability c);

class OutcomeModel {
 public:
  virtual ~OutcomeModel() = default;
  virtual bool supports(Capability c) const = 0;
  virtual Direction direction() const { return Direction::Minimize; }
  /// Probability in [0, 1] that roster player `player` realises outcome `c` in `scene`.
  /// For Recovery, `player` is a defender receiving the ball.
  virtual double probability(Capability c, const Scene& scene, std::size_t player) const = 0;
};

/// Wraps a callable; for tests and ad-hoc outcome definitions.
class FunctionOutcomeModel : public OutcomeModel {
 public:
  using Fn = std::function<double(Capability, const Scene&, std::size_t)>;
  FunctionOutcomeModel(Fn fn, std::vector<Capability> capabilities, Direction direction = Direction::Minimize);

  bool supports(Capability c) const override;
  Direction direction() const override { return direction_; }
  double probability(Capability c, const Scene& scene, std::size_t player) const override;

 private:
  Fn fn_;
  std::vector<Capability> capabilities_;
  Direction direction_;
};

/// Logistic score over distance to the delivery target, distance to the nearest
/// opponent and distance to goal, normalised over every player into a recipient
/// distribution.
class BaselineReceptionModel : public OutcomeModel {
 public:
  struct Weights {
    double bias = 0.0;
    double target = 0.0;    // per metre to the delivery target
    double opponent = 0.0;  // per metre to the nearest opponent; must be >= 0
    double goal = 0.0;      // per metre to the goal centre
    Vec2 delivery_target = Vec2(-6.0, 0.0);
    std::string calibration;  // free-text provenance of the weights
  };

  /// Uncalibrated: every probability call throws.
  BaselineReceptionModel() = default;
  explicit BaselineReceptionModel(Weights w);

  /// Hand-set weights suitable for synthetic data and examples.
  static BaselineReceptionModel reference();
  static BaselineReceptionModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool calibrated() const { return calibrated_; }
  const Weights& weights() const { return w_; }

  bool supports(Capability c) const override { return c != Capability::Threat; }
  double probability(Capability c, const Scene& scene, std::size_t player) const override;
  /// Recipient distribution over every roster player.
  std::vector<double> distribution(const Scene& scene) const;

 private:
  Weights w_;
  bool calibrated_ = false;
};

enum class OccupancySource { Smoothed, Filtered };

struct GhostConfig {
  std::size_t mc_samples = 512;
  double tau = 0.1;
  double theta = 0.15;
  OccupancySource occupancy = OccupancySource::Smoothed;
  std::uint64_t seed = 0;
  /// Evaluate every frame instead of the delivery frame only.
  bool all_frames = false;

  void validate() const;
};

/// n draws from the marking emission of role k for modelled defender j at frame t.
/// The stream is keyed by (seed, t, j, k).
std::vector<Vec2> sample_ghost(const hmm::CdhmmParams& params, const data::CornerSequence& seq, std::size_t t,
                               std::size_t j, std::size_t k, std::size_t n, std::uint64_t seed);

/// Emission mean of role k at frame t.
Vec2 ghost_mean(const hmm::CdhmmParams& params, const data::CornerSequence& seq, std::size_t t, std::size_t k);

double expected_ghost_value(const std::function<double(const Vec2&)>& f, const std::vector<Vec2>& samples);
double point_ghost_value(const std::function<double(const Vec2&)>& f, const Vec2& mean);

/// sum_{t,k} gamma(t, k) (1 - reception(t, k)). Columns of `gamma` past the
/// reception columns (the zonal state) are ignored.
double obpr(const Eigen::MatrixXd& gamma, const Eigen::MatrixXd& reception);
/// OBPR of one decoded defender with P_r(a_tk) from `model` on the observed frames.
double obpr(const data::CornerSequence& seq, const Eigen::MatrixXd& gamma, const OutcomeModel& model);

/// Softmax over defenders (rows) of occupancy / tau, per attacker (column).
Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& occupancy, double tau);
std::vector<std::size_t> feasible_set(const Eigen::MatrixXd& weights, std::size_t j, double theta);

struct GhostEvaluation {
  std::string sequence_id;
  std::size_t frame = 0;
  std::size_t defender = 0;  // modelled defender index
  std::string defender_id;
  std::vector<std::size_t> feasible;      // attacker indices
  std::vector<double> role_expectations;  // aligned with `feasible`
  double observed = 0.0;
  double optimal = 0.0;
  std::size_t optimal_role = 0;
  double gca = 0.0;
};

/// J x K man-marking occupancies of every modelled defender at frame t.
Eigen::MatrixXd frame_occupancy(const hmm::SequenceDecoding& decoding, std::size_t t, std::size_t attackers,
                                OccupancySource source);

/// nullopt when the feasible set is empty. Throws ValidationError if `model`
/// lacks the reception capability.
std::optional<GhostEvaluation> group_coverage_advantage(const hmm::CdhmmParams& params,
                                                        const data::CornerSequence& seq, std::size_t t,
                                                        std::size_t j, const Eigen::MatrixXd& occupancy,
                                                        const OutcomeModel& model, const GhostConfig& config);

struct DeltaMetrics {
  std::optional<double> reception;
  std::optional<double> recovery;
  std::optional<double> threat;
  std::optional<double> counterattack;
};

/// Counterfactual deltas of defender j against the role-k ghost. Metrics whose
/// capability no model provides are left empty. Throws if no model supports reception.
DeltaMetrics delta_metrics(const hmm::CdhmmParams& params, const data::CornerSequence& seq, std::size_t t,
                           std::size_t j, std::size_t k, const std::vector<const OutcomeModel*>& models,
                           const GhostConfig& config);

/// GCA for every defender with a non-empty feasible set, on the delivery frame
/// or every frame.
std::vector<GhostEvaluation> evaluate_sequence(const hmm::CdhmmParams& params, const data::CornerSequence& seq,
                                               const hmm::SequenceDecoding& decoding, const OutcomeModel& model,
                                               const GhostConfig& config);

struct SweepRow {
  double tau = 0.0;
  double theta = 0.0;
  std::size_t evaluations = 0;
  double mean_feasible = 0.0;
  double mean_gca = 0.0;
};

std::vector<SweepRow> sweep(const hmm::CdhmmParams& params, const std::vector<data::CornerSequence>& seqs,
                            const std::vector<hmm::SequenceDecoding>& decodings, const OutcomeModel& model,
                            GhostConfig config, const std::vector<double>& taus, const std::vector<double>& thetas);

}  // namespace cdhmm::ghost
