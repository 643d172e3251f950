#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdhmm/geometry.hpp"

namespace cdhmm::data {

enum class Team { Attacking, Defending };
enum class DeliveryType { Inswing, Outswing };

/// Which touchline the corner is taken from, in raw coordinates.
enum class CornerSide { PositiveY, NegativeY };

/// Which goal the defending team defends, in raw (centre-spot origin) coordinates.
enum class DefendedGoal { PositiveX, NegativeX };

std::string to_string(DeliveryType d);
DeliveryType delivery_from_string(const std::string& s);
std::string to_string(Team t);

/// Static per-sequence attributes of one player.
struct Player {
  std::string id;
  Team team = Team::Attacking;
  bool goalkeeper = false;
  double height = 1.8;  // m
  double weight = 75.0;  // kg
};

/// Kinematic state of one player in one frame.
struct PlayerState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
};

/// One 25 Hz snapshot. `players` is aligned with CornerSequence::roster.
struct Frame {
  double time = 0.0;
  std::vector<PlayerState> players;
};

struct FirstContact {
  std::size_t frame = 0;
  std::string player_id;
};

struct CornerSequence {
  std::string sequence_id;
  std::string game_id;
  DeliveryType delivery_type = DeliveryType::Inswing;
  std::string defending_team_id;

  bool canonical = true;
  std::optional<CornerSide> corner_side;      // raw sequences only
  std::optional<DefendedGoal> defended_goal;  // raw sequences only
  double pitch_length = 105.0;

  std::vector<Player> roster;
  std::vector<Frame> frames;

  std::size_t delivery_frame = 0;
  std::optional<FirstContact> first_contact;
  /// Frame of the second on-ball event after delivery, when known.
  std::optional<std::size_t> truncate_frame;
  bool short_corner = false;

  std::size_t frame_count() const { return frames.size(); }

  /// Roster indices of outfield defenders (goalkeepers excluded), in roster order.
  std::vector<std::size_t> defenders() const;
  /// Roster indices of outfield attackers (goalkeepers excluded), in roster order.
  std::vector<std::size_t> attackers() const;

  std::optional<std::size_t> find_player(const std::string& id) const;
};

/// A collection of sequences with a (team, delivery) grouping index.
class Dataset {
 public:
  using GroupKey = std::pair<std::string, DeliveryType>;

  Dataset() = default;
  explicit Dataset(std::vector<CornerSequence> sequences);

  const std::vector<CornerSequence>& sequences() const { return sequences_; }
  std::size_t size() const { return sequences_.size(); }
  bool empty() const { return sequences_.empty(); }
  const CornerSequence& operator[](std::size_t i) const { return sequences_[i]; }

  /// Sequence indices per (defending team, delivery type), in file order.
  const std::map<GroupKey, std::vector<std::size_t>>& groups() const { return groups_; }

  Dataset subset(const std::vector<std::size_t>& indices) const;
  Dataset group(const GroupKey& key) const;

 private:
  std::vector<CornerSequence> sequences_;
  std::map<GroupKey, std::vector<std::size_t>> groups_;
};

inline constexpr const char* kTrackingSchema = "cdhmm-tracking/1";

/// Parses one JSONL record. `line` is used only for error locations.
CornerSequence parse_sequence(const std::string& json_text, std::size_t line);
std::string serialize_sequence(const CornerSequence& seq);

Dataset load_dataset(const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
void write_dataset(const Dataset& ds, std::ostream& out);

/// Throws ValidationError if the sequence breaks a data-model invariant.
void validate(const CornerSequence& seq);

/// Maps a raw sequence into the canonical frame. Canonical input is returned unchanged.
CornerSequence canonicalize(const CornerSequence& seq, const PitchGeometry& pitch = {});

/// Keeps frames [delivery - 25, min(delivery + 50, truncate_frame)).
CornerSequence truncate(const CornerSequence& seq);

/// Re-derives velocities from positions with centred differences over `window` frames.
CornerSequence estimate_velocities(const CornerSequence& seq, std::size_t window = 3);

struct FilterOptions {
  /// Strict mode requires exactly `expected_players` outfield players per side.
  bool strict = true;
  std::size_t expected_players = 10;
};

/// Drops short corners and sequences whose outfield counts are not modelable.
Dataset filter_for_training(const Dataset& ds, const FilterOptions& options = {});

}  // namespace cdhmm::data
