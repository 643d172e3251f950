#include "cdhmm/tracking_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cdhmm/errors.hpp"

namespace cdhmm::data {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kPreDeliveryFrames = 25;
constexpr std::size_t kPostDeliveryFrames = 50;
constexpr double kFrameTimeTolerance = 1e-4;

const json& require(const json& obj, const char* key, std::size_t line,
                    const std::string& context = {}) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(line, key, "missing" + (context.empty() ? "" : " in " + context));
  }
  return *it;
}

double require_number(const json& obj, const char* key, std::size_t line,
                      const std::string& field_name, const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(line, field_name, std::string("missing '") + key + "' in " + context);
  }
  if (!it->is_number()) {
    throw SchemaError(line, field_name, std::string("'") + key + "' must be a number in " + context);
  }
  return it->get<double>();
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
  const json& v = require(obj, key, line);
  if (!v.is_string()) throw SchemaError(line, key, "must be a string");
  return v.get<std::string>();
}

std::size_t require_index(const json& v, const char* key, std::size_t line) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw SchemaError(line, key, "must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

Team team_from_string(const std::string& s, std::size_t line) {
  if (s == "attacking") return Team::Attacking;
  if (s == "defending") return Team::Defending;
  throw SchemaError(line, "team", "expected 'attacking' or 'defending', got '" + s + "'");
}

}  // namespace

std::string to_string(DeliveryType d) { return d == DeliveryType::Inswing ? "inswing" : "outswing"; }

DeliveryType delivery_from_string(const std::string& s) {
  if (s == "inswing") return DeliveryType::Inswing;
  if (s == "outswing") return DeliveryType::Outswing;
  throw ValidationError("unknown delivery type '" + s + "'");
}

std::string to_string(Team t) { return t == Team::Attacking ? "attacking" : "defending"; }

std::vector<std::size_t> CornerSequence::defenders() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < roster.size(); ++i) {
    if (roster[i].team == Team::Defending && !roster[i].goalkeeper) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> CornerSequence::attackers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < roster.size(); ++i) {
    if (roster[i].team == Team::Attacking && !roster[i].goalkeeper) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> CornerSequence::find_player(const std::string& id) const {
  for (std::size_t i = 0; i < roster.size(); ++i) {
    if (roster[i].id == id) return i;
  }
  return std::nullopt;
}

Dataset::Dataset(std::vector<CornerSequence> sequences) : sequences_(std::move(sequences)) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < sequences_.size(); ++i) {
    const auto& s = sequences_[i];
    if (!seen.insert(s.sequence_id).second) {
      throw ValidationError("duplicated sequence_id '" + s.sequence_id + "'");
    }
    groups_[{s.defending_team_id, s.delivery_type}].push_back(i);
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<CornerSequence> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(sequences_.at(i));
  return Dataset(std::move(out));
}

Dataset Dataset::group(const GroupKey& key) const {
  auto it = groups_.find(key);
  if (it == groups_.end()) return Dataset{};
  return subset(it->second);
}

CornerSequence parse_sequence(const std::string& json_text, std::size_t line) {
  json rec;
  try {
    rec = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError(line, "<record>", std::string("malformed JSON: ") + e.what());
  }
  if (!rec.is_object()) throw SchemaError(line, "<record>", "record must be an object");

  if (auto it = rec.find("schema"); it != rec.end() && *it != kTrackingSchema) {
    throw SchemaError(line, "schema", "unsupported schema " + it->dump());
  }
  CornerSequence seq;
  seq.sequence_id = require_string(rec, "sequence_id", line);
  seq.game_id = rec.contains("game_id") ? require_string(rec, "game_id", line) : seq.sequence_id;
  try {
    seq.delivery_type = delivery_from_string(require_string(rec, "delivery_type", line));
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    throw SchemaError(line, "delivery_type", e.what());
  }
  seq.defending_team_id = require_string(rec, "defending_team_id", line);
  seq.delivery_frame = require_index(require(rec, "delivery_frame", line), "delivery_frame", line);
  seq.canonical = rec.value("canonical", true);
  seq.short_corner = rec.value("short_corner", false);
  if (auto it = rec.find("truncate_frame"); it != rec.end() && !it->is_null()) {
    seq.truncate_frame = require_index(*it, "truncate_frame", line);
  }
  if (!seq.canonical) {
    if (auto it = rec.find("corner_side"); it != rec.end()) {
      const auto s = it->get<std::string>();
      if (s == "+y") seq.corner_side = CornerSide::PositiveY;
      else if (s == "-y") seq.corner_side = CornerSide::NegativeY;
      else throw SchemaError(line, "corner_side", "expected '+y' or '-y'");
    }
    if (auto it = rec.find("defended_goal"); it != rec.end()) {
      const auto s = it->get<std::string>();
      if (s == "+x") seq.defended_goal = DefendedGoal::PositiveX;
      else if (s == "-x") seq.defended_goal = DefendedGoal::NegativeX;
      else throw SchemaError(line, "defended_goal", "expected '+x' or '-x'");
    }
    seq.pitch_length = rec.value("pitch_length", 105.0);
  }

  const json& fc = require(rec, "first_contact", line);
  if (!fc.is_null()) {
    if (!fc.is_object()) throw SchemaError(line, "first_contact", "must be an object or null");
    FirstContact contact;
    contact.frame = require_index(require(fc, "frame", line), "first_contact.frame", line);
    contact.player_id = require_string(fc, "player_id", line);
    seq.first_contact = contact;
  }

  const json& frames = require(rec, "frames", line);
  if (!frames.is_array()) throw SchemaError(line, "frames", "must be an array");

  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const json& fr = frames[f];
    const std::string ctx = "frame " + std::to_string(f);
    Frame frame;
    frame.time = require_number(fr, "t", line, "t", ctx);
    const json& players = require(fr, "players", line, ctx);
    if (!players.is_array()) throw SchemaError(line, "players", "must be an array in " + ctx);
    if (f > 0 && players.size() != seq.roster.size()) {
      throw SchemaError(line, "players", "player count changes in " + ctx);
    }
    frame.players.resize(players.size());
    for (std::size_t p = 0; p < players.size(); ++p) {
      const json& pj = players[p];
      const std::string pctx = ctx + ", player " + std::to_string(p);
      const std::string id = require_string(pj, "id", line);
      PlayerState state;
      state.position = {require_number(pj, "x", line, "position", pctx),
                        require_number(pj, "y", line, "position", pctx)};
      state.velocity = {require_number(pj, "vx", line, "velocity", pctx),
                        require_number(pj, "vy", line, "velocity", pctx)};
      if (f == 0) {
        Player player;
        player.id = id;
        player.team = team_from_string(require_string(pj, "team", line), line);
        player.goalkeeper = require(pj, "gk", line, pctx).get<bool>();
        player.height = require_number(pj, "h", line, "height", pctx);
        player.weight = require_number(pj, "w", line, "weight", pctx);
        if (!slot.emplace(id, p).second) {
          throw SchemaError(line, "id", "duplicated player id '" + id + "'");
        }
        seq.roster.push_back(std::move(player));
        frame.players[p] = state;
      } else {
        auto it = slot.find(id);
        if (it == slot.end()) {
          throw SchemaError(line, "id", "player '" + id + "' not present in frame 0 (" + pctx + ")");
        }
        frame.players[it->second] = state;
      }
    }
    seq.frames.push_back(std::move(frame));
  }

  for (std::size_t f = 1; f < seq.frames.size(); ++f) {
    const double dt = seq.frames[f].time - seq.frames[f - 1].time;
    if (std::abs(dt - kFrameInterval) > kFrameTimeTolerance) {
      throw SchemaError(line, "t",
                        "frame-rate mismatch at frame " + std::to_string(f) + " (dt=" +
                            std::to_string(dt) + " s, expected 0.04 s)");
    }
  }
  try {
    validate(seq);
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    throw SchemaError(line, "<record>", e.what());
  }
  return seq;
}

void validate(const CornerSequence& seq) {
  if (seq.frames.empty()) throw ValidationError(seq.sequence_id + ": no frames");
  if (seq.delivery_frame >= seq.frames.size()) {
    throw ValidationError(seq.sequence_id + ": delivery_frame out of range");
  }
  if (seq.first_contact && seq.first_contact->frame >= seq.frames.size()) {
    throw ValidationError(seq.sequence_id + ": first_contact.frame out of range");
  }
  if (seq.first_contact && !seq.find_player(seq.first_contact->player_id)) {
    throw ValidationError(seq.sequence_id + ": first_contact.player_id not in roster");
  }
  for (const auto& p : seq.roster) {
    if (!(p.height > 1.4 && p.height < 2.2)) {
      throw ValidationError(seq.sequence_id + ": height of '" + p.id + "' outside (1.4, 2.2) m");
    }
    if (!(p.weight > 50.0 && p.weight < 120.0)) {
      throw ValidationError(seq.sequence_id + ": weight of '" + p.id + "' outside (50, 120) kg");
    }
  }
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const auto& fr = seq.frames[f];
    if (fr.players.size() != seq.roster.size()) {
      throw ValidationError(seq.sequence_id + ": frame " + std::to_string(f) + " roster mismatch");
    }
    for (const auto& s : fr.players) {
      if (!s.position.allFinite() || !s.velocity.allFinite()) {
        throw ValidationError(seq.sequence_id + ": non-finite position or velocity in frame " +
                              std::to_string(f));
      }
    }
  }
}

std::string serialize_sequence(const CornerSequence& seq) {
  ordered_json rec;
  rec["schema"] = kTrackingSchema;
  rec["sequence_id"] = seq.sequence_id;
  rec["game_id"] = seq.game_id;
  rec["delivery_type"] = to_string(seq.delivery_type);
  rec["defending_team_id"] = seq.defending_team_id;
  rec["canonical"] = seq.canonical;
  if (!seq.canonical) {
    if (seq.corner_side) rec["corner_side"] = *seq.corner_side == CornerSide::PositiveY ? "+y" : "-y";
    if (seq.defended_goal) {
      rec["defended_goal"] = *seq.defended_goal == DefendedGoal::PositiveX ? "+x" : "-x";
    }
    rec["pitch_length"] = seq.pitch_length;
  }
  rec["delivery_frame"] = seq.delivery_frame;
  if (seq.truncate_frame) rec["truncate_frame"] = *seq.truncate_frame;
  if (seq.short_corner) rec["short_corner"] = true;
  if (seq.first_contact) {
    rec["first_contact"] = {{"frame", seq.first_contact->frame},
                            {"player_id", seq.first_contact->player_id}};
  } else {
    rec["first_contact"] = nullptr;
  }
  ordered_json frames = ordered_json::array();
  for (const auto& fr : seq.frames) {
    ordered_json players = ordered_json::array();
    for (std::size_t p = 0; p < seq.roster.size(); ++p) {
      const auto& pl = seq.roster[p];
      const auto& st = fr.players[p];
      players.push_back({{"id", pl.id},
                         {"team", to_string(pl.team)},
                         {"gk", pl.goalkeeper},
                         {"x", st.position.x()},
                         {"y", st.position.y()},
                         {"vx", st.velocity.x()},
                         {"vy", st.velocity.y()},
                         {"h", pl.height},
                         {"w", pl.weight}});
    }
    frames.push_back({{"t", fr.time}, {"players", std::move(players)}});
  }
  rec["frames"] = std::move(frames);
  return rec.dump();
}

Dataset read_dataset(std::istream& in) {
  std::vector<CornerSequence> seqs;
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto seq = parse_sequence(line, line_no);
    if (!ids.insert(seq.sequence_id).second) {
      throw SchemaError(line_no, "sequence_id", "duplicated sequence_id '" + seq.sequence_id + "'");
    }
    seqs.push_back(std::move(seq));
  }
  return Dataset(std::move(seqs));
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path.string() + "'");
  return read_dataset(in);
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  for (const auto& seq : ds.sequences()) out << serialize_sequence(seq) << '\n';
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset '" + path.string() + "'");
  write_dataset(ds, out);
}

CornerSequence canonicalize(const CornerSequence& seq, const PitchGeometry& pitch) {
  if (seq.canonical) return seq;
  if (!seq.corner_side) throw ValidationError(seq.sequence_id + ": unknown corner side");
  if (!seq.defended_goal) throw ValidationError(seq.sequence_id + ": unknown defended goal");

  // Raw frame: origin at the centre spot. Reflect so the defended goal is at -x,
  // then shift the penalty spot to the origin.
  const double sx = *seq.defended_goal == DefendedGoal::PositiveX ? -1.0 : 1.0;
  const double sy = *seq.corner_side == CornerSide::NegativeY ? -1.0 : 1.0;
  const double shift = seq.pitch_length / 2.0 - pitch.penalty_spot_distance;

  CornerSequence out = seq;
  for (auto& fr : out.frames) {
    for (auto& st : fr.players) {
      st.position = {sx * st.position.x() + shift, sy * st.position.y()};
      st.velocity = {sx * st.velocity.x(), sy * st.velocity.y()};
    }
  }
  out.canonical = true;
  out.corner_side.reset();
  out.defended_goal.reset();
  return out;
}

CornerSequence truncate(const CornerSequence& seq) {
  if (seq.delivery_frame < kPreDeliveryFrames) {
    throw ValidationError(seq.sequence_id + ": fewer than 25 frames before delivery");
  }
  const std::size_t begin = seq.delivery_frame - kPreDeliveryFrames;
  std::size_t end = std::min(seq.frames.size(), seq.delivery_frame + kPostDeliveryFrames);
  if (seq.truncate_frame) end = std::min(end, std::max(*seq.truncate_frame, seq.delivery_frame + 1));

  CornerSequence out = seq;
  out.frames.assign(seq.frames.begin() + static_cast<std::ptrdiff_t>(begin),
                    seq.frames.begin() + static_cast<std::ptrdiff_t>(end));
  out.delivery_frame = seq.delivery_frame - begin;
  if (out.truncate_frame) out.truncate_frame = *out.truncate_frame >= begin ? *out.truncate_frame - begin : 0;
  if (out.first_contact) {
    if (out.first_contact->frame < begin || out.first_contact->frame >= end) {
      out.first_contact.reset();
    } else {
      out.first_contact->frame -= begin;
    }
  }
  return out;
}

CornerSequence estimate_velocities(const CornerSequence& seq, std::size_t window) {
  const std::size_t T = seq.frames.size();
  if (T < 2) throw ValidationError(seq.sequence_id + ": need at least 2 frames to estimate velocity");
  if (window == 0) window = 1;
  CornerSequence out = seq;
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t h = std::min({window, t, T - 1 - t});
    std::size_t lo = t - h;
    std::size_t hi = t + h;
    if (h == 0) {
      lo = t == 0 ? 0 : t - 1;
      hi = t == 0 ? 1 : t;
    }
    const double dt = static_cast<double>(hi - lo) * kFrameInterval;
    for (std::size_t p = 0; p < seq.roster.size(); ++p) {
      out.frames[t].players[p].velocity =
          (seq.frames[hi].players[p].position - seq.frames[lo].players[p].position) / dt;
    }
  }
  return out;
}

Dataset filter_for_training(const Dataset& ds, const FilterOptions& options) {
  std::vector<CornerSequence> kept;
  for (const auto& seq : ds.sequences()) {
    if (seq.short_corner) {
      spdlog::warn("dropping {}: short corner", seq.sequence_id);
      continue;
    }
    const auto J = seq.defenders().size();
    const auto K = seq.attackers().size();
    if (options.strict && (J != options.expected_players || K != options.expected_players)) {
      spdlog::warn("dropping {}: {} outfield defenders and {} outfield attackers (strict mode needs {})",
                   seq.sequence_id, J, K, options.expected_players);
      continue;
    }
    if (!options.strict && (J == 0 || K < 2)) {
      spdlog::warn("dropping {}: {} defenders, {} attackers cannot be modelled", seq.sequence_id, J, K);
      continue;
    }
    kept.push_back(seq);
  }
  return Dataset(std::move(kept));
}

}  // namespace cdhmm::data
