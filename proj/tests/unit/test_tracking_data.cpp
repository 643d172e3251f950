#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cdhmm/errors.hpp"
#include "cdhmm/tracking_data.hpp"
#include "fixtures.hpp"

using namespace cdhmm;
using data::CornerSequence;

namespace {

CornerSequence squad_sequence(std::size_t defenders, std::size_t attackers, bool goalkeepers, std::size_t T = 30) {
  auto s = fixtures::random_sequence(defenders, attackers, T, 11, "sq");
  if (goalkeepers) {
    s.roster.push_back({"gk-d", data::Team::Defending, true, 1.9, 85.0});
    s.roster.push_back({"gk-a", data::Team::Attacking, true, 1.9, 85.0});
    for (auto& f : s.frames) {
      f.players.push_back({Vec2(-10.5, 0.0), Vec2::Zero()});
      f.players.push_back({Vec2(70.0, 0.0), Vec2::Zero()});
    }
  }
  return s;
}

double pair_distance(const CornerSequence& s, std::size_t t, std::size_t a, std::size_t b) {
  return (s.frames[t].players[a].position - s.frames[t].players[b].position).norm();
}

}  // namespace

TEST(LoadDataset, EmptyInputGivesEmptyDataset) {
  std::istringstream in("");
  EXPECT_EQ(data::read_dataset(in).size(), 0u);
}

TEST(LoadDataset, SingleSequenceRoundTrip) {
  auto s = squad_sequence(10, 10, true, 75);
  std::ostringstream out;
  data::write_dataset(data::Dataset({s}), out);
  std::istringstream in(out.str());
  const auto ds = data::read_dataset(in);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].frame_count(), 75u);
}

TEST(LoadDataset, SaveLoadIsByteIdentical) {
  auto s = squad_sequence(4, 4, true, 30);
  s.first_contact = data::FirstContact{12, s.roster[5].id};
  std::ostringstream a;
  data::write_dataset(data::Dataset({s}), a);
  std::istringstream in(a.str());
  const auto back = data::read_dataset(in);
  std::ostringstream b;
  data::write_dataset(back, b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(back[0].frames[7].players[3].position, s.frames[7].players[3].position);
  EXPECT_EQ(back[0].frames[7].players[3].velocity, s.frames[7].players[3].velocity);
}

TEST(LoadDataset, MissingVelocityNamesTheField) {
  auto s = squad_sequence(2, 2, false, 3);
  auto rec = nlohmann::json::parse(data::serialize_sequence(s));
  rec["frames"][1]["players"][0].erase("vx");
  try {
    data::parse_sequence(rec.dump(), 4);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.field(), "velocity");
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(LoadDataset, FrameRateMismatchRejected) {
  auto s = squad_sequence(2, 2, false, 3);
  s.frames[2].time += 0.02;
  EXPECT_THROW(data::parse_sequence(data::serialize_sequence(s), 1), SchemaError);
}

TEST(LoadDataset, DuplicateSequenceIdsRejected) {
  auto s = squad_sequence(2, 2, false, 3);
  const auto line = data::serialize_sequence(s);
  std::istringstream in(line + "\n" + line + "\n");
  EXPECT_THROW(data::read_dataset(in), SchemaError);
}

TEST(LoadDataset, MalformedJsonLocated) {
  std::istringstream in("\n{not json\n");
  try {
    data::read_dataset(in);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadDataset, WrongSchemaTagRejected) {
  auto rec = nlohmann::json::parse(data::serialize_sequence(squad_sequence(2, 2, false, 3)));
  rec["schema"] = "cdhmm-tracking/999";
  EXPECT_THROW(data::parse_sequence(rec.dump(), 1), SchemaError);
}

TEST(Canonicalize, CanonicalInputUnchanged) {
  auto s = squad_sequence(3, 3, false, 5);
  const auto c = data::canonicalize(s);
  std::ostringstream a, b;
  data::write_dataset(data::Dataset({s}), a);
  data::write_dataset(data::Dataset({c}), b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Canonicalize, NegativeYCornerReflectsPositionsAndVelocities) {
  auto s = squad_sequence(2, 2, false, 3);
  s.canonical = false;
  s.corner_side = data::CornerSide::NegativeY;
  s.defended_goal = data::DefendedGoal::NegativeX;
  s.frames[0].players[0] = {Vec2(-40.0, -7.0), Vec2(1.5, 2.0)};
  const auto c = data::canonicalize(s);
  EXPECT_TRUE(c.canonical);
  EXPECT_DOUBLE_EQ(c.frames[0].players[0].position.y(), 7.0);
  EXPECT_DOUBLE_EQ(c.frames[0].players[0].velocity.y(), -2.0);
  EXPECT_DOUBLE_EQ(c.frames[0].players[0].velocity.x(), 1.5);
}

TEST(Canonicalize, PenaltySpotMapsToOrigin) {
  for (auto goal : {data::DefendedGoal::NegativeX, data::DefendedGoal::PositiveX}) {
    auto s = squad_sequence(1, 2, false, 2);
    s.canonical = false;
    s.corner_side = data::CornerSide::PositiveY;
    s.defended_goal = goal;
    const double spot = goal == data::DefendedGoal::NegativeX ? -(52.5 - 11.0) : 52.5 - 11.0;
    s.frames[0].players[0].position = Vec2(spot, 0.0);
    const auto c = data::canonicalize(s);
    EXPECT_NEAR(c.frames[0].players[0].position.norm(), 0.0, 1e-12);
  }
}

TEST(Canonicalize, UnknownCornerSideRejected) {
  auto s = squad_sequence(1, 2, false, 2);
  s.canonical = false;
  s.defended_goal = data::DefendedGoal::NegativeX;
  EXPECT_THROW(data::canonicalize(s), ValidationError);
}

TEST(CanonicalizeProperty, IdempotentAndIsometric) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = fixtures::random_sequence(4, 4, 6, seed);
    s.canonical = false;
    s.corner_side = seed % 2 ? data::CornerSide::PositiveY : data::CornerSide::NegativeY;
    s.defended_goal = seed % 3 ? data::DefendedGoal::PositiveX : data::DefendedGoal::NegativeX;
    const auto c = data::canonicalize(s);
    const auto cc = data::canonicalize(c);
    for (std::size_t t = 0; t < s.frames.size(); ++t) {
      for (std::size_t a = 0; a < s.roster.size(); ++a) {
        EXPECT_EQ(c.frames[t].players[a].position, cc.frames[t].players[a].position);
        for (std::size_t b = a + 1; b < s.roster.size(); ++b) {
          EXPECT_LT(std::abs(pair_distance(s, t, a, b) - pair_distance(c, t, a, b)), 1e-9);
        }
      }
    }
  }
}

TEST(EstimateVelocities, StationaryPlayerHasZeroVelocity) {
  auto s = squad_sequence(1, 2, false, 10);
  for (auto& f : s.frames) f.players[0].position = Vec2(1.0, 2.0);
  const auto v = data::estimate_velocities(s, 3);
  for (const auto& f : v.frames) EXPECT_EQ(f.players[0].velocity, Vec2::Zero());
}

TEST(EstimateVelocities, UniformMotionIsExact) {
  auto s = squad_sequence(1, 2, false, 10);
  for (std::size_t t = 0; t < s.frames.size(); ++t) s.frames[t].players[0].position = Vec2(double(t), 0.0);
  const auto v = data::estimate_velocities(s, 3);
  for (const auto& f : v.frames) {
    EXPECT_NEAR(f.players[0].velocity.x(), 25.0, 1e-9);
    EXPECT_NEAR(f.players[0].velocity.y(), 0.0, 1e-12);
  }
}

TEST(EstimateVelocities, QuadraticMidpointMatchesDerivative) {
  auto s = squad_sequence(1, 2, false, 11);
  auto pos = [](double t) { return Vec2(0.7 * t * t - 2.0 * t + 1.0, -0.3 * t * t + 4.0 * t); };
  for (std::size_t t = 0; t < s.frames.size(); ++t) s.frames[t].players[0].position = pos(double(t) * kFrameInterval);
  const auto v = data::estimate_velocities(s, 1);
  const double tm = 5 * kFrameInterval;
  const Vec2 exact(1.4 * tm - 2.0, -0.6 * tm + 4.0);
  EXPECT_LT((v.frames[5].players[0].velocity - exact).norm(), 1e-6);
}

TEST(EstimateVelocities, NeedsTwoFrames) {
  auto s = squad_sequence(1, 2, false, 1);
  EXPECT_THROW(data::estimate_velocities(s, 3), ValidationError);
}

TEST(FilterForTraining, GoalkeepersExcludedFromModelledPlayers) {
  const auto s = squad_sequence(10, 10, true);
  EXPECT_EQ(s.defenders().size(), 10u);
  EXPECT_EQ(s.attackers().size(), 10u);
  EXPECT_EQ(data::filter_for_training(data::Dataset({s})).size(), 1u);
}

TEST(FilterForTraining, ShortCornerExcluded) {
  auto s = squad_sequence(10, 10, true);
  s.short_corner = true;
  EXPECT_EQ(data::filter_for_training(data::Dataset({s})).size(), 0u);
}

TEST(FilterForTraining, NineAttackersExcludedInStrictMode) {
  const auto s = squad_sequence(10, 9, true);
  EXPECT_EQ(data::filter_for_training(data::Dataset({s})).size(), 0u);
  data::FilterOptions permissive;
  permissive.strict = false;
  EXPECT_EQ(data::filter_for_training(data::Dataset({s}), permissive).size(), 1u);
}

TEST(Truncate, KeepsAnalysisWindow) {
  auto s = squad_sequence(2, 2, false, 150);
  s.delivery_frame = 60;
  auto t = data::truncate(s);
  EXPECT_EQ(t.delivery_frame, 25u);
  EXPECT_EQ(t.frame_count(), 75u);
  s.truncate_frame = 80;
  t = data::truncate(s);
  EXPECT_EQ(t.frame_count(), 80u - 35u);
}

TEST(DatasetGroups, IndexByTeamAndDelivery) {
  std::vector<CornerSequence> v;
  v.push_back(fixtures::random_sequence(2, 2, 3, 1, "a", "A", data::DeliveryType::Inswing));
  v.push_back(fixtures::random_sequence(2, 2, 3, 2, "b", "A", data::DeliveryType::Outswing));
  v.push_back(fixtures::random_sequence(2, 2, 3, 3, "c", "A", data::DeliveryType::Inswing));
  const data::Dataset ds(std::move(v));
  ASSERT_EQ(ds.groups().size(), 2u);
  const auto in = ds.group({"A", data::DeliveryType::Inswing});
  ASSERT_EQ(in.size(), 2u);
  EXPECT_EQ(in[0].sequence_id, "a");
  EXPECT_EQ(in[1].sequence_id, "c");
}
