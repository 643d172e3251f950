#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "cdhmm/errors.hpp"
#include "cdhmm/inference.hpp"
#include "cdhmm/synthgen.hpp"
#include "fixtures.hpp"

using namespace cdhmm;

namespace {

synth::ScenarioSpec spec_with(const synth::TruthOptions& o, std::size_t frames = 30) {
  synth::ScenarioSpec spec;
  spec.truth = synth::truth_params(o);
  spec.defenders = spec.truth.zones.size();
  spec.frames = frames;
  spec.delivery_frame = 10;
  return spec;
}

}  // namespace

TEST(TruthParams, LayoutAndValidity) {
  const auto p = synth::truth_params();
  EXPECT_NO_THROW(p.validate());
  ASSERT_EQ(p.zones.size(), 10u);
  for (std::size_t a = 0; a < p.zones.size(); ++a) {
    for (std::size_t b = a + 1; b < p.zones.size(); ++b) EXPECT_GT((p.zones[a].mean - p.zones[b].mean).norm(), 3.0);
  }
  EXPECT_NEAR(std::accumulate(p.initial.begin(), p.initial.end(), 0.0), 1.0, 1e-12);
}

TEST(ScenarioSpec, Validation) {
  auto good = spec_with({}, 30);
  EXPECT_NO_THROW(good.validate());
  auto s = good;
  s.frames = 24;
  EXPECT_THROW(s.validate(), ValidationError);
  s = good;
  s.frames = 151;
  EXPECT_THROW(s.validate(), ValidationError);
  s = good;
  s.defenders = 9;
  EXPECT_THROW(s.validate(), ValidationError);
  s = good;
  s.motion.speed_cap = 9.5;
  EXPECT_THROW(s.validate(), ValidationError);
  s = good;
  s.delivery_frame = 30;
  EXPECT_THROW(s.validate(), ValidationError);
  s = good;
  s.noise_correlation = 1.0;
  EXPECT_THROW(s.validate(), ValidationError);
  EXPECT_THROW(synth::generate_sequence(s, 1), ValidationError);
}

TEST(Generate, ShapeAndSpeedCap) {
  const auto spec = fixtures::small_scenario(4, 40);
  const auto g = synth::generate_sequence(spec, 3, "x");
  const auto& seq = g.sequence;
  EXPECT_EQ(seq.sequence_id, "x");
  EXPECT_EQ(seq.frames.size(), 40u);
  EXPECT_EQ(seq.defenders().size(), 4u);
  EXPECT_EQ(seq.attackers().size(), 4u);
  EXPECT_NO_THROW(data::validate(seq));
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    for (auto a : seq.attackers()) EXPECT_LE(seq.frames[t].players[a].velocity.norm(), spec.motion.speed_cap + 1e-9);
  }
  ASSERT_EQ(g.states.size(), 4u);
  for (const auto& path : g.states) {
    ASSERT_EQ(path.size(), 40u);
    for (auto s : path) EXPECT_LE(s, 4u);
  }
}

TEST(Generate, SameSeedSameSequence) {
  const auto spec = fixtures::small_scenario(3, 30);
  const auto a = synth::generate_sequence(spec, 42);
  const auto b = synth::generate_sequence(spec, 42);
  const auto c = synth::generate_sequence(spec, 43);
  EXPECT_EQ(a.states, b.states);
  std::ostringstream sa, sb, sc;
  synth::write_latents(sa, {a});
  synth::write_latents(sb, {b});
  synth::write_latents(sc, {c});
  EXPECT_EQ(sa.str(), sb.str());
  bool same = true;
  for (std::size_t t = 0; t < a.sequence.frames.size(); ++t) {
    for (std::size_t r = 0; r < a.sequence.roster.size(); ++r) {
      EXPECT_EQ(a.sequence.frames[t].players[r].position, b.sequence.frames[t].players[r].position);
      same = same && a.sequence.frames[t].players[r].position == c.sequence.frames[t].players[r].position;
    }
  }
  EXPECT_FALSE(same);
}

TEST(Generate, SaturatedZonalWeightsKeepEveryoneZonal) {
  synth::TruthOptions o;
  o.attackers = 4;
  o.zonal_initial = 1.0;
  auto spec = spec_with(o);
  spec.truth.beta.zonal[0] = 50.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto g = synth::generate_sequence(spec, s);
    for (const auto& path : g.states) {
      for (auto st : path) EXPECT_EQ(st, 4u);
    }
  }
}

TEST(Generate, NoiselessEmissionsSitOnTheirMeans) {
  synth::TruthOptions o;
  o.attackers = 4;
  o.marking_sigma2 = 1e-10;
  o.zone_variance = 1e-10;
  const auto spec = spec_with(o);
  const auto& truth = spec.truth;
  const auto g = synth::generate_sequence(spec, 8);
  const auto& seq = g.sequence;
  const auto defs = seq.defenders();
  const auto atts = seq.attackers();
  for (std::size_t j = 0; j < defs.size(); ++j) {
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
      const Vec2 x = seq.frames[t].players[defs[j]].position;
      const std::size_t s = g.states[j][t];
      Vec2 mean;
      if (s == truth.states.zonal()) {
        mean = truth.zones[g.zones[j]].mean;
      } else {
        const Vec2 O = seq.frames[t].players[atts[s]].position;
        mean = hmm::marking_mean(truth.grid[truth.grid.locate(O)], O, truth.goal_center);
      }
      EXPECT_NEAR((x - mean).norm(), 0.0, 1e-3) << "defender " << j << " frame " << t;
    }
  }
}

TEST(Generate, ZonesMatchTheHungarianAssignment) {
  const auto spec = fixtures::small_scenario(5, 30);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto g = synth::generate_sequence(spec, s);
    const auto a = hmm::sequence_zones(spec.truth, g.sequence);
    for (std::size_t j = 0; j < g.zones.size(); ++j) {
      if (g.states[j][0] == spec.truth.states.zonal()) {
        EXPECT_EQ(a.row_to_col[j], j);
      }
    }
    EXPECT_EQ(a.row_to_col, g.zones);
  }
}

TEST(Generate, RecordedKernelRowsAreStochasticWithStructuralZero) {
  const auto spec = fixtures::small_scenario(4, 30);
  const auto g = synth::generate_sequence(spec, 5, "k", true);
  ASSERT_EQ(g.kernel.size(), 4u);
  for (std::size_t j = 0; j < 4; ++j) {
    ASSERT_EQ(g.kernel[j].size(), 29u);
    for (std::size_t t = 0; t + 1 < 30; ++t) {
      const auto& row = g.kernel[j][t];
      EXPECT_NEAR(row.sum(), 1.0, 1e-12);
      if (g.states[j][t] < 4) {
        EXPECT_EQ(row[4], 0.0);
      }
      EXPECT_GT(row[static_cast<Eigen::Index>(g.states[j][t + 1])], 0.0);
    }
  }
  EXPECT_TRUE(synth::generate_sequence(spec, 5).kernel.empty());
}

TEST(Generate, ViterbiRecoversNearNoiselessStates) {
  synth::TruthOptions o;
  o.attackers = 6;
  o.marking_sigma2 = 0.01;
  o.zone_variance = 0.05;
  const auto spec = spec_with(o, 50);
  std::size_t hit = 0, total = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto g = synth::generate_sequence(spec, 100 + s);
    const auto dec = hmm::decode_sequence(spec.truth, g.sequence);
    for (std::size_t j = 0; j < dec.defenders.size(); ++j) {
      const auto& path = dec.defenders[j].posterior.path;
      for (std::size_t t = 0; t < path.size(); ++t) {
        hit += path[t] == g.states[j][t];
        ++total;
      }
    }
  }
  EXPECT_GE(static_cast<double>(hit) / static_cast<double>(total), 0.95);
}

TEST(Generate, CorrelatedNoisePersists) {
  synth::TruthOptions o;
  o.attackers = 2;
  o.zonal_initial = 1.0;
  o.zone_variance = 1.0;
  auto spec = spec_with(o, 150);
  spec.truth.beta.zonal[0] = 50.0;
  spec.noise_correlation = 0.9;
  const auto g = synth::generate_sequence(spec, 1);
  const auto& seq = g.sequence;
  const auto d = seq.defenders()[0];
  const Vec2 mu = spec.truth.zones[g.zones[0]].mean;
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t + 1 < seq.frames.size(); ++t) {
    const Vec2 e0 = seq.frames[t].players[d].position - mu;
    const Vec2 e1 = seq.frames[t + 1].players[d].position - mu;
    num += e0.dot(e1);
    den += e0.squaredNorm();
  }
  EXPECT_GT(num / den, 0.6);
}

TEST(Dataset, IdsLatentsRoundTrip) {
  const auto spec = fixtures::small_scenario(3, 25);
  const auto gen = synth::generate_dataset(spec, 4, 9, "rt");
  ASSERT_EQ(gen.size(), 4u);
  EXPECT_EQ(gen[0].sequence.sequence_id, "rt-0000");
  EXPECT_EQ(gen[3].sequence.sequence_id, "rt-0003");
  EXPECT_EQ(synth::to_dataset(gen).size(), 4u);
  const auto again = synth::generate_dataset(spec, 4, 9, "rt");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(gen[i].states, again[i].states);

  const auto path = std::filesystem::temp_directory_path() / "cdhmm_latents_rt.jsonl";
  synth::save_latents(path, gen);
  const auto back = synth::load_latents(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back[i].sequence_id, gen[i].sequence.sequence_id);
    EXPECT_EQ(back[i].zones, gen[i].zones);
    EXPECT_EQ(back[i].states, gen[i].states);
    ASSERT_EQ(back[i].defender_ids.size(), 3u);
    EXPECT_EQ(back[i].defender_ids[0], "D1");
  }
}

TEST(EnumeratePosterior, AgreesWithForwardBackward) {
  const auto spec = fixtures::small_scenario(2, 25);
  const auto g = synth::generate_sequence(spec, 4);
  auto seq = g.sequence;
  seq.frames.resize(5);
  seq.delivery_frame = 0;
  seq.first_contact.reset();
  for (std::size_t j = 0; j < 2; ++j) {
    const auto e = synth::enumerate_posterior(spec.truth, seq, j);
    const auto zones = hmm::sequence_zones(spec.truth, seq);
    const hmm::SequenceCovariates cov(seq, spec.truth.standardizer);
    const auto track = hmm::build_track(spec.truth, seq, cov, j, zones.row_to_col[j]);
    const auto fb = hmm::forward_backward(track);
    EXPECT_NEAR(e.loglik, fb.loglik, 1e-9);
    EXPECT_TRUE(e.gamma.isApprox(fb.gamma, 1e-9));
    const auto v = hmm::viterbi(track);
    EXPECT_NEAR(e.best_log_prob, v.log_prob, 1e-9);
  }
  hmm::TrackModel big;
  big.log_initial = Eigen::VectorXd::Zero(5);
  big.log_emission = Eigen::MatrixXd::Zero(5, 5);
  big.log_transition.assign(4, Eigen::MatrixXd::Zero(5, 5));
  EXPECT_THROW(synth::enumerate_posterior(big), ValidationError);
}
