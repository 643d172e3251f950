#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "cdhmm/errors.hpp"
#include "cdhmm/ghosting.hpp"
#include "cdhmm/inference.hpp"
#include "fixtures.hpp"

using namespace cdhmm;
using ghost::Capability;

namespace {

hmm::CdhmmParams params_with_sigma2(std::size_t K, double sigma2, std::uint64_t seed = 3) {
  auto p = fixtures::random_params(K, K, seed);
  for (auto& c : p.grid.cells()) c.sigma2 = sigma2;
  return p;
}

// Reception of any player grows with the distance of defender `d` from the origin along x.
ghost::FunctionOutcomeModel linear_in_x(std::size_t d, ghost::Direction dir = ghost::Direction::Minimize) {
  return ghost::FunctionOutcomeModel(
      [d](Capability, const ghost::Scene& s, std::size_t) { return 0.01 * (s.positions[d].x() + 30.0); },
      {Capability::Reception}, dir);
}

Eigen::MatrixXd occupancy_only(std::size_t J, std::size_t K, std::size_t j, std::vector<std::size_t> ks) {
  Eigen::MatrixXd occ = Eigen::MatrixXd::Constant(J, K, 0.0);
  for (std::size_t r = 0; r < J; ++r) {
    if (r == j) continue;
    for (std::size_t k = 0; k < K; ++k) occ(r, k) = 0.5;
  }
  for (std::size_t k : ks) {
    for (std::size_t r = 0; r < J; ++r) occ(r, k) = 0.0;
    occ(j, k) = 1.0;
  }
  return occ;
}

}  // namespace

TEST(SampleGhost, ZeroVarianceSamplesSitOnTheMean) {
  const auto seq = fixtures::random_sequence(3, 3, 4, 1);
  const auto p = params_with_sigma2(3, 0.0);
  const Vec2 mean = ghost::ghost_mean(p, seq, 2, 1);
  for (const auto& x : ghost::sample_ghost(p, seq, 2, 0, 1, 64, 9)) EXPECT_EQ(x, mean);
}

TEST(SampleGhost, MeanAndVarianceMatchTheEmission) {
  const auto seq = fixtures::random_sequence(3, 3, 4, 2);
  const double s2 = 2.5;
  const auto p = params_with_sigma2(3, s2);
  const std::size_t n = 100000;
  const auto xs = ghost::sample_ghost(p, seq, 1, 2, 0, n, 11);
  const Vec2 mean = ghost::ghost_mean(p, seq, 1, 0);
  const Vec2 O = seq.frames[1].players[seq.attackers()[0]].position;
  const auto& bin = p.grid[p.grid.locate(O)];
  EXPECT_TRUE(mean.isApprox(bin.gamma_o * O + bin.gamma_g() * p.goal_center));
  Vec2 m = Vec2::Zero();
  for (const auto& x : xs) m += x;
  m /= static_cast<double>(n);
  const double tol = 3.0 * std::sqrt(s2 / static_cast<double>(n));
  EXPECT_NEAR(m.x(), mean.x(), tol);
  EXPECT_NEAR(m.y(), mean.y(), tol);
  double var = 0.0;
  for (const auto& x : xs) var += (x - mean).squaredNorm();
  EXPECT_NEAR(var / (2.0 * static_cast<double>(n)), s2, 0.05 * s2);
}

TEST(SampleGhost, StreamIsKeyedBySeedFrameDefenderAndRole) {
  const auto seq = fixtures::random_sequence(3, 3, 4, 3);
  const auto p = params_with_sigma2(3, 1.0);
  const auto a = ghost::sample_ghost(p, seq, 1, 1, 1, 16, 5);
  EXPECT_EQ(a, ghost::sample_ghost(p, seq, 1, 1, 1, 16, 5));
  EXPECT_NE(a, ghost::sample_ghost(p, seq, 1, 1, 1, 16, 6));
  EXPECT_NE(a, ghost::sample_ghost(p, seq, 1, 2, 1, 16, 5));
  EXPECT_THROW(ghost::sample_ghost(p, seq, 1, 1, 3, 16, 5), ValidationError);
}

TEST(GhostValue, ConstantAndLinearFunctions) {
  const auto seq = fixtures::random_sequence(2, 2, 2, 4);
  const auto p = params_with_sigma2(2, 1.0);
  const auto xs = ghost::sample_ghost(p, seq, 0, 0, 0, 4096, 1);
  const Vec2 mean = ghost::ghost_mean(p, seq, 0, 0);
  auto c = [](const Vec2&) { return 0.5; };
  EXPECT_EQ(ghost::expected_ghost_value(c, xs), ghost::point_ghost_value(c, mean));
  auto lin = [](const Vec2& x) { return 2.0 * x.x() - x.y() + 1.0; };
  Vec2 m = Vec2::Zero();
  for (const auto& x : xs) m += x;
  m /= static_cast<double>(xs.size());
  EXPECT_NEAR(ghost::expected_ghost_value(lin, xs), lin(m), 1e-9);
  EXPECT_NEAR(ghost::expected_ghost_value(lin, xs), ghost::point_ghost_value(lin, mean), 0.15);
  EXPECT_THROW(ghost::expected_ghost_value(c, {}), ValidationError);
}

TEST(GhostValue, ConvexFunctionExpectationExceedsPointValue) {
  const auto seq = fixtures::random_sequence(2, 2, 2, 5);
  const auto p = params_with_sigma2(2, 1.5);
  const Vec2 mean = ghost::ghost_mean(p, seq, 0, 1);
  auto f = [&](const Vec2& x) { return (x - mean).squaredNorm(); };
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto xs = ghost::sample_ghost(p, seq, 0, 0, 1, 256, s);
    EXPECT_GT(ghost::expected_ghost_value(f, xs), ghost::point_ghost_value(f, mean));
  }
}

TEST(Obpr, ZonalOccupancyContributesNothing) {
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(4, 3);
  gamma.col(2).setOnes();
  EXPECT_EQ(ghost::obpr(gamma, Eigen::MatrixXd::Constant(4, 2, 0.3)), 0.0);
}

TEST(Obpr, SingleTerm) {
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(1, 3);
  gamma(0, 0) = 1.0;
  Eigen::MatrixXd rec = Eigen::MatrixXd::Zero(1, 2);
  rec(0, 0) = 0.3;
  EXPECT_NEAR(ghost::obpr(gamma, rec), 0.7, 1e-15);
}

TEST(Obpr, MatchesDoubleSum) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index T = 5, K = 4;
    Eigen::MatrixXd gamma(T, K + 1), rec(T, K);
    for (Eigen::Index t = 0; t < T; ++t) {
      for (Eigen::Index k = 0; k <= K; ++k) gamma(t, k) = u(rng);
      gamma.row(t) /= gamma.row(t).sum();
      for (Eigen::Index k = 0; k < K; ++k) rec(t, k) = u(rng);
    }
    double want = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      for (Eigen::Index k = 0; k < K; ++k) want += gamma(t, k) * (1.0 - rec(t, k));
    }
    EXPECT_NEAR(ghost::obpr(gamma, rec), want, 1e-12);
  }
  EXPECT_THROW(ghost::obpr(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(3, 2)), ValidationError);
}

TEST(Obpr, UsesTheOutcomeModelOnObservedFrames) {
  const auto seq = fixtures::random_sequence(2, 2, 3, 8);
  ghost::FunctionOutcomeModel m([](Capability, const ghost::Scene&, std::size_t) { return 0.25; },
                                {Capability::Reception});
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
  EXPECT_NEAR(ghost::obpr(seq, gamma, m), 0.75 * 2.0, 1e-12);
  ghost::FunctionOutcomeModel threat_only([](Capability, const ghost::Scene&, std::size_t) { return 0.0; },
                                          {Capability::Threat});
  EXPECT_THROW(ghost::obpr(seq, gamma, threat_only), ValidationError);
}

TEST(Attention, EqualOccupancyIsUniform) {
  const auto w = ghost::attention_weights(Eigen::MatrixXd::Constant(4, 3, 0.2), 0.1);
  EXPECT_TRUE(w.isApprox(Eigen::MatrixXd::Constant(4, 3, 0.25)));
}

TEST(Attention, SmallTemperatureSelectsTheArgmax) {
  Eigen::MatrixXd occ(3, 2);
  occ << 0.2, 0.9, 0.7, 0.05, 0.1, 0.05;
  const auto w = ghost::attention_weights(occ, 1e-4);
  EXPECT_NEAR(w(1, 0), 1.0, 1e-12);
  EXPECT_NEAR(w(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(w(2, 0), 0.0, 1e-12);
}

TEST(Attention, HandSoftmax) {
  Eigen::MatrixXd occ(3, 1);
  occ << 0.6, 0.3, 0.1;
  const auto w = ghost::attention_weights(occ, 0.1);
  const double e0 = std::exp(6.0), e1 = std::exp(3.0), e2 = std::exp(1.0);
  const double z = e0 + e1 + e2;
  EXPECT_NEAR(w(0, 0), e0 / z, 1e-12);
  EXPECT_NEAR(w(1, 0), e1 / z, 1e-12);
  EXPECT_NEAR(w(2, 0), e2 / z, 1e-12);
  EXPECT_THROW(ghost::attention_weights(occ, 0.0), ValidationError);
}

TEST(Attention, ColumnsSumToOne) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::MatrixXd occ(5, 4);
    for (Eigen::Index i = 0; i < occ.size(); ++i) occ(i) = u(rng);
    const auto w = ghost::attention_weights(occ, 0.02 + u(rng));
    EXPECT_TRUE(w.colwise().sum().isApprox(Eigen::RowVectorXd::Ones(4), 1e-12));
    EXPECT_GE(w.minCoeff(), 0.0);
  }
}

TEST(Attention, FeasibleSetThreshold) {
  Eigen::MatrixXd w(2, 4);
  w << 0.15, 0.149, 0.9, 0.0, 0.85, 0.851, 0.1, 1.0;
  EXPECT_EQ(ghost::feasible_set(w, 0, 0.15), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(ghost::feasible_set(w, 1, 0.15), (std::vector<std::size_t>{0, 1, 3}));
}

TEST(Gca, SingleRoleAtTheGhostMeanIsZero) {
  auto seq = fixtures::random_sequence(3, 3, 2, 9);
  const auto p = params_with_sigma2(3, 0.0);
  const std::size_t j = 1, k = 2;
  seq.frames[0].players[seq.defenders()[j]].position = ghost::ghost_mean(p, seq, 0, k);
  ghost::GhostConfig cfg;
  cfg.mc_samples = 8;
  const auto model = ghost::BaselineReceptionModel::reference();
  const auto ev = ghost::group_coverage_advantage(p, seq, 0, j, occupancy_only(3, 3, j, {k}), model, cfg);
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->feasible, std::vector<std::size_t>{k});
  EXPECT_EQ(ev->optimal_role, k);
  EXPECT_NEAR(ev->gca, 0.0, 1e-12);
}

TEST(Gca, EmptyFeasibleSetYieldsNothing) {
  const auto seq = fixtures::random_sequence(3, 3, 2, 10);
  const auto p = params_with_sigma2(3, 1.0);
  const auto ev = ghost::group_coverage_advantage(p, seq, 0, 0, occupancy_only(3, 3, 1, {0, 1, 2}),
                                                  ghost::BaselineReceptionModel::reference(), {});
  EXPECT_FALSE(ev);
}

TEST(Gca, TwoRolesPicksTheBetterGhost) {
  const auto seq = fixtures::random_sequence(3, 3, 2, 11);
  const auto p = params_with_sigma2(3, 0.0);
  const std::size_t j = 0, d = seq.defenders()[j];
  ghost::GhostConfig cfg;
  cfg.mc_samples = 4;
  const auto occ = occupancy_only(3, 3, j, {0, 2});
  // With zero variance and a model linear in x the expectation is the value at the mean.
  auto G = [&](const Vec2& x) { return 2.0 * 0.01 * (x.x() + 30.0); };
  const double g0 = G(ghost::ghost_mean(p, seq, 0, 0)), g2 = G(ghost::ghost_mean(p, seq, 0, 2));
  const double obs = G(seq.frames[0].players[d].position);

  const auto lo = ghost::group_coverage_advantage(p, seq, 0, j, occ, linear_in_x(d), cfg);
  ASSERT_TRUE(lo);
  EXPECT_EQ(lo->feasible, (std::vector<std::size_t>{0, 2}));
  ASSERT_EQ(lo->role_expectations.size(), 2u);
  EXPECT_NEAR(lo->role_expectations[0], g0, 1e-12);
  EXPECT_NEAR(lo->role_expectations[1], g2, 1e-12);
  EXPECT_NEAR(lo->observed, obs, 1e-12);
  EXPECT_NEAR(lo->optimal, std::min(g0, g2), 1e-12);
  EXPECT_EQ(lo->optimal_role, g0 <= g2 ? 0u : 2u);
  EXPECT_NEAR(lo->gca, lo->optimal - lo->observed, 1e-15);

  const auto hi =
      ghost::group_coverage_advantage(p, seq, 0, j, occ, linear_in_x(d, ghost::Direction::Maximize), cfg);
  ASSERT_TRUE(hi);
  EXPECT_NEAR(hi->optimal, std::max(g0, g2), 1e-12);
  EXPECT_GE(hi->gca, lo->gca);
}

TEST(Gca, RequiresReception) {
  const auto seq = fixtures::random_sequence(2, 2, 2, 12);
  const auto p = params_with_sigma2(2, 1.0);
  ghost::FunctionOutcomeModel threat([](Capability, const ghost::Scene&, std::size_t) { return 0.1; },
                                     {Capability::Threat});
  EXPECT_THROW(ghost::group_coverage_advantage(p, seq, 0, 0, Eigen::MatrixXd::Ones(2, 2), threat, {}),
               ValidationError);
  ghost::GhostConfig bad;
  bad.theta = 1.0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Delta, ConstantModelGivesZero) {
  const auto seq = fixtures::random_sequence(2, 2, 2, 13);
  const auto p = params_with_sigma2(2, 2.0);
  ghost::FunctionOutcomeModel m([](Capability, const ghost::Scene&, std::size_t) { return 0.5; },
                                {Capability::Reception, Capability::Recovery, Capability::Threat});
  const auto dm = ghost::delta_metrics(p, seq, 1, 0, 1, {&m}, {});
  ASSERT_TRUE(dm.reception && dm.recovery && dm.threat && dm.counterattack);
  EXPECT_EQ(*dm.reception, 0.0);
  EXPECT_EQ(*dm.recovery, 0.0);
  EXPECT_EQ(*dm.threat, 0.0);
  EXPECT_EQ(*dm.counterattack, 0.0);
}

TEST(Delta, TightMarkingBeatsTheGhost) {
  auto seq = fixtures::random_sequence(2, 2, 2, 14);
  const auto p = params_with_sigma2(2, 1.0);
  const std::size_t d = seq.defenders()[0], a = seq.attackers()[1];
  seq.frames[0].players[d].position = seq.frames[0].players[a].position;
  ghost::FunctionOutcomeModel m(
      [d](Capability, const ghost::Scene& s, std::size_t player) {
        return 1.0 - std::exp(-(s.positions[d] - s.positions[player]).norm() / 5.0);
      },
      {Capability::Reception});
  const auto dm = ghost::delta_metrics(p, seq, 0, 0, 1, {&m}, {});
  ASSERT_TRUE(dm.reception);
  EXPECT_GT(*dm.reception, 0.0);
  EXPECT_FALSE(dm.recovery);
  EXPECT_FALSE(dm.threat);
  EXPECT_FALSE(dm.counterattack);
}

TEST(Delta, DefenderOnTheNoiselessGhostGivesZero) {
  auto seq = fixtures::random_sequence(2, 2, 2, 15);
  const auto p = params_with_sigma2(2, 0.0);
  const std::size_t d = seq.defenders()[1];
  seq.frames[1].players[d].position = ghost::ghost_mean(p, seq, 1, 0);
  const auto m = ghost::BaselineReceptionModel::reference();
  const auto dm = ghost::delta_metrics(p, seq, 1, 1, 0, {&m}, {});
  ASSERT_TRUE(dm.reception && dm.recovery);
  EXPECT_NEAR(*dm.reception, 0.0, 1e-12);
  EXPECT_NEAR(*dm.recovery, 0.0, 1e-12);
}

TEST(Delta, MissingReceptionThrows) {
  const auto seq = fixtures::random_sequence(2, 2, 2, 16);
  const auto p = params_with_sigma2(2, 1.0);
  ghost::FunctionOutcomeModel m([](Capability, const ghost::Scene&, std::size_t) { return 0.1; },
                                {Capability::Threat});
  EXPECT_THROW(ghost::delta_metrics(p, seq, 0, 0, 0, {&m}, {}), ValidationError);
  EXPECT_THROW(ghost::delta_metrics(p, seq, 0, 0, 0, {}, {}), ValidationError);
}

namespace {

// Two defenders and two attackers placed by hand on a single frame.
data::CornerSequence hand_scene(const Vec2& a0, const Vec2& a1, const Vec2& d0, const Vec2& d1) {
  auto seq = fixtures::random_sequence(2, 2, 1, 17);
  const auto defs = seq.defenders();
  const auto atts = seq.attackers();
  auto& pl = seq.frames[0].players;
  pl[defs[0]].position = d0;
  pl[defs[1]].position = d1;
  pl[atts[0]].position = a0;
  pl[atts[1]].position = a1;
  return seq;
}

}  // namespace

TEST(BaselineReception, IsolatedAttackerIsMostLikely) {
  // Attackers mirror each other about the goal axis; only attacker 0 is marked.
  const auto seq = hand_scene({-6, 3}, {-6, -3}, {-6, 3.5}, {-15, 0});
  const auto m = ghost::BaselineReceptionModel::reference();
  const auto s = ghost::Scene::observed(seq, 0);
  const auto atts = seq.attackers();
  EXPECT_GT(m.probability(Capability::Reception, s, atts[1]), m.probability(Capability::Reception, s, atts[0]));
}

TEST(BaselineReception, SymmetricAttackersAreEqual) {
  const auto seq = hand_scene({-6, 3}, {-6, -3}, {-6, 4}, {-6, -4});
  const auto m = ghost::BaselineReceptionModel::reference();
  const auto s = ghost::Scene::observed(seq, 0);
  const auto atts = seq.attackers();
  EXPECT_NEAR(m.probability(Capability::Reception, s, atts[0]), m.probability(Capability::Reception, s, atts[1]),
              1e-14);
}

TEST(BaselineReception, DistributionSumsToOne) {
  const auto m = ghost::BaselineReceptionModel::reference();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto seq = fixtures::random_sequence(5, 4, 1, seed);
    const auto dist = m.distribution(ghost::Scene::observed(seq, 0));
    ASSERT_EQ(dist.size(), seq.roster.size());
    EXPECT_NEAR(std::accumulate(dist.begin(), dist.end(), 0.0), 1.0, 1e-12);
    for (double v : dist) EXPECT_GT(v, 0.0);
  }
}

TEST(BaselineReception, UncalibratedAndInvalidWeights) {
  const auto seq = fixtures::random_sequence(2, 2, 1, 18);
  ghost::BaselineReceptionModel m;
  EXPECT_FALSE(m.calibrated());
  EXPECT_THROW(m.distribution(ghost::Scene::observed(seq, 0)), ValidationError);
  EXPECT_FALSE(m.supports(Capability::Threat));
  ghost::BaselineReceptionModel::Weights w;
  w.opponent = -0.1;
  EXPECT_THROW(ghost::BaselineReceptionModel{w}, ValidationError);
}

TEST(BaselineReception, SaveLoadRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "cdhmm_reception_roundtrip.json";
  ghost::BaselineReceptionModel::Weights w;
  w.bias = 0.3;
  w.target = -0.4;
  w.opponent = 0.6;
  w.goal = -0.02;
  w.delivery_target = Vec2(-5.0, 1.0);
  w.calibration = "fit on club data";
  ghost::BaselineReceptionModel(w).save(path);
  const auto back = ghost::BaselineReceptionModel::load(path);
  EXPECT_TRUE(back.calibrated());
  EXPECT_EQ(back.weights().bias, w.bias);
  EXPECT_EQ(back.weights().target, w.target);
  EXPECT_EQ(back.weights().opponent, w.opponent);
  EXPECT_EQ(back.weights().goal, w.goal);
  EXPECT_EQ(back.weights().delivery_target, w.delivery_target);
  EXPECT_EQ(back.weights().calibration, w.calibration);
  std::filesystem::remove(path);
  EXPECT_THROW(ghost::BaselineReceptionModel().save(path), ValidationError);
}

TEST(EvaluateSequence, DeliveryFrameAndSweep) {
  synth::ScenarioSpec spec = fixtures::small_scenario(3, 30);
  std::vector<data::CornerSequence> seqs;
  std::vector<hmm::SequenceDecoding> decs;
  for (int i = 0; i < 3; ++i) {
    seqs.push_back(synth::generate_sequence(spec, 100 + i, "g" + std::to_string(i)).sequence);
    decs.push_back(hmm::decode_sequence(spec.truth, seqs.back()));
  }
  const auto model = ghost::BaselineReceptionModel::reference();
  ghost::GhostConfig cfg;
  cfg.mc_samples = 32;
  const auto evs = ghost::evaluate_sequence(spec.truth, seqs[0], decs[0], model, cfg);
  EXPECT_FALSE(evs.empty());
  for (const auto& ev : evs) {
    EXPECT_EQ(ev.frame, seqs[0].delivery_frame);
    EXPECT_FALSE(ev.feasible.empty());
    EXPECT_EQ(ev.role_expectations.size(), ev.feasible.size());
  }
  cfg.all_frames = true;
  EXPECT_GE(ghost::evaluate_sequence(spec.truth, seqs[0], decs[0], model, cfg).size(), evs.size());
  cfg.all_frames = false;

  const auto rows = ghost::sweep(spec.truth, seqs, decs, model, cfg, {0.05, 0.5}, {0.1, 0.4});
  ASSERT_EQ(rows.size(), 4u);
  // A larger threshold can only shrink the feasible sets.
  EXPECT_LE(rows[1].evaluations, rows[0].evaluations);
  EXPECT_LE(rows[3].evaluations, rows[2].evaluations);
  decs.pop_back();
  EXPECT_THROW(ghost::sweep(spec.truth, seqs, decs, model, cfg, {0.1}, {0.1}), ValidationError);
}
