#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <random>
#include <string>
#include <vector>

#include "cdhmm/inference.hpp"
#include "cdhmm/model.hpp"
#include "cdhmm/synthgen.hpp"
#include "cdhmm/tracking_data.hpp"

namespace cdhmm::fixtures {

/// A canonical sequence with J defenders, K attackers (no goalkeepers), T frames,
/// all positions drawn uniformly over the box in front of goal.
inline data::CornerSequence random_sequence(std::size_t J, std::size_t K, std::size_t T, std::uint64_t seed,
                                            const std::string& id = "seq", const std::string& team = "T1",
                                            data::DeliveryType delivery = data::DeliveryType::Inswing) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-10.0, 5.0), uy(-12.0, 12.0), uv(-3.0, 3.0);
  data::CornerSequence s;
  s.sequence_id = id;
  s.game_id = id;
  s.defending_team_id = team;
  s.delivery_type = delivery;
  s.delivery_frame = 0;
  for (std::size_t j = 0; j < J; ++j) {
    s.roster.push_back({id + "-d" + std::to_string(j), data::Team::Defending, false, 1.8, 78.0});
  }
  for (std::size_t k = 0; k < K; ++k) {
    s.roster.push_back({id + "-a" + std::to_string(k), data::Team::Attacking, false, 1.85, 80.0});
  }
  for (std::size_t t = 0; t < T; ++t) {
    data::Frame f;
    f.time = static_cast<double>(t) * kFrameInterval;
    for (std::size_t r = 0; r < J + K; ++r) {
      f.players.push_back({Vec2(ux(rng), uy(rng)), Vec2(uv(rng), uv(rng))});
    }
    s.frames.push_back(std::move(f));
  }
  return s;
}

/// Parameters with K attackers and `zones` zones spread along the six-yard line,
/// random weights of scale `beta_scale` and a random initial distribution.
inline hmm::CdhmmParams random_params(std::size_t K, std::size_t zones, std::uint64_t seed,
                                      double beta_scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  hmm::CdhmmParams p;
  p.team_id = "T1";
  p.states.attackers = K;
  for (std::size_t z = 0; z < zones; ++z) {
    hmm::ZonalGaussian g;
    g.mean = Vec2(-6.0 + n01(rng), -8.0 + 16.0 * (static_cast<double>(z) + 0.5) / static_cast<double>(zones));
    g.cov = Mat2::Identity() * (2.0 + u(rng));
    g.cov(0, 1) = g.cov(1, 0) = 0.3 * u(rng);
    p.zones.push_back(g);
  }
  p.grid = hmm::MarkingBinGrid::penalty_area({}, hmm::MarkingBin{0.8, 4.0});
  for (auto& c : p.grid.cells()) {
    c.gamma_o = 0.5 + 0.5 * u(rng);
    c.sigma2 = 2.0 + 4.0 * u(rng);
  }
  for (Eigen::Index i = 0; i < p.beta.man.size(); ++i) p.beta.man[i] = beta_scale * n01(rng);
  for (Eigen::Index i = 0; i < p.beta.zonal.size(); ++i) p.beta.zonal[i] = beta_scale * n01(rng);
  for (Eigen::Index i = 0; i < p.beta.switching.size(); ++i) p.beta.switching[i] = beta_scale * n01(rng);
  double total = 0.0;
  for (std::size_t n = 0; n <= K; ++n) {
    p.initial.push_back(u(rng));
    total += p.initial.back();
  }
  for (double& v : p.initial) v /= total;
  p.goal_center = PitchGeometry{}.goal_center();
  p.standardizer = synth::truth_params().standardizer;
  // Inverse-distance features can reach 1e6; a wide scale keeps transitions non-degenerate.
  p.standardizer.man.stddev[1] = p.standardizer.switching.stddev[1] = 1e3;
  p.standardizer.zonal.stddev[1] = 1e3;
  return p;
}

/// A track with arbitrary (not covariate-derived) row-stochastic transitions.
inline hmm::TrackModel random_track(std::size_t T, std::size_t N, std::mt19937_64& rng, bool structural_zero) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  hmm::TrackModel m;
  m.log_initial.resize(static_cast<Eigen::Index>(N));
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) total += (m.log_initial[static_cast<Eigen::Index>(n)] = u(rng));
  m.log_initial = (m.log_initial / total).array().log();
  m.log_emission.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(N));
  for (Eigen::Index t = 0; t < m.log_emission.rows(); ++t) {
    for (Eigen::Index n = 0; n < m.log_emission.cols(); ++n) m.log_emission(t, n) = -3.0 + 2.0 * n01(rng);
  }
  for (std::size_t t = 0; t + 1 < T; ++t) {
    Eigen::MatrixXd A(N, N);
    for (std::size_t i = 0; i < N; ++i) {
      double row = 0.0;
      for (std::size_t l = 0; l < N; ++l) {
        A(i, l) = (structural_zero && i + 1 < N && l + 1 == N) ? 0.0 : u(rng);
        row += A(i, l);
      }
      A.row(static_cast<Eigen::Index>(i)) /= row;
    }
    m.log_transition.push_back(A.array().log().matrix());
  }
  return m;
}

struct PathOracle {
  Eigen::MatrixXd gamma;
  std::vector<Eigen::MatrixXd> xi;
  double loglik = 0.0;
  double best_log_prob = -std::numeric_limits<double>::infinity();
};

/// Brute force over all N^T paths in linear space.
inline PathOracle enumerate_paths(const hmm::TrackModel& m) {
  const std::size_t T = m.frames(), N = m.states();
  PathOracle o;
  o.gamma = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(N));
  o.xi.assign(T > 0 ? T - 1 : 0, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N)));
  std::vector<std::size_t> path(T, 0);
  double total = 0.0;
  std::vector<std::pair<std::vector<std::size_t>, double>> all;
  while (true) {
    double lp = m.log_initial(static_cast<Eigen::Index>(path[0])) + m.log_emission(0, static_cast<Eigen::Index>(path[0]));
    for (std::size_t t = 1; t < T; ++t) {
      lp += m.log_transition[t - 1](static_cast<Eigen::Index>(path[t - 1]), static_cast<Eigen::Index>(path[t])) +
            m.log_emission(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(path[t]));
    }
    o.best_log_prob = std::max(o.best_log_prob, lp);
    const double p = std::exp(lp);
    total += p;
    all.emplace_back(path, p);
    std::size_t t = 0;
    while (t < T && ++path[t] == N) path[t++] = 0;
    if (t == T) break;
  }
  for (const auto& [pth, p] : all) {
    for (std::size_t t = 0; t < T; ++t) {
      o.gamma(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(pth[t])) += p / total;
      if (t + 1 < T) o.xi[t](static_cast<Eigen::Index>(pth[t]), static_cast<Eigen::Index>(pth[t + 1])) += p / total;
    }
  }
  o.loglik = std::log(total);
  return o;
}

inline synth::ScenarioSpec small_scenario(std::size_t K, std::size_t frames, double sigma2 = 0.25) {
  synth::TruthOptions o;
  o.attackers = K;
  o.marking_sigma2 = sigma2;
  synth::ScenarioSpec spec;
  spec.truth = synth::truth_params(o);
  spec.defenders = spec.truth.zones.size();
  spec.frames = frames;
  spec.delivery_frame = std::min<std::size_t>(25, frames / 3);
  return spec;
}

}  // namespace cdhmm::fixtures
