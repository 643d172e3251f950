#include "cdhmm/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "cdhmm/assignment.hpp"
#include "cdhmm/covariates.hpp"
#include "cdhmm/errors.hpp"

namespace cdhmm::synth {

namespace {

using Rng = std::mt19937_64;

Vec2 standard_normal2(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double a = n(rng);
  const double b = n(rng);
  return {a, b};
}

/// A with A A^T = cov; tolerates a zero (degenerate) covariance.
Mat2 matrix_sqrt(const Mat2& cov) {
  Eigen::SelfAdjointEigenSolver<Mat2> eig(cov);
  const Eigen::Vector2d s = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * s.asDiagonal();
}

std::size_t draw(const Eigen::VectorXd& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = static_cast<std::size_t>(i);
    if (r < acc) return last;
  }
  return last;
}

Vec2 cap_speed(const Vec2& v, double cap) {
  const double s = v.norm();
  return s > cap ? Vec2(v * (cap / s)) : v;
}

struct Emission {
  Vec2 mean;
  Vec2 mean_velocity;
  Mat2 root;
};

Emission emission_for(const hmm::CdhmmParams& truth, std::size_t state, std::size_t zone,
                      const std::vector<data::PlayerState>& attackers) {
  Emission e;
  if (state == truth.states.zonal()) {
    const auto& z = truth.zones[zone];
    e.mean = z.mean;
    e.mean_velocity = Vec2::Zero();
    e.root = matrix_sqrt(z.cov);
  } else {
    const auto& a = attackers[state];
    const auto& bin = truth.grid[truth.grid.locate(a.position)];
    e.mean = hmm::marking_mean(bin, a.position, truth.goal_center);
    e.mean_velocity = bin.gamma_o * a.velocity;
    e.root = std::sqrt(std::max(bin.sigma2, 0.0)) * Mat2::Identity();
  }
  return e;
}

void simulate_attackers(const ScenarioSpec& spec, Rng& rng, std::vector<std::vector<data::PlayerState>>& out) {
  const std::size_t K = spec.truth.states.attackers;
  const auto& m = spec.motion;
  std::uniform_real_distribution<double> ux(m.box_min.x(), m.box_max.x());
  std::uniform_real_distribution<double> uy(m.box_min.y(), m.box_max.y());
  const double dt = kFrameInterval;
  out.assign(spec.frames, std::vector<data::PlayerState>(K));
  for (std::size_t k = 0; k < K; ++k) {
    Vec2 p(ux(rng), uy(rng));
    const Vec2 target(ux(rng), uy(rng));
    Vec2 v = cap_speed(standard_normal2(rng), m.speed_cap);
    for (std::size_t t = 0; t < spec.frames; ++t) {
      out[t][k] = {p, v};
      const Vec2 shock = m.noise * std::sqrt(dt) * standard_normal2(rng);
      if (m.kind == MotionSpec::Kind::OrnsteinUhlenbeck) {
        v += m.reversion * ((target - p) - v) * dt + shock;
      } else {
        v += shock;
      }
      v = cap_speed(v, m.speed_cap);
      p += v * dt;
    }
  }
}

}  // namespace

void ScenarioSpec::validate() const {
  truth.validate();
  if (defenders != truth.zones.size()) throw ValidationError("scenario: defenders must equal the zone count");
  if (frames < 25 || frames > 150) throw ValidationError("scenario: frames must lie in [25, 150]");
  if (delivery_frame >= frames) throw ValidationError("scenario: delivery_frame out of range");
  if (!(motion.speed_cap > 0.0) || motion.speed_cap > 9.0) {
    throw ValidationError("scenario: attacker speed cap must lie in (0, 9] m/s");
  }
  if (!(noise_correlation >= 0.0 && noise_correlation < 1.0)) {
    throw ValidationError("scenario: noise_correlation must lie in [0, 1)");
  }
}

hmm::CdhmmParams truth_params(const TruthOptions& o) {
  const std::size_t K = o.attackers;
  hmm::CdhmmParams p;
  p.team_id = "SYN";
  p.states.attackers = K;
  const std::size_t per_row = (K + 1) / 2;
  for (std::size_t z = 0; z < K; ++z) {
    const std::size_t row = z / per_row;
    const std::size_t col = z % per_row;
    const double y = per_row == 1 ? 0.0 : -8.0 + 16.0 * static_cast<double>(col) / static_cast<double>(per_row - 1);
    p.zones.push_back({Vec2(row == 0 ? -8.0 : -3.5, y), o.zone_variance * Mat2::Identity()});
  }
  p.grid = hmm::MarkingBinGrid::penalty_area({}, hmm::MarkingBin{o.gamma_o, o.marking_sigma2});
  p.initial.assign(K + 1, (1.0 - o.zonal_initial) / static_cast<double>(K));
  p.initial[K] = o.zonal_initial;
  p.beta.man << 2.5, -0.8, 0, 0, 0, 0, 0, 0;
  p.beta.zonal << 3.0, -0.5, 0, 0, 0, 0;
  p.beta.switching << 0, -1.5, 0, 0, 0, 0, 0, 0;
  p.standardizer.man = {{8.0, 0.3, 2.0, 0.0, 0.0, 1.83, 78.0}, {5.0, 0.5, 2.0, 0.6, 3.0, 0.07, 8.0}};
  p.standardizer.switching = p.standardizer.man;
  p.standardizer.zonal = {{2.0, 1.0, 0.0, 1.83, 78.0}, {2.0, 2.0, 2.0, 0.07, 8.0}};
  return p;
}

GeneratedSequence generate_sequence(const ScenarioSpec& spec, std::uint64_t seed, std::string sequence_id,
                                    bool record_kernel) {
  spec.validate();
  const auto& truth = spec.truth;
  const std::size_t K = truth.states.attackers;
  const std::size_t J = spec.defenders;
  const std::size_t N = K + 1;
  const std::size_t T = spec.frames;
  Rng rng(seed);

  GeneratedSequence g;
  auto& seq = g.sequence;
  seq.sequence_id = sequence_id.empty() ? "syn-" + std::to_string(seed) : std::move(sequence_id);
  seq.game_id = seq.sequence_id;
  seq.delivery_type = truth.delivery_type;
  seq.defending_team_id = truth.team_id;
  seq.canonical = true;
  seq.delivery_frame = spec.delivery_frame;

  std::uniform_real_distribution<double> height(1.70, 1.95);
  std::uniform_real_distribution<double> weight(65.0, 90.0);
  auto add_player = [&](std::string id, data::Team team, bool gk) {
    data::Player pl;
    pl.id = std::move(id);
    pl.team = team;
    pl.goalkeeper = gk;
    pl.height = height(rng);
    pl.weight = weight(rng);
    seq.roster.push_back(pl);
    return seq.roster.size() - 1;
  };
  std::vector<std::size_t> def_idx, att_idx;
  for (std::size_t j = 0; j < J; ++j) def_idx.push_back(add_player("D" + std::to_string(j + 1), data::Team::Defending, false));
  const std::size_t def_gk = spec.goalkeepers ? add_player("DGK", data::Team::Defending, true) : 0;
  for (std::size_t k = 0; k < K; ++k) att_idx.push_back(add_player("A" + std::to_string(k + 1), data::Team::Attacking, false));
  const std::size_t att_gk = spec.goalkeepers ? add_player("AGK", data::Team::Attacking, true) : 0;

  std::vector<std::vector<data::PlayerState>> attackers;
  simulate_attackers(spec, rng, attackers);

  g.states.assign(J, std::vector<std::size_t>(T, 0));
  g.zones.assign(J, 0);
  if (record_kernel) g.kernel.assign(J, {});
  std::vector<std::vector<data::PlayerState>> defenders(T, std::vector<data::PlayerState>(J));
  std::vector<Vec2> noise(J);
  const double rho = spec.noise_correlation;
  const double innov = std::sqrt(1.0 - rho * rho);

  // Frame 0, redrawn until the assignment is consistent with the sampled zones.
  Eigen::VectorXd pi(static_cast<Eigen::Index>(N));
  for (std::size_t n = 0; n < N; ++n) pi[static_cast<Eigen::Index>(n)] = truth.initial[n];
  std::vector<Vec2> zone_means;
  for (const auto& z : truth.zones) zone_means.push_back(z.mean);
  bool consistent = false;
  for (std::size_t attempt = 0; attempt < spec.max_rejections && !consistent; ++attempt) {
    std::vector<Vec2> d0(J);
    for (std::size_t j = 0; j < J; ++j) {
      g.states[j][0] = draw(pi, rng);
      noise[j] = standard_normal2(rng);
      const auto e = emission_for(truth, g.states[j][0], j, attackers[0]);
      d0[j] = e.mean + e.root * noise[j];
      defenders[0][j] = {d0[j], e.mean_velocity};
    }
    const auto a = assign_zones(d0, zone_means);
    consistent = true;
    for (std::size_t j = 0; j < J; ++j) {
      if (g.states[j][0] == truth.states.zonal() && a.row_to_col[j] != j) consistent = false;
    }
    if (consistent) g.zones = a.row_to_col;
  }
  if (!consistent) throw Error("generate_sequence: no consistent zone assignment after rejection sampling");

  std::vector<double> man(K * features::kPairDim);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < J; ++j) {
      const auto& prev = defenders[t - 1][j];
      for (std::size_t k = 0; k < K; ++k) {
        auto x = features::pair_covariates(prev, attackers[t - 1][k], seq.roster[att_idx[k]]);
        features::apply_standardizer(x, truth.standardizer.man);
        std::copy(x.begin(), x.end(), man.begin() + static_cast<std::ptrdiff_t>(k * features::kPairDim));
      }
      std::vector<double> sw = man;
      if (!(truth.standardizer.switching == truth.standardizer.man)) {
        for (std::size_t k = 0; k < K; ++k) {
          auto x = features::pair_covariates(prev, attackers[t - 1][k], seq.roster[att_idx[k]]);
          features::apply_standardizer(x, truth.standardizer.switching);
          std::copy(x.begin(), x.end(), sw.begin() + static_cast<std::ptrdiff_t>(k * features::kPairDim));
        }
      }
      const auto& zone = truth.zones[g.zones[j]];
      auto zx = features::zonal_covariates(prev, seq.roster[def_idx[j]], zone.mean, zone.cov);
      features::apply_standardizer(zx, truth.standardizer.zonal);
      const Eigen::MatrixXd P = hmm::transition_matrix(truth.beta, man, sw, zx, K);
      const Eigen::VectorXd row = P.row(static_cast<Eigen::Index>(g.states[j][t - 1])).transpose();
      if (record_kernel) g.kernel[j].push_back(row);
      g.states[j][t] = draw(row, rng);

      noise[j] = rho * noise[j] + innov * standard_normal2(rng);
      const auto e = emission_for(truth, g.states[j][t], g.zones[j], attackers[t]);
      defenders[t][j] = {e.mean + e.root * noise[j], e.mean_velocity};
    }
  }

  const Vec2 goal = truth.goal_center;
  seq.frames.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto& fr = seq.frames[t];
    fr.time = static_cast<double>(t) * kFrameInterval;
    fr.players.resize(seq.roster.size());
    for (std::size_t j = 0; j < J; ++j) fr.players[def_idx[j]] = defenders[t][j];
    for (std::size_t k = 0; k < K; ++k) fr.players[att_idx[k]] = attackers[t][k];
    if (spec.goalkeepers) {
      fr.players[def_gk] = {Vec2(goal.x() + 0.5, 0.0), Vec2::Zero()};
      fr.players[att_gk] = {Vec2(70.0, 0.0), Vec2::Zero()};
    }
  }

  const std::size_t fc = std::min(T - 1, spec.delivery_frame + 20);
  std::size_t nearest = 0;
  for (std::size_t k = 1; k < K; ++k) {
    if ((attackers[fc][k].position - goal).norm() < (attackers[fc][nearest].position - goal).norm()) nearest = k;
  }
  seq.first_contact = data::FirstContact{fc, seq.roster[att_idx[nearest]].id};
  data::validate(seq);
  return g;
}

std::vector<GeneratedSequence> generate_dataset(const ScenarioSpec& spec, std::size_t count, std::uint64_t seed,
                                                const std::string& id_prefix) {
  std::vector<GeneratedSequence> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(i)};
    std::uint64_t s = 0;
    std::uint32_t words[2];
    ss.generate(words, words + 2);
    s = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    char id[32];
    std::snprintf(id, sizeof id, "-%04zu", i);
    out.push_back(generate_sequence(spec, s, id_prefix + id));
  }
  return out;
}

data::Dataset to_dataset(const std::vector<GeneratedSequence>& generated) {
  std::vector<data::CornerSequence> seqs;
  seqs.reserve(generated.size());
  for (const auto& g : generated) seqs.push_back(g.sequence);
  return data::Dataset(std::move(seqs));
}

void write_latents(std::ostream& out, const std::vector<GeneratedSequence>& generated) {
  for (const auto& g : generated) {
    nlohmann::ordered_json rec;
    rec["schema"] = "cdhmm-latents/1";
    rec["sequence_id"] = g.sequence.sequence_id;
    std::vector<std::string> ids;
    for (auto d : g.sequence.defenders()) ids.push_back(g.sequence.roster[d].id);
    rec["defenders"] = ids;
    rec["zones"] = g.zones;
    rec["states"] = g.states;
    out << rec.dump() << '\n';
  }
}

void save_latents(const std::filesystem::path& path, const std::vector<GeneratedSequence>& generated) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_latents(out, generated);
}

std::vector<LatentRecord> load_latents(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<LatentRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LatentRecord r;
      r.sequence_id = j.at("sequence_id").get<std::string>();
      r.defender_ids = j.at("defenders").get<std::vector<std::string>>();
      r.zones = j.at("zones").get<std::vector<std::size_t>>();
      r.states = j.at("states").get<std::vector<std::vector<std::size_t>>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("latent file line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

EnumeratedPosterior enumerate_posterior(const hmm::TrackModel& tm) {
  const std::size_t T = tm.frames();
  const std::size_t N = tm.states();
  if (T == 0 || N == 0) throw ValidationError("enumerate_posterior: empty track");
  std::size_t paths = 1;
  for (std::size_t t = 0; t < T; ++t) {
    if (paths > 1024 / N) throw ValidationError("enumerate_posterior: N^T exceeds 1024");
    paths *= N;
  }

  std::vector<std::vector<std::size_t>> all(paths, std::vector<std::size_t>(T));
  std::vector<double> lp(paths);
  EnumeratedPosterior out;
  out.best_log_prob = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < paths; ++p) {
    // Most significant digit is frame 0, so paths come out in lexicographic order.
    std::size_t code = p;
    for (std::size_t t = T; t-- > 0;) {
      all[p][t] = code % N;
      code /= N;
    }
    const auto& s = all[p];
    double v = tm.log_initial[static_cast<Eigen::Index>(s[0])] +
               tm.log_emission(0, static_cast<Eigen::Index>(s[0]));
    for (std::size_t t = 1; t < T; ++t) {
      v += tm.log_transition[t - 1](static_cast<Eigen::Index>(s[t - 1]), static_cast<Eigen::Index>(s[t])) +
           tm.log_emission(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s[t]));
    }
    lp[p] = v;
    if (v > out.best_log_prob) {
      out.best_log_prob = v;
      out.best_path = s;
    }
  }
  const double top = *std::max_element(lp.begin(), lp.end());
  if (!std::isfinite(top)) throw NumericalError("enumerate_posterior: every path has zero probability");
  double total = 0.0;
  for (double v : lp) total += std::exp(v - top);
  out.loglik = top + std::log(total);

  const auto Ti = static_cast<Eigen::Index>(T);
  const auto Ni = static_cast<Eigen::Index>(N);
  out.gamma = Eigen::MatrixXd::Zero(Ti, Ni);
  out.xi.assign(T - 1, Eigen::MatrixXd::Zero(Ni, Ni));
  for (std::size_t p = 0; p < paths; ++p) {
    const double w = std::exp(lp[p] - out.loglik);
    const auto& s = all[p];
    for (std::size_t t = 0; t < T; ++t) {
      out.gamma(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s[t])) += w;
      if (t + 1 < T) out.xi[t](static_cast<Eigen::Index>(s[t]), static_cast<Eigen::Index>(s[t + 1])) += w;
    }
  }
  return out;
}

EnumeratedPosterior enumerate_posterior(const hmm::CdhmmParams& params, const data::CornerSequence& seq,
                                        std::size_t j) {
  hmm::check_compatible(params, seq);
  const auto zones = hmm::sequence_zones(params, seq);
  const hmm::SequenceCovariates cov(seq, params.standardizer);
  return enumerate_posterior(hmm::build_track(params, seq, cov, j, zones.row_to_col.at(j)));
}

}  // namespace cdhmm::synth
