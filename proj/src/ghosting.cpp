#include "cdhmm/ghosting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "cdhmm/errors.hpp"

namespace cdhmm::ghost {

namespace {

double logistic(double a) { return a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a)); }

std::size_t attacker_roster(const data::CornerSequence& seq, std::size_t k) { return seq.attackers().at(k); }

void require(const OutcomeModel& m, Capability c) {
  if (!m.supports(c)) throw ValidationError("outcome model lacks the " + to_string(c) + " capability");
}

}  // namespace

std::string to_string(Capability c) {
  switch (c) {
    case Capability::Reception: return "reception";
    case Capability::Threat: return "threat";
    case Capability::Recovery: return "recovery";
  }
  return "unknown";
}

Scene Scene::observed(const data::CornerSequence& seq, std::size_t frame) {
  Scene s;
  s.seq = &seq;
  s.frame = frame;
  const auto& players = seq.frames.at(frame).players;
  s.positions.reserve(players.size());
  for (const auto& p : players) s.positions.push_back(p.position);
  return s;
}

Scene Scene::with(std::size_t roster_index, const Vec2& position) const {
  Scene s = *this;
  s.positions.at(roster_index) = position;
  return s;
}

FunctionOutcomeModel::FunctionOutcomeModel(Fn fn, std::vector<Capability> capabilities, Direction direction)
    : fn_(std::move(fn)), capabilities_(std::move(capabilities)), direction_(direction) {}

bool FunctionOutcomeModel::supports(Capability c) const {
  return std::find(capabilities_.begin(), capabilities_.end(), c) != capabilities_.end();
}

double FunctionOutcomeModel::probability(Capability c, const Scene& scene, std::size_t player) const {
  require(*this, c);
  return fn_(c, scene, player);
}

BaselineReceptionModel::BaselineReceptionModel(Weights w) : w_(std::move(w)), calibrated_(true) {
  if (!(w_.opponent >= 0.0)) throw ValidationError("baseline reception: nearest-opponent weight must be >= 0");
  if (!std::isfinite(w_.bias) || !std::isfinite(w_.target) || !std::isfinite(w_.goal) ||
      !std::isfinite(w_.opponent) || !w_.delivery_target.allFinite()) {
    throw ValidationError("baseline reception: non-finite weight");
  }
}

BaselineReceptionModel BaselineReceptionModel::reference() {
  Weights w;
  w.bias = 1.0;
  w.target = -0.25;
  w.opponent = 0.8;
  w.goal = -0.05;
  w.calibration = "reference weights (hand-set)";
  return BaselineReceptionModel(w);
}

BaselineReceptionModel BaselineReceptionModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("version").get<std::string>() != "baseline-reception/1") {
      throw ValidationError("unsupported reception model version " + j.at("version").dump());
    }
    Weights w;
    w.bias = j.at("bias").get<double>();
    w.target = j.at("w_target").get<double>();
    w.opponent = j.at("w_opponent").get<double>();
    w.goal = j.at("w_goal").get<double>();
    const auto t = j.at("delivery_target").get<std::vector<double>>();
    if (t.size() != 2) throw ValidationError("delivery_target must have 2 entries");
    w.delivery_target = Vec2(t[0], t[1]);
    w.calibration = j.value("calibration", "");
    return BaselineReceptionModel(w);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void BaselineReceptionModel::save(const std::filesystem::path& path) const {
  if (!calibrated_) throw ValidationError("cannot save an uncalibrated reception model");
  nlohmann::ordered_json j;
  j["version"] = "baseline-reception/1";
  j["bias"] = w_.bias;
  j["w_target"] = w_.target;
  j["w_opponent"] = w_.opponent;
  j["w_goal"] = w_.goal;
  j["delivery_target"] = {w_.delivery_target.x(), w_.delivery_target.y()};
  j["calibration"] = w_.calibration;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

std::vector<double> BaselineReceptionModel::distribution(const Scene& scene) const {
  if (!calibrated_) throw ValidationError("baseline reception model is not calibrated");
  const auto& roster = scene.seq->roster;
  const Vec2 goal = PitchGeometry{}.goal_center();
  std::vector<double> score(roster.size());
  double total = 0.0;
  for (std::size_t r = 0; r < roster.size(); ++r) {
    const Vec2& p = scene.positions[r];
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < roster.size(); ++o) {
      if (roster[o].team != roster[r].team) nearest = std::min(nearest, (scene.positions[o] - p).norm());
    }
    if (!std::isfinite(nearest)) nearest = 0.0;
    const double a = w_.bias + w_.target * (p - w_.delivery_target).norm() + w_.opponent * nearest +
                     w_.goal * (p - goal).norm();
    score[r] = logistic(a);
    total += score[r];
  }
  for (double& s : score) s /= total;
  return score;
}

double BaselineReceptionModel::probability(Capability c, const Scene& scene, std::size_t player) const {
  require(*this, c);
  return distribution(scene).at(player);
}

void GhostConfig::validate() const {
  if (mc_samples < 1) throw ValidationError("mc_samples must be at least 1");
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  if (!(theta > 0.0 && theta < 1.0)) throw ValidationError("theta must lie in (0, 1)");
}

Vec2 ghost_mean(const hmm::CdhmmParams& params, const data::CornerSequence& seq, std::size_t t, std::size_t k) {
  const Vec2& O = seq.frames.at(t).players[attacker_roster(seq, k)].position;
  return hmm::marking_mean(params.grid[params.grid.locate(O)], O, params.goal_center);
}

std::vector<Vec2> sample_ghost(const hmm::CdhmmParams& params, const data::CornerSequence& seq, std::size_t t,
                               std::size_t j, std::size_t k, std::size_t n, std::uint64_t seed) {
  if (k >= params.states.attackers) throw ValidationError("sample_ghost: role must be a man-marking state");
  const Vec2& O = seq.frames.at(t).players[attacker_roster(seq, k)].position;
  const auto& bin = params.grid[params.grid.locate(O)];
  const Vec2 mean = hmm::marking_mean(bin, O, params.goal_center);
  const double sd = std::sqrt(std::max(bin.sigma2, 0.0));
  std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k)};
  std::mt19937_64 rng(ss);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec2> out(n);
  for (auto& x : out) {
    const double a = normal(rng);
    const double b = normal(rng);
    x = mean + sd * Vec2(a, b);
  }
  return out;
}

double expected_ghost_value(const std::function<double(const Vec2&)>& f, const std::vector<Vec2>& samples) {
  if (samples.empty()) throw ValidationError("expected_ghost_value: no samples");
  double s = 0.0;
  for (const auto& x : samples) s += f(x);
  return s / static_cast<double>(samples.size());
}

double point_ghost_value(const std::function<double(const Vec2&)>& f, const Vec2& mean) { return f(mean); }

double obpr(const Eigen::MatrixXd& gamma, const Eigen::MatrixXd& reception) {
  if (gamma.rows() != reception.rows() || gamma.cols() < reception.cols()) {
    throw ValidationError("obpr: occupancy and reception shapes differ");
  }
  double s = 0.0;
  for (Eigen::Index t = 0; t < reception.rows(); ++t) {
    for (Eigen::Index k = 0; k < reception.cols(); ++k) s += gamma(t, k) * (1.0 - reception(t, k));
  }
  return s;
}

double obpr(const data::CornerSequence& seq, const Eigen::MatrixXd& gamma, const OutcomeModel& model) {
  require(model, Capability::Reception);
  const auto atts = seq.attackers();
  Eigen::MatrixXd rec(gamma.rows(), static_cast<Eigen::Index>(atts.size()));
  for (Eigen::Index t = 0; t < gamma.rows(); ++t) {
    const auto scene = Scene::observed(seq, static_cast<std::size_t>(t));
    for (std::size_t k = 0; k < atts.size(); ++k) {
      rec(t, static_cast<Eigen::Index>(k)) = model.probability(Capability::Reception, scene, atts[k]);
    }
  }
  return obpr(gamma, rec);
}

Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& occ, double tau) {
  if (!(tau > 0.0)) throw ValidationError("attention_weights: tau must be positive");
  Eigen::MatrixXd w(occ.rows(), occ.cols());
  for (Eigen::Index k = 0; k < occ.cols(); ++k) {
    const double top = occ.col(k).maxCoeff();
    double total = 0.0;
    for (Eigen::Index j = 0; j < occ.rows(); ++j) {
      w(j, k) = std::exp((occ(j, k) - top) / tau);
      total += w(j, k);
    }
    w.col(k) /= total;
  }
  return w;
}

std::vector<std::size_t> feasible_set(const Eigen::MatrixXd& w, std::size_t j, double theta) {
  std::vector<std::size_t> out;
  for (Eigen::Index k = 0; k < w.cols(); ++k) {
    if (w(static_cast<Eigen::Index>(j), k) >= theta) out.push_back(static_cast<std::size_t>(k));
  }
  return out;
}

Eigen::MatrixXd frame_occupancy(const hmm::SequenceDecoding& decoding, std::size_t t, std::size_t attackers,
                                OccupancySource source) {
  const auto J = static_cast<Eigen::Index>(decoding.defenders.size());
  Eigen::MatrixXd occ(J, static_cast<Eigen::Index>(attackers));
  for (Eigen::Index j = 0; j < J; ++j) {
    const auto& post = decoding.defenders[static_cast<std::size_t>(j)].posterior;
    const Eigen::MatrixXd& m = source == OccupancySource::Smoothed ? post.gamma : post.filtered;
    occ.row(j) = m.row(static_cast<Eigen::Index>(t)).head(static_cast<Eigen::Index>(attackers));
  }
  return occ;
}

std::optional<GhostEvaluation> group_coverage_advantage(const hmm::CdhmmParams& params,
                                                        const data::CornerSequence& seq, std::size_t t,
                                                        std::size_t j, const Eigen::MatrixXd& occupancy,
                                                        const OutcomeModel& model, const GhostConfig& cfg) {
  cfg.validate();
  require(model, Capability::Reception);
  const auto w = attention_weights(occupancy, cfg.tau);
  const auto feasible = feasible_set(w, j, cfg.theta);
  if (feasible.empty()) return std::nullopt;

  const auto defs = seq.defenders();
  const auto atts = seq.attackers();
  const std::size_t d = defs.at(j);
  const Scene base = Scene::observed(seq, t);
  auto group = [&](const Vec2& x) {
    const Scene s = base.with(d, x);
    double g = 0.0;
    for (std::size_t k : feasible) g += model.probability(Capability::Reception, s, atts[k]);
    return g;
  };

  GhostEvaluation ev;
  ev.sequence_id = seq.sequence_id;
  ev.frame = t;
  ev.defender = j;
  ev.defender_id = seq.roster[d].id;
  ev.feasible = feasible;
  ev.observed = group(base.positions[d]);
  const bool maximise = model.direction() == Direction::Maximize;
  for (std::size_t i = 0; i < feasible.size(); ++i) {
    const auto samples = sample_ghost(params, seq, t, j, feasible[i], cfg.mc_samples, cfg.seed);
    const double e = expected_ghost_value(group, samples);
    ev.role_expectations.push_back(e);
    const bool better = maximise ? e > ev.optimal : e < ev.optimal;
    if (i == 0 || better) {
      ev.optimal = e;
      ev.optimal_role = feasible[i];
    }
  }
  ev.gca = ev.optimal - ev.observed;
  return ev;
}

DeltaMetrics delta_metrics(const hmm::CdhmmParams& params, const data::CornerSequence& seq, std::size_t t,
                           std::size_t j, std::size_t k, const std::vector<const OutcomeModel*>& models,
                           const GhostConfig& cfg) {
  cfg.validate();
  auto find = [&](Capability c) -> const OutcomeModel* {
    for (const auto* m : models) {
      if (m && m->supports(c)) return m;
    }
    return nullptr;
  };
  const OutcomeModel* reception = find(Capability::Reception);
  if (!reception) throw ValidationError("delta_metrics: no outcome model provides reception");
  const OutcomeModel* recovery = find(Capability::Recovery);
  const OutcomeModel* threat = find(Capability::Threat);

  const std::size_t d = seq.defenders().at(j);
  const std::size_t a = attacker_roster(seq, k);
  const Scene base = Scene::observed(seq, t);
  const Vec2 observed = base.positions[d];
  const auto samples = sample_ghost(params, seq, t, j, k, cfg.mc_samples, cfg.seed);

  auto on_attacker = [&](const OutcomeModel& m, Capability c) {
    return [&m, c, &base, d, a](const Vec2& x) { return m.probability(c, base.with(d, x), a); };
  };
  auto on_defender = [&](const OutcomeModel& m, Capability c) {
    return [&m, c, &base, d](const Vec2& x) { return m.probability(c, base.with(d, x), d); };
  };

  DeltaMetrics out;
  {
    const auto f = on_attacker(*reception, Capability::Reception);
    out.reception = expected_ghost_value(f, samples) - f(observed);
  }
  if (recovery) {
    const auto f = on_defender(*recovery, Capability::Recovery);
    out.recovery = f(observed) - expected_ghost_value(f, samples);
  }
  if (threat) {
    const auto fa = on_attacker(*threat, Capability::Threat);
    out.threat = expected_ghost_value(fa, samples) - fa(observed);
    const auto fd = on_defender(*threat, Capability::Threat);
    out.counterattack = fd(observed) - expected_ghost_value(fd, samples);
  }
  return out;
}

std::vector<GhostEvaluation> evaluate_sequence(const hmm::CdhmmParams& params, const data::CornerSequence& seq,
                                               const hmm::SequenceDecoding& decoding, const OutcomeModel& model,
                                               const GhostConfig& cfg) {
  cfg.validate();
  const std::size_t K = params.states.attackers;
  std::vector<std::size_t> frames;
  if (cfg.all_frames) {
    for (std::size_t t = 0; t < seq.frames.size(); ++t) frames.push_back(t);
  } else {
    frames.push_back(seq.delivery_frame);
  }
  std::vector<GhostEvaluation> out;
  for (std::size_t t : frames) {
    const auto occ = frame_occupancy(decoding, t, K, cfg.occupancy);
    for (std::size_t j = 0; j < decoding.defenders.size(); ++j) {
      if (auto ev = group_coverage_advantage(params, seq, t, j, occ, model, cfg)) out.push_back(std::move(*ev));
    }
  }
  return out;
}

std::vector<SweepRow> sweep(const hmm::CdhmmParams& params, const std::vector<data::CornerSequence>& seqs,
                            const std::vector<hmm::SequenceDecoding>& decodings, const OutcomeModel& model,
                            GhostConfig cfg, const std::vector<double>& taus, const std::vector<double>& thetas) {
  if (seqs.size() != decodings.size()) throw ValidationError("sweep: one decoding per sequence required");
  std::vector<SweepRow> rows;
  for (double tau : taus) {
    for (double theta : thetas) {
      cfg.tau = tau;
      cfg.theta = theta;
      SweepRow row{tau, theta, 0, 0.0, 0.0};
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        for (const auto& ev : evaluate_sequence(params, seqs[i], decodings[i], model, cfg)) {
          ++row.evaluations;
          row.mean_feasible += static_cast<double>(ev.feasible.size());
          row.mean_gca += ev.gca;
        }
      }
      if (row.evaluations) {
        row.mean_feasible /= static_cast<double>(row.evaluations);
        row.mean_gca /= static_cast<double>(row.evaluations);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace cdhmm::ghost
