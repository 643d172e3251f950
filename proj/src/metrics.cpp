#include "cdhmm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include "cdhmm/assignment.hpp"
#include "cdhmm/errors.hpp"

namespace cdhmm::metrics {

Paths viterbi_paths(const hmm::SequenceDecoding& decoding) {
  Paths p;
  p.reserve(decoding.defenders.size());
  for (const auto& d : decoding.defenders) {
    if (d.posterior.path.empty()) throw ValidationError("viterbi_paths: decoding has no Viterbi path");
    p.push_back(d.posterior.path);
  }
  return p;
}

double attention(const Paths& paths, std::size_t k) {
  if (paths.empty()) return 0.0;
  const std::size_t T = paths.front().size();
  if (T == 0) return 0.0;
  std::size_t hits = 0;
  for (const auto& path : paths) hits += static_cast<std::size_t>(std::count(path.begin(), path.end(), k));
  return static_cast<double>(hits) / static_cast<double>(T);
}

double soft_attention(const std::vector<Eigen::MatrixXd>& gammas, std::size_t k) {
  if (gammas.empty() || gammas.front().rows() == 0) return 0.0;
  double total = 0.0;
  for (const auto& g : gammas) total += g.col(static_cast<Eigen::Index>(k)).sum();
  return total / static_cast<double>(gammas.front().rows());
}

std::vector<AttentionRecord> attention_records(const data::CornerSequence& seq,
                                               const hmm::SequenceDecoding& decoding, bool soft) {
  const auto atts = seq.attackers();
  std::vector<AttentionRecord> out;
  Paths paths;
  std::vector<Eigen::MatrixXd> gammas;
  if (soft) {
    for (const auto& d : decoding.defenders) gammas.push_back(d.posterior.gamma);
  } else {
    paths = viterbi_paths(decoding);
  }
  for (std::size_t k = 0; k < atts.size(); ++k) {
    out.push_back({seq.sequence_id, seq.roster[atts[k]].id, seq.defending_team_id,
                   soft ? soft_attention(gammas, k) : attention(paths, k)});
  }
  return out;
}

std::map<std::string, double> team_baselines(const std::vector<AttentionRecord>& records) {
  // team -> sequence -> (sum, count)
  std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> per;
  for (const auto& r : records) {
    auto& cell = per[r.team_id][r.sequence_id];
    cell.first += r.attention;
    ++cell.second;
  }
  std::map<std::string, double> out;
  for (const auto& [team, seqs] : per) {
    double s = 0.0;
    for (const auto& [id, cell] : seqs) s += cell.first / static_cast<double>(cell.second);
    out[team] = s / static_cast<double>(seqs.size());
  }
  return out;
}

std::map<std::string, double> context_aware_attention(const std::vector<AttentionRecord>& records) {
  const auto base = team_baselines(records);
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    auto& a = acc[r.attacker_id];
    a.first += r.attention - base.at(r.team_id);
    ++a.second;
  }
  std::map<std::string, double> out;
  for (const auto& [id, a] : acc) out[id] = a.first / static_cast<double>(a.second);
  return out;
}

double context_aware_attention(const std::vector<AttentionRecord>& records, const std::string& attacker_id) {
  const auto all = context_aware_attention(records);
  auto it = all.find(attacker_id);
  if (it == all.end()) throw ValidationError("attacker '" + attacker_id + "' has no sequences");
  return it->second;
}

double goal_weight(double d_goal) { return 1.0 - std::min(kEvasionRadius, d_goal) / kEvasionRadius; }

std::optional<double> evasion_score(const data::CornerSequence& seq, const Paths& paths, std::size_t attacker,
                                    const Vec2& goal) {
  if (!seq.first_contact) return std::nullopt;
  const auto atts = seq.attackers();
  const auto defs = seq.defenders();
  const auto it = std::find(atts.begin(), atts.end(), attacker);
  if (it == atts.end()) throw ValidationError("evasion_score: roster index is not a modelled attacker");
  const auto k = static_cast<std::size_t>(it - atts.begin());
  const std::size_t tc = seq.first_contact->frame;

  std::optional<std::size_t> t0;
  for (std::size_t t = 0; t <= tc && !t0; ++t) {
    for (const auto& path : paths) {
      if (path.at(t) == k) {
        t0 = t;
        break;
      }
    }
  }
  if (!t0) return std::nullopt;
  std::vector<std::size_t> markers;
  for (std::size_t j = 0; j < paths.size(); ++j) {
    for (std::size_t t = *t0; t <= tc; ++t) {
      if (paths[j][t] == k) {
        markers.push_back(j);
        break;
      }
    }
  }
  auto d_min = [&](std::size_t t) {
    double best = std::numeric_limits<double>::infinity();
    const Vec2& a = seq.frames[t].players[attacker].position;
    for (std::size_t j : markers) best = std::min(best, (seq.frames[t].players[defs[j]].position - a).norm());
    return best;
  };
  const double dd = d_min(tc) - d_min(*t0);
  const double d_goal = (seq.frames[tc].players[attacker].position - goal).norm();
  return goal_weight(d_goal) * dd;
}

std::optional<std::size_t> initial_assignment(const std::vector<std::size_t>& path, std::size_t attackers) {
  for (std::size_t s : path) {
    if (s < attackers) return s;
  }
  return std::nullopt;
}

double effective_number(const std::vector<double>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (!(total > 0.0)) throw ValidationError("effective_number: no assignments");
  double h = 0.0;
  for (double c : counts) {
    if (c <= 0.0) continue;
    const double p = c / total;
    h -= p * std::log(p);
  }
  return std::exp(h);
}

std::optional<double> effective_initial_assignments(const std::vector<std::vector<std::string>>& per_game) {
  double sum = 0.0;
  std::size_t games = 0;
  for (const auto& ids : per_game) {
    if (ids.empty()) continue;
    std::map<std::string, double> counts;
    for (const auto& id : ids) counts[id] += 1.0;
    std::vector<double> c;
    for (const auto& [id, n] : counts) c.push_back(n);
    sum += effective_number(c);
    ++games;
  }
  if (games == 0) return std::nullopt;
  return sum / static_cast<double>(games);
}

double switch_rate(const std::vector<std::size_t>& path, std::size_t attackers, bool include_zonal_entry) {
  if (path.size() < 2) throw ValidationError("switch_rate: need at least 2 frames");
  std::size_t switches = 0;
  for (std::size_t t = 1; t < path.size(); ++t) {
    const bool now_marking = path[t] < attackers;
    if (!now_marking || path[t] == path[t - 1]) continue;
    if (path[t - 1] < attackers || include_zonal_entry) ++switches;
  }
  return static_cast<double>(switches) / static_cast<double>(path.size() - 1);
}

std::vector<PlayerProfile> player_profiles(const data::Dataset& ds,
                                           const std::vector<hmm::SequenceDecoding>& decodings,
                                           const ProfileOptions& opt) {
  if (decodings.size() != ds.size()) throw ValidationError("player_profiles: one decoding per sequence required");
  struct Acc {
    std::size_t seen = 0;
    std::vector<double> es, switches, proximity;
    std::map<std::string, std::vector<std::string>> initial_by_game;
  };
  std::map<std::string, Acc> acc;
  std::vector<AttentionRecord> records;

  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& seq = ds[i];
    const auto& dec = decodings[i];
    const auto atts = seq.attackers();
    const auto defs = seq.defenders();
    const std::size_t K = atts.size();
    std::vector<Eigen::MatrixXd> gammas;
    for (const auto& d : dec.defenders) gammas.push_back(d.posterior.gamma);
    const Paths paths = viterbi_paths(dec);

    for (std::size_t k = 0; k < K; ++k) {
      const auto& id = seq.roster[atts[k]].id;
      records.push_back({seq.sequence_id, id, seq.defending_team_id,
                         opt.soft ? soft_attention(gammas, k) : attention(paths, k)});
      if (auto es = evasion_score(seq, paths, atts[k])) acc[id].es.push_back(*es);
    }
    for (std::size_t j = 0; j < defs.size(); ++j) {
      auto& a = acc[seq.roster[defs[j]].id];
      if (paths[j].size() >= 2) a.switches.push_back(switch_rate(paths[j], K, opt.include_zonal_entry));
      auto& game = a.initial_by_game[seq.game_id];
      if (auto first = initial_assignment(paths[j], K)) game.push_back(seq.roster[atts[*first]].id);
    }
    std::set<std::string> present;
    for (std::size_t r = 0; r < seq.roster.size(); ++r) {
      if (seq.roster[r].goalkeeper) continue;
      present.insert(seq.roster[r].id);
    }
    if (seq.first_contact) {
      const auto fc = seq.find_player(seq.first_contact->player_id);
      const auto& frame = seq.frames[seq.first_contact->frame];
      for (std::size_t r = 0; r < seq.roster.size(); ++r) {
        if (seq.roster[r].goalkeeper || r == *fc) continue;
        acc[seq.roster[r].id].proximity.push_back((frame.players[r].position - frame.players[*fc].position).norm());
      }
    }
    for (const auto& id : present) ++acc[id].seen;
  }

  const auto ca = context_aware_attention(records);
  auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  std::vector<PlayerProfile> out;
  for (const auto& [id, a] : acc) {
    if (a.seen < opt.min_sequences) continue;
    PlayerProfile p;
    p.player_id = id;
    p.sequences_observed = a.seen;
    if (auto it = ca.find(id); it != ca.end()) p.context_aware_attention = it->second;
    p.evasion_score = mean(a.es);
    p.switch_rate = mean(a.switches);
    p.first_contact_proximity = mean(a.proximity);
    std::vector<std::vector<std::string>> games;
    for (const auto& [g, ids] : a.initial_by_game) games.push_back(ids);
    p.effective_assignments = effective_initial_assignments(games);
    out.push_back(std::move(p));
  }
  return out;
}

Mat2 sqrtm_psd(const Mat2& m) {
  Eigen::SelfAdjointEigenSolver<Mat2> eig(0.5 * (m + m.transpose()));
  const Eigen::Vector2d s = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * s.asDiagonal() * eig.eigenvectors().transpose();
}

namespace {

void require_spd(const Mat2& c) {
  Eigen::SelfAdjointEigenSolver<Mat2> eig(c);
  if (!c.allFinite() || (c - c.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, c.cwiseAbs().maxCoeff()) ||
      !(eig.eigenvalues().minCoeff() > 0.0)) {
    throw ValidationError("zone covariance is not symmetric positive definite");
  }
}

}  // namespace

double wasserstein2(const hmm::ZonalGaussian& a, const hmm::ZonalGaussian& b) {
  require_spd(a.cov);
  require_spd(b.cov);
  // The matrix square roots leave ~1e-8 of roundoff for identical Gaussians.
  if (a.mean == b.mean && a.cov == b.cov) return 0.0;
  const Mat2 rb = sqrtm_psd(b.cov);
  const Mat2 cross = sqrtm_psd(rb * a.cov * rb);
  const double w2 = (a.mean - b.mean).squaredNorm() + (a.cov + b.cov - 2.0 * cross).trace();
  return std::sqrt(std::max(0.0, w2));
}

double zone_disagreement(const std::vector<hmm::ZonalGaussian>& a, const std::vector<hmm::ZonalGaussian>& b) {
  if (a.size() != b.size()) throw ValidationError("zone_disagreement: zone counts differ");
  if (a.empty()) return 0.0;
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      cost(i, j) = wasserstein2(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)]);
    }
  }
  const auto match = solve_assignment(cost);
  // Re-sum in row order so the result does not depend on solver internals.
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += cost(i, static_cast<Eigen::Index>(match.row_to_col[static_cast<std::size_t>(i)]));
  return total;
}

BetaDisagreement beta_disagreement(const std::vector<hmm::TransitionWeights>& models) {
  if (models.size() < 2) throw ValidationError("beta_disagreement: need at least two models");
  BetaDisagreement d;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < models.size(); ++a) {
    for (std::size_t b = a + 1; b < models.size(); ++b) {
      d.man += (models[a].man - models[b].man).norm();
      d.zonal += (models[a].zonal - models[b].zonal).norm();
      d.switching += (models[a].switching - models[b].switching).norm();
      ++pairs;
    }
  }
  const auto n = static_cast<double>(pairs);
  d.man /= n;
  d.zonal /= n;
  d.switching /= n;
  return d;
}

double normalized_loglik(const hmm::CdhmmParams& params, const data::Dataset& ds) {
  double ll = 0.0;
  std::size_t frames = 0;
  for (const auto& seq : ds.sequences()) {
    ll += hmm::sequence_loglik(params, seq);
    frames += seq.frames.size();
  }
  if (frames == 0) throw ValidationError("normalized_loglik: dataset has no frames");
  return ll / static_cast<double>(frames);
}

double cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("cohens_d: each sample needs at least 2 values");
  auto moments = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, ss};
  };
  const auto [ma, ssa] = moments(a);
  const auto [mb, ssb] = moments(b);
  const double pooled = std::sqrt((ssa + ssb) / static_cast<double>(a.size() + b.size() - 2));
  if (!(pooled > 0.0)) throw ValidationError("cohens_d: zero pooled variance");
  return (ma - mb) / pooled;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) r[idx[m]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman: need two equal samples of size >= 2");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (!(sxx > 0.0 && syy > 0.0)) throw ValidationError("spearman: constant sample");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<std::size_t> sensitivity_sizes(std::size_t available, std::size_t step, std::size_t max_size) {
  if (step == 0) throw ValidationError("sensitivity: step must be positive");
  const std::size_t cap = max_size ? std::min(available, max_size) : available;
  std::vector<std::size_t> out;
  for (std::size_t n = step; n <= cap; n += step) out.push_back(n);
  return out;
}

std::vector<SensitivityPoint> sensitivity(const data::Dataset& ds, const SensitivityOptions& opt) {
  if (opt.seeds < 2) throw ValidationError("sensitivity: need at least two seeds for pairwise disagreement");
  const auto sizes = sensitivity_sizes(ds.size(), opt.step, opt.max_size);
  if (sizes.empty()) throw ValidationError("sensitivity: dataset smaller than one batch");
  std::vector<SensitivityPoint> out;
  for (std::size_t n : sizes) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    const auto sub = ds.subset(idx);
    SensitivityPoint pt;
    pt.size = n;
    std::vector<hmm::CdhmmParams> models;
    for (std::size_t s = 0; s < opt.seeds; ++s) {
      auto fit = train::em_fit(sub, opt.em, opt.em.seed + s);
      pt.normalized_loglik.push_back(fit.final_loglik() / static_cast<double>(fit.frames));
      models.push_back(std::move(fit.params));
    }
    std::vector<hmm::TransitionWeights> betas;
    for (std::size_t a = 0; a < models.size(); ++a) {
      betas.push_back(models[a].beta);
      for (std::size_t b = a + 1; b < models.size(); ++b) {
        pt.zone_disagreements.push_back(zone_disagreement(models[a].zones, models[b].zones));
      }
    }
    pt.zone_disagreement_median = median(pt.zone_disagreements);
    pt.beta = beta_disagreement(betas);
    spdlog::info("sensitivity n={}: median zone disagreement {:.4f}", n, pt.zone_disagreement_median);
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace cdhmm::metrics
