#include "cdhmm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/LU>

#include "cdhmm/errors.hpp"

namespace cdhmm::hmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Eigen's packet exp returns a denormal for -inf; structural zeros must stay exact.
template <typename Derived>
auto exact_exp(const Eigen::ArrayBase<Derived>& a) {
  return a.unaryExpr([](double v) { return std::exp(v); });
}

double dot(std::span<const double> x, const double* w, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * w[i];
  return s;
}

double log_sum_exp(const double* v, std::size_t n) {
  double m = kNegInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

}  // namespace

double log_sigmoid(double a) {
  return a >= 0.0 ? -std::log1p(std::exp(-a)) : a - std::log1p(std::exp(a));
}

SequenceCovariates::SequenceCovariates(const data::CornerSequence& seq,
                                       const features::StandardizationStats& stats) {
  const auto defs = seq.defenders();
  const auto atts = seq.attackers();
  frames_ = seq.frames.size();
  defenders_ = defs.size();
  attackers_ = atts.size();
  man_.reserve(frames_ * defenders_ * attackers_ * features::kPairDim);
  append_raw_pair_covariates(seq, man_);
  const bool shared = stats.man == stats.switching;
  if (!shared) switch_ = man_;
  for (std::size_t r = 0; r < man_.size(); r += features::kPairDim) {
    features::apply_standardizer({man_.data() + r, features::kPairDim}, stats.man);
    if (!shared) features::apply_standardizer({switch_.data() + r, features::kPairDim}, stats.switching);
  }
}

std::span<const double> SequenceCovariates::man(std::size_t t, std::size_t j) const {
  const std::size_t stride = attackers_ * features::kPairDim;
  return {man_.data() + (t * defenders_ + j) * stride, stride};
}

std::span<const double> SequenceCovariates::switching(std::size_t t, std::size_t j) const {
  if (switch_.empty()) return man(t, j);
  const std::size_t stride = attackers_ * features::kPairDim;
  return {switch_.data() + (t * defenders_ + j) * stride, stride};
}

void append_raw_pair_covariates(const data::CornerSequence& seq, std::vector<double>& out) {
  const auto defs = seq.defenders();
  const auto atts = seq.attackers();
  for (const auto& frame : seq.frames) {
    for (auto d : defs) {
      for (auto a : atts) {
        const auto x = features::pair_covariates(frame.players[d], frame.players[a], seq.roster[a]);
        out.insert(out.end(), x.begin(), x.end());
      }
    }
  }
}

features::ZonalCovariates standardized_zonal(const data::CornerSequence& seq, std::size_t t, std::size_t j,
                                             const ZonalGaussian& zone,
                                             const features::StandardizationStats& stats) {
  const auto d = seq.defenders().at(j);
  auto x = features::zonal_covariates(seq.frames[t].players[d], seq.roster[d], zone.mean, zone.cov);
  features::apply_standardizer(x, stats.zonal);
  return x;
}

Eigen::MatrixXd log_transition_matrix(const TransitionWeights& beta, std::span<const double> man,
                                      std::span<const double> switching, std::span<const double> zonal,
                                      std::size_t K) {
  using features::kPairDim;
  const std::size_t N = K + 1;
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N), kNegInf);

  std::vector<double> score(K);
  std::size_t arg = 0;
  for (std::size_t l = 0; l < K; ++l) {
    score[l] = dot(switching.subspan(l * kPairDim, kPairDim), beta.switching.data(), kPairDim);
    if (score[l] > score[arg]) arg = l;
  }
  const double top = score[arg];
  double total = 0.0;
  for (std::size_t l = 0; l < K; ++l) total += std::exp(score[l] - top);
  const double lse_all = top + std::log(total);

  for (std::size_t i = 0; i < K; ++i) {
    const double a = dot(man.subspan(i * kPairDim, kPairDim), beta.man.data(), kPairDim);
    const double log_stay = log_sigmoid(a);
    const double log_leave = log_sigmoid(-a);
    // log sum_{l != i} exp(score_l); the max term keeps the subtraction well conditioned.
    double lse_other;
    if (i != arg) {
      lse_other = top + std::log(total - std::exp(score[i] - top));
    } else {
      double m = kNegInf;
      for (std::size_t l = 0; l < K; ++l) if (l != i) m = std::max(m, score[l]);
      double s = 0.0;
      for (std::size_t l = 0; l < K; ++l) if (l != i) s += std::exp(score[l] - m);
      lse_other = m + std::log(s);
    }
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t l = 0; l < K; ++l) {
      out(ii, static_cast<Eigen::Index>(l)) = l == i ? log_stay : log_leave + score[l] - lse_other;
    }
  }

  const double b = dot(zonal, beta.zonal.data(), features::kZonalDim);
  const auto zi = static_cast<Eigen::Index>(K);
  out(zi, zi) = log_sigmoid(b);
  const double log_leave_zone = log_sigmoid(-b);
  for (std::size_t l = 0; l < K; ++l) {
    out(zi, static_cast<Eigen::Index>(l)) = log_leave_zone + score[l] - lse_all;
  }
  return out;
}

Eigen::MatrixXd transition_matrix(const TransitionWeights& beta, std::span<const double> man,
                                  std::span<const double> switching, std::span<const double> zonal,
                                  std::size_t attackers) {
  return exact_exp(log_transition_matrix(beta, man, switching, zonal, attackers).array()).matrix();
}

double isotropic_logpdf(const Vec2& x, const Vec2& mean, double sigma2) {
  return -std::log(2.0 * std::numbers::pi * sigma2) - (x - mean).squaredNorm() / (2.0 * sigma2);
}

double gaussian_logpdf(const Vec2& x, const Vec2& mean, const Mat2& cov) {
  const double det = cov.determinant();
  const Vec2 r = x - mean;
  const double q = r.dot(cov.inverse() * r);
  return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * q;
}

Vec2 marking_mean(const MarkingBin& bin, const Vec2& attacker_pos, const Vec2& goal) {
  return bin.gamma_o * attacker_pos + bin.gamma_g() * goal;
}

double emission_loglik(const CdhmmParams& params, const data::CornerSequence& seq, std::size_t t,
                       std::size_t j, std::size_t state, std::size_t zone) {
  const auto& frame = seq.frames.at(t);
  const Vec2& D = frame.players[seq.defenders().at(j)].position;
  if (state == params.states.zonal()) {
    const auto& z = params.zones.at(zone);
    return gaussian_logpdf(D, z.mean, z.cov);
  }
  const Vec2& O = frame.players[seq.attackers().at(state)].position;
  const auto& bin = params.grid[params.grid.locate(O)];
  return isotropic_logpdf(D, marking_mean(bin, O, params.goal_center), bin.sigma2);
}

TrackModel build_track(const CdhmmParams& params, const data::CornerSequence& seq,
                       const SequenceCovariates& cov, std::size_t j, std::size_t zone) {
  const std::size_t T = seq.frames.size();
  const std::size_t K = params.states.attackers;
  const std::size_t N = K + 1;
  const auto defs = seq.defenders();
  const auto atts = seq.attackers();
  const auto d = defs.at(j);
  const ZonalGaussian& z = params.zones.at(zone);
  const Mat2 zone_inv = z.cov.inverse();
  const double zone_norm = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(z.cov.determinant());

  TrackModel track;
  track.log_initial.resize(static_cast<Eigen::Index>(N));
  for (std::size_t n = 0; n < N; ++n) {
    track.log_initial(static_cast<Eigen::Index>(n)) =
        params.initial[n] > 0.0 ? std::log(params.initial[n]) : kNegInf;
  }
  track.log_emission.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(N));
  for (std::size_t t = 0; t < T; ++t) {
    const auto& frame = seq.frames[t];
    const Vec2& D = frame.players[d].position;
    const auto ti = static_cast<Eigen::Index>(t);
    for (std::size_t k = 0; k < K; ++k) {
      const Vec2& O = frame.players[atts[k]].position;
      const auto& bin = params.grid[params.grid.locate(O)];
      track.log_emission(ti, static_cast<Eigen::Index>(k)) =
          isotropic_logpdf(D, marking_mean(bin, O, params.goal_center), bin.sigma2);
    }
    const Vec2 r = D - z.mean;
    track.log_emission(ti, static_cast<Eigen::Index>(K)) = zone_norm - 0.5 * r.dot(zone_inv * r);
  }
  track.log_transition.reserve(T > 0 ? T - 1 : 0);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    const auto zonal = standardized_zonal(seq, t, j, z, params.standardizer);
    track.log_transition.push_back(
        log_transition_matrix(params.beta, cov.man(t, j), cov.switching(t, j), zonal, K));
  }
  return track;
}

namespace {

PosteriorSummary forward_backward_log(const TrackModel& tm) {
  const auto T = static_cast<Eigen::Index>(tm.frames());
  const auto N = static_cast<Eigen::Index>(tm.states());
  Eigen::MatrixXd la(T, N), lb(T, N);
  std::vector<double> buf(static_cast<std::size_t>(N));

  auto check_row = [&](Eigen::Index t) {
    if (!std::isfinite(la.row(t).maxCoeff())) {
      throw NumericalError("forward pass: every state has zero probability at frame " + std::to_string(t));
    }
  };

  la.row(0) = tm.log_initial.transpose() + tm.log_emission.row(0);
  check_row(0);
  for (Eigen::Index t = 1; t < T; ++t) {
    const auto& A = tm.log_transition[static_cast<std::size_t>(t - 1)];
    for (Eigen::Index n = 0; n < N; ++n) {
      for (Eigen::Index i = 0; i < N; ++i) buf[static_cast<std::size_t>(i)] = la(t - 1, i) + A(i, n);
      la(t, n) = tm.log_emission(t, n) + log_sum_exp(buf.data(), buf.size());
    }
    check_row(t);
  }
  lb.row(T - 1).setZero();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const auto& A = tm.log_transition[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < N; ++i) {
      for (Eigen::Index n = 0; n < N; ++n) {
        buf[static_cast<std::size_t>(n)] = A(i, n) + tm.log_emission(t + 1, n) + lb(t + 1, n);
      }
      lb(t, i) = log_sum_exp(buf.data(), buf.size());
    }
  }

  PosteriorSummary out;
  const Eigen::VectorXd last = la.row(T - 1).transpose();
  out.loglik = log_sum_exp(last.data(), static_cast<std::size_t>(N));
  out.gamma.resize(T, N);
  out.filtered.resize(T, N);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::VectorXd row = la.row(t).transpose();
    const double norm = log_sum_exp(row.data(), static_cast<std::size_t>(N));
    for (Eigen::Index n = 0; n < N; ++n) {
      out.filtered(t, n) = std::exp(la(t, n) - norm);
      out.gamma(t, n) = std::exp(la(t, n) + lb(t, n) - out.loglik);
    }
  }
  out.xi.reserve(static_cast<std::size_t>(T - 1));
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const auto& A = tm.log_transition[static_cast<std::size_t>(t)];
    Eigen::MatrixXd x(N, N);
    for (Eigen::Index i = 0; i < N; ++i) {
      for (Eigen::Index n = 0; n < N; ++n) {
        const double v = la(t, i) + A(i, n) + tm.log_emission(t + 1, n) + lb(t + 1, n) - out.loglik;
        x(i, n) = std::exp(v);
      }
    }
    out.xi.push_back(std::move(x));
  }
  return out;
}

PosteriorSummary forward_backward_scaled(const TrackModel& tm) {
  const auto T = static_cast<Eigen::Index>(tm.frames());
  const auto N = static_cast<Eigen::Index>(tm.states());
  Eigen::MatrixXd alpha(T, N), beta(T, N), B(T, N);
  Eigen::VectorXd log_scale(T), c(T);
  std::vector<Eigen::MatrixXd> A;
  A.reserve(tm.log_transition.size());
  for (const auto& la : tm.log_transition) A.push_back(exact_exp(la.array()).matrix());

  // Per-frame emission rescaling keeps B in (0, 1]; the shift is added back to the likelihood.
  for (Eigen::Index t = 0; t < T; ++t) {
    const double m = tm.log_emission.row(t).maxCoeff();
    if (!std::isfinite(m)) {
      throw NumericalError("forward pass: every state has zero probability at frame " + std::to_string(t));
    }
    log_scale(t) = m;
    B.row(t) = exact_exp(tm.log_emission.row(t).array() - m);
  }

  auto normalise = [&](Eigen::Index t) {
    c(t) = alpha.row(t).sum();
    if (!(c(t) > 0.0)) {
      throw NumericalError("forward pass: every state has zero probability at frame " + std::to_string(t));
    }
    alpha.row(t) /= c(t);
  };
  alpha.row(0) = exact_exp(tm.log_initial.array()).transpose() * B.row(0).array();
  normalise(0);
  for (Eigen::Index t = 1; t < T; ++t) {
    alpha.row(t) = (alpha.row(t - 1) * A[static_cast<std::size_t>(t - 1)]).array() * B.row(t).array();
    normalise(t);
  }
  beta.row(T - 1).setOnes();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Eigen::VectorXd w = (beta.row(t + 1).array() * B.row(t + 1).array()).transpose();
    beta.row(t) = (A[static_cast<std::size_t>(t)] * w).transpose() / c(t + 1);
  }

  PosteriorSummary out;
  out.loglik = c.array().log().sum() + log_scale.sum();
  out.filtered = alpha;
  out.gamma = (alpha.array() * beta.array()).matrix();
  out.xi.reserve(static_cast<std::size_t>(T - 1));
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const Eigen::VectorXd w = (beta.row(t + 1).array() * B.row(t + 1).array()).transpose();
    Eigen::MatrixXd x = alpha.row(t).transpose().asDiagonal() * A[static_cast<std::size_t>(t)] *
                        w.asDiagonal();
    out.xi.push_back(x / c(t + 1));
  }
  return out;
}

}  // namespace

PosteriorSummary forward_backward(const TrackModel& track, ForwardBackwardMethod method) {
  if (track.frames() == 0) throw ValidationError("forward_backward: empty track");
  if (track.log_transition.size() + 1 != track.frames()) {
    throw ValidationError("forward_backward: need T-1 transition matrices");
  }
  return method == ForwardBackwardMethod::LogSpace ? forward_backward_log(track)
                                                   : forward_backward_scaled(track);
}

ViterbiResult viterbi(const TrackModel& tm) {
  const std::size_t T = tm.frames();
  const std::size_t N = tm.states();
  if (T == 0) throw ValidationError("viterbi: empty track");
  std::vector<double> delta(N), next(N);
  std::vector<std::size_t> back(T * N, 0);
  for (std::size_t n = 0; n < N; ++n) {
    delta[n] = tm.log_initial(static_cast<Eigen::Index>(n)) + tm.log_emission(0, static_cast<Eigen::Index>(n));
  }
  auto check = [&](std::size_t t, const std::vector<double>& v) {
    if (!std::isfinite(*std::max_element(v.begin(), v.end()))) {
      throw NumericalError("viterbi: every state has zero probability at frame " + std::to_string(t));
    }
  };
  check(0, delta);
  for (std::size_t t = 1; t < T; ++t) {
    const auto& A = tm.log_transition[t - 1];
    for (std::size_t n = 0; n < N; ++n) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < N; ++i) {
        const double v = delta[i] + A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n));
        if (v > best) {  // strict: earlier (lower) index wins ties
          best = v;
          arg = i;
        }
      }
      next[n] = best + tm.log_emission(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n));
      back[t * N + n] = arg;
    }
    delta.swap(next);
    check(t, delta);
  }
  ViterbiResult out;
  out.path.resize(T);
  std::size_t arg = 0;
  for (std::size_t n = 1; n < N; ++n) {
    if (delta[n] > delta[arg]) arg = n;
  }
  out.log_prob = delta[arg];
  out.path[T - 1] = arg;
  for (std::size_t t = T - 1; t > 0; --t) out.path[t - 1] = back[t * N + out.path[t]];
  return out;
}

void check_compatible(const CdhmmParams& params, const data::CornerSequence& seq) {
  const auto K = seq.attackers().size();
  const auto J = seq.defenders().size();
  if (K != params.states.attackers) {
    throw ValidationError(seq.sequence_id + ": " + std::to_string(K) + " outfield attackers but model has " +
                          std::to_string(params.states.attackers));
  }
  if (J != params.zones.size()) {
    throw ValidationError(seq.sequence_id + ": " + std::to_string(J) + " outfield defenders but model has " +
                          std::to_string(params.zones.size()) + " zones");
  }
  if (seq.frames.empty()) throw ValidationError(seq.sequence_id + ": no frames");
}

Assignment sequence_zones(const CdhmmParams& params, const data::CornerSequence& seq, ZoneDistance metric) {
  std::vector<Vec2> positions;
  for (auto d : seq.defenders()) positions.push_back(seq.frames.at(0).players[d].position);
  std::vector<Vec2> means;
  for (const auto& z : params.zones) means.push_back(z.mean);
  return assign_zones(positions, means, metric);
}

SequenceDecoding decode_sequence(const CdhmmParams& params, const data::CornerSequence& seq,
                                 const DecodeOptions& options) {
  check_compatible(params, seq);
  SequenceDecoding out;
  out.zones = sequence_zones(params, seq, options.zone_metric);
  const SequenceCovariates cov(seq, params.standardizer);
  const auto defs = seq.defenders();
  for (std::size_t j = 0; j < defs.size(); ++j) {
    DefenderDecoding dd;
    dd.roster_index = defs[j];
    dd.zone = out.zones.row_to_col[j];
    const auto track = build_track(params, seq, cov, j, dd.zone);
    try {
      dd.posterior = forward_backward(track, options.method);
      if (options.viterbi) {
        auto v = viterbi(track);
        dd.posterior.path = std::move(v.path);
        dd.viterbi_log_prob = v.log_prob;
      }
    } catch (const NumericalError& e) {
      throw NumericalError(seq.sequence_id + ", defender " + seq.roster[defs[j]].id + ": " + e.what());
    }
    out.loglik += dd.posterior.loglik;
    out.defenders.push_back(std::move(dd));
  }
  return out;
}

double sequence_loglik(const CdhmmParams& params, const data::CornerSequence& seq, ZoneDistance metric) {
  DecodeOptions opts;
  opts.viterbi = false;
  opts.zone_metric = metric;
  return decode_sequence(params, seq, opts).loglik;
}

}  // namespace cdhmm::hmm
