#include "cdhmm/q_function.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdhmm/inference.hpp"

namespace cdhmm::train {

using features::kPairDim;
using features::kZonalDim;
using hmm::log_sigmoid;

namespace {

double sigmoid(double a) { return a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a)); }

template <int Dim>
double dot(const double* x, const Eigen::Matrix<double, Dim, 1>& w) {
  double s = 0.0;
  for (int i = 0; i < Dim; ++i) s += x[i] * w[i];
  return s;
}

template <int Dim>
void axpy(double a, const double* x, Eigen::Matrix<double, Dim, 1>& y) {
  for (int i = 0; i < Dim; ++i) y[i] += a * x[i];
}

}  // namespace

double q_man(const hmm::PairWeights& beta, const SufficientStats& stats, double lambda, hmm::PairWeights* gradient) {
  double q = 0.0;
  if (gradient) gradient->setZero();
  for (const auto& s : stats.steps) {
    const auto x = stats.man(s);
    const auto stay = stats.stay(s);
    const auto leave = stats.leave(s);
    for (std::size_t i = 0; i < s.attackers; ++i) {
      const double* xi = x.data() + i * kPairDim;
      const double w = stay[i] + leave[i];
      if (w == 0.0) continue;
      const double a = dot<kPairDim>(xi, beta);
      // log sigma(-a) = log sigma(a) - a
      const double e = std::exp(-std::abs(a));
      const double ls = (a < 0.0 ? a : 0.0) - std::log1p(e);
      q += w * ls - leave[i] * a;
      if (gradient) axpy<kPairDim>(stay[i] - w * (a >= 0.0 ? 1.0 : e) / (1.0 + e), xi, *gradient);
    }
  }
  q -= 0.5 * lambda * beta.squaredNorm();
  if (gradient) *gradient -= lambda * beta;
  return q;
}

double q_zonal(const hmm::ZonalWeights& beta, const SufficientStats& stats, double lambda,
               hmm::ZonalWeights* gradient) {
  double q = 0.0;
  if (gradient) gradient->setZero();
  for (const auto& s : stats.steps) {
    const double w = s.zonal_stay + s.zonal_leave;
    if (w == 0.0) continue;
    const double b = dot<kZonalDim>(s.zonal.data(), beta);
    q += s.zonal_stay * log_sigmoid(b) + s.zonal_leave * log_sigmoid(-b);
    if (gradient) axpy<kZonalDim>(s.zonal_stay - (s.zonal_stay + s.zonal_leave) * sigmoid(b), s.zonal.data(), *gradient);
  }
  q -= 0.5 * lambda * beta.squaredNorm();
  if (gradient) *gradient -= lambda * beta;
  return q;
}

double q_zonal_for_zone(const hmm::ZonalWeights& beta, const SufficientStats& stats, std::uint32_t zone) {
  double q = 0.0;
  for (const auto& s : stats.steps) {
    if (s.zone != zone) continue;
    const double b = dot<kZonalDim>(s.zonal.data(), beta);
    q += s.zonal_stay * log_sigmoid(b) + s.zonal_leave * log_sigmoid(-b);
  }
  return q;
}

double q_switch(const hmm::PairWeights& beta, const SufficientStats& stats, double lambda,
                hmm::PairWeights* gradient) {
  double q = 0.0;
  if (gradient) gradient->setZero();
  std::vector<double> score, e;
  hmm::PairWeights weighted_sum;
  for (const auto& s : stats.steps) {
    const std::size_t K = s.attackers;
    const auto x = stats.switching(s);
    const auto leave = stats.leave(s);
    const auto enter = stats.enter(s);
    const auto from_zonal = stats.from_zonal(s);
    score.resize(K);
    e.resize(K);
    std::size_t arg = 0;
    for (std::size_t l = 0; l < K; ++l) {
      score[l] = dot<kPairDim>(x.data() + l * kPairDim, beta);
      if (score[l] > score[arg]) arg = l;
    }
    const double top = score[arg];
    double total = 0.0;
    for (std::size_t l = 0; l < K; ++l) {
      e[l] = std::exp(score[l] - top);
      total += e[l];
    }
    const double lse_all = top + std::log(total);

    for (std::size_t l = 0; l < K; ++l) q += (enter[l] + from_zonal[l]) * score[l];
    q -= s.zonal_leave * lse_all;

    // Per-row normaliser excluding the row's own attacker. For the argmax row the
    // remaining terms are summed directly to avoid cancellation.
    auto excluded_total = [&](std::size_t i) {
      if (i != arg) return total - e[i];
      double t = 0.0;
      for (std::size_t l = 0; l < K; ++l) if (l != i) t += e[l];
      return t;
    };
    for (std::size_t i = 0; i < K; ++i) {
      if (leave[i] == 0.0) continue;
      q -= leave[i] * (top + std::log(excluded_total(i)));
    }

    if (gradient) {
      weighted_sum.setZero();
      for (std::size_t l = 0; l < K; ++l) {
        axpy<kPairDim>(enter[l] + from_zonal[l], x.data() + l * kPairDim, *gradient);
        axpy<kPairDim>(e[l], x.data() + l * kPairDim, weighted_sum);
      }
      *gradient -= (s.zonal_leave / total) * weighted_sum;
      for (std::size_t i = 0; i < K; ++i) {
        if (leave[i] == 0.0) continue;
        hmm::PairWeights expectation;
        if (i != arg) {
          expectation = weighted_sum;
          axpy<kPairDim>(-e[i], x.data() + i * kPairDim, expectation);
        } else {
          expectation.setZero();
          for (std::size_t l = 0; l < K; ++l) {
            if (l != i) axpy<kPairDim>(e[l], x.data() + l * kPairDim, expectation);
          }
        }
        *gradient -= (leave[i] / excluded_total(i)) * expectation;
      }
    }
  }
  q -= 0.5 * lambda * beta.squaredNorm();
  if (gradient) *gradient -= lambda * beta;
  return q;
}

double q_transition(const hmm::TransitionWeights& beta, const SufficientStats& stats, const Penalties& p) {
  return q_man(beta.man, stats, p.man) + q_zonal(beta.zonal, stats, p.zonal) +
         q_switch(beta.switching, stats, p.switching);
}

hmm::TransitionWeights q_gradients(const hmm::TransitionWeights& beta, const SufficientStats& stats,
                                   const Penalties& p) {
  hmm::TransitionWeights g;
  q_man(beta.man, stats, p.man, &g.man);
  q_zonal(beta.zonal, stats, p.zonal, &g.zonal);
  q_switch(beta.switching, stats, p.switching, &g.switching);
  return g;
}

}  // namespace cdhmm::train
