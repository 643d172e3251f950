#include "cdhmm/bounded_lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "cdhmm/errors.hpp"

namespace cdhmm::optim {

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

/// Zero where a bound is active and the gradient pushes outward.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)) pg[i] = 0.0;
  }
  return pg;
}

struct Pair {
  Eigen::VectorXd s, y;
  double rho;
};

}  // namespace

BoundedLbfgsResult minimize_bounded(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                                    const Eigen::VectorXd& upper, const BoundedLbfgsOptions& opt) {
  const auto n = x0.size();
  if (lower.size() != n || upper.size() != n) throw ValidationError("minimize_bounded: bound size mismatch");
  if ((lower.array() > upper.array()).any()) throw ValidationError("minimize_bounded: lower > upper");

  BoundedLbfgsResult r;
  r.x = project(x0, lower, upper);
  Eigen::VectorXd g(n), g_new(n);
  r.f = f(r.x, g);
  r.evaluations = 1;
  if (!std::isfinite(r.f)) {
    r.message = "non-finite objective at start";
    return r;
  }

  std::deque<Pair> memory;
  for (r.iterations = 0; r.iterations < opt.max_iterations;) {
    const Eigen::VectorXd pg = projected_gradient(r.x, g, lower, upper);
    if (pg.lpNorm<Eigen::Infinity>() <= opt.pg_tolerance) {
      r.converged = true;
      r.message = "projected gradient below tolerance";
      return r;
    }
    Eigen::Array<bool, Eigen::Dynamic, 1> free = pg.array() != 0.0;
    auto restrict = [&](Eigen::VectorXd v) {
      for (Eigen::Index i = 0; i < n; ++i) if (!free[i]) v[i] = 0.0;
      return v;
    };

    // Two-loop recursion on the free subspace.
    Eigen::VectorXd q = restrict(g);
    std::vector<double> alpha(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      alpha[k] = memory[k].rho * restrict(memory[k].s).dot(q);
      q -= alpha[k] * restrict(memory[k].y);
    }
    double h0 = 1.0;
    if (!memory.empty()) {
      const auto& last = memory.back();
      h0 = last.s.dot(last.y) / last.y.squaredNorm();
    }
    Eigen::VectorXd d = h0 * q;
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const double beta = memory[k].rho * restrict(memory[k].y).dot(d);
      d += (alpha[k] - beta) * restrict(memory[k].s);
    }
    d = -restrict(d);
    if (!(d.dot(g) < 0.0)) {
      memory.clear();
      d = -pg;
    }

    double step = memory.empty() ? std::min(1.0, 1.0 / pg.lpNorm<Eigen::Infinity>()) : 1.0;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    bool accepted = false;
    for (std::size_t ls = 0; ls < opt.max_line_search; ++ls) {
      x_new = project(r.x + step * d, lower, upper);
      f_new = f(x_new, g_new);
      ++r.evaluations;
      if (std::isfinite(f_new) && f_new <= r.f + 1e-4 * g.dot(x_new - r.x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++r.iterations;
    if (!accepted) {
      r.message = "line search could not decrease the objective";
      r.converged = memory.empty();
      return r;
    }

    Pair p{x_new - r.x, g_new - g, 0.0};
    const double sy = p.s.dot(p.y);
    if (sy > 1e-12 * p.y.squaredNorm() && sy > 0.0) {
      p.rho = 1.0 / sy;
      memory.push_back(std::move(p));
      if (memory.size() > opt.memory) memory.pop_front();
    }
    const double decrease = r.f - f_new;
    r.x = x_new;
    g = g_new;
    const double f_old = r.f;
    r.f = f_new;
    if (decrease <= opt.f_tolerance * std::max({std::abs(f_old), std::abs(f_new), 1.0})) {
      r.converged = true;
      r.message = "relative reduction below tolerance";
      return r;
    }
  }
  r.message = "iteration limit reached";
  return r;
}

}  // namespace cdhmm::optim
