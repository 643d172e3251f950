#include "cdhmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "cdhmm/errors.hpp"

namespace cdhmm::hmm {

Mat2 floor_eigenvalues(const Mat2& cov, double floor) {
  const Mat2 sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Mat2> eig(sym);
  Vec2 values = eig.eigenvalues();
  if (values.minCoeff() >= floor) return sym;
  values = values.cwiseMax(floor);
  Mat2 out = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

MarkingBinGrid::MarkingBinGrid(Vec2 origin, double bin_size, std::size_t nx, std::size_t ny, MarkingBin init)
    : origin_(std::move(origin)), bin_size_(bin_size), nx_(nx), ny_(ny), cells_(nx * ny, init) {
  if (nx == 0 || ny == 0 || !(bin_size > 0.0)) throw ValidationError("MarkingBinGrid: empty grid");
}

MarkingBinGrid MarkingBinGrid::penalty_area(const PitchGeometry& pitch, MarkingBin init) {
  return MarkingBinGrid(Vec2(pitch.goal_line_x, -21.0), 3.0, 10, 14, init);
}

std::size_t MarkingBinGrid::locate(const Vec2& p) const {
  auto index = [&](double v, double o, std::size_t n) {
    const double f = std::floor((v - o) / bin_size_);
    if (!(f >= 0.0)) return std::size_t{0};
    return std::min(static_cast<std::size_t>(f), n - 1);
  };
  return index(p.y(), origin_.y(), ny_) * nx_ + index(p.x(), origin_.x(), nx_);
}

std::vector<std::size_t> MarkingBinGrid::neighbours(std::size_t bin, std::size_t hops) const {
  const auto ix = static_cast<long>(bin % nx_);
  const auto iy = static_cast<long>(bin / nx_);
  const auto h = static_cast<long>(hops);
  std::vector<std::size_t> out;
  for (long y = std::max(0L, iy - h); y <= std::min(static_cast<long>(ny_) - 1, iy + h); ++y) {
    for (long x = std::max(0L, ix - h); x <= std::min(static_cast<long>(nx_) - 1, ix + h); ++x) {
      out.push_back(static_cast<std::size_t>(y) * nx_ + static_cast<std::size_t>(x));
    }
  }
  return out;
}

void CdhmmParams::validate() const {
  const std::size_t N = states.size();
  if (states.attackers < 2) throw ValidationError("model needs at least 2 attackers");
  if (initial.size() != N) throw ValidationError("initial distribution has wrong length");
  double sum = 0.0;
  for (double p : initial) {
    if (!(p >= 0.0)) throw ValidationError("initial distribution has a negative entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("initial distribution does not sum to 1");
  if (zones.empty()) throw ValidationError("model has no zones");
  for (const auto& z : zones) {
    Eigen::SelfAdjointEigenSolver<Mat2> eig(z.cov);
    if (!(eig.eigenvalues().minCoeff() > 0.0) || !z.mean.allFinite()) {
      throw ValidationError("zone covariance is not positive definite");
    }
  }
  if (grid.size() == 0) throw ValidationError("model has an empty marking grid");
  for (const auto& c : grid.cells()) {
    if (!(c.sigma2 > 0.0) || !std::isfinite(c.gamma_o)) throw ValidationError("invalid marking bin");
  }
  if (!beta.man.allFinite() || !beta.zonal.allFinite() || !beta.switching.allFinite()) {
    throw ValidationError("non-finite transition weights");
  }
}

}  // namespace cdhmm::hmm
