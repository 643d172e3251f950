#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cdhmm/covariates.hpp"
#include "cdhmm/errors.hpp"

using namespace cdhmm;
using namespace cdhmm::features;

namespace {

Vec2 rand_vec(std::mt19937_64& rng, double scale = 5.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  const double a = u(rng);
  return {a, u(rng)};
}

}  // namespace

TEST(Convergence, HeadOnApproach) {
  EXPECT_NEAR(convergence(Vec2(0, 0), Vec2(0, 0), Vec2(5, 0), Vec2(-2, 0)), -2.0, 1e-8);
}

TEST(Convergence, IdenticalVelocitiesGiveZero) {
  EXPECT_EQ(convergence(Vec2(1, 2), Vec2(3, -1), Vec2(4, 4), Vec2(3, -1)), 0.0);
}

TEST(Convergence, CoincidentPositionsGuarded) {
  EXPECT_EQ(convergence(Vec2(1, 1), Vec2(0, 0), Vec2(1, 1), Vec2(1, 0)), 0.0);
}

TEST(ConvergenceProperty, AntisymmetricInRelativeVelocity) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vec2 pd = rand_vec(rng), pa = rand_vec(rng), vd = rand_vec(rng), va = rand_vec(rng);
    // Negating v_a - v_d: swap the roles of the two velocities.
    EXPECT_EQ(convergence(pd, vd, pa, va), -convergence(pd, va, pa, vd));
  }
}

TEST(Tangential, RadialMotionGivesZero) {
  EXPECT_NEAR(tangential_relative_velocity(Vec2(0, 0), Vec2(0, 0), Vec2(3, 0), Vec2(2, 0)), 0.0, 1e-6);
}

TEST(Tangential, PurelyTangential) {
  EXPECT_NEAR(tangential_relative_velocity(Vec2(0, 0), Vec2(0, 0), Vec2(3, 0), Vec2(0, 3)), 3.0, 1e-9);
}

TEST(TangentialProperty, MatchesSineFormulaAndPythagoras) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Vec2 pd = rand_vec(rng), pa = rand_vec(rng), vd = rand_vec(rng), va = rand_vec(rng);
    const Vec2 r = pa - pd, v = va - vd;
    const double angle = std::atan2(r.x() * v.y() - r.y() * v.x(), r.dot(v));
    const double tang = tangential_relative_velocity(pd, vd, pa, va);
    EXPECT_GE(tang, 0.0);
    EXPECT_NEAR(tang, v.norm() * std::abs(std::sin(angle)), 1e-9);
    const double radial = v.dot(r.normalized());
    EXPECT_NEAR(tang * tang + radial * radial, v.squaredNorm(), 1e-9);
  }
}

TEST(Heading, ParallelAntiparallelAndStatic) {
  EXPECT_NEAR(heading_alignment(Vec2(2, 1), Vec2(2, 1)), 1.0, 1e-8);
  EXPECT_NEAR(heading_alignment(Vec2(2, 1), Vec2(-2, -1)), -1.0, 1e-8);
  EXPECT_NEAR(heading_alignment(Vec2(0, 0), Vec2(3, 1)), 0.0, 1e-12);
}

TEST(HeadingProperty, ScaleInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> s(0.1, 10.0);
  for (int i = 0; i < 200; ++i) {
    Vec2 a = rand_vec(rng), b = rand_vec(rng);
    if (a.norm() < 0.1 || b.norm() < 0.1) continue;
    EXPECT_NEAR(heading_alignment(a, b), heading_alignment(s(rng) * a, s(rng) * b), 1e-6);
  }
}

TEST(Mahalanobis, Examples) {
  EXPECT_EQ(mahalanobis(Vec2(1, 2), Vec2(1, 2), Mat2::Identity()), 0.0);
  EXPECT_NEAR(mahalanobis(Vec2(3, 4), Vec2(0, 0), Mat2::Identity()), 5.0, 1e-12);
  Mat2 c;
  c << 4, 0, 0, 1;
  EXPECT_NEAR(mahalanobis(Vec2(2, 0), Vec2(0, 0), c), 1.0, 1e-12);
}

TEST(Mahalanobis, RejectsNonSpd) {
  Mat2 c;
  c << 1, 2, 2, 1;
  EXPECT_THROW(mahalanobis(Vec2(1, 0), Vec2(0, 0), c), ValidationError);
  c << 1, 0.5, 0.4, 1;
  EXPECT_THROW(mahalanobis(Vec2(1, 0), Vec2(0, 0), c), ValidationError);
}

TEST(MahalanobisProperty, AffineInvariant) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    Mat2 L;
    L << 1.0 + std::abs(rand_vec(rng).x()), 0, rand_vec(rng, 1.0).x(), 0.5 + std::abs(rand_vec(rng).y());
    const Mat2 cov = L * L.transpose();
    Mat2 A;
    A << 2.0, 0.3, -0.4, 1.5;
    const Vec2 b = rand_vec(rng), x = rand_vec(rng), mu = rand_vec(rng);
    const double d0 = mahalanobis(x, mu, cov);
    const Mat2 cov2 = A * cov * A.transpose();
    const double d1 = mahalanobis(A * x + b, A * mu + b, Mat2(0.5 * (cov2 + cov2.transpose())));
    EXPECT_NEAR(d0, d1, 1e-8 * std::max(1.0, d0));
  }
}

TEST(BuildCovariates, ManMarkLayoutAndBias) {
  data::PlayerState def{Vec2(0, 0), Vec2(1, 0)};
  data::PlayerState att{Vec2(3, 4), Vec2(0, 2)};
  data::Player a{"a", data::Team::Attacking, false, 1.9, 85.0};
  const auto x = pair_covariates(def, att, a);
  EXPECT_EQ(x[0], 1.0);
  EXPECT_NEAR(x[1], 5.0, 1e-12);
  EXPECT_NEAR(x[2], 1.0 / (5.0 + 1e-8), 1e-15);
  EXPECT_NEAR(x[3], tangential_relative_velocity(def.position, def.velocity, att.position, att.velocity), 0.0);
  EXPECT_NEAR(x[4], heading_alignment(def.velocity, att.velocity), 0.0);
  EXPECT_NEAR(x[5], convergence(def.position, def.velocity, att.position, att.velocity), 0.0);
  EXPECT_EQ(x[6], 1.9);
  EXPECT_EQ(x[7], 85.0);
}

TEST(BuildCovariates, ZonalAtZoneMeanStatic) {
  data::PlayerState def{Vec2(-5, 2), Vec2(0, 0)};
  data::Player d{"d", data::Team::Defending, false, 1.8, 77.0};
  const auto z = zonal_covariates(def, d, Vec2(-5, 2), 2.0 * Mat2::Identity());
  EXPECT_EQ(z[0], 1.0);
  EXPECT_EQ(z[1], 0.0);
  // 1 / epsilon, clipped to the documented bound.
  EXPECT_EQ(z[2], kInverseClip);
  EXPECT_EQ(z[3], 0.0);
  EXPECT_EQ(z[4], 1.8);
  EXPECT_EQ(z[5], 77.0);
}

TEST(BuildCovariates, VelocityTowardZoneIsScalarProjection) {
  EXPECT_NEAR(velocity_toward(Vec2(0, 0), Vec2(2, 1), Vec2(4, 0)), 2.0, 1e-8);
  EXPECT_NEAR(velocity_toward(Vec2(0, 0), Vec2(2, 1), Vec2(0, -4)), -1.0, 1e-8);
}

TEST(Standardizer, ConstantColumnMapsToZero) {
  std::vector<double> s{1, 3.0, 1, 3.0, 1, 3.0};
  const auto st = fit_feature_stats(s, 2);
  std::vector<double> v{1, 3.0};
  apply_standardizer(v, st);
  EXPECT_EQ(v[0], 1.0);
  EXPECT_EQ(v[1], 0.0);
}

TEST(Standardizer, PlusMinusOneUnchanged) {
  std::vector<double> s{1, -1.0, 1, 1.0};
  const auto st = fit_feature_stats(s, 2);
  std::vector<double> a{1, -1.0}, b{1, 1.0};
  apply_standardizer(a, st);
  apply_standardizer(b, st);
  EXPECT_DOUBLE_EQ(a[1], -1.0);
  EXPECT_DOUBLE_EQ(b[1], 1.0);
}

TEST(Standardizer, HeldOutDataUsesTrainingStats) {
  std::vector<double> s{1, 0.0, 1, 2.0};
  const auto st = fit_feature_stats(s, 2);
  std::vector<double> held{1, 5.0};
  apply_standardizer(held, st);
  EXPECT_DOUBLE_EQ(held[1], 4.0);
}

TEST(Standardizer, NeedsTwoSamples) {
  std::vector<double> s{1, 0.0};
  EXPECT_THROW(fit_feature_stats(s, 2), ValidationError);
}

TEST(StandardizerProperty, ZeroMeanUnitVarianceOnFittingSet) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(3.0, 7.0);
  const std::size_t dim = 5, count = 400;
  std::vector<double> s(dim * count);
  for (std::size_t i = 0; i < count; ++i) {
    s[i * dim] = 1.0;
    for (std::size_t f = 1; f < dim; ++f) s[i * dim + f] = n(rng) * static_cast<double>(f);
  }
  const auto st = fit_feature_stats(s, dim);
  for (std::size_t i = 0; i < count; ++i) apply_standardizer(std::span<double>(s.data() + i * dim, dim), st);
  for (std::size_t f = 1; f < dim; ++f) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < count; ++i) m += s[i * dim + f];
    m /= count;
    for (std::size_t i = 0; i < count; ++i) v += (s[i * dim + f] - m) * (s[i * dim + f] - m);
    v /= count;
    EXPECT_LT(std::abs(m), 1e-9);
    EXPECT_LT(std::abs(v - 1.0), 1e-9);
  }
  for (std::size_t i = 0; i < count; ++i) EXPECT_EQ(s[i * dim], 1.0);
}
