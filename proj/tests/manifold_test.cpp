#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "orbis/manifold.hpp"
#include "test_support.hpp"

namespace orbis {
namespace {

using manifold::exp_map;
using manifold::geodesic_distance;
using manifold::normalize;
using manifold::parallel_transport;
using manifold::project_to_tangent;
using testing::random_unit;

constexpr double kPi = std::numbers::pi;

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

TEST(Normalize, ThreeFourFive) {
  const UnitVector u = normalize(vec({3, 4}));
  EXPECT_NEAR(u(0), 0.6, 1e-12);
  EXPECT_NEAR(u(1), 0.8, 1e-12);
}

TEST(Normalize, UnitInputIsFixed) {
  const UnitVector u = normalize(vec({1, 0, 0}));
  EXPECT_NEAR(u(0), 1.0, 2e-12);
  EXPECT_EQ(u(1), 0.0);
}

TEST(Normalize, ZeroIsAnError) {
  try {
    normalize(vec({0, 0}));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "degenerate vector");
  }
}

TEST(UnitVector, CheckedRejectsNonUnit) {
  EXPECT_THROW(UnitVector::checked(vec({1, 1})), Error);
  EXPECT_NO_THROW(UnitVector::checked(vec({0, 1})));
}

TEST(Geodesic, BasisCases) {
  const auto e1 = UnitVector::basis(3, 0);
  const auto e2 = UnitVector::basis(3, 1);
  EXPECT_NEAR(geodesic_distance(e1, e1), 0.0, 1e-3);
  EXPECT_NEAR(geodesic_distance(e1, e2), kPi / 2, 1e-15);
  EXPECT_NEAR(geodesic_distance(e1, -e1), kPi, 1e-3);
  // Clamping bounds the self distance by acos(1 - 1e-7).
  EXPECT_NEAR(geodesic_distance(e1, e1), std::acos(1.0 - 1e-7), 1e-15);
}

TEST(Geodesic, DimensionMismatch) {
  EXPECT_THROW(geodesic_distance(UnitVector::basis(3, 0), UnitVector::basis(4, 0)), Error);
}

TEST(Geodesic, OrderMatchesInnerProduct) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_unit(8, rng), b = random_unit(8, rng), c = random_unit(8, rng);
    const bool by_arc = geodesic_distance(a, b) < geodesic_distance(a, c);
    const bool by_dot = a.dot(b) > a.dot(c);
    EXPECT_EQ(by_arc, by_dot);
  }
}

TEST(Tangent, Projection) {
  const auto pole = manifold::north_pole(4);
  EXPECT_NEAR(project_to_tangent(pole, pole.coords()).norm(), 0.0, 1e-15);
  const Vector e1 = UnitVector::basis(4, 0).coords();
  EXPECT_TRUE(project_to_tangent(pole, e1).direction.isApprox(e1));
  const Vector ones = Vector::Ones(4);
  const Vector expect = vec({1, 1, 1, 0});
  EXPECT_TRUE(project_to_tangent(pole, ones).direction.isApprox(expect));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto base = random_unit(6, rng);
    const auto v = project_to_tangent(base, testing::random_gaussian(6, rng));
    EXPECT_LE(std::abs(v.direction.dot(base.coords())), 1e-10);
  }
}

TEST(ExpMap, Cases) {
  const auto pole = manifold::north_pole(3);
  EXPECT_TRUE(exp_map(pole, {pole, Vector::Zero(3)}).coords().isApprox(pole.coords()));
  const auto quarter = exp_map(pole, {pole, (kPi / 2) * UnitVector::basis(3, 0).coords()});
  EXPECT_NEAR((quarter.coords() - UnitVector::basis(3, 0).coords()).norm(), 0.0, 1e-15);
  const auto antipode = exp_map(pole, {pole, kPi * UnitVector::basis(3, 1).coords()});
  EXPECT_NEAR((antipode.coords() + pole.coords()).norm(), 0.0, 1e-15);
}

TEST(ExpMap, NormClosureAndLocalInverse) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> len(0.0, kPi - 0.1);
  for (int i = 0; i < 500; ++i) {
    const auto base = random_unit(7, rng);
    Vector v = project_to_tangent(base, testing::random_gaussian(7, rng)).direction;
    v *= len(rng) / v.norm();
    const auto z = exp_map(base, {base, v});
    EXPECT_NEAR(z.coords().norm(), 1.0, 1e-9);
    // acos loses precision near 0, so compare away from the clamp.
    if (v.norm() > 1e-3) {
      EXPECT_NEAR(geodesic_distance(base, z), v.norm(), 1e-8);
    }
  }
}

TEST(Transport, IdentityAndClosedForm) {
  std::mt19937_64 rng(2);
  const auto a = random_unit(5, rng);
  const auto u = project_to_tangent(a, testing::random_gaussian(5, rng));
  EXPECT_TRUE(parallel_transport(a, a, u).direction.isApprox(u.direction));

  const auto e1 = UnitVector::basis(3, 0);
  const auto e2 = UnitVector::basis(3, 1);
  const double alpha = 1.7;
  const auto moved = parallel_transport(e1, e2, {e1, alpha * e2.coords()});
  EXPECT_NEAR((moved.direction + alpha * e1.coords()).norm(), 0.0, 1e-15);
}

TEST(Transport, IsometryAndTangency) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_unit(6, rng), b = random_unit(6, rng);
    const auto u = project_to_tangent(a, testing::random_gaussian(6, rng));
    const auto w = parallel_transport(a, b, u);
    EXPECT_NEAR(w.norm(), u.norm(), 1e-8);
    EXPECT_LE(std::abs(w.direction.dot(b.coords())), 1e-8);
  }
}

TEST(Transport, AntipodalIsAnError) {
  const auto a = UnitVector::basis(3, 2);
  try {
    parallel_transport(a, -a, {a, UnitVector::basis(3, 0).coords()});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "transport undefined");
  }
}

TEST(Angular, PoleExample) {
  const auto a = manifold::cartesian_to_angular(UnitVector::basis(3, 2));
  ASSERT_EQ(a.latitudes.size(), 1u);
  EXPECT_NEAR(a.latitudes[0], kPi / 2, 1e-15);
  EXPECT_NEAR(a.longitude, kPi / 2, 1e-15);
}

TEST(Angular, SingularInput) {
  try {
    manifold::cartesian_to_angular(UnitVector::basis(3, 0));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "coordinate singularity");
  }
}

TEST(Angular, RoundTrip) {
  std::mt19937_64 rng(17);
  for (Eigen::Index d : {3, 4, 9}) {
    for (int i = 0; i < 200; ++i) {
      const auto z = random_unit(d, rng);
      const auto a = manifold::cartesian_to_angular(z);
      for (double psi : a.latitudes) {
        EXPECT_GE(psi, 0.0);
        EXPECT_LE(psi, kPi);
      }
      EXPECT_GE(a.longitude, 0.0);
      EXPECT_LT(a.longitude, 2 * kPi);
      const auto back = manifold::angular_to_cartesian(a);
      EXPECT_LE((back.coords() - z.coords()).norm(), 1e-8);
    }
  }
}

}  // namespace
}  // namespace orbis
