#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gradcheck.hpp"
#include "orbis/losses.hpp"
#include "test_support.hpp"

namespace orbis {
namespace {

constexpr double kPi = std::numbers::pi;

/// A unit vector at angle theta from e_1 in the (e_1, e_2) plane of R^d.
UnitVector at_angle(double theta, Eigen::Index d = 3) {
  Vector v = Vector::Zero(d);
  v(0) = std::cos(theta);
  v(1) = std::sin(theta);
  return UnitVector::trusted(v);
}

TEST(Welsch, Values) {
  EXPECT_EQ(losses::welsch(0.0, 0.4), 0.0);
  EXPECT_NEAR(losses::welsch(0.4, 0.4), 1.0 - std::exp(-0.5), 1e-15);
  EXPECT_NEAR(losses::welsch(kPi, 0.4), 1.0, 1e-13);
  EXPECT_LT(losses::welsch(kPi, 0.4), 1.0);
  EXPECT_THROW(losses::welsch(1.0, 0.0), Error);
}

TEST(Welsch, MonotoneAndBounded) {
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double w = losses::welsch(kPi * i / 1000.0, 0.4);
    EXPECT_GE(w, 0.0);
    EXPECT_LT(w, 1.0 + 1e-15);
    EXPECT_GE(w, prev);
    prev = w;
  }
}

TEST(GeometricTriplet, Examples) {
  const LossConfig cfg;
  const auto zc = at_angle(0.0);
  // Equal angles: the margin alone.
  EXPECT_NEAR(losses::geometric_triplet_loss(at_angle(0.7), zc, at_angle(-0.7), cfg), 0.5, 1e-12);
  // Parent on the child, negative antipodal: saturated.
  EXPECT_EQ(losses::geometric_triplet_loss(zc, zc, -zc, cfg), 0.0);
  // Worst ordering.
  // The arccos clamp keeps the parent distance just short of pi.
  EXPECT_NEAR(losses::geometric_triplet_loss(-zc, zc, zc, cfg), 1.5, 1e-5);
}

TEST(GeometricTriplet, RotationInvariance) {
  std::mt19937_64 rng(21);
  const LossConfig cfg;
  for (int i = 0; i < 100; ++i) {
    const auto zp = testing::random_unit(8, rng), zc = testing::random_unit(8, rng),
               zn = testing::random_unit(8, rng);
    const Matrix r = testing::random_rotation(8, rng);
    const double base = losses::geometric_triplet_loss(zp, zc, zn, cfg);
    const double rot = losses::geometric_triplet_loss(UnitVector::trusted(r * zp.coords()),
                                                      UnitVector::trusted(r * zc.coords()),
                                                      UnitVector::trusted(r * zn.coords()), cfg);
    EXPECT_LE(std::abs(base - rot), 1e-9);
  }
}

TEST(VmfTriplet, Examples) {
  const LossConfig cfg;
  const VmfParams vc{UnitVector::basis(3, 0), 5.0};
  const VmfParams vp{UnitVector::basis(3, 1), 2.0};
  EXPECT_NEAR(losses::vmf_triplet_loss(vp, vc, vp, cfg), 0.3, 1e-12);
  EXPECT_EQ(losses::vmf_triplet_loss(vc, vc, VmfParams{-vc.mu, 20.0}, cfg), 0.0);
}

TEST(VmfTriplet, HingeOnKlDifference) {
  const LossConfig cfg;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const VmfParams vp{testing::random_unit(4, rng), 1.0 + i};
    const VmfParams vc{testing::random_unit(4, rng), 3.0};
    const VmfParams vn{testing::random_unit(4, rng), 0.5 + 0.5 * i};
    const double expect = std::max(0.0, 0.3 + vmf::kl_vmf(vc, vp) - vmf::kl_vmf(vc, vn));
    EXPECT_DOUBLE_EQ(losses::vmf_triplet_loss(vp, vc, vn, cfg), expect);
    EXPECT_GE(expect, 0.0);
  }
}

TEST(Svgd, SingleEquatorialParticleHasZeroField) {
  LossConfig cfg;
  cfg.alignment_enabled = false;
  const auto z = UnitVector::basis(3, 0);
  const std::vector<UnitVector> batch{z};
  const auto field = losses::svgd_transport_field(batch, batch, cfg);
  ASSERT_EQ(field.size(), 1u);
  EXPECT_NEAR(field[0].norm(), 0.0, 1e-15);

  cfg.structural_score_enabled = false;
  std::mt19937_64 rng(1);
  const std::vector<UnitVector> off_equator{testing::random_unit(5, rng)};
  EXPECT_NEAR(losses::svgd_loss(off_equator, off_equator, cfg), 0.0, 1e-14);
}

TEST(Svgd, StructuralScore) {
  EXPECT_NEAR(losses::structural_score(0.5, 1e-4), 0.5 / (0.75 + 1e-4), 1e-15);
  EXPECT_NEAR(losses::structural_score(0.5, 1e-4), 0.6667, 1e-3);
}

TEST(Svgd, FieldIsTangent) {
  std::mt19937_64 rng(3);
  for (auto kind : {KernelKind::vmf, KernelKind::rbf, KernelKind::imq}) {
    LossConfig cfg;
    cfg.kernel = kind;
    std::vector<UnitVector> batch, anchors;
    for (int i = 0; i < 12; ++i) {
      batch.push_back(testing::random_unit(6, rng));
      anchors.push_back(testing::random_unit(6, rng));
    }
    const auto field = losses::svgd_transport_field(batch, anchors, cfg);
    for (std::size_t i = 0; i < batch.size(); ++i)
      EXPECT_LE(std::abs(field[i].direction.dot(batch[i].coords())), 1e-8);
  }
}

TEST(Svgd, AntipodalPairByDirectFormula) {
  LossConfig cfg;
  const Eigen::Index d = 3;
  Vector a(d);
  a << 0.6, 0.0, 0.8;
  const std::vector<UnitVector> batch{UnitVector::trusted(a), UnitVector::trusted(-a)};
  const std::vector<UnitVector> anchors{UnitVector::basis(d, 0), UnitVector::basis(d, 1)};
  const double loss = losses::svgd_loss(batch, anchors, cfg);

  // Brute-force evaluation of the field.
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    Vector phi = Vector::Zero(d);
    for (int j = 0; j < 2; ++j) {
      const Vector& zj = batch[j].coords();
      const Vector& zi = batch[i].coords();
      const double k = std::exp(cfg.kappa_repel * zj.dot(zi));
      Vector s = cfg.kappa_align * anchors[j].coords();
      s(d - 1) += zj(d - 1) / (1.0 - zj(d - 1) * zj(d - 1) + cfg.structural_eps);
      phi += k * s + cfg.kappa_repel * k * zi;
    }
    phi /= 2.0;
    phi -= phi.dot(batch[i].coords()) * batch[i].coords();
    expect += phi.norm() / 2.0;
  }
  EXPECT_GT(loss, 0.0);
  EXPECT_NEAR(loss, expect, 1e-12);
}

TEST(Objective, TogglesAndWeights) {
  auto g = testing::make_grad_problem(1);
  LossConfig cfg;
  const auto all = total_objective(g.params, g.enc, cfg, g.features, g.batch);
  EXPECT_NEAR(all.total, 0.7 * all.geom + 0.3 * all.prob + 0.1 * all.svgd, 1e-12);

  LossConfig no_svgd = cfg;
  no_svgd.svgd_enabled = false;
  const auto t = total_objective(g.params, g.enc, no_svgd, g.features, g.batch);
  EXPECT_NEAR(all.total - t.total, 0.1 * all.svgd, 1e-12);
  EXPECT_EQ(t.svgd, 0.0);

  LossConfig off = cfg;
  off.geom_enabled = off.prob_enabled = off.svgd_enabled = false;
  EXPECT_EQ(total_objective(g.params, g.enc, off, g.features, g.batch).total, 0.0);
  const auto zero = gradients(g.params, g.enc, off, g.features, g.batch);
  EXPECT_EQ(zero.grad.adapter.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Objective, GeomOnlyMarginArithmetic) {
  // Identity adapter, no layers: a feature t e_1 lifts to angle t from the pole.
  EncoderConfig enc;
  enc.dim = 3;
  enc.input_dim = 3;
  ModelParams p;
  p.adapter = Matrix::Identity(3, 3);
  p.kappa_weights = Vector::Zero(3);
  std::vector<Vector> feats(2, Vector::Zero(3));
  feats[0](0) = 0.3;  // child
  feats[1](0) = 0.9;  // parent
  EXPECT_NEAR(manifold::geodesic_distance(encoder::encode(p, feats[0]), encoder::encode(p, feats[1])), 0.6,
              1e-12);
  LossConfig cfg;
  cfg.prob_enabled = cfg.svgd_enabled = false;
  // Negative == parent makes theta_cp == theta_cn in every triplet.
  const std::vector<Triplet> batch{{1, 0, 1}, {1, 0, 1}};
  EXPECT_NEAR(total_objective(p, enc, cfg, feats, batch).total, 0.7 * 0.5, 1e-12);
}

TEST(Objective, SaturatedHingeHasZeroGradient) {
  EncoderConfig enc;
  enc.dim = 3;
  enc.input_dim = 3;
  ModelParams p;
  p.adapter = Matrix::Identity(3, 3);
  p.kappa_weights = Vector::Zero(3);
  std::vector<Vector> feats(3, Vector::Zero(3));
  feats[0](0) = 0.1;   // child
  feats[1](0) = 0.15;  // parent right next to it
  feats[2](0) = -3.0;  // negative far away
  LossConfig cfg;
  cfg.prob_enabled = cfg.svgd_enabled = false;
  const std::vector<Triplet> batch{{1, 0, 2}};
  const auto r = gradients(p, enc, cfg, feats, batch);
  EXPECT_EQ(r.terms.total, 0.0);
  EXPECT_EQ(r.grad.adapter.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Objective, DeterministicBitwise) {
  auto g = testing::make_grad_problem(9);
  const LossConfig cfg;
  const auto a = gradients(g.params, g.enc, cfg, g.features, g.batch);
  const auto b = gradients(g.params, g.enc, cfg, g.features, g.batch);
  EXPECT_EQ(a.terms.total, b.terms.total);
  EXPECT_TRUE(a.grad.adapter == b.grad.adapter);
}

TEST(Objective, RejectsEmptyBatch) {
  auto g = testing::make_grad_problem(2);
  EXPECT_THROW(total_objective(g.params, g.enc, LossConfig{}, g.features, {}), Error);
}

struct GradCase {
  const char* term;
  KernelKind kernel;
  AnchorMode anchor;
  bool detach = true;
};

class ObjectiveGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(ObjectiveGradient, MatchesFiniteDifferences) {
  const auto c = GetParam();
  LossConfig cfg;
  cfg.kernel = c.kernel;
  cfg.anchor = c.anchor;
  cfg.detach_anchor = c.detach;
  cfg = testing::only_term(cfg, c.term);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto g = testing::make_grad_problem(100 + seed);
    const auto r = testing::check_objective_gradient(g, cfg, 50, seed);
    EXPECT_EQ(r.failed, 0) << c.term << " seed " << seed << " worst " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Terms, ObjectiveGradient,
    ::testing::Values(GradCase{"geom", KernelKind::vmf, AnchorMode::learned},
                      GradCase{"prob", KernelKind::vmf, AnchorMode::learned},
                      GradCase{"svgd", KernelKind::vmf, AnchorMode::learned},
                      GradCase{"svgd", KernelKind::vmf, AnchorMode::self},
                      GradCase{"svgd", KernelKind::rbf, AnchorMode::learned},
                      GradCase{"svgd", KernelKind::imq, AnchorMode::learned},
                      GradCase{"total", KernelKind::vmf, AnchorMode::learned},
                      GradCase{"svgd", KernelKind::vmf, AnchorMode::learned, false},
                      GradCase{"svgd", KernelKind::vmf, AnchorMode::self, false},
                      GradCase{"svgd", KernelKind::imq, AnchorMode::learned, false},
                      GradCase{"total", KernelKind::vmf, AnchorMode::learned, false}));

}  // namespace
}  // namespace orbis
