#include "flownet/theory.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace flownet;

constexpr double pi = std::numbers::pi;

namespace {

FundamentalPath diagonal_path(std::initializer_list<double> times)
{
  FundamentalPath p;
  for (double t : times) {
    Eigen::MatrixXd W(2, 2);
    W << std::exp(t), 0, 0, std::exp(-t);
    p.times.push_back(t);
    p.matrices.push_back(W);
  }
  return p;
}

void expect_within(const MCEstimate& e, double truth, double n_se)
{
  EXPECT_LT(std::abs(e.value - truth), n_se * e.std_error)
    << "estimate " << e.value << " +- " << e.std_error << " vs " << truth;
}

} // namespace

TEST(GalaxyFormula, ClosedForm)
{
  EXPECT_DOUBLE_EQ(vol_galaxy_formula(1.0, 0.3), pi * 0.09);
  EXPECT_DOUBLE_EQ(vol_galaxy_formula(std::numbers::e, 1.0), pi + 2.0);
  EXPECT_THROW(vol_galaxy_formula(0.5, 1.0), DomainError);
  EXPECT_THROW(vol_galaxy_formula(2.0, 0.0), DomainError);
}

TEST(Pullback, IdentityGivesCircles)
{
  FundamentalPath p{ { 0, 1 }, { Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2) } };
  for (const auto& e : pullback_ellipses(p, 0.2)) {
    EXPECT_DOUBLE_EQ(e.a, 0.2);
    EXPECT_DOUBLE_EQ(e.b, 0.2);
  }
}

TEST(Pullback, DiagonalStretching)
{
  const auto ellipses = pullback_ellipses(diagonal_path({ 0.5, 1.0, 2.0 }), 0.1);
  const double ts[] = { 0.5, 1.0, 2.0 };
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(ellipses[k].a, 0.1 * std::exp(ts[k]), 1e-12);
    EXPECT_NEAR(ellipses[k].b, 0.1 * std::exp(-ts[k]), 1e-12);
    // The contracting direction of W is the long axis of the preimage.
    EXPECT_NEAR(std::sin(ellipses[k].angle), 1.0, 1e-12);
  }
  // The boundary of the preimage maps onto the eps-circle.
  const auto& e = ellipses[1];
  const double x = 0.0, y = 0.1 * std::exp(1.0) * 0.999;
  EXPECT_TRUE(e.contains(x, y));
  EXPECT_FALSE(e.contains(x, 0.1 * std::exp(1.0) * 1.001));
}

TEST(Pullback, SingularMatrixRejected)
{
  FundamentalPath p{ { 0 }, { Eigen::MatrixXd::Zero(2, 2) } };
  EXPECT_THROW(pullback_ellipses(p, 0.1), DegenerateMatrixError);
  FundamentalPath q{ { 0 }, { Eigen::MatrixXd::Identity(3, 3) } };
  EXPECT_THROW(pullback_ellipses(q, 0.1), ShapeError);
}

TEST(UnionArea, SingleCircle)
{
  const auto est = ellipse_union_area_mc({ Ellipse2D{ 0, 0, 1, 1, 0 } }, 200000, 1);
  expect_within(est, pi, 3.0);
}

TEST(UnionArea, DisjointCirclesAdd)
{
  const auto est = ellipse_union_area_mc({ Ellipse2D{ 0, 0, 1, 1, 0 }, Ellipse2D{ 5, 0, 1, 1, 0 } }, 400000, 2);
  expect_within(est, 2 * pi, 3.0);
}

TEST(UnionArea, AxisAlignedFamilyMatchesFormula)
{
  const auto fam = axis_aligned_family(4.0, 1.0, 200);
  const auto est = ellipse_union_area_mc(fam, 1000000, 3);
  expect_within(est, pi + 2.0 * std::log(4.0), 3.0);
}

TEST(UnionArea, DeterministicInSeed)
{
  const auto fam = axis_aligned_family(3.0, 1.0, 50);
  const auto a = ellipse_union_area_mc(fam, 50000, 9);
  const auto b = ellipse_union_area_mc(fam, 50000, 9);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_NE(a.value, ellipse_union_area_mc(fam, 50000, 10).value);
}

TEST(UnionArea, FamilyShape)
{
  const auto one = axis_aligned_family(1.0, 2.0, 10);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].a, 2.0);
  const auto fam = axis_aligned_family(10.0, 1.0, 5);
  ASSERT_EQ(fam.size(), 5u);
  EXPECT_DOUBLE_EQ(fam.front().a, 1.0);
  EXPECT_DOUBLE_EQ(fam.back().a, 10.0);
  EXPECT_DOUBLE_EQ(fam.back().b, 0.1);
  EXPECT_THROW(axis_aligned_family(0.5, 1.0, 5), DomainError);
}

TEST(GalaxyVolume, StaticFlowIsADisc)
{
  using V = Eigen::Vector2d;
  auto zero = [](const V&, double) { return V::Zero().eval(); };
  GalaxySpec<2> spec{ V(0.5, 0.5), 0.1, { 0.0, 1.0, 2.0 } };
  const auto g = galaxy_volume_mc<2>(ode_path<2>(zero, spec.times, 0.1), spec, V(0, 0), V(1, 1), 100000, 4);
  expect_within(g.estimate, pi * 0.01, 3.0);
  for (const auto& h : g.hits)
    EXPECT_LT((h - V(0.5, 0.5)).norm(), 0.1);
}

TEST(GalaxyVolume, LinearSaddleMatchesLinearizedPullbacks)
{
  using V = Eigen::Vector2d;
  const double lam = 1.0, eps = 0.01;
  auto saddle = [lam](const V& x, double) { return V(lam * x[0], -lam * x[1]); };
  std::vector<double> times;
  for (int k = 0; k <= 10; ++k)
    times.push_back(0.1 * k);
  GalaxySpec<2> spec{ V(0.0, 0.0), eps, times };
  const auto g =
    galaxy_volume_mc<2>(ode_path<2>(saddle, times, 0.01), spec, V(-0.02, -0.1), V(0.02, 0.1), 400000, 5);
  FundamentalPath path;
  for (double t : times) {
    Eigen::MatrixXd W(2, 2);
    W << std::exp(lam * t), 0, 0, std::exp(-lam * t);
    path.times.push_back(t);
    path.matrices.push_back(W);
  }
  const auto lin = ellipse_union_area_mc(pullback_ellipses(path, eps), 400000, 6);
  EXPECT_NEAR(g.estimate.value / lin.value, 1.0, 0.05);
}

TEST(GalaxyVolume, MapPath)
{
  using V = Eigen::Matrix<double, 1, 1>;
  auto identity = [](const V& x) { return x; };
  GalaxySpec<1> spec{ V(0.5), 0.1, {} };
  const auto g = galaxy_volume_mc<1>(map_path<1>(identity, 3), spec, V(0.0), V(1.0), 100000, 8);
  expect_within(g.estimate, 0.2, 3.0);
}

TEST(Overlap, CircleConstant)
{
  EXPECT_NEAR(circle_overlap_constant(), 0.586503, 1e-6);
  const auto est = expected_overlap_mc(1.0, 0.3, 200000, 1);
  expect_within(est, circle_overlap_constant(), 3.0);
}

TEST(Overlap, DecreasesWithStretchingWhenRotating)
{
  const auto at1 = expected_overlap_mc(1.0, pi / 8, 100000, 2);
  const auto at4 = expected_overlap_mc(4.0, pi / 8, 100000, 2);
  EXPECT_LT(at4.value, at1.value);
}

TEST(Overlap, FlatWithoutRotation)
{
  const auto a = expected_overlap_mc(1.0, 0.0, 100000, 3);
  const auto b = expected_overlap_mc(7.0, 0.0, 100000, 3);
  EXPECT_NEAR(a.value, b.value, 1e-12);
  EXPECT_THROW(expected_overlap_mc(0.5, 0.0, 100, 3), DomainError);
  EXPECT_THROW(expected_overlap_mc(2.0, -1.0, 100, 3), DomainError);
}

TEST(RotationCost, Formula)
{
  EXPECT_EQ(rotation_cost(1.0, 0.7), 0.7);
  EXPECT_EQ(rotation_cost(10.0, 1.0), 100.0);
  EXPECT_THROW(rotation_cost(0.9, 1.0), DomainError);
}
