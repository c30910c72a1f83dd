#include "flownet/flows.hpp"
#include "flownet/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace flownet;

constexpr double pi = std::numbers::pi;

TEST(Map1D, Branches)
{
  EXPECT_EQ(map_1d_step(0.1), 0.1);
  EXPECT_EQ(map_1d_step(0.25), 0.25);
  EXPECT_EQ(map_1d_step(0.75), 0.75);
  EXPECT_EQ(map_1d_step(0.5), 0.25);
  EXPECT_DOUBLE_EQ(map_1d_step(0.375), 0.5);
  EXPECT_THROW(map_1d_step(1.5), DomainError);
  EXPECT_THROW(map_1d_step(-0.1), DomainError);
}

TEST(Map1D, EnsembleAgreesWithStepFunctionWhileFloatsAreExact)
{
  const auto ens = generate_map_ensemble(1000, 20);
  ASSERT_EQ(ens.n_traj(), 1000u);
  ASSERT_EQ(ens.n_times(), 21u);
  // The first few iterations lose no precision in floating point either.
  for (std::size_t i = 0; i < 1000; ++i) {
    double x = ens.at(0, i, 0);
    EXPECT_NEAR(x, static_cast<double>(i) / 999.0, 1e-15);
    for (std::size_t t = 1; t <= 5; ++t) {
      x = map_1d_step(x);
      EXPECT_NEAR(ens.at(t, i, 0), x, 1e-12) << "i=" << i << " t=" << t;
    }
  }
}

TEST(Map1D, MixingRegionStaysSpreadOut)
{
  const auto ens = generate_map_ensemble(1000, 100);
  std::size_t low = 0, count = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const double x0 = ens.at(0, i, 0);
    if (x0 < 0.25 || x0 >= 0.75)
      EXPECT_EQ(ens.at(100, i, 0), x0);
    else {
      ++count;
      low += ens.at(100, i, 0) < 0.26;
    }
  }
  EXPECT_LT(low, count / 4);
}

TEST(DoubleGyre, VelocityAtReferenceState)
{
  const DoubleGyreParams p;
  const Vec2 v = double_gyre_velocity(Vec2(1.0, 0.5), 0.0, p);
  EXPECT_NEAR(v[0], 0.0, 1e-15);
  EXPECT_NEAR(v[1], -pi * p.A, 1e-15);
}

TEST(DoubleGyre, BottomWallIsInvariant)
{
  const DoubleGyreParams p;
  for (double y : { 0.1, 0.7, 1.3 })
    for (double t : { 0.0, 0.3, 2.1 })
      EXPECT_EQ(double_gyre_velocity(Vec2(y, 0.0), t, p)[1], 0.0);
}

TEST(DoubleGyre, DivergenceFreeAndJacobianMatchesDifferences)
{
  const DoubleGyreParams p;
  CounterRng rng(7, 0);
  for (int k = 0; k < 10; ++k) {
    const Vec2 x(rng.uniform(0.0, 2.0), rng.uniform(0.0, 1.0));
    const double t = rng.uniform(0.0, 10.0);
    const Mat2 J = double_gyre_jacobian(x, t, p);
    EXPECT_NEAR(J.trace(), 0.0, 1e-10);
    const double h = 1e-6;
    for (int c = 0; c < 2; ++c) {
      Vec2 e = Vec2::Zero();
      e[c] = h;
      const Vec2 fd = (double_gyre_velocity(x + e, t, p) - double_gyre_velocity(x - e, t, p)) / (2 * h);
      EXPECT_NEAR(J(0, c), fd[0], 1e-7);
      EXPECT_NEAR(J(1, c), fd[1], 1e-7);
    }
  }
}

TEST(Integrate, ZeroFieldIsConstant)
{
  auto f = [](const Vec2&, double) { return Vec2::Zero().eval(); };
  const auto traj = integrate_rk4(f, Vec2(0.3, 0.4), 0.0, 1.0, 0.1);
  ASSERT_EQ(traj.states.size(), 11u);
  for (const auto& s : traj.states)
    EXPECT_EQ(s, Vec2(0.3, 0.4));
}

TEST(Integrate, ExponentialGrowth)
{
  auto f = [](double x, double) { return x; };
  const auto traj = integrate_rk4(f, 1.0, 0.0, 1.0, 0.01);
  EXPECT_NEAR(traj.states.back(), std::numbers::e, 1e-8);
  EXPECT_DOUBLE_EQ(traj.times.back(), 1.0);
}

TEST(Integrate, ShortenedLastStepLandsOnEndpoint)
{
  auto f = [](double x, double) { return x; };
  const auto traj = integrate_rk4(f, 1.0, 0.0, 0.25, 0.1);
  ASSERT_EQ(traj.times.size(), 4u);
  EXPECT_EQ(traj.times.back(), 0.25);
  // For x' = x one RK4 step multiplies by the quartic Taylor polynomial of exp(h).
  auto step = [](double h) { return 1 + h + h * h / 2 + h * h * h / 6 + h * h * h * h / 24; };
  EXPECT_NEAR(traj.states.back(), step(0.1) * step(0.1) * step(0.05), 1e-14);
}

TEST(Integrate, RejectsBadArguments)
{
  auto f = [](double x, double) { return x; };
  EXPECT_THROW(integrate_rk4(f, 1.0, 0.0, 1.0, 0.0), DomainError);
  EXPECT_THROW(integrate_rk4(f, 1.0, 1.0, 1.0, 0.1), DomainError);
  auto blow = [](double x, double) { return x * x; };
  EXPECT_THROW(integrate_rk4(blow, 1.0, 0.0, 5.0, 0.1), BlowUpError);
}

TEST(Variational, ZeroFieldKeepsIdentity)
{
  auto f = [](const Vec2&, double) { return Vec2::Zero().eval(); };
  auto jac = [](const Vec2&, double) { return Mat2::Zero().eval(); };
  const auto [traj, path] = integrate_variational<2>(f, jac, Vec2(1, 1), 0.0, 1.0, 0.1);
  for (const auto& W : path.matrices)
    EXPECT_TRUE(W.isApprox(Eigen::MatrixXd::Identity(2, 2)));
}

TEST(Variational, LinearSaddle)
{
  const double lam = 1.0;
  auto f = [lam](const Vec2& x, double) { return Vec2(lam * x[0], -lam * x[1]); };
  auto jac = [lam](const Vec2&, double) {
    Mat2 J;
    J << lam, 0, 0, -lam;
    return J;
  };
  const auto [traj, path] = integrate_variational<2>(f, jac, Vec2(0.1, 0.2), 0.0, 1.0, 0.001);
  const auto& W = path.matrices.back();
  EXPECT_NEAR(W(0, 0), std::exp(lam), 1e-8);
  EXPECT_NEAR(W(1, 1), std::exp(-lam), 1e-8);
  EXPECT_NEAR(W(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(W(1, 0), 0.0, 1e-12);
  const Mat2 W2 = flow_map_jacobian<2>(f, jac, Vec2(0.1, 0.2), 0.0, 1.0, 0.001);
  EXPECT_TRUE(W2.isApprox(Mat2(W), 1e-14));
}

TEST(Variational, DoubleGyreAreaPreserving)
{
  const DoubleGyreParams p;
  auto f = [&p](const Vec2& x, double t) { return double_gyre_velocity(x, t, p); };
  auto jac = [&p](const Vec2& x, double t) { return double_gyre_jacobian(x, t, p); };
  const auto [traj, path] = integrate_variational<2>(f, jac, Vec2(0.5, 0.4), 0.0, 2.0, 0.01);
  for (const auto& W : path.matrices)
    EXPECT_NEAR(W.determinant(), 1.0, 1e-8);
}

TEST(Ftle, FromMatrix)
{
  EXPECT_EQ(ftle_from_W(Mat2::Identity(), 0.0, 1.0), 0.0);
  Mat2 D;
  D << std::exp(2.0), 0, 0, std::exp(-2.0);
  EXPECT_NEAR(ftle_from_W(D, 0.0, 2.0), 1.0, 1e-14);
  EXPECT_NEAR(ftle_from_W(D, 2.0, 0.0), 1.0, 1e-14);
  const double a = 0.7;
  Mat2 R;
  R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  EXPECT_NEAR(ftle_from_W(R, 0.0, 3.0), 0.0, 1e-14);
  EXPECT_THROW(ftle_from_W(Mat2::Zero(), 0.0, 1.0), DegenerateMatrixError);
  EXPECT_THROW(ftle_from_W(Mat2::Identity(), 1.0, 1.0), DomainError);
}

TEST(Ftle, StaticEnsembleHasZeroField)
{
  const auto grid = linspace_grid({ 5, 4 }, { 0, 0 }, { 1, 1 });
  std::vector<double> pos;
  for (int t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < grid.size(); ++i) {
      pos.push_back(grid.position(i, 0));
      pos.push_back(grid.position(i, 1));
    }
  const TrajectoryEnsemble ens(grid.size(), 2, { 0.0, 1.0, 2.0 }, pos);
  const auto field = ftle_field_fd(ens, infer_grid(ens, { 5, 4 }), 0, 2);
  for (double v : field.values)
    EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(Ftle, LinearSaddleGridGivesRate)
{
  const double lam = 0.5;
  const auto grid = linspace_grid({ 9, 7 }, { -1, -1 }, { 1, 1 });
  std::vector<double> times{ 0.0, 1.0, 2.0 }, pos;
  for (double t : times)
    for (std::size_t i = 0; i < grid.size(); ++i) {
      pos.push_back(grid.position(i, 0) * std::exp(lam * t));
      pos.push_back(grid.position(i, 1) * std::exp(-lam * t));
    }
  const TrajectoryEnsemble ens(grid.size(), 2, times, pos);
  const auto field = ftle_field_fd(ens, grid, 0, 2);
  for (double v : field.values)
    EXPECT_NEAR(v, lam, 1e-12);
  const auto later = ftle_field_fd(ens, grid, 1, 2);
  for (double v : later.values)
    EXPECT_NEAR(v, lam, 1e-12);
}

TEST(Ftle, GridMismatchRejected)
{
  const auto ens = generate_map_ensemble(10, 2);
  EXPECT_THROW(infer_grid(ens, { 3, 3 }), ShapeError);
  EXPECT_THROW(infer_grid(ens, { 9 }), ShapeError);
}

TEST(Ftle, FiniteDifferenceConvergesToVariational)
{
  // Central differences are second order, so halving the spacing cuts the
  // interior RMS gap by about four.
  auto rms_gap = [](std::size_t s) {
    const auto grid = double_gyre_grid(40 * s + 1, 20 * s + 1);
    const auto ens = generate_double_gyre_ensemble(grid, 1.0, 0.5, 0.01);
    const auto fd = ftle_field_fd(ens, grid, 0, 2);
    const auto var = double_gyre_ftle_variational(grid, 1.0, 0.01);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto cy = grid.coord(i, 0), cz = grid.coord(i, 1);
      if (cy == 0 || cz == 0 || cy + 1 == grid.shape[0] || cz + 1 == grid.shape[1])
        continue;
      sum += std::pow(fd.values[i] - var.values[i], 2);
      ++count;
    }
    return std::sqrt(sum / static_cast<double>(count));
  };
  const double coarse = rms_gap(2), fine = rms_gap(4);
  EXPECT_LT(coarse, 0.02);
  EXPECT_GT(coarse / fine, 3.0);
}

TEST(Smooth, ConstantFieldUnchangedAndMassSpreads)
{
  const auto grid = linspace_grid({ 21, 11 }, { 0, 0 }, { 2, 1 });
  ScalarField f{ grid, std::vector<double>(grid.size(), 3.0) };
  for (double v : gaussian_smooth(f, 0.2).values)
    EXPECT_NEAR(v, 3.0, 1e-14);
  ScalarField spike{ grid, std::vector<double>(grid.size(), 0.0) };
  spike.values[10 + 5 * 21] = 1.0;
  const auto s = gaussian_smooth(spike, 0.1);
  EXPECT_LT(s.values[10 + 5 * 21], 1.0);
  EXPECT_GT(s.values[11 + 5 * 21], 0.0);
  EXPECT_NEAR(s.values[11 + 5 * 21], s.values[9 + 5 * 21], 1e-15);
  EXPECT_EQ(s.values[0], 0.0);
  EXPECT_THROW(gaussian_smooth(f, 0.0), DomainError);
}

TEST(SingularHistory, IdentityAndDiagonalPaths)
{
  FundamentalPath id{ { 0, 1, 2 }, { Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2),
                                     Eigen::MatrixXd::Identity(2, 2) } };
  const auto h = singular_history(id);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(h.sigma1[k], 1.0);
    EXPECT_EQ(h.theta[k], h.theta[0]);
  }

  FundamentalPath diag;
  for (double t : { 0.5, 1.0, 2.0 }) {
    Eigen::MatrixXd W(2, 2);
    W << std::exp(t), 0, 0, std::exp(-t);
    diag.times.push_back(t);
    diag.matrices.push_back(W);
  }
  const auto d = singular_history(diag);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(d.sigma1[k], std::exp(diag.times[k]), 1e-12);
    EXPECT_NEAR(d.sigma2[k], std::exp(-diag.times[k]), 1e-12);
    EXPECT_NEAR(d.theta_mod_pi[k], 0.0, 1e-12);
  }
}

TEST(SingularHistory, UnwrapsAcrossPi)
{
  FundamentalPath path;
  for (int k = 0; k < 40; ++k) {
    const double a = 0.1 * k;
    Eigen::MatrixXd R(2, 2), S(2, 2);
    R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    S << 3.0, 0, 0, 1.0 / 3.0;
    path.times.push_back(k);
    path.matrices.push_back(S * R.transpose());
  }
  const auto h = singular_history(path);
  for (int k = 0; k < 40; ++k) {
    EXPECT_NEAR(h.theta[static_cast<std::size_t>(k)], 0.1 * k, 1e-9);
    EXPECT_GE(h.theta_mod_pi[static_cast<std::size_t>(k)], 0.0);
    EXPECT_LT(h.theta_mod_pi[static_cast<std::size_t>(k)], pi);
  }
}

TEST(DoubleGyreEnsemble, MatchesGenericIntegrator)
{
  const auto grid = double_gyre_grid(7, 5);
  const auto ens = generate_double_gyre_ensemble(grid, 2.0, 0.1, 0.01);
  ASSERT_EQ(ens.n_times(), 21u);
  const DoubleGyreParams p;
  auto f = [&p](const Vec2& x, double t) { return double_gyre_velocity(x, t, p); };
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto states = integrate_sampled(f, Vec2(grid.position(i, 0), grid.position(i, 1)), ens.times(), 0.01);
    for (std::size_t t = 0; t < ens.n_times(); ++t) {
      EXPECT_NEAR(ens.at(t, i, 0), states[t][0], 1e-12);
      EXPECT_NEAR(ens.at(t, i, 1), states[t][1], 1e-12);
    }
  }
}

TEST(DoubleGyreEnsemble, IndependentOfThreadCount)
{
  const auto grid = double_gyre_grid(40, 20);
  set_max_threads(1);
  const auto a = generate_double_gyre_ensemble(grid, 1.0, 0.1, 0.01);
  set_max_threads(4);
  const auto b = generate_double_gyre_ensemble(grid, 1.0, 0.1, 0.01);
  set_max_threads(0);
  EXPECT_EQ(a, b);
}

TEST(OutputTimes, MultiplesOnly)
{
  const auto t = output_times(20.0, 0.1);
  EXPECT_EQ(t.size(), 201u);
  EXPECT_EQ(t.back(), 20.0);
  EXPECT_THROW(output_times(1.0, 0.3), DomainError);
}
