#pragma once

#include "flownet/ensemble.hpp"
#include "flownet/error.hpp"
#include "flownet/parallel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace flownet {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// ---------------------------------------------------------------------------
// One-dimensional prototype map: two static regions around a doubling map.
// ---------------------------------------------------------------------------

/**
 * Identity on [0,1/4) and (3/4,1], doubling map (2(x-1/4) mod 1/2) + 1/4 on
 * [1/4,3/4]. The right endpoint 3/4 is mapped to itself, which keeps the
 * map continuous from the right there.
 */
inline double map_1d_step(double x)
{
  if (!(x >= 0.0 && x <= 1.0))
    throw DomainError("map_1d_step: x must lie in [0,1]");
  if (x < 0.25 || x >= 0.75)
    return x;
  return std::fmod(2.0 * (x - 0.25), 0.5) + 0.25;
}

/**
 * n equispaced points on [0,1] iterated `steps` times.
 *
 * The initial points k/(n-1) are rationals with denominator 4(n-1) once the
 * offset 1/4 is taken into account, so the orbit is tracked in exact integer
 * arithmetic and only rounded on output. Iterating map_1d_step in floating
 * point would shift out one mantissa bit per step and collapse the mixing
 * region onto 1/4 after roughly 50 iterations.
 */
inline TrajectoryEnsemble generate_map_ensemble(std::size_t n, std::size_t steps)
{
  if (n < 2)
    throw DomainError("generate_map_ensemble: need n >= 2");
  if (steps < 1)
    throw DomainError("generate_map_ensemble: need steps >= 1");
  const std::int64_t m = static_cast<std::int64_t>(n) - 1;
  const std::int64_t q = 4 * m; // common denominator
  const std::int64_t quarter = m, three_quarters = 3 * m, half = 2 * m;

  std::vector<std::int64_t> num(n);
  for (std::size_t k = 0; k < n; ++k)
    num[k] = 4 * static_cast<std::int64_t>(k);

  std::vector<double> times(steps + 1);
  std::vector<double> positions((steps + 1) * n);
  for (std::size_t s = 0; s <= steps; ++s) {
    times[s] = static_cast<double>(s);
    for (std::size_t k = 0; k < n; ++k)
      positions[s * n + k] = static_cast<double>(num[k]) / static_cast<double>(q);
    for (auto& p : num)
      if (p >= quarter && p < three_quarters)
        p = (2 * (p - quarter)) % half + quarter;
  }
  return TrajectoryEnsemble(n, 1, std::move(times), std::move(positions));
}

// ---------------------------------------------------------------------------
// Periodically driven double gyre on [0,2] x [0,1].
// ---------------------------------------------------------------------------

struct DoubleGyreParams
{
  double A = 0.25;
  double delta = 0.25;
  double omega = 2.0 * std::numbers::pi;
};

inline Vec2 double_gyre_velocity(const Vec2& state, double t, const DoubleGyreParams& p)
{
  constexpr double pi = std::numbers::pi;
  const double a = p.delta * std::sin(p.omega * t);
  const double b = 1.0 - 2.0 * a;
  const double y = state[0], z = state[1];
  const double f = a * y * y + b * y;
  const double df = 2.0 * a * y + b;
  return { -pi * p.A * std::sin(pi * f) * std::cos(pi * z),
           pi * p.A * std::cos(pi * f) * std::sin(pi * z) * df };
}

/// Analytic spatial Jacobian of double_gyre_velocity; the trace is exactly zero.
inline Mat2 double_gyre_jacobian(const Vec2& state, double t, const DoubleGyreParams& p)
{
  constexpr double pi = std::numbers::pi;
  const double a = p.delta * std::sin(p.omega * t);
  const double b = 1.0 - 2.0 * a;
  const double y = state[0], z = state[1];
  const double f = a * y * y + b * y;
  const double df = 2.0 * a * y + b;
  const double sf = std::sin(pi * f), cf = std::cos(pi * f);
  const double sz = std::sin(pi * z), cz = std::cos(pi * z);
  const double diag = pi * pi * p.A * cf * cz * df;
  Mat2 J;
  J(0, 0) = -diag;
  J(0, 1) = pi * pi * p.A * sf * sz;
  J(1, 0) = pi * p.A * sz * (2.0 * a * cf - pi * sf * df * df);
  J(1, 1) = diag;
  return J;
}

/// The six reference initial conditions x_1..x_6 used for pullback and singular-value studies.
inline const std::array<Vec2, 6>& double_gyre_reference_points()
{
  static const std::array<Vec2, 6> points{ Vec2(1.0, 0.5),   Vec2(0.5, 0.4),
                                           Vec2(0.5, 0.7),   Vec2(0.86, 0.25),
                                           Vec2(0.99, 0.01), Vec2(0.98, 0.25) };
  return points;
}

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

namespace detail {
inline bool all_finite(double x) { return std::isfinite(x); }
template<typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& x)
{
  return x.allFinite();
}
} // namespace detail

template<typename State>
struct SampledTrajectory
{
  std::vector<double> times;
  std::vector<State> states;
};

/// One classical Runge-Kutta step of size h.
template<typename State, typename Field>
State rk4_step(Field&& f, const State& x, double t, double h)
{
  const State k1 = f(x, t);
  const State k2 = f(State(x + (0.5 * h) * k1), t + 0.5 * h);
  const State k3 = f(State(x + (0.5 * h) * k2), t + 0.5 * h);
  const State k4 = f(State(x + h * k3), t + h);
  return State(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

namespace detail {
/// Step count for [t0,t1] with steps of at most dt; the final step is shortened.
inline std::size_t rk4_step_count(double t0, double t1, double dt)
{
  const double span = (t1 - t0) / dt;
  auto steps = static_cast<std::size_t>(std::floor(span));
  // Treat a remainder below rounding noise as an exact fit.
  if (span - static_cast<double>(steps) > 1e-9)
    ++steps;
  return std::max<std::size_t>(steps, 1);
}
} // namespace detail

/**
 * Samples the solution of x' = f(x, t) at t0, t0+dt, ..., t1. The last step
 * is shortened so the final sample lands exactly on t1.
 */
template<typename State, typename Field>
SampledTrajectory<State> integrate_rk4(Field&& f, State x0, double t0, double t1, double dt)
{
  if (!(dt > 0.0))
    throw DomainError("integrate_rk4: dt must be positive");
  if (!(t1 > t0))
    throw DomainError("integrate_rk4: need t1 > t0");
  const std::size_t steps = detail::rk4_step_count(t0, t1, dt);
  SampledTrajectory<State> out;
  out.times.reserve(steps + 1);
  out.states.reserve(steps + 1);
  out.times.push_back(t0);
  out.states.push_back(x0);
  State x = std::move(x0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const double t_next = (k + 1 == steps) ? t1 : t0 + static_cast<double>(k + 1) * dt;
    x = rk4_step(f, x, t, t_next - t);
    if (!detail::all_finite(x))
      throw BlowUpError(t_next);
    out.times.push_back(t_next);
    out.states.push_back(x);
  }
  return out;
}

/**
 * Advances x0 from times[0] through every entry of `times`, using equal
 * internal RK4 steps of at most dt between consecutive output times.
 */
template<typename State, typename Field>
std::vector<State> integrate_sampled(Field&& f, State x0, std::span<const double> times, double dt)
{
  if (!(dt > 0.0))
    throw DomainError("integrate_sampled: dt must be positive");
  std::vector<State> out;
  out.reserve(times.size());
  State x = std::move(x0);
  out.push_back(x);
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double a = times[k - 1], b = times[k];
    if (!(b > a))
      throw DomainError("integrate_sampled: times must increase");
    const std::size_t sub = detail::rk4_step_count(a, b, dt);
    const double h = (b - a) / static_cast<double>(sub);
    for (std::size_t s = 0; s < sub; ++s)
      x = rk4_step(f, x, a + static_cast<double>(s) * h, h);
    if (!detail::all_finite(x))
      throw BlowUpError(b);
    out.push_back(x);
  }
  return out;
}

/// Time series of the fundamental matrix W(t0, t) along one trajectory.
struct FundamentalPath
{
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> matrices;
};

namespace detail {
/// Coupled (state, W) RK4 step for the variational equation W' = Df(x,t) W.
template<int D, typename Field, typename Jacobian>
void variational_step(Field& f,
                      Jacobian& jac,
                      Eigen::Matrix<double, D, 1>& x,
                      Eigen::Matrix<double, D, D>& W,
                      double t,
                      double h)
{
  using V = Eigen::Matrix<double, D, 1>;
  using M = Eigen::Matrix<double, D, D>;
  const V k1 = f(x, t);
  const M l1 = jac(x, t) * W;
  const V x2 = x + (0.5 * h) * k1;
  const M W2 = W + (0.5 * h) * l1;
  const V k2 = f(x2, t + 0.5 * h);
  const M l2 = jac(x2, t + 0.5 * h) * W2;
  const V x3 = x + (0.5 * h) * k2;
  const M W3 = W + (0.5 * h) * l2;
  const V k3 = f(x3, t + 0.5 * h);
  const M l3 = jac(x3, t + 0.5 * h) * W3;
  const V x4 = x + h * k3;
  const M W4 = W + h * l3;
  const V k4 = f(x4, t + h);
  const M l4 = jac(x4, t + h) * W4;
  x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  W += (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
}
} // namespace detail

/**
 * Integrates the trajectory together with its fundamental matrix, sampled
 * like integrate_rk4. W(t0, t0) = I.
 */
template<int D, typename Field, typename Jacobian>
std::pair<SampledTrajectory<Eigen::Matrix<double, D, 1>>, FundamentalPath>
integrate_variational(Field&& f,
                      Jacobian&& jac,
                      Eigen::Matrix<double, D, 1> x0,
                      double t0,
                      double t1,
                      double dt)
{
  if (!(dt > 0.0))
    throw DomainError("integrate_variational: dt must be positive");
  if (!(t1 > t0))
    throw DomainError("integrate_variational: need t1 > t0");
  using M = Eigen::Matrix<double, D, D>;
  const std::size_t steps = detail::rk4_step_count(t0, t1, dt);
  SampledTrajectory<Eigen::Matrix<double, D, 1>> traj;
  FundamentalPath path;
  M W = M::Identity();
  auto x = x0;
  traj.times.push_back(t0);
  traj.states.push_back(x);
  path.times.push_back(t0);
  path.matrices.emplace_back(W);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const double t_next = (k + 1 == steps) ? t1 : t0 + static_cast<double>(k + 1) * dt;
    detail::variational_step<D>(f, jac, x, W, t, t_next - t);
    if (!x.allFinite() || !W.allFinite())
      throw BlowUpError(t_next);
    traj.times.push_back(t_next);
    traj.states.push_back(x);
    path.times.push_back(t_next);
    path.matrices.emplace_back(W);
  }
  return { std::move(traj), std::move(path) };
}

/// Final fundamental matrix W(t0, t1) without storing the path.
template<int D, typename Field, typename Jacobian>
Eigen::Matrix<double, D, D> flow_map_jacobian(Field&& f,
                                              Jacobian&& jac,
                                              Eigen::Matrix<double, D, 1> x,
                                              double t0,
                                              double t1,
                                              double dt)
{
  using M = Eigen::Matrix<double, D, D>;
  const std::size_t steps = detail::rk4_step_count(t0, t1, dt);
  const double h = (t1 - t0) / static_cast<double>(steps);
  M W = M::Identity();
  for (std::size_t k = 0; k < steps; ++k)
    detail::variational_step<D>(f, jac, x, W, t0 + static_cast<double>(k) * h, h);
  if (!x.allFinite() || !W.allFinite())
    throw BlowUpError(t1);
  return W;
}

// ---------------------------------------------------------------------------
// Finite-time Lyapunov exponents
// ---------------------------------------------------------------------------

/// (1/|t-s|) log sigma_1(W).
template<typename Derived>
double ftle_from_W(const Eigen::MatrixBase<Derived>& W, double s, double t)
{
  if (t == s)
    throw DomainError("ftle_from_W: t must differ from s");
  const Eigen::MatrixXd M = W;
  if (!M.allFinite())
    throw DegenerateMatrixError("ftle_from_W: matrix has non-finite entries");
  // The smallest singular value of a strongly stretched area-preserving map
  // is below rounding noise, so invertibility is judged by the determinant.
  if (M.determinant() == 0.0)
    throw DegenerateMatrixError("ftle_from_W: matrix is singular");
  const double smax = Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()(0);
  return std::log(smax) / std::abs(t - s);
}

/// Regular grid; linear index runs over the first axis fastest.
struct GridSpec
{
  std::vector<std::size_t> shape;
  std::vector<double> origin;
  std::vector<double> spacing;

  std::size_t dims() const noexcept { return shape.size(); }

  std::size_t size() const noexcept
  {
    std::size_t n = 1;
    for (auto s : shape)
      n *= s;
    return n;
  }

  std::size_t stride(std::size_t axis) const noexcept
  {
    std::size_t s = 1;
    for (std::size_t k = 0; k < axis; ++k)
      s *= shape[k];
    return s;
  }

  std::size_t coord(std::size_t index, std::size_t axis) const noexcept
  {
    return (index / stride(axis)) % shape[axis];
  }

  double position(std::size_t index, std::size_t axis) const noexcept
  {
    return origin[axis] + spacing[axis] * static_cast<double>(coord(index, axis));
  }
};

/// Grid with `shape[k]` nodes spanning [lo[k], hi[k]] inclusive.
inline GridSpec linspace_grid(std::vector<std::size_t> shape,
                              std::vector<double> lo,
                              std::vector<double> hi)
{
  if (shape.size() != lo.size() || shape.size() != hi.size() || shape.empty())
    throw ShapeError("linspace_grid: inconsistent dimensions");
  GridSpec g;
  g.shape = std::move(shape);
  g.origin = lo;
  for (std::size_t k = 0; k < g.shape.size(); ++k) {
    if (g.shape[k] < 2)
      throw ShapeError("linspace_grid: every axis needs at least 2 nodes");
    g.spacing.push_back((hi[k] - lo[k]) / static_cast<double>(g.shape[k] - 1));
  }
  return g;
}

inline GridSpec double_gyre_grid(std::size_t ny, std::size_t nz)
{
  return linspace_grid({ ny, nz }, { 0.0, 0.0 }, { 2.0, 1.0 });
}

/**
 * Recovers the grid of the initial slice from its bounding box and checks
 * every point against it (relative tolerance 1e-9 of the spacing).
 */
inline GridSpec infer_grid(const TrajectoryEnsemble& ens, const std::vector<std::size_t>& shape)
{
  if (shape.size() != ens.dim())
    throw ShapeError("grid rank " + std::to_string(shape.size()) +
                     " does not match ensemble dimension " + std::to_string(ens.dim()));
  std::size_t count = 1;
  for (auto s : shape)
    count *= s;
  if (count != ens.n_traj())
    throw ShapeError("grid holds " + std::to_string(count) + " nodes but ensemble has " +
                     std::to_string(ens.n_traj()) + " trajectories");
  const auto box = bounding_box(ens, 0);
  std::vector<double> lo, hi;
  for (const auto& [a, b] : box) {
    lo.push_back(a);
    hi.push_back(b);
  }
  GridSpec g = linspace_grid(shape, lo, hi);
  for (std::size_t i = 0; i < ens.n_traj(); ++i)
    for (std::size_t k = 0; k < ens.dim(); ++k)
      if (std::abs(ens.at(0, i, k) - g.position(i, k)) > 1e-9 * g.spacing[k])
        throw ShapeError("initial slice is not the declared grid (trajectory " +
                         std::to_string(i) + ")");
  return g;
}

struct ScalarField
{
  GridSpec grid;
  std::vector<double> values;
};

namespace detail {
/// Derivative of slice positions along one grid axis, central inside, one-sided at the ends.
inline void grid_gradient(const TrajectoryEnsemble& ens,
                          const GridSpec& g,
                          std::size_t t,
                          std::size_t node,
                          Eigen::MatrixXd& F)
{
  const std::size_t d = g.dims();
  for (std::size_t axis = 0; axis < d; ++axis) {
    const std::size_t c = g.coord(node, axis);
    const std::size_t stride = g.stride(axis);
    std::size_t lo = node, hi = node;
    double width = g.spacing[axis];
    if (c > 0 && c + 1 < g.shape[axis]) {
      lo = node - stride;
      hi = node + stride;
      width *= 2.0;
    } else if (c == 0) {
      hi = node + stride;
    } else {
      lo = node - stride;
    }
    for (std::size_t k = 0; k < d; ++k)
      F(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(axis)) =
        (ens.at(t, hi, k) - ens.at(t, lo, k)) / width;
  }
}
} // namespace detail

/**
 * FTLE between slices t_start and t_end from finite differences of the flow
 * map over the initial grid. For t_start > 0 the gradient of the map
 * slice t_start -> t_end is obtained by the chain rule,
 * D(0->e) * D(0->s)^-1.
 */
inline ScalarField ftle_field_fd(const TrajectoryEnsemble& ens,
                                 const GridSpec& grid,
                                 std::size_t t_start,
                                 std::size_t t_end)
{
  if (grid.dims() != ens.dim() || grid.size() != ens.n_traj())
    throw ShapeError("ftle_field_fd: grid does not match ensemble");
  if (t_start >= ens.n_times() || t_end >= ens.n_times())
    throw DomainError("ftle_field_fd: slice index out of range");
  if (t_start == t_end)
    throw DomainError("ftle_field_fd: need distinct slices");
  const double span = ens.times()[t_end] - ens.times()[t_start];
  ScalarField out{ grid, std::vector<double>(grid.size()) };
  const auto d = static_cast<Eigen::Index>(ens.dim());
  parallel_blocks(grid.size(), 1024, [&](std::size_t begin, std::size_t end) {
    Eigen::MatrixXd Fe(d, d), Fs(d, d);
    for (std::size_t i = begin; i < end; ++i) {
      detail::grid_gradient(ens, grid, t_end, i, Fe);
      Eigen::MatrixXd F = Fe;
      if (t_start != 0) {
        detail::grid_gradient(ens, grid, t_start, i, Fs);
        F = Fe * Fs.inverse();
      }
      const double smax = Eigen::JacobiSVD<Eigen::MatrixXd>(F).singularValues()(0);
      // A collapsed stencil has no stretching information; report zero growth.
      out.values[i] = smax > 0.0 ? std::log(smax) / std::abs(span) : 0.0;
    }
  });
  return out;
}

/**
 * Gaussian smoothing with standard deviation `sigma` (physical units),
 * truncated at `truncate` standard deviations, applied axis by axis. Near
 * the boundary the weights are renormalized over the nodes inside the grid.
 */
inline ScalarField gaussian_smooth(const ScalarField& field, double sigma, double truncate = 3.0)
{
  if (!(sigma > 0.0))
    throw DomainError("gaussian_smooth: sigma must be positive");
  ScalarField out = field;
  std::vector<double> scratch(field.values.size());
  for (std::size_t axis = 0; axis < field.grid.dims(); ++axis) {
    const double h = field.grid.spacing[axis];
    const auto radius = static_cast<std::ptrdiff_t>(std::floor(truncate * sigma / h));
    std::vector<double> w(static_cast<std::size_t>(radius) + 1);
    for (std::ptrdiff_t j = 0; j <= radius; ++j) {
      const double x = static_cast<double>(j) * h / sigma;
      w[static_cast<std::size_t>(j)] = std::exp(-0.5 * x * x);
    }
    const std::size_t stride = field.grid.stride(axis);
    const auto len = static_cast<std::ptrdiff_t>(field.grid.shape[axis]);
    const auto& src = out.values;
    parallel_blocks(src.size(), 4096, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto c = static_cast<std::ptrdiff_t>(field.grid.coord(i, axis));
        double acc = 0.0, norm = 0.0;
        for (std::ptrdiff_t j = -radius; j <= radius; ++j) {
          const std::ptrdiff_t cj = c + j;
          if (cj < 0 || cj >= len)
            continue;
          const double wj = w[static_cast<std::size_t>(j < 0 ? -j : j)];
          acc += wj * src[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) +
                                                   j * static_cast<std::ptrdiff_t>(stride))];
          norm += wj;
        }
        scratch[i] = acc / norm;
      }
    });
    out.values.swap(scratch);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Singular-value history of a fundamental path
// ---------------------------------------------------------------------------

struct SingularHistory
{
  std::vector<double> times;
  std::vector<double> sigma1;
  std::vector<double> sigma2;
  /// Orientation of the first right singular vector reduced to [0, pi).
  std::vector<double> theta_mod_pi;
  /// Same angle shifted by multiples of pi for continuity between samples.
  std::vector<double> theta;
};

/**
 * Per-sample SVD of 2x2 fundamental matrices. Right singular vectors are
 * defined up to sign, so the angle is taken modulo pi; when sigma1 and
 * sigma2 coincide (relative gap below 1e-12) the previous angle is kept,
 * starting from 0.
 */
inline SingularHistory singular_history(const FundamentalPath& path)
{
  constexpr double pi = std::numbers::pi;
  SingularHistory h;
  double prev_mod = 0.0, prev_unwrapped = 0.0;
  for (std::size_t k = 0; k < path.matrices.size(); ++k) {
    const auto& W = path.matrices[k];
    if (W.rows() != 2 || W.cols() != 2)
      throw ShapeError("singular_history: expects 2x2 matrices");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(W, Eigen::ComputeFullV);
    const double s1 = svd.singularValues()(0), s2 = svd.singularValues()(1);
    double mod = prev_mod;
    if (s1 - s2 > 1e-12 * s1) {
      const auto v = svd.matrixV().col(0);
      mod = std::atan2(v(1), v(0));
      mod = std::fmod(mod, pi);
      if (mod < 0.0)
        mod += pi;
      if (mod >= pi)
        mod -= pi;
    }
    double unwrapped = mod;
    if (k > 0) {
      // Representative of mod + j*pi closest to the previous unwrapped angle.
      const double j = std::round((prev_unwrapped - mod) / pi);
      unwrapped = mod + j * pi;
    }
    h.times.push_back(path.times[k]);
    h.sigma1.push_back(s1);
    h.sigma2.push_back(s2);
    h.theta_mod_pi.push_back(mod);
    h.theta.push_back(unwrapped);
    prev_mod = mod;
    prev_unwrapped = unwrapped;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Ensemble generation for the double gyre
// ---------------------------------------------------------------------------

/// Output times 0, dt_out, ..., T (T must be a multiple of dt_out up to rounding).
inline std::vector<double> output_times(double T, double dt_out)
{
  if (!(T > 0.0) || !(dt_out > 0.0))
    throw DomainError("output_times: T and dt_out must be positive");
  const double ratio = T / dt_out;
  const auto steps = static_cast<std::size_t>(std::llround(ratio));
  if (steps == 0 || std::abs(ratio - static_cast<double>(steps)) > 1e-9 * ratio)
    throw DomainError("output_times: T must be a multiple of dt_out");
  std::vector<double> times(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k)
    times[k] = static_cast<double>(k) * dt_out;
  times.back() = T;
  return times;
}

/**
 * Advects every node of `grid` under the double gyre, sampled at
 * output_times(T, dt_out) with equal internal RK4 steps of at most dt.
 * Trajectories are stepped in blocks so the time-dependent forcing is
 * evaluated once per stage for the whole block; the arithmetic per
 * trajectory is identical to rk4_step on double_gyre_velocity.
 */
inline TrajectoryEnsemble generate_double_gyre_ensemble(const GridSpec& grid,
                                                        double T,
                                                        double dt_out,
                                                        double dt,
                                                        const DoubleGyreParams& p = {})
{
  if (grid.dims() != 2)
    throw ShapeError("double gyre grid must be two-dimensional");
  if (!(dt > 0.0))
    throw DomainError("generate_double_gyre_ensemble: dt must be positive");
  const auto times = output_times(T, dt_out);
  const std::size_t n = grid.size();
  std::vector<double> positions(times.size() * n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    positions[2 * i] = grid.position(i, 0);
    positions[2 * i + 1] = grid.position(i, 1);
  }
  constexpr double pi = std::numbers::pi;
  const double amp = pi * p.A;
  auto velocity = [amp](double y, double z, double a, double& vy, double& vz) {
    const double b = 1.0 - 2.0 * a;
    const double f = a * y * y + b * y;
    const double df = 2.0 * a * y + b;
    const double sf = std::sin(pi * f), cf = std::cos(pi * f);
    const double sz = std::sin(pi * z), cz = std::cos(pi * z);
    vy = -amp * sf * cz;
    vz = amp * cf * sz * df;
  };
  parallel_blocks(n, 256, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = 1; k < times.size(); ++k) {
      const double t0 = times[k - 1], t1 = times[k];
      const std::size_t sub = detail::rk4_step_count(t0, t1, dt);
      const double h = (t1 - t0) / static_cast<double>(sub);
      const double* prev = &positions[(k - 1) * n * 2];
      double* next = &positions[k * n * 2];
      std::copy(prev + 2 * begin, prev + 2 * end, next + 2 * begin);
      for (std::size_t s = 0; s < sub; ++s) {
        const double t = t0 + static_cast<double>(s) * h;
        const double a1 = p.delta * std::sin(p.omega * t);
        const double a2 = p.delta * std::sin(p.omega * (t + 0.5 * h));
        const double a4 = p.delta * std::sin(p.omega * (t + h));
        for (std::size_t i = begin; i < end; ++i) {
          const double y = next[2 * i], z = next[2 * i + 1];
          double k1y, k1z, k2y, k2z, k3y, k3z, k4y, k4z;
          velocity(y, z, a1, k1y, k1z);
          velocity(y + 0.5 * h * k1y, z + 0.5 * h * k1z, a2, k2y, k2z);
          velocity(y + 0.5 * h * k2y, z + 0.5 * h * k2z, a2, k3y, k3z);
          velocity(y + h * k3y, z + h * k3z, a4, k4y, k4z);
          next[2 * i] = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
          next[2 * i + 1] = z + (h / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        }
      }
      for (std::size_t i = begin; i < end; ++i)
        if (!std::isfinite(next[2 * i]) || !std::isfinite(next[2 * i + 1]))
          throw BlowUpError(t1);
    }
  });
  return TrajectoryEnsemble(n, 2, times, std::move(positions));
}

/// FTLE over [0, T] from the variational equation at every grid node.
inline ScalarField double_gyre_ftle_variational(const GridSpec& grid,
                                                double T,
                                                double dt,
                                                const DoubleGyreParams& p = {})
{
  auto field = [&p](const Vec2& x, double t) { return double_gyre_velocity(x, t, p); };
  auto jac = [&p](const Vec2& x, double t) { return double_gyre_jacobian(x, t, p); };
  ScalarField out{ grid, std::vector<double>(grid.size()) };
  parallel_blocks(grid.size(), 256, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Vec2 x0(grid.position(i, 0), grid.position(i, 1));
      out.values[i] = ftle_from_W(flow_map_jacobian<2>(field, jac, x0, 0.0, T, dt), 0.0, T);
    }
  });
  return out;
}

} // namespace flownet
