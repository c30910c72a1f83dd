#pragma once

#include "flownet/error.hpp"
#include "flownet/flows.hpp"
#include "flownet/log.hpp"
#include "flownet/parallel.hpp"
#include "flownet/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <tuple>
#include <vector>

namespace flownet {

/// Ellipse with semi-axes a >= b > 0; `angle` is the direction of the major axis in [0, pi).
struct Ellipse2D
{
  double cx = 0.0, cy = 0.0;
  double a = 1.0, b = 1.0;
  double angle = 0.0;

  double area() const noexcept { return std::numbers::pi * a * b; }

  bool contains(double x, double y) const noexcept
  {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    return (u * u) / (a * a) + (v * v) / (b * b) < 1.0;
  }
};

struct MCEstimate
{
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;
};

/// Area of the union of pullback ellipses when the stretching direction never turns.
inline double vol_galaxy_formula(double sigma_T, double epsilon)
{
  if (!(sigma_T >= 1.0))
    throw DomainError("vol_galaxy_formula: sigma must be >= 1");
  if (!(epsilon > 0.0))
    throw DomainError("vol_galaxy_formula: epsilon must be positive");
  return (std::numbers::pi + 2.0 * std::log(sigma_T)) * epsilon * epsilon;
}

/**
 * The preimage W^{-1} B_eps(0) for every matrix on the path. The translation
 * by the anchor is dropped, so all ellipses are centered at the origin.
 */
inline std::vector<Ellipse2D> pullback_ellipses(const FundamentalPath& path, double epsilon)
{
  if (!(epsilon > 0.0))
    throw DomainError("pullback_ellipses: epsilon must be positive");
  std::vector<Ellipse2D> out;
  out.reserve(path.matrices.size());
  for (const auto& W : path.matrices) {
    if (W.rows() != 2 || W.cols() != 2)
      throw ShapeError("pullback_ellipses: expected 2x2 matrices");
    if (!W.allFinite() || W.determinant() == 0.0)
      throw DegenerateMatrixError("pullback_ellipses: singular matrix on path");
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(Eigen::Matrix2d(W), Eigen::ComputeFullV);
    const auto s = svd.singularValues();
    if (!(s(1) > 0.0))
      throw DegenerateMatrixError("pullback_ellipses: singular matrix on path");
    // W^{-1} maps the second right singular vector onto the long axis.
    const Eigen::Vector2d v = svd.matrixV().col(1);
    double angle = std::atan2(v(1), v(0));
    if (angle < 0.0)
      angle += std::numbers::pi;
    if (angle >= std::numbers::pi)
      angle -= std::numbers::pi;
    out.push_back({ 0.0, 0.0, epsilon / s(1), epsilon / s(0), angle });
  }
  return out;
}

/**
 * Ellipses with semi-axes (eps*s, eps/s) for s geometrically spaced on
 * [1, sigma_max], all aligned with the first axis.
 */
inline std::vector<Ellipse2D> axis_aligned_family(double sigma_max, double epsilon, std::size_t count)
{
  if (!(sigma_max >= 1.0))
    throw DomainError("axis_aligned_family: sigma must be >= 1");
  if (count == 0)
    throw DomainError("axis_aligned_family: count must be positive");
  std::vector<Ellipse2D> out;
  if (sigma_max == 1.0 || count == 1) {
    out.push_back({ 0.0, 0.0, epsilon * sigma_max, epsilon / sigma_max, 0.0 });
    return out;
  }
  const double step = std::log(sigma_max) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) {
    const double s = k + 1 == count ? sigma_max : std::exp(step * static_cast<double>(k));
    out.push_back({ 0.0, 0.0, epsilon * s, epsilon / s, 0.0 });
  }
  return out;
}

namespace detail {
constexpr std::uint64_t kMcChunk = 1 << 14;

inline std::uint64_t chunk_count(std::uint64_t samples)
{
  return (samples + kMcChunk - 1) / kMcChunk;
}

inline MCEstimate binomial_estimate(std::uint64_t hits, std::uint64_t samples, double box, std::uint64_t seed)
{
  const double p = static_cast<double>(hits) / static_cast<double>(samples);
  return { box * p, box * std::sqrt(p * (1.0 - p) / static_cast<double>(samples)), samples, seed };
}

struct PreparedEllipse
{
  double cx, cy, c, s, ia2, ib2;
  bool contains(double x, double y) const noexcept
  {
    const double dx = x - cx, dy = y - cy;
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    return u * u * ia2 + v * v * ib2 < 1.0;
  }
};
} // namespace detail

/**
 * Area of the union by uniform sampling of its bounding box. Ellipses that
 * agree to 1e-12 in every parameter are counted once.
 */
inline MCEstimate ellipse_union_area_mc(const std::vector<Ellipse2D>& ellipses, std::uint64_t samples, std::uint64_t seed)
{
  if (ellipses.empty())
    throw DomainError("ellipse_union_area_mc: no ellipses");
  if (samples == 0)
    throw DomainError("ellipse_union_area_mc: samples must be positive");

  auto key = [](const Ellipse2D& e) {
    auto r = [](double x) { return std::llround(x * 1e12); };
    return std::make_tuple(r(e.a), r(e.b), r(e.angle), r(e.cx), r(e.cy));
  };
  std::vector<Ellipse2D> unique = ellipses;
  std::sort(unique.begin(), unique.end(), [&](const auto& l, const auto& r) { return key(l) < key(r); });
  unique.erase(std::unique(unique.begin(), unique.end(), [&](const auto& l, const auto& r) { return key(l) == key(r); }),
               unique.end());
  // Long ellipses cover most of the union, so test them first.
  std::stable_sort(unique.begin(), unique.end(), [](const auto& l, const auto& r) { return l.a > r.a; });

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  std::vector<detail::PreparedEllipse> prepared;
  prepared.reserve(unique.size());
  for (const auto& e : unique) {
    if (!(e.a >= e.b && e.b > 0.0))
      throw DomainError("ellipse_union_area_mc: need a >= b > 0");
    const double c = std::cos(e.angle), s = std::sin(e.angle);
    const double hx = std::sqrt(e.a * e.a * c * c + e.b * e.b * s * s);
    const double hy = std::sqrt(e.a * e.a * s * s + e.b * e.b * c * c);
    x0 = std::min(x0, e.cx - hx);
    x1 = std::max(x1, e.cx + hx);
    y0 = std::min(y0, e.cy - hy);
    y1 = std::max(y1, e.cy + hy);
    prepared.push_back({ e.cx, e.cy, c, s, 1.0 / (e.a * e.a), 1.0 / (e.b * e.b) });
  }

  const std::uint64_t chunks = detail::chunk_count(samples);
  std::vector<std::uint64_t> hits(chunks, 0);
  parallel_for(
    chunks,
    [&](std::size_t c) {
      CounterRng rng(seed, c);
      const std::uint64_t count = std::min(detail::kMcChunk, samples - c * detail::kMcChunk);
      std::uint64_t h = 0;
      for (std::uint64_t k = 0; k < count; ++k) {
        const double x = rng.uniform(x0, x1);
        const double y = rng.uniform(y0, y1);
        for (const auto& e : prepared)
          if (e.contains(x, y)) {
            ++h;
            break;
          }
      }
      hits[c] = h;
    },
    1);
  std::uint64_t total = 0;
  for (auto h : hits)
    total += h;
  return detail::binomial_estimate(total, samples, (x1 - x0) * (y1 - y0), seed);
}

template<int D>
struct GalaxySpec
{
  Eigen::Matrix<double, D, 1> x0;
  double epsilon = 0.0;
  std::vector<double> times;
};

template<int D>
struct GalaxyEstimate
{
  MCEstimate estimate;
  /// Initial points found inside the galaxy, in sampling order.
  std::vector<Eigen::Matrix<double, D, 1>> hits;
};

/**
 * Volume of the set of initial points whose trajectory comes strictly within
 * epsilon of the anchor's at one of the sampled times. `path(x)` returns the
 * states of the trajectory from x at spec.times.
 */
template<int D, typename Path>
GalaxyEstimate<D> galaxy_volume_mc(Path&& path,
                                   const GalaxySpec<D>& spec,
                                   const Eigen::Matrix<double, D, 1>& lo,
                                   const Eigen::Matrix<double, D, 1>& hi,
                                   std::uint64_t samples,
                                   std::uint64_t seed)
{
  using V = Eigen::Matrix<double, D, 1>;
  if (!(spec.epsilon > 0.0))
    throw DomainError("galaxy_volume_mc: epsilon must be positive");
  if (samples == 0)
    throw DomainError("galaxy_volume_mc: samples must be positive");
  if (!((hi - lo).array() > 0.0).all())
    throw DomainError("galaxy_volume_mc: empty sampling box");

  const std::vector<V> anchor = path(spec.x0);
  const double eps2 = spec.epsilon * spec.epsilon;
  const std::uint64_t chunks = detail::chunk_count(samples);
  std::vector<std::vector<V>> found(chunks);
  parallel_for(
    chunks,
    [&](std::size_t c) {
      CounterRng rng(seed, c);
      const std::uint64_t count = std::min(detail::kMcChunk, samples - c * detail::kMcChunk);
      for (std::uint64_t k = 0; k < count; ++k) {
        V x;
        for (int d = 0; d < D; ++d)
          x(d) = rng.uniform(lo(d), hi(d));
        const std::vector<V> states = path(x);
        for (std::size_t t = 0; t < anchor.size(); ++t)
          if ((states[t] - anchor[t]).squaredNorm() < eps2) {
            found[c].push_back(x);
            break;
          }
      }
    },
    1);

  GalaxyEstimate<D> out;
  for (auto& f : found)
    out.hits.insert(out.hits.end(), f.begin(), f.end());
  if (out.hits.empty())
    log::warn("galaxy_volume_mc: no sample hit the galaxy; estimate is 0");
  out.estimate = detail::binomial_estimate(out.hits.size(), samples, (hi - lo).prod(), seed);
  return out;
}

/// Path sampler for an ODE right-hand side, for use with galaxy_volume_mc.
template<int D, typename Field>
auto ode_path(Field f, std::vector<double> times, double dt)
{
  return [f = std::move(f), times = std::move(times), dt](const Eigen::Matrix<double, D, 1>& x) {
    return integrate_sampled(f, x, std::span<const double>(times), dt);
  };
}

/// Path sampler for a map iterated `steps` times, for use with galaxy_volume_mc.
template<int D, typename Map>
auto map_path(Map m, std::size_t steps)
{
  return [m = std::move(m), steps](const Eigen::Matrix<double, D, 1>& x) {
    std::vector<Eigen::Matrix<double, D, 1>> out{ x };
    out.reserve(steps + 1);
    for (std::size_t k = 0; k < steps; ++k)
      out.push_back(m(out.back()));
    return out;
  };
}

/**
 * E[vol(E1 n E2) / vol(E1)] for two ellipses with semi-axes (sigma, 1/sigma):
 * E2's center is uniform in E1 and its relative rotation uniform in
 * [-max_angle, max_angle]. Each outer sample estimates the overlap with
 * `inner` uniform points of E1.
 *
 * The draws do not depend on sigma, so curves over sigma share their noise.
 */
inline MCEstimate expected_overlap_mc(double sigma,
                                      double max_angle,
                                      std::uint64_t samples,
                                      std::uint64_t seed,
                                      unsigned inner = 16)
{
  if (!(sigma >= 1.0))
    throw DomainError("expected_overlap_mc: sigma must be >= 1");
  if (!(max_angle >= 0.0))
    throw DomainError("expected_overlap_mc: max_angle must be >= 0");
  if (samples < 2 || inner == 0)
    throw DomainError("expected_overlap_mc: need at least 2 samples and 1 inner point");

  const double a = sigma, b = 1.0 / sigma;
  const double ia2 = 1.0 / (a * a), ib2 = 1.0 / (b * b);
  const std::uint64_t chunks = detail::chunk_count(samples);
  std::vector<double> sum(chunks, 0.0), sum2(chunks, 0.0);
  parallel_for(
    chunks,
    [&](std::size_t c) {
      CounterRng rng(seed, c);
      const std::uint64_t count = std::min(detail::kMcChunk, samples - c * detail::kMcChunk);
      double s1 = 0.0, s2 = 0.0;
      for (std::uint64_t k = 0; k < count; ++k) {
        double u, v;
        rng.unit_disk(u, v);
        const double cx = a * u, cy = b * v;
        const double phi = max_angle * (2.0 * rng.uniform() - 1.0);
        const double cp = std::cos(phi), sp = std::sin(phi);
        unsigned in = 0;
        for (unsigned q = 0; q < inner; ++q) {
          rng.unit_disk(u, v);
          const double dx = a * u - cx, dy = b * v - cy;
          const double r = cp * dx + sp * dy;
          const double w = -sp * dx + cp * dy;
          in += r * r * ia2 + w * w * ib2 < 1.0;
        }
        const double f = static_cast<double>(in) / inner;
        s1 += f;
        s2 += f * f;
      }
      sum[c] = s1;
      sum2[c] = s2;
    },
    1);
  double s1 = 0.0, s2 = 0.0;
  for (std::uint64_t c = 0; c < chunks; ++c) {
    s1 += sum[c];
    s2 += sum2[c];
  }
  const double n = static_cast<double>(samples);
  const double mean = s1 / n;
  const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
  return { mean, std::sqrt(var / n), samples, seed };
}

/// Overlap of two unit circles whose centers are uniform in one of them.
inline double circle_overlap_constant()
{
  return 1.0 - 3.0 * std::sqrt(3.0) / (4.0 * std::numbers::pi);
}

/**
 * Off-diagonal Jacobian magnitude needed to turn the right singular frame
 * at angular speed omega when the stretching is sigma1 (area preserving).
 */
inline double rotation_cost(double sigma1, double omega)
{
  if (!(sigma1 >= 1.0))
    throw DomainError("rotation_cost: sigma1 must be >= 1");
  return omega * sigma1 * sigma1;
}

} // namespace flownet
