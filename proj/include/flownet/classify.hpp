#pragma once

#include "flownet/error.hpp"
#include "flownet/log.hpp"
#include "flownet/measures.hpp"
#include "flownet/netbuild.hpp"
#include "flownet/parallel.hpp"
#include "flownet/rng.hpp"

#include <Eigen/Dense>
#include <arpack/arpack.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flownet {

/// Divides by the population standard deviation.
inline std::vector<double> standardize(std::span<const double> values)
{
  if (values.empty())
    throw DegenerateColumnError("standardize: empty column");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values)
    mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values)
    ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0) || !std::isfinite(sd))
    throw DegenerateColumnError("standardize: column has zero spread");
  std::vector<double> out(values.begin(), values.end());
  for (double& v : out)
    v /= sd;
  return out;
}

struct DiffusionParams
{
  double eps_dm = 0.01;
  std::size_t m = 7;
  /// Kernel is set to zero at distances >= cutoff; defaults to 3 sqrt(eps_dm).
  std::optional<double> cutoff_radius;
  /// Above this many kernel entries the eigenproblem is solved on a random
  /// landmark subset and extended to all points (Nystrom).
  std::size_t max_kernel_entries = 40'000'000;
  std::uint64_t seed = 0;
  double tolerance = 1e-10;
  int max_iterations = 5000;

  double cutoff() const { return cutoff_radius.value_or(3.0 * std::sqrt(eps_dm)); }
};

struct DiffusionResult
{
  /// n x m, column i is eigenvalue_i times the i-th nontrivial right eigenvector.
  Eigen::MatrixXd coords;
  /// Leading eigenvalues, the trivial one first (m + 1 entries).
  std::vector<double> eigenvalues;
  std::size_t components = 1;
  /// Number of landmark points, equal to n when no subsampling was needed.
  std::size_t landmarks = 0;
  std::string solver;
};

namespace detail {

struct SparseSym
{
  std::size_t n = 0;
  std::vector<std::uint64_t> offsets;
  std::vector<std::uint32_t> cols;
  std::vector<double> vals;

  void multiply(const double* x, double* y) const
  {
    parallel_for(
      n,
      [&](std::size_t i) {
        double s = 0.0;
        for (auto k = offsets[i]; k < offsets[i + 1]; ++k)
          s += vals[k] * x[cols[k]];
        y[i] = s;
      },
      512);
  }
};

inline std::vector<double> row_major(const Eigen::MatrixXd& points)
{
  std::vector<double> out(static_cast<std::size_t>(points.size()));
  const auto p = static_cast<std::size_t>(points.cols());
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index k = 0; k < points.cols(); ++k)
      out[static_cast<std::size_t>(i) * p + static_cast<std::size_t>(k)] = points(i, k);
  return out;
}

inline std::size_t count_kernel_entries(const SliceIndex& index, std::span<const double> coords, std::size_t p, double cutoff)
{
  const std::size_t n = coords.size() / p;
  std::vector<std::size_t> counts(n);
  parallel_for(
    n,
    [&](std::size_t i) {
      std::size_t c = 0;
      index.for_each_within(coords.subspan(i * p, p), cutoff * cutoff, 1, [&](std::uint32_t, double) { ++c; });
      counts[i] = c;
    },
    256);
  return std::accumulate(counts.begin(), counts.end(), std::size_t{ 0 });
}

/// Truncated Gaussian kernel, rows in index order.
inline SparseSym gaussian_kernel(std::span<const double> coords, std::size_t p, double eps_dm, double cutoff)
{
  SparseSym K;
  K.n = coords.size() / p;
  SliceIndex index(coords, p, cutoff);
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(K.n);
  parallel_for(
    K.n,
    [&](std::size_t i) {
      auto& row = rows[i];
      index.for_each_within(coords.subspan(i * p, p), cutoff * cutoff, 1, [&](std::uint32_t j, double d2) {
        row.emplace_back(j, std::exp(-d2 / eps_dm));
      });
      std::sort(row.begin(), row.end());
    },
    256);
  K.offsets.assign(K.n + 1, 0);
  for (std::size_t i = 0; i < K.n; ++i)
    K.offsets[i + 1] = K.offsets[i] + rows[i].size();
  K.cols.resize(K.offsets.back());
  K.vals.resize(K.offsets.back());
  parallel_for(K.n, [&](std::size_t i) {
    auto k = K.offsets[i];
    for (auto [j, v] : rows[i]) {
      K.cols[k] = j;
      K.vals[k++] = v;
    }
    std::vector<std::pair<std::uint32_t, double>>().swap(rows[i]);
  });
  return K;
}

/// Connected components of the kernel graph, numbered by their lowest node.
inline std::vector<std::uint32_t> kernel_components(const SparseSym& K, std::size_t& count)
{
  std::vector<std::uint32_t> parent(K.n);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x)
      x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < K.n; ++i)
    for (auto k = K.offsets[i]; k < K.offsets[i + 1]; ++k) {
      const auto a = find(static_cast<std::uint32_t>(i)), b = find(K.cols[k]);
      if (a != b)
        parent[std::max(a, b)] = std::min(a, b);
    }
  std::vector<std::uint32_t> label(K.n);
  std::vector<std::uint32_t> id(K.n, std::numeric_limits<std::uint32_t>::max());
  count = 0;
  for (std::size_t i = 0; i < K.n; ++i) {
    auto& c = id[find(static_cast<std::uint32_t>(i))];
    if (c == std::numeric_limits<std::uint32_t>::max())
      c = static_cast<std::uint32_t>(count++);
    label[i] = c;
  }
  return label;
}

/**
 * The symmetric operator S = D^-1/2 K D^-1/2 together with its eigenvalue-1
 * eigenspace, which is known exactly: one vector per kernel component,
 * sqrt(degree) restricted to the component and normalized.
 */
struct ConjugatedKernel
{
  const SparseSym& S;
  std::vector<std::uint32_t> component;
  std::size_t components = 1;
  /// Entry i of the unit eigenvector of i's component.
  std::vector<double> q;

  Eigen::VectorXd component_vector(std::uint32_t c) const
  {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S.n));
    for (std::size_t i = 0; i < S.n; ++i)
      if (component[i] == c)
        v(static_cast<Eigen::Index>(i)) = q[i];
    return v;
  }

  // y = (S - Q Q^T) x, with the eigenvalue-1 space projected away.
  void deflated_multiply(const double* x, double* y) const
  {
    S.multiply(x, y);
    std::vector<double> proj(components, 0.0);
    for (std::size_t i = 0; i < S.n; ++i)
      proj[component[i]] += q[i] * x[i];
    for (std::size_t i = 0; i < S.n; ++i)
      y[i] -= q[i] * proj[component[i]];
  }
};

/**
 * Largest `count` eigenpairs of S, descending. A Krylov solver only ever sees
 * one direction of a repeated eigenvalue, so the component vectors (largest
 * components first) are placed up front and the solver works on the deflated
 * operator.
 */
inline std::pair<std::vector<double>, Eigen::MatrixXd>
top_eigenpairs(const ConjugatedKernel& op, std::size_t count, const DiffusionParams& params, std::string& solver)
{
  const SparseSym& S = op.S;
  const std::size_t n = S.n;
  std::vector<std::size_t> size(op.components, 0);
  for (auto c : op.component)
    ++size[c];
  std::vector<std::uint32_t> order(op.components);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return size[a] > size[b]; });

  const std::size_t fixed = std::min(count, op.components);
  const std::size_t rest = count - fixed;
  std::vector<double> vals(count, 1.0);
  Eigen::MatrixXd vecs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(count));
  for (std::size_t c = 0; c < fixed; ++c)
    vecs.col(static_cast<Eigen::Index>(c)) = op.component_vector(order[c]);
  if (rest == 0) {
    solver = "components";
    return { vals, vecs };
  }

  if (n <= 2000) {
    solver = "dense";
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (auto k = S.offsets[i]; k < S.offsets[i + 1]; ++k)
        M(static_cast<Eigen::Index>(i), S.cols[k]) = S.vals[k];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (op.component[i] == op.component[j])
          M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -= op.q[i] * op.q[j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success)
      throw NumericalError("diffusion_maps: dense eigensolver failed");
    for (std::size_t c = 0; c < rest; ++c) {
      const auto src = static_cast<Eigen::Index>(n - 1 - c);
      vals[fixed + c] = es.eigenvalues()(src);
      vecs.col(static_cast<Eigen::Index>(fixed + c)) = es.eigenvectors().col(src);
    }
    return { vals, vecs };
  }

  solver = "lanczos";
  const auto N = static_cast<a_int>(n);
  const auto nev = static_cast<a_int>(rest);
  const a_int ncv = std::min<a_int>(N, std::max<a_int>(4 * nev, 40));
  std::vector<double> resid(n), v(n * static_cast<std::size_t>(ncv)), workd(3 * n);
  const a_int lworkl = ncv * (ncv + 8);
  std::vector<double> workl(static_cast<std::size_t>(lworkl));
  a_int iparam[11] = {};
  a_int ipntr[14] = {};
  iparam[0] = 1;
  iparam[2] = params.max_iterations;
  iparam[6] = 1;
  CounterRng rng(params.seed, 0x6c616e63);
  for (auto& r : resid)
    r = rng.uniform(-1.0, 1.0);
  a_int ido = 0, info = 1;
  for (;;) {
    arpack::saupd(ido, arpack::bmat::identity, N, arpack::which::largest_algebraic, nev, params.tolerance, resid.data(),
                  ncv, v.data(), N, iparam, ipntr, workd.data(), workl.data(), lworkl, info);
    if (ido != 1 && ido != -1)
      break;
    op.deflated_multiply(workd.data() + ipntr[0] - 1, workd.data() + ipntr[1] - 1);
  }
  if (info == 1)
    throw NumericalError("diffusion_maps: eigensolver hit the iteration cap");
  if (info < 0)
    throw NumericalError("diffusion_maps: eigensolver failed (code " + std::to_string(info) + ")");

  std::vector<a_int> select(static_cast<std::size_t>(ncv));
  std::vector<double> d(rest);
  std::vector<double> z(n * rest);
  arpack::seupd(1, arpack::howmny::ritz_vectors, select.data(), d.data(), z.data(), N, 0.0, arpack::bmat::identity, N,
                arpack::which::largest_algebraic, nev, params.tolerance, resid.data(), ncv, v.data(), N, iparam, ipntr,
                workd.data(), workl.data(), lworkl, info);
  if (info != 0)
    throw NumericalError("diffusion_maps: eigenvector extraction failed (code " + std::to_string(info) + ")");
  // Ritz values come back ascending.
  for (std::size_t c = 0; c < rest; ++c) {
    const std::size_t src = rest - 1 - c;
    vals[fixed + c] = d[src];
    for (std::size_t i = 0; i < n; ++i)
      vecs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(fixed + c)) = z[src * n + i];
  }
  return { vals, vecs };
}

/**
 * sqrt(degree) is always an eigenvector for eigenvalue 1. With several
 * kernel components that eigenvalue repeats, and its eigenspace basis is
 * rebuilt starting from sqrt(degree) so the trivial vector comes first.
 */
inline void pin_trivial_vector(std::vector<double>& vals, Eigen::MatrixXd& vecs, const std::vector<double>& degree)
{
  const auto L = vecs.rows();
  Eigen::VectorXd root(L);
  for (Eigen::Index i = 0; i < L; ++i)
    root(i) = std::sqrt(degree[static_cast<std::size_t>(i)]);
  root.normalize();
  Eigen::Index group = 0;
  while (group < vecs.cols() && vals[static_cast<std::size_t>(group)] > 1.0 - 1e-9)
    ++group;
  group = std::max<Eigen::Index>(group, 1);

  std::vector<Eigen::VectorXd> basis{ root };
  for (Eigen::Index c = 0; c < group && static_cast<Eigen::Index>(basis.size()) < group; ++c) {
    Eigen::VectorXd v = vecs.col(c);
    for (const auto& b : basis)
      v -= b.dot(v) * b;
    const double norm = v.norm();
    if (norm > 1e-6)
      basis.push_back(v / norm);
  }
  for (Eigen::Index c = 0; c < group; ++c) {
    vecs.col(c) = basis[static_cast<std::size_t>(c)];
    if (c > 0)
      vals[static_cast<std::size_t>(c)] = std::min(vals[static_cast<std::size_t>(c)], 1.0);
  }
  vals[0] = 1.0;
}

inline void fix_signs(Eigen::MatrixXd& coords)
{
  for (Eigen::Index c = 0; c < coords.cols(); ++c) {
    const double scale = coords.col(c).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < coords.rows(); ++i)
      if (std::abs(coords(i, c)) > 1e-12 * scale) {
        if (coords(i, c) < 0.0)
          coords.col(c) *= -1.0;
        break;
      }
  }
}

} // namespace detail

/**
 * Diffusion-map coordinates of an n x p point cloud under the Gaussian kernel
 * exp(-|x-y|^2 / eps_dm), truncated at the cutoff radius.
 */
inline DiffusionResult diffusion_maps(const Eigen::MatrixXd& points, const DiffusionParams& params)
{
  if (!(params.eps_dm > 0.0))
    throw DomainError("diffusion_maps: eps_dm must be positive");
  if (params.m < 1)
    throw DomainError("diffusion_maps: m must be at least 1");
  const auto n = static_cast<std::size_t>(points.rows());
  const auto p = static_cast<std::size_t>(points.cols());
  if (n <= params.m + 1)
    throw DomainError("diffusion_maps: need more points than m + 1");
  if (!points.allFinite())
    throw DomainError("diffusion_maps: non-finite coordinates");
  const double cutoff = params.cutoff();
  if (!(cutoff > 0.0))
    throw DomainError("diffusion_maps: cutoff must be positive");

  const std::vector<double> all = detail::row_major(points);
  std::vector<std::uint32_t> landmarks(n);
  std::iota(landmarks.begin(), landmarks.end(), 0u);
  {
    const SliceIndex index(all, p, cutoff);
    const std::size_t entries = detail::count_kernel_entries(index, all, p, cutoff);
    if (entries > params.max_kernel_entries) {
      // Kernel entries scale with the square of the point count.
      const double frac = std::sqrt(static_cast<double>(params.max_kernel_entries) / static_cast<double>(entries));
      const auto L = std::max<std::size_t>(params.m + 2, static_cast<std::size_t>(frac * static_cast<double>(n)));
      CounterRng rng(params.seed, 0x6c616e64);
      for (std::size_t i = 0; i < L; ++i)
        std::swap(landmarks[i], landmarks[i + rng.below(n - i)]);
      landmarks.resize(L);
      std::sort(landmarks.begin(), landmarks.end());
      log::info("diffusion_maps: " + std::to_string(entries) + " kernel entries, using " + std::to_string(L) +
                              " landmarks");
    }
  }
  const std::size_t L = landmarks.size();
  std::vector<double> sub(L * p);
  for (std::size_t a = 0; a < L; ++a)
    std::copy_n(all.begin() + static_cast<std::ptrdiff_t>(landmarks[a] * p), p, sub.begin() + static_cast<std::ptrdiff_t>(a * p));

  detail::SparseSym S = detail::gaussian_kernel(sub, p, params.eps_dm, cutoff);
  DiffusionResult out;
  out.landmarks = L;
  detail::ConjugatedKernel op{ S, detail::kernel_components(S, out.components), 0, {} };
  op.components = out.components;
  if (out.components > 1)
    log::warn("diffusion_maps: kernel graph has " + std::to_string(out.components) + " components");

  std::vector<double> degree(L, 0.0);
  for (std::size_t i = 0; i < L; ++i)
    for (auto k = S.offsets[i]; k < S.offsets[i + 1]; ++k)
      degree[i] += S.vals[k];
  std::vector<double> isd(L);
  for (std::size_t i = 0; i < L; ++i)
    isd[i] = 1.0 / std::sqrt(degree[i]);
  for (std::size_t i = 0; i < L; ++i)
    for (auto k = S.offsets[i]; k < S.offsets[i + 1]; ++k)
      S.vals[k] *= isd[i] * isd[S.cols[k]];

  std::vector<double> mass(out.components, 0.0);
  for (std::size_t i = 0; i < L; ++i)
    mass[op.component[i]] += degree[i];
  op.q.resize(L);
  for (std::size_t i = 0; i < L; ++i)
    op.q[i] = std::sqrt(degree[i] / mass[op.component[i]]);

  auto [vals, vecs] = detail::top_eigenpairs(op, params.m + 1, params, out.solver);
  detail::pin_trivial_vector(vals, vecs, degree);
  out.eigenvalues = vals;
  // Right eigenvectors of the Markov matrix D^{-1} K.
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(params.m));
  for (std::size_t c = 0; c < params.m; ++c)
    for (std::size_t i = 0; i < L; ++i)
      phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
        vecs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + 1)) * isd[i];

  out.coords.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(params.m));
  if (L == n) {
    for (std::size_t c = 0; c < params.m; ++c)
      out.coords.col(static_cast<Eigen::Index>(c)) = vals[c + 1] * phi.col(static_cast<Eigen::Index>(c));
  } else {
    // lambda * phi(x) = sum_j P(x, l_j) phi(l_j), which also holds at the landmarks.
    const SliceIndex index(sub, p, cutoff);
    const double c2 = cutoff * cutoff;
    parallel_for(
      n,
      [&](std::size_t i) {
        std::span<const double> q(all.data() + i * p, p);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.m));
        double wsum = 0.0;
        index.for_each_within(q, c2, 1, [&](std::uint32_t j, double d2) {
          const double w = std::exp(-d2 / params.eps_dm);
          acc += w * phi.row(j).transpose();
          wsum += w;
        });
        if (wsum > 0.0) {
          out.coords.row(static_cast<Eigen::Index>(i)) = (acc / wsum).transpose();
          return;
        }
        // Isolated from every landmark: copy the nearest one.
        std::size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          double d2 = 0.0;
          for (std::size_t k = 0; k < p; ++k)
            d2 += (q[k] - sub[j * p + k]) * (q[k] - sub[j * p + k]);
          if (d2 < bd) {
            bd = d2;
            best = j;
          }
        }
        for (std::size_t c = 0; c < params.m; ++c)
          out.coords(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
            vals[c + 1] * phi(static_cast<Eigen::Index>(best), static_cast<Eigen::Index>(c));
      },
      256);
  }
  detail::fix_signs(out.coords);
  return out;
}

struct KMeansResult
{
  std::vector<std::uint32_t> labels;
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
  std::size_t iterations = 0;
  /// Inertia after each assignment step.
  std::vector<double> inertia_history;
};

namespace detail {
inline double sq_dist(const Eigen::MatrixXd& X, Eigen::Index i, const Eigen::MatrixXd& C, Eigen::Index c)
{
  return (X.row(i) - C.row(c)).squaredNorm();
}
} // namespace detail

/**
 * k-means++ seeding followed by Lloyd iterations (at most 300). Points tied
 * between centroids go to the lowest index; an empty cluster takes the point
 * farthest from its centroid.
 */
inline KMeansResult kmeans(const Eigen::MatrixXd& X, std::size_t k, std::uint64_t seed, std::size_t max_iterations = 300)
{
  const auto n = static_cast<std::size_t>(X.rows());
  if (k == 0 || k > n)
    throw DomainError("kmeans: need 1 <= k <= number of points");
  if (!X.allFinite())
    throw DomainError("kmeans: non-finite coordinates");
  const auto N = X.rows();
  const auto K = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd C(K, X.cols());
  CounterRng rng(seed, 0);

  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  C.row(0) = X.row(static_cast<Eigen::Index>(rng.below(n)));
  for (Eigen::Index c = 1; c < K; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      best[i] = std::min(best[i], detail::sq_dist(X, i, C, c - 1));
      total += best[i];
    }
    Eigen::Index pick = N - 1;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < N; ++i) {
        acc += best[i];
        if (best[i] > 0.0 && acc > r) {
          pick = i;
          break;
        }
      }
      while (best[pick] == 0.0)
        --pick;
    } else {
      pick = static_cast<Eigen::Index>(rng.below(n));
    }
    C.row(c) = X.row(pick);
  }

  KMeansResult out;
  out.labels.assign(n, 0);
  std::vector<double> dist(n);
  bool first = true;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    std::vector<char> changed(n, 0);
    parallel_for(
      n,
      [&](std::size_t i) {
        std::uint32_t lab = 0;
        double d = detail::sq_dist(X, static_cast<Eigen::Index>(i), C, 0);
        for (Eigen::Index c = 1; c < K; ++c) {
          const double e = detail::sq_dist(X, static_cast<Eigen::Index>(i), C, c);
          if (e < d) {
            d = e;
            lab = static_cast<std::uint32_t>(c);
          }
        }
        changed[i] = lab != out.labels[i];
        out.labels[i] = lab;
        dist[i] = d;
      },
      1024);
    out.inertia = std::accumulate(dist.begin(), dist.end(), 0.0);
    out.inertia_history.push_back(out.inertia);
    out.iterations = it + 1;
    if (!first && std::none_of(changed.begin(), changed.end(), [](char c) { return c != 0; }))
      break;
    first = false;

    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(K, X.cols());
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum.row(out.labels[i]) += X.row(static_cast<Eigen::Index>(i));
      ++count[out.labels[i]];
    }
    for (Eigen::Index c = 0; c < K; ++c) {
      if (count[c] > 0) {
        C.row(c) = sum.row(c) / static_cast<double>(count[c]);
        continue;
      }
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (dist[i] > dist[far])
          far = i;
      C.row(c) = X.row(static_cast<Eigen::Index>(far));
      dist[far] = 0.0;
    }
  }
  out.centroids = C;
  return out;
}

struct EmbeddingCloud
{
  /// Node id of every row; nodes with undefined clustering are left out.
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> excluded;
  Eigen::MatrixXd raw;
  Eigen::MatrixXd standardized;
  DiffusionResult diffusion;
  std::vector<std::uint32_t> labels;
};

/// Standardized (degree, clustering) cloud, its diffusion map and k-means labels.
inline EmbeddingCloud classify_pipeline(const NodeMeasureTable& table,
                                        const DiffusionParams& params,
                                        std::size_t k,
                                        std::uint64_t seed)
{
  EmbeddingCloud cloud;
  std::vector<double> deg, clu;
  for (std::size_t i = 0; i < table.n; ++i) {
    if (!table.clustering[i]) {
      cloud.excluded.push_back(i);
      continue;
    }
    cloud.nodes.push_back(i);
    deg.push_back(static_cast<double>(table.degree[i]));
    clu.push_back(*table.clustering[i]);
  }
  if (!cloud.excluded.empty())
    log::warn(std::to_string(cloud.excluded.size()) + " nodes with undefined clustering left out");
  const auto n = static_cast<Eigen::Index>(cloud.nodes.size());
  if (n == 0)
    throw DomainError("classify_pipeline: no node has a defined clustering coefficient");
  const auto ds = standardize(deg), cs = standardize(clu);
  cloud.raw.resize(n, 2);
  cloud.standardized.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    cloud.raw(i, 0) = deg[i];
    cloud.raw(i, 1) = clu[i];
    cloud.standardized(i, 0) = ds[i];
    cloud.standardized(i, 1) = cs[i];
  }
  cloud.diffusion = diffusion_maps(cloud.standardized, params);
  cloud.labels = kmeans(cloud.diffusion.coords, k, seed).labels;
  return cloud;
}

} // namespace flownet
