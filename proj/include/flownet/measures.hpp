#pragma once

#include "flownet/ensemble.hpp"
#include "flownet/error.hpp"
#include "flownet/netbuild.hpp"
#include "flownet/parallel.hpp"
#include "flownet/rng.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flownet {

/// Per-node real values; std::nullopt marks an entry that is undefined for that node.
using OptionalValues = std::vector<std::optional<double>>;

inline std::vector<std::size_t> degree(const AdjacencyMatrix& A)
{
  std::vector<std::size_t> d(A.n());
  for (std::size_t i = 0; i < A.n(); ++i)
    d[i] = A.degree(i);
  return d;
}

/// Mean degree of the neighbors; undefined for isolated nodes.
inline OptionalValues avg_nn_degree(const AdjacencyMatrix& A)
{
  OptionalValues out(A.n());
  for (std::size_t i = 0; i < A.n(); ++i) {
    const auto row = A.neighbors(i);
    if (row.empty())
      continue;
    std::uint64_t sum = 0;
    for (auto j : row)
      sum += A.degree(j);
    out[i] = static_cast<double>(sum) / static_cast<double>(row.size());
  }
  return out;
}

/// d_i - <d>_nn,i where the neighbor average is defined.
inline OptionalValues degree_anomaly(const AdjacencyMatrix& A)
{
  auto out = avg_nn_degree(A);
  for (std::size_t i = 0; i < A.n(); ++i)
    if (out[i])
      out[i] = static_cast<double>(A.degree(i)) - *out[i];
  return out;
}

namespace detail {
/// Fixed number of reduction slots, so floating-point sums do not depend on the worker count.
inline constexpr std::size_t kReductionSlots = 64;
} // namespace detail

namespace detail {
/// Cuthill-McKee order: BFS from low-degree seeds, neighbors visited by ascending degree.
inline std::vector<std::uint32_t> bfs_locality_order(const AdjacencyMatrix& A)
{
  const std::size_t n = A.n();
  auto by_degree = [&](std::uint32_t a, std::uint32_t b) {
    return A.degree(a) < A.degree(b) || (A.degree(a) == A.degree(b) && a < b);
  };
  std::vector<std::uint32_t> seeds(n);
  std::iota(seeds.begin(), seeds.end(), 0u);
  std::sort(seeds.begin(), seeds.end(), by_degree);
  std::vector<std::uint32_t> order;
  order.reserve(n);
  std::vector<char> seen(n, 0);
  std::vector<std::uint32_t> fresh;
  for (auto s : seeds) {
    if (seen[s])
      continue;
    seen[s] = 1;
    std::size_t head = order.size();
    order.push_back(s);
    while (head < order.size()) {
      fresh.clear();
      for (auto v : A.neighbors(order[head++]))
        if (!seen[v]) {
          seen[v] = 1;
          fresh.push_back(v);
        }
      std::sort(fresh.begin(), fresh.end(), by_degree);
      order.insert(order.end(), fresh.begin(), fresh.end());
    }
  }
  return order;
}
} // namespace detail

/**
 * Number of triangles through every node, so that (A^3)_ii = 2 * t_i.
 *
 * Uses t_i = 1/2 sum_{j in N(i)} |N(i) n N(j)|. Nodes are relabeled so that
 * neighbors get nearby ids, and neighbor lists are stored as (64-id block,
 * bit mask) pairs; each edge's common-neighbor count is then a popcount
 * over the blocks of its lower-degree endpoint against a dense bit row of
 * the other.
 */
inline std::vector<std::uint64_t> triangle_counts(const AdjacencyMatrix& A)
{
  const std::size_t n = A.n();
  const std::vector<std::uint32_t> order = detail::bfs_locality_order(A);
  std::vector<std::uint32_t> relabel(n);
  for (std::size_t k = 0; k < n; ++k)
    relabel[order[k]] = static_cast<std::uint32_t>(k);

  // Transposing in new-id order leaves every relabeled list sorted.
  std::vector<std::uint64_t> off(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k)
    off[k + 1] = off[k] + A.degree(order[k]);
  std::vector<std::uint32_t> adj(off.back());
  {
    std::vector<std::uint64_t> fill(off.begin(), off.end() - 1);
    for (std::size_t k = 0; k < n; ++k)
      for (auto j : A.neighbors(order[k]))
        adj[fill[relabel[j]]++] = static_cast<std::uint32_t>(k);
  }

  std::vector<std::uint64_t> boff(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::uint64_t blocks = 0;
    std::uint32_t last = std::numeric_limits<std::uint32_t>::max();
    for (auto q = off[k]; q < off[k + 1]; ++q)
      if ((adj[q] >> 6) != last) {
        last = adj[q] >> 6;
        ++blocks;
      }
    boff[k + 1] = boff[k] + blocks;
  }
  std::vector<std::uint32_t> block_id(boff.back());
  std::vector<std::uint64_t> block_bits(boff.back(), 0);
  parallel_for(
    n,
    [&](std::size_t k) {
      auto b = boff[k];
      std::uint32_t last = std::numeric_limits<std::uint32_t>::max();
      for (auto q = off[k]; q < off[k + 1]; ++q) {
        if ((adj[q] >> 6) != last) {
          if (last != std::numeric_limits<std::uint32_t>::max())
            ++b;
          last = adj[q] >> 6;
          block_id[b] = last;
        }
        block_bits[b] |= std::uint64_t{ 1 } << (adj[q] & 63);
      }
    },
    1024);
  std::vector<std::uint32_t>().swap(adj);

  auto lower_rank = [&](std::uint32_t a, std::uint32_t b) {
    return boff[a + 1] - boff[a] < boff[b + 1] - boff[b] || (boff[a + 1] - boff[a] == boff[b + 1] - boff[b] && a < b);
  };
  std::vector<std::uint64_t> twice(n, 0);
  const std::size_t words = (n + 63) / 64;
  parallel_blocks(n, 256, [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint64_t> row(words, 0);
    for (std::size_t u = begin; u < end; ++u) {
      for (auto q = boff[u]; q < boff[u + 1]; ++q)
        row[block_id[q]] = block_bits[q];
      std::uint64_t own = 0;
      for (auto q = boff[u]; q < boff[u + 1]; ++q)
        for (std::uint64_t bits = block_bits[q]; bits; bits &= bits - 1) {
          const auto v = static_cast<std::uint32_t>((block_id[q] << 6) | std::countr_zero(bits));
          if (!lower_rank(v, static_cast<std::uint32_t>(u)))
            continue;
          std::uint64_t common = 0;
          for (auto r = boff[v]; r < boff[v + 1]; ++r)
            common += std::popcount(block_bits[r] & row[block_id[r]]);
          own += common;
          std::atomic_ref<std::uint64_t>(twice[v]).fetch_add(common, std::memory_order_relaxed);
        }
      std::atomic_ref<std::uint64_t>(twice[u]).fetch_add(own, std::memory_order_relaxed);
      for (auto q = boff[u]; q < boff[u + 1]; ++q)
        row[block_id[q]] = 0;
    }
  });

  std::vector<std::uint64_t> tri(n);
  for (std::size_t k = 0; k < n; ++k)
    tri[order[k]] = twice[k] / 2;
  return tri;
}

/// Local clustering (A^3)_ii / (d_i (d_i - 1)); undefined for d_i < 2.
inline OptionalValues clustering(const AdjacencyMatrix& A, std::span<const std::uint64_t> triangles)
{
  OptionalValues out(A.n());
  for (std::size_t i = 0; i < A.n(); ++i) {
    const double d = static_cast<double>(A.degree(i));
    if (A.degree(i) >= 2)
      out[i] = 2.0 * static_cast<double>(triangles[i]) / (d * (d - 1.0));
  }
  return out;
}

inline OptionalValues clustering(const AdjacencyMatrix& A)
{
  return clustering(A, triangle_counts(A));
}

/// (A^3)_ii / d_i^2; undefined for isolated nodes.
inline OptionalValues clustering_simplified(const AdjacencyMatrix& A,
                                            std::span<const std::uint64_t> triangles)
{
  OptionalValues out(A.n());
  for (std::size_t i = 0; i < A.n(); ++i) {
    const double d = static_cast<double>(A.degree(i));
    if (A.degree(i) >= 1)
      out[i] = 2.0 * static_cast<double>(triangles[i]) / (d * d);
  }
  return out;
}

inline OptionalValues clustering_simplified(const AdjacencyMatrix& A)
{
  return clustering_simplified(A, triangle_counts(A));
}

/// Connected components (isolated nodes count as components).
inline std::size_t component_count(const AdjacencyMatrix& A)
{
  std::vector<char> seen(A.n(), 0);
  std::vector<std::uint32_t> stack;
  std::size_t components = 0;
  for (std::size_t s = 0; s < A.n(); ++s) {
    if (seen[s])
      continue;
    ++components;
    seen[s] = 1;
    stack.push_back(static_cast<std::uint32_t>(s));
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (auto v : A.neighbors(u))
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
    }
  }
  return components;
}

namespace detail {
inline void require_connected(const AdjacencyMatrix& A)
{
  const auto c = component_count(A);
  if (c > 1)
    throw ConnectivityError(c);
}

/// Breadth-first distances from s; returns the sum of distances.
inline std::uint64_t bfs_distance_sum(const AdjacencyMatrix& A,
                                      std::uint32_t s,
                                      std::vector<std::uint32_t>& dist,
                                      std::vector<std::uint32_t>& queue)
{
  constexpr auto unseen = std::numeric_limits<std::uint32_t>::max();
  std::fill(dist.begin(), dist.end(), unseen);
  queue.clear();
  dist[s] = 0;
  queue.push_back(s);
  std::uint64_t sum = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const auto u = queue[head];
    sum += dist[u];
    for (auto v : A.neighbors(u))
      if (dist[v] == unseen) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
  }
  return sum;
}

/**
 * Brandes dependency accumulation from the given sources. Returns, per
 * node, the sum over sources s of delta_s(v) (ordered source-target pairs).
 */
inline std::vector<double> brandes_dependencies(const AdjacencyMatrix& A,
                                                std::span<const std::uint32_t> sources)
{
  const std::size_t n = A.n();
  const std::size_t slots = std::min(kReductionSlots, std::max<std::size_t>(sources.size(), 1));
  const std::size_t chunk = (sources.size() + slots - 1) / slots;
  std::vector<std::vector<double>> partial(slots);
  parallel_for(
    slots,
    [&](std::size_t slot) {
      const std::size_t begin = slot * chunk, end = std::min(sources.size(), begin + chunk);
      if (begin >= end)
        return;
      auto& acc = partial[slot];
      acc.assign(n, 0.0);
      constexpr auto unseen = std::numeric_limits<std::uint32_t>::max();
      std::vector<std::uint32_t> dist(n), order;
      std::vector<double> sigma(n), delta(n);
      order.reserve(n);
      for (std::size_t k = begin; k < end; ++k) {
        const auto s = sources[k];
        std::fill(dist.begin(), dist.end(), unseen);
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        order.clear();
        dist[s] = 0;
        sigma[s] = 1.0;
        order.push_back(s);
        for (std::size_t head = 0; head < order.size(); ++head) {
          const auto u = order[head];
          for (auto v : A.neighbors(u)) {
            if (dist[v] == unseen) {
              dist[v] = dist[u] + 1;
              order.push_back(v);
            }
            if (dist[v] == dist[u] + 1)
              sigma[v] += sigma[u];
          }
        }
        // Predecessors of w are its neighbors one level closer to s.
        for (std::size_t r = order.size(); r-- > 1;) {
          const auto w = order[r];
          const double coeff = (1.0 + delta[w]) / sigma[w];
          for (auto v : A.neighbors(w))
            if (dist[v] + 1 == dist[w])
              delta[v] += sigma[v] * coeff;
          acc[w] += delta[w];
        }
      }
    },
    1);
  std::vector<double> total(n, 0.0);
  for (const auto& acc : partial)
    for (std::size_t i = 0; i < acc.size(); ++i)
      total[i] += acc[i];
  return total;
}
} // namespace detail

/// Cl_i = N / sum_j dist(i, j) over unweighted shortest paths. Requires a connected graph.
inline std::vector<double> closeness(const AdjacencyMatrix& A)
{
  detail::require_connected(A);
  const std::size_t n = A.n();
  std::vector<double> out(n, 0.0);
  parallel_blocks(n, 16, [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> dist(n), queue;
    queue.reserve(n);
    for (std::size_t i = begin; i < end; ++i) {
      const auto sum = detail::bfs_distance_sum(A, static_cast<std::uint32_t>(i), dist, queue);
      out[i] = sum > 0 ? static_cast<double>(n) / static_cast<double>(sum) : 0.0;
    }
  });
  return out;
}

/**
 * b_i = sum over unordered pairs {j, k} not containing i of the fraction of
 * shortest j-k paths through i. Exact Brandes accumulation over all
 * sources. Requires a connected graph.
 */
inline std::vector<double> betweenness(const AdjacencyMatrix& A)
{
  detail::require_connected(A);
  std::vector<std::uint32_t> sources(A.n());
  std::iota(sources.begin(), sources.end(), 0u);
  auto b = detail::brandes_dependencies(A, sources);
  for (auto& x : b)
    x *= 0.5;
  return b;
}

/**
 * Betweenness estimated from `pivots` distinct source nodes drawn
 * uniformly with the given seed, scaled by n / pivots.
 */
inline std::vector<double> betweenness_sampled(const AdjacencyMatrix& A,
                                               std::size_t pivots,
                                               std::uint64_t seed)
{
  const std::size_t n = A.n();
  if (pivots == 0 || pivots > n)
    throw DomainError("betweenness_sampled: pivots must be in [1, n]");
  detail::require_connected(A);
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  CounterRng rng(seed, 0);
  for (std::size_t k = 0; k < pivots; ++k)
    std::swap(perm[k], perm[k + rng.below(n - k)]);
  perm.resize(pivots);
  std::sort(perm.begin(), perm.end());
  auto b = detail::brandes_dependencies(A, perm);
  const double scale = 0.5 * static_cast<double>(n) / static_cast<double>(pivots);
  for (auto& x : b)
    x *= scale;
  return b;
}

enum class MeasureKind
{
  Degree,
  AvgNNDegree,
  DegreeAnomaly,
  Clustering,
  ClusteringSimplified,
  Closeness,
  Betweenness
};

inline MeasureKind parse_measure_kind(std::string_view name)
{
  if (name == "degree")
    return MeasureKind::Degree;
  if (name == "avg_nn_degree")
    return MeasureKind::AvgNNDegree;
  if (name == "degree_anomaly")
    return MeasureKind::DegreeAnomaly;
  if (name == "clustering")
    return MeasureKind::Clustering;
  if (name == "clustering_simplified")
    return MeasureKind::ClusteringSimplified;
  if (name == "closeness")
    return MeasureKind::Closeness;
  if (name == "betweenness")
    return MeasureKind::Betweenness;
  throw DomainError("unknown measure '" + std::string(name) + "'");
}

inline OptionalValues measure_values(const AdjacencyMatrix& A, MeasureKind which)
{
  auto wrap = [](const auto& values) {
    OptionalValues out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
      out[i] = static_cast<double>(values[i]);
    return out;
  };
  switch (which) {
    case MeasureKind::Degree:
      return wrap(degree(A));
    case MeasureKind::AvgNNDegree:
      return avg_nn_degree(A);
    case MeasureKind::DegreeAnomaly:
      return degree_anomaly(A);
    case MeasureKind::Clustering:
      return clustering(A);
    case MeasureKind::ClusteringSimplified:
      return clustering_simplified(A);
    case MeasureKind::Closeness:
      return wrap(closeness(A));
    case MeasureKind::Betweenness:
      return wrap(betweenness(A));
  }
  return {};
}

/**
 * Mean of one measure over `region` for every prefix network. Nodes where
 * the measure is undefined are left out of the mean; a prefix with no
 * defined value in the region yields NaN.
 */
inline std::vector<double> measure_series(std::span<const AdjacencyMatrix> prefixes,
                                          MeasureKind which,
                                          std::span<const std::size_t> region)
{
  if (region.empty())
    throw DomainError("measure_series: empty region");
  std::vector<double> out;
  out.reserve(prefixes.size());
  for (const auto& A : prefixes) {
    const auto values = measure_values(A, which);
    double sum = 0.0;
    std::size_t count = 0;
    for (auto i : region) {
      if (i >= A.n())
        throw DomainError("measure_series: region index out of range");
      if (values[i]) {
        sum += *values[i];
        ++count;
      }
    }
    out.push_back(count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

struct NodeMeasureTable
{
  std::size_t n = 0;
  std::vector<std::size_t> degree;
  OptionalValues avg_nn_degree;
  OptionalValues degree_anomaly;
  OptionalValues clustering;
  OptionalValues clustering_simplified;
  /// Absent when not computed.
  std::optional<std::vector<double>> closeness;
  std::optional<std::vector<double>> betweenness;
};

struct MeasureOptions
{
  bool closeness = false;
  bool betweenness = false;
  /// 0 selects exact betweenness, otherwise the number of sampled pivots.
  std::size_t betweenness_pivots = 0;
  std::uint64_t seed = 0;
};

inline NodeMeasureTable compute_measures(const AdjacencyMatrix& A, const MeasureOptions& opt = {})
{
  NodeMeasureTable t;
  t.n = A.n();
  t.degree = degree(A);
  t.avg_nn_degree = avg_nn_degree(A);
  t.degree_anomaly.resize(A.n());
  for (std::size_t i = 0; i < A.n(); ++i)
    if (t.avg_nn_degree[i])
      t.degree_anomaly[i] = static_cast<double>(t.degree[i]) - *t.avg_nn_degree[i];
  const auto tri = triangle_counts(A);
  t.clustering = clustering(A, tri);
  t.clustering_simplified = clustering_simplified(A, tri);
  if (opt.closeness)
    t.closeness = closeness(A);
  if (opt.betweenness)
    t.betweenness = opt.betweenness_pivots == 0 || opt.betweenness_pivots >= A.n()
                      ? betweenness(A)
                      : betweenness_sampled(A, opt.betweenness_pivots, opt.seed);
  return t;
}

inline constexpr std::string_view kMeasureCsvHeader =
  "node,degree,avg_nn_degree,degree_anomaly,clustering,clustering_simplified,closeness,betweenness";

/// Undefined and not-computed entries are written as empty cells.
inline void write_measures_csv(const NodeMeasureTable& t, std::ostream& out)
{
  std::string buf(kMeasureCsvHeader);
  buf += '\n';
  auto put = [&buf](std::optional<double> v) {
    buf += ',';
    if (v)
      detail::append_real(buf, *v);
  };
  for (std::size_t i = 0; i < t.n; ++i) {
    buf += std::to_string(i);
    buf += ',';
    buf += std::to_string(t.degree[i]);
    put(t.avg_nn_degree[i]);
    put(t.degree_anomaly[i]);
    put(t.clustering[i]);
    put(t.clustering_simplified[i]);
    put(t.closeness ? std::optional<double>((*t.closeness)[i]) : std::nullopt);
    put(t.betweenness ? std::optional<double>((*t.betweenness)[i]) : std::nullopt);
    buf += '\n';
    if (buf.size() > (1u << 20)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

/// Inverse of write_measures_csv. A closeness or betweenness column is present iff any cell is filled.
inline NodeMeasureTable read_measures_csv(std::istream& in)
{
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || detail::trim(line) != kMeasureCsvHeader)
    throw MalformedInputError(1, "expected measure table header");
  NodeMeasureTable t;
  std::vector<std::optional<double>> close, betw;
  auto parse_opt = [&](std::string_view s) -> std::optional<double> {
    if (s.empty())
      return std::nullopt;
    double v;
    if (!detail::parse_real(s, v))
      throw MalformedInputError(line_no, "cannot parse '" + std::string(s) + "'");
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty())
      continue;
    const auto f = detail::split_commas(line);
    if (f.size() != 8)
      throw MalformedInputError(line_no, "expected 8 fields");
    const auto node = parse_opt(f[0]);
    if (!node || *node != static_cast<double>(t.n))
      throw MalformedInputError(line_no, "nodes must be listed as 0, 1, 2, ...");
    const auto deg = parse_opt(f[1]);
    if (!deg || *deg < 0)
      throw MalformedInputError(line_no, "missing degree");
    t.degree.push_back(static_cast<std::size_t>(*deg));
    t.avg_nn_degree.push_back(parse_opt(f[2]));
    t.degree_anomaly.push_back(parse_opt(f[3]));
    t.clustering.push_back(parse_opt(f[4]));
    t.clustering_simplified.push_back(parse_opt(f[5]));
    close.push_back(parse_opt(f[6]));
    betw.push_back(parse_opt(f[7]));
    ++t.n;
  }
  auto column = [](const std::vector<std::optional<double>>& v) -> std::optional<std::vector<double>> {
    if (std::none_of(v.begin(), v.end(), [](const auto& x) { return x.has_value(); }))
      return std::nullopt;
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      out[i] = v[i].value_or(std::numeric_limits<double>::quiet_NaN());
    return out;
  };
  t.closeness = column(close);
  t.betweenness = column(betw);
  return t;
}

} // namespace flownet
