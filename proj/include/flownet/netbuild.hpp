#pragma once

#include "flownet/ensemble.hpp"
#include "flownet/error.hpp"
#include "flownet/log.hpp"
#include "flownet/parallel.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace flownet {

/**
 * Uniform-grid spatial hash over one point set. A point with coordinates p
 * lives in cell floor(p / cell_size) (componentwise). Points are stored
 * reordered so that every cell is a contiguous range.
 *
 * Cells are addressed through a dense table over the occupied bounding box
 * when that table is small enough, and through a hash map otherwise.
 */
class SliceIndex
{
public:
  static constexpr std::size_t kMaxDim = 16;

  SliceIndex(std::span<const double> coords, std::size_t dim, double cell_size)
    : dim_(dim)
    , cell_(cell_size)
  {
    if (!(cell_size > 0.0))
      throw DomainError("SliceIndex: cell size must be positive");
    if (dim == 0 || dim > kMaxDim || coords.size() % dim != 0)
      throw ShapeError("SliceIndex: dimension must be in [1, 16] and divide the coordinate count");
    const std::size_t n = coords.size() / dim;
    n_ = n;
    std::vector<std::int64_t> cells(n * dim);
    lo_.assign(dim, std::numeric_limits<std::int64_t>::max());
    std::vector<std::int64_t> hi(dim, std::numeric_limits<std::int64_t>::min());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < dim; ++k) {
        const std::int64_t c = cell_of(coords[i * dim + k]);
        cells[i * dim + k] = c;
        lo_[k] = std::min(lo_[k], c);
        hi[k] = std::max(hi[k], c);
      }

    extent_.resize(dim);
    double table = 1.0;
    for (std::size_t k = 0; k < dim; ++k) {
      extent_[k] = hi[k] - lo_[k] + 1;
      table *= static_cast<double>(extent_[k]);
    }
    dense_ = table <= std::max(4.0 * static_cast<double>(n), 65536.0);

    std::vector<std::uint64_t> keys(n);
    for (std::size_t i = 0; i < n; ++i)
      keys[i] = dense_ ? dense_key(&cells[i * dim]) : hashed_key(&cells[i * dim]);

    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);
    if (dense_) {
      // Counting sort keeps the original order inside each cell.
      const auto ncell = static_cast<std::size_t>(table);
      start_.assign(ncell + 1, 0);
      for (auto key : keys)
        ++start_[key + 1];
      std::partial_sum(start_.begin(), start_.end(), start_.begin());
      std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
      for (std::size_t i = 0; i < n; ++i)
        order_[fill[keys[i]]++] = static_cast<std::uint32_t>(i);
    } else {
      std::stable_sort(order_.begin(), order_.end(), [&](std::uint32_t a, std::uint32_t b) {
        return std::lexicographical_compare(&cells[a * dim], &cells[a * dim] + dim,
                                            &cells[b * dim], &cells[b * dim] + dim);
      });
      for (std::size_t r = 0; r < n;) {
        std::size_t e = r + 1;
        while (e < n && std::equal(&cells[order_[r] * dim], &cells[order_[r] * dim] + dim,
                                   &cells[order_[e] * dim]))
          ++e;
        buckets_.emplace(keys[order_[r]],
                         Bucket{ std::vector<std::int64_t>(&cells[order_[r] * dim],
                                                           &cells[order_[r] * dim] + dim),
                                 static_cast<std::uint32_t>(r),
                                 static_cast<std::uint32_t>(e) });
        r = e;
      }
    }
    sorted_.resize(n * dim);
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(&coords[order_[r] * dim], dim, &sorted_[r * dim]);
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }
  /// Original indices in cell order.
  std::span<const std::uint32_t> order() const noexcept { return order_; }
  double cell_size() const noexcept { return cell_; }

  std::int64_t cell_of(double x) const noexcept
  {
    return static_cast<std::int64_t>(std::floor(x / cell_));
  }

  /**
   * Calls visit(original_index, squared_distance) for every stored point
   * within squared distance `radius2` (strictly) of q, scanning the cells
   * within `reach` cells of q's cell along every axis.
   */
  template<typename Visit>
  void for_each_within(std::span<const double> q, double radius2, int reach, Visit&& visit) const
  {
    if (dense_ && dim_ <= 2) {
      scan_rows(q, radius2, reach, visit);
      return;
    }
    std::array<std::int64_t, kMaxDim> base, cur;
    std::array<int, kMaxDim> offset;
    for (std::size_t k = 0; k < dim_; ++k) {
      base[k] = cell_of(q[k]);
      offset[k] = -reach;
    }
    for (;;) {
      bool inside = true;
      for (std::size_t k = 0; k < dim_; ++k) {
        cur[k] = base[k] + offset[k];
        if (dense_ && (cur[k] < lo_[k] || cur[k] >= lo_[k] + extent_[k]))
          inside = false;
      }
      if (inside)
        scan_cell(cur.data(), q, radius2, visit);
      std::size_t k = 0;
      while (k < dim_ && offset[k] == reach)
        offset[k++] = -reach;
      if (k == dim_)
        break;
      ++offset[k];
    }
  }

  /// Indices j within Euclidean distance < radius of q, ascending. radius must not exceed the cell size.
  std::vector<std::uint32_t> neighbors_of(std::span<const double> q, double radius) const
  {
    std::vector<std::uint32_t> out;
    for_each_within(q, radius * radius, 1, [&](std::uint32_t j, double) { out.push_back(j); });
    std::sort(out.begin(), out.end());
    return out;
  }

private:
  std::uint64_t dense_key(const std::int64_t* c) const noexcept
  {
    std::uint64_t key = 0;
    for (std::size_t k = dim_; k-- > 0;)
      key = key * static_cast<std::uint64_t>(extent_[k]) + static_cast<std::uint64_t>(c[k] - lo_[k]);
    return key;
  }

  std::uint64_t hashed_key(const std::int64_t* c) const noexcept
  {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    for (std::size_t k = 0; k < dim_; ++k) {
      h ^= static_cast<std::uint64_t>(c[k]) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  /// Dense 1D/2D query: each stencil row is one contiguous run of cells.
  template<typename Visit>
  void scan_rows(std::span<const double> q, double radius2, int reach, Visit& visit) const
  {
    const std::int64_t cx = cell_of(q[0]);
    const std::int64_t x0 = std::max(cx - reach, lo_[0]) - lo_[0];
    const std::int64_t x1 = std::min(cx + reach, lo_[0] + extent_[0] - 1) - lo_[0];
    if (x0 > x1)
      return;
    if (dim_ == 1) {
      const double qx = q[0];
      for (std::uint32_t r = start_[x0], e = start_[x1 + 1]; r < e; ++r) {
        const double dx = sorted_[r] - qx;
        const double d2 = dx * dx;
        if (d2 < radius2)
          visit(order_[r], d2);
      }
      return;
    }
    const std::int64_t cy = cell_of(q[1]);
    const std::int64_t y0 = std::max(cy - reach, lo_[1]) - lo_[1];
    const std::int64_t y1 = std::min(cy + reach, lo_[1] + extent_[1] - 1) - lo_[1];
    const double qx = q[0], qy = q[1];
    for (std::int64_t y = y0; y <= y1; ++y) {
      const auto row = static_cast<std::uint64_t>(y * extent_[0]);
      const std::uint32_t e = start_[row + static_cast<std::uint64_t>(x1) + 1];
      for (std::uint32_t r = start_[row + static_cast<std::uint64_t>(x0)]; r < e; ++r) {
        const double dx = sorted_[2 * r] - qx, dy = sorted_[2 * r + 1] - qy;
        const double d2 = dx * dx + dy * dy;
        if (d2 < radius2)
          visit(order_[r], d2);
      }
    }
  }

  template<typename Visit>
  void scan_cell(const std::int64_t* c, std::span<const double> q, double radius2, Visit& visit) const
  {
    std::uint32_t begin = 0, end = 0;
    if (dense_) {
      const auto key = dense_key(c);
      begin = start_[key];
      end = start_[key + 1];
    } else {
      auto [it, last] = buckets_.equal_range(hashed_key(c));
      for (; it != last; ++it)
        if (std::equal(it->second.cell.begin(), it->second.cell.end(), c)) {
          begin = it->second.begin;
          end = it->second.end;
          break;
        }
    }
    if (dim_ == 2) {
      const double qx = q[0], qy = q[1];
      for (std::uint32_t r = begin; r < end; ++r) {
        const double dx = sorted_[2 * r] - qx, dy = sorted_[2 * r + 1] - qy;
        const double d2 = dx * dx + dy * dy;
        if (d2 < radius2)
          visit(order_[r], d2);
      }
      return;
    }
    for (std::uint32_t r = begin; r < end; ++r) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < dim_; ++k) {
        const double dk = sorted_[r * dim_ + k] - q[k];
        d2 += dk * dk;
      }
      if (d2 < radius2)
        visit(order_[r], d2);
    }
  }

  std::size_t n_ = 0;
  std::size_t dim_;
  double cell_;
  bool dense_ = true;
  std::vector<std::int64_t> lo_;
  std::vector<std::int64_t> extent_;
  std::vector<std::uint32_t> start_;
  struct Bucket
  {
    std::vector<std::int64_t> cell;
    std::uint32_t begin;
    std::uint32_t end;
  };
  std::unordered_multimap<std::uint64_t, Bucket> buckets_;
  std::vector<std::uint32_t> order_;
  std::vector<double> sorted_;
};

/**
 * Unweighted undirected graph without self-loops, stored as a symmetric
 * compressed adjacency structure with sorted neighbor lists. An unordered
 * edge {i, j} appears in both rows.
 */
class AdjacencyMatrix
{
public:
  AdjacencyMatrix() = default;

  AdjacencyMatrix(std::size_t n,
                  std::vector<std::uint64_t> offsets,
                  std::vector<std::uint32_t> targets,
                  double epsilon = 0.0,
                  std::size_t t_index_max = 0)
    : n_(n)
    , offsets_(std::move(offsets))
    , targets_(std::move(targets))
    , epsilon_(epsilon)
    , t_index_max_(t_index_max)
  {
    if (offsets_.size() != n_ + 1 || offsets_.back() != targets_.size())
      throw ShapeError("AdjacencyMatrix: inconsistent offsets");
  }

  /// Builds from unordered pairs; duplicates and orientation are normalized, self-loops rejected.
  static AdjacencyMatrix from_edges(std::size_t n,
                                    std::span<const std::pair<std::uint32_t, std::uint32_t>> edges,
                                    double epsilon = 0.0,
                                    std::size_t t_index_max = 0)
  {
    std::vector<std::uint64_t> offsets(n + 1, 0);
    for (auto [i, j] : edges) {
      if (i >= n || j >= n)
        throw DomainError("edge endpoint out of range");
      if (i == j)
        throw DomainError("self-loops are not allowed");
      ++offsets[i + 1];
      ++offsets[j + 1];
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    std::vector<std::uint32_t> targets(offsets.back());
    std::vector<std::uint64_t> fill(offsets.begin(), offsets.end() - 1);
    for (auto [i, j] : edges) {
      targets[fill[i]++] = j;
      targets[fill[j]++] = i;
    }
    // Sort and drop duplicate pairs row by row.
    std::vector<std::uint64_t> clean(n + 1, 0);
    std::size_t w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto b = targets.begin() + static_cast<std::ptrdiff_t>(offsets[i]);
      auto e = targets.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]);
      std::sort(b, e);
      e = std::unique(b, e);
      for (auto it = b; it != e; ++it)
        targets[w++] = *it;
      clean[i + 1] = w;
    }
    targets.resize(w);
    return AdjacencyMatrix(n, std::move(clean), std::move(targets), epsilon, t_index_max);
  }

  std::size_t n() const noexcept { return n_; }
  double epsilon() const noexcept { return epsilon_; }
  std::size_t t_index_max() const noexcept { return t_index_max_; }
  std::size_t edge_count() const noexcept { return targets_.size() / 2; }

  std::span<const std::uint32_t> neighbors(std::size_t i) const noexcept
  {
    return std::span<const std::uint32_t>(targets_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
  }

  std::size_t degree(std::size_t i) const noexcept { return offsets_[i + 1] - offsets_[i]; }

  bool has_edge(std::size_t i, std::size_t j) const
  {
    const auto row = neighbors(i);
    return std::binary_search(row.begin(), row.end(), static_cast<std::uint32_t>(j));
  }

  /// Unordered edges as (i, j) with i < j, sorted lexicographically.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges() const
  {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    out.reserve(edge_count());
    for (std::size_t i = 0; i < n_; ++i)
      for (auto j : neighbors(i))
        if (j > i)
          out.emplace_back(static_cast<std::uint32_t>(i), j);
    return out;
  }

  std::span<const std::uint64_t> offsets() const noexcept { return offsets_; }
  std::span<const std::uint32_t> targets() const noexcept { return targets_; }

  /// Same edge set (metadata is not compared).
  friend bool operator==(const AdjacencyMatrix& a, const AdjacencyMatrix& b)
  {
    return a.n_ == b.n_ && a.offsets_ == b.offsets_ && a.targets_ == b.targets_;
  }

private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> offsets_{ 0 };
  std::vector<std::uint32_t> targets_;
  double epsilon_ = 0.0;
  std::size_t t_index_max_ = 0;
};

/// j != query with ||x_j - x_query|| < epsilon within one slice, ascending.
inline std::vector<std::uint32_t> slice_neighbors(std::span<const double> slice,
                                                  std::size_t dim,
                                                  double epsilon,
                                                  std::size_t query)
{
  if (dim == 0 || query >= slice.size() / dim)
    throw DomainError("slice_neighbors: query index out of range");
  SliceIndex index(slice, dim, epsilon);
  auto out = index.neighbors_of(slice.subspan(query * dim, dim), epsilon);
  out.erase(std::remove(out.begin(), out.end(), static_cast<std::uint32_t>(query)), out.end());
  return out;
}

namespace detail {

inline void check_epsilon(double epsilon)
{
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw DomainError("epsilon must be a positive finite number");
}

inline AdjacencyMatrix symmetric_from_upper(std::size_t n,
                                            const std::vector<std::vector<std::uint32_t>>& upper,
                                            const std::vector<std::size_t>& take,
                                            double epsilon,
                                            std::size_t t_index_max)
{
  std::vector<std::uint64_t> offsets(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t count = take.empty() ? upper[i].size() : take[i];
    offsets[i + 1] += count;
    for (std::size_t k = 0; k < count; ++k)
      ++offsets[upper[i][k] + 1];
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<std::uint32_t> targets(offsets.back());
  std::vector<std::uint64_t> fill(offsets.begin(), offsets.end() - 1);
  // Row i holds its lower neighbors first, appended in ascending order while
  // smaller nodes are visited, then its sorted upper neighbors.
  std::vector<std::uint32_t> row;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t count = take.empty() ? upper[i].size() : take[i];
    row.assign(upper[i].begin(), upper[i].begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(row.begin(), row.end());
    std::copy(row.begin(), row.end(),
              targets.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1] - count));
    for (auto j : row)
      targets[fill[j]++] = static_cast<std::uint32_t>(i);
  }
  return AdjacencyMatrix(n, std::move(offsets), std::move(targets), epsilon, t_index_max);
}

/**
 * For every node i, the neighbors j > i collected over slices 0..last in
 * order of first contact. marks[k][i] is the length of i's list once slice
 * prefix_ends[k] has been processed.
 *
 * Nodes are processed in blocks of 64 that are contiguous in the cell
 * order of the first slice, sweeping the slices once per block. A 64-bit
 * mask per candidate node records which members of the current block have
 * already met it.
 */
inline std::vector<std::vector<std::uint32_t>> collect_upper(const TrajectoryEnsemble& ens,
                                                             double epsilon,
                                                             const std::vector<std::size_t>& prefix_ends,
                                                             std::vector<std::vector<std::size_t>>& marks)
{
  const std::size_t n = ens.n_traj();
  const std::size_t last = prefix_ends.back();
  std::vector<SliceIndex> indices;
  indices.reserve(last + 1);
  for (std::size_t t = 0; t <= last; ++t)
    indices.emplace_back(ens.slice(t), ens.dim(), epsilon);
  const std::vector<std::uint32_t> visit_order(indices[0].order().begin(), indices[0].order().end());

  const double eps2 = epsilon * epsilon;
  constexpr std::size_t block = 64;
  std::vector<std::vector<std::uint32_t>> upper(n);
  marks.assign(prefix_ends.size(), std::vector<std::size_t>(n, 0));
  parallel_blocks(n, block, [&](std::size_t begin, std::size_t end) {
    thread_local std::vector<std::uint64_t> seen;
    if (seen.size() != n)
      seen.assign(n, 0);
    std::size_t next_prefix = 0;
    for (std::size_t t = 0; t <= last; ++t) {
      for (std::size_t b = begin; b < end; ++b) {
        const std::uint32_t i = visit_order[b];
        const std::uint64_t bit = std::uint64_t{ 1 } << (b - begin);
        auto& list = upper[i];
        indices[t].for_each_within(ens.point(t, i), eps2, 1, [&](std::uint32_t j, double) {
          if (j > i && !(seen[j] & bit)) {
            seen[j] |= bit;
            list.push_back(j);
          }
        });
      }
      while (next_prefix < prefix_ends.size() && prefix_ends[next_prefix] == t) {
        for (std::size_t b = begin; b < end; ++b)
          marks[next_prefix][visit_order[b]] = upper[visit_order[b]].size();
        ++next_prefix;
      }
    }
    for (std::size_t b = begin; b < end; ++b)
      for (auto j : upper[visit_order[b]])
        seen[j] = 0;
  });
  return upper;
}

inline void warn_if_dense(const AdjacencyMatrix& A)
{
  if (A.n() < 2)
    return;
  const double mean_degree = 2.0 * static_cast<double>(A.edge_count()) / static_cast<double>(A.n());
  if (mean_degree >= 0.5 * static_cast<double>(A.n()))
    log::warn("epsilon=" + std::to_string(A.epsilon()) + " gives mean degree " +
              std::to_string(mean_degree) + " >= n/2; the network is nearly complete");
}

} // namespace detail

/**
 * Links i != j iff ||x_{i,t} - x_{j,t}|| < epsilon for some slice
 * t <= t_index_max (default: all slices).
 */
inline AdjacencyMatrix build_adjacency(const TrajectoryEnsemble& ens,
                                       double epsilon,
                                       std::optional<std::size_t> t_index_max = std::nullopt)
{
  detail::check_epsilon(epsilon);
  const std::size_t last = t_index_max.value_or(ens.n_times() - 1);
  if (last >= ens.n_times())
    throw DomainError("build_adjacency: t_index_max out of range");
  std::vector<std::vector<std::size_t>> marks;
  const auto upper = detail::collect_upper(ens, epsilon, { last }, marks);
  auto A = detail::symmetric_from_upper(ens.n_traj(), upper, {}, epsilon, last);
  detail::warn_if_dense(A);
  return A;
}

/**
 * Adjacency of every growing prefix [0, t_k] in one sweep over the slices.
 * Edges only accumulate, so prefix k is the first marks[k][i] entries of
 * each node's contact list.
 */
inline std::vector<AdjacencyMatrix> build_adjacency_prefixes(const TrajectoryEnsemble& ens,
                                                             double epsilon,
                                                             const std::vector<std::size_t>& t_indices)
{
  detail::check_epsilon(epsilon);
  if (t_indices.empty())
    throw DomainError("build_adjacency_prefixes: no prefix requested");
  for (std::size_t k = 0; k < t_indices.size(); ++k) {
    if (t_indices[k] >= ens.n_times())
      throw DomainError("build_adjacency_prefixes: slice index out of range");
    if (k > 0 && t_indices[k] <= t_indices[k - 1])
      throw DomainError("build_adjacency_prefixes: indices must increase");
  }
  std::vector<std::vector<std::size_t>> marks;
  const auto upper = detail::collect_upper(ens, epsilon, t_indices, marks);
  std::vector<AdjacencyMatrix> out;
  out.reserve(t_indices.size());
  for (std::size_t k = 0; k < t_indices.size(); ++k)
    out.push_back(detail::symmetric_from_upper(ens.n_traj(), upper, marks[k], epsilon, t_indices[k]));
  detail::warn_if_dense(out.back());
  return out;
}

// ---------------------------------------------------------------------------
// Network files
// ---------------------------------------------------------------------------

/**
 * Edge list with one `i,j` row per edge (i < j, sorted) after the comment
 * lines `# n=`, `# epsilon=`, `# t_max=` and `# distance=euclidean, strict`.
 */
inline void save_edges_csv(const AdjacencyMatrix& A, std::ostream& out)
{
  std::string buf = "# n=" + std::to_string(A.n()) + "\n# epsilon=";
  detail::append_real(buf, A.epsilon());
  buf += "\n# t_max=" + std::to_string(A.t_index_max()) + "\n# distance=euclidean, strict\n";
  out << buf;
  buf.clear();
  for (std::size_t i = 0; i < A.n(); ++i) {
    for (auto j : A.neighbors(i))
      if (j > i) {
        buf += std::to_string(i);
        buf += ',';
        buf += std::to_string(j);
        buf += '\n';
      }
    if (buf.size() > (1u << 16)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

inline AdjacencyMatrix load_edges_csv(std::istream& in)
{
  std::optional<std::size_t> n;
  double epsilon = 0.0;
  std::size_t t_max = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::string line;
  std::size_t line_no = 0;
  auto parse_count = [&](std::string_view v, std::size_t& out) {
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      throw MalformedInputError(line_no, "expected a non-negative integer, got '" + std::string(v) + "'");
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty())
      continue;
    if (body.front() == '#') {
      const auto eq = body.find('=');
      if (eq == std::string_view::npos)
        continue;
      const auto key = detail::trim(body.substr(1, eq - 1));
      const auto value = detail::trim(body.substr(eq + 1));
      std::size_t count = 0;
      if (key == "n") {
        parse_count(value, count);
        n = count;
      } else if (key == "t_max") {
        parse_count(value, t_max);
      } else if (key == "epsilon" && !detail::parse_real(value, epsilon)) {
        throw MalformedInputError(line_no, "bad epsilon '" + std::string(value) + "'");
      }
      continue;
    }
    const auto fields = detail::split_commas(body);
    if (fields.size() != 2)
      throw MalformedInputError(line_no, "expected 'i,j'");
    std::size_t i = 0, j = 0;
    parse_count(detail::trim(fields[0]), i);
    parse_count(detail::trim(fields[1]), j);
    if (i > std::numeric_limits<std::uint32_t>::max() || j > std::numeric_limits<std::uint32_t>::max())
      throw MalformedInputError(line_no, "node index too large");
    if (i == j)
      throw MalformedInputError(line_no, "self-loop");
    edges.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
  }
  if (!n)
    throw FormatError("edge list lacks the '# n=' header line");
  for (auto [i, j] : edges)
    if (std::max(i, j) >= *n)
      throw FormatError("edge endpoint exceeds n");
  return AdjacencyMatrix::from_edges(*n, edges, epsilon, t_max);
}

inline constexpr std::array<char, 4> kNetworkMagic{ 'F', 'N', 'A', 'D' };
inline constexpr std::uint8_t kNetworkVersion = 1;

namespace detail {
inline void put_u32_array(std::ostream& os, std::span<const std::uint32_t> values)
{
  std::vector<unsigned char> buf;
  buf.reserve(1 << 16);
  for (auto v : values) {
    for (int b = 0; b < 4; ++b)
      buf.push_back(static_cast<unsigned char>(v >> (8 * b)));
    if (buf.size() >= (1 << 16)) {
      os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline bool get_u32_array(std::istream& is, std::span<std::uint32_t> values)
{
  std::vector<unsigned char> buf(1 << 16);
  std::size_t k = 0;
  while (k < values.size()) {
    const std::size_t count = std::min(values.size() - k, buf.size() / 4);
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(4 * count)))
      return false;
    for (std::size_t q = 0; q < count; ++q)
      values[k + q] = static_cast<std::uint32_t>(buf[4 * q]) | static_cast<std::uint32_t>(buf[4 * q + 1]) << 8 |
                      static_cast<std::uint32_t>(buf[4 * q + 2]) << 16 | static_cast<std::uint32_t>(buf[4 * q + 3]) << 24;
    k += count;
  }
  return true;
}
} // namespace detail

/**
 * Binary layout, all little-endian:
 *   "FNAD" | u8 version | u64 n | f64 epsilon | u64 t_max | u64 edge_count |
 *   u32 upper_degree[n] | u32 upper_targets[edge_count]
 * where row i lists its neighbors j > i in ascending order.
 */
inline void save_network_binary(const AdjacencyMatrix& A, std::ostream& out)
{
  out.write(kNetworkMagic.data(), 4);
  out.put(static_cast<char>(kNetworkVersion));
  detail::put_le(out, std::uint64_t{ A.n() });
  detail::put_le(out, A.epsilon());
  detail::put_le(out, std::uint64_t{ A.t_index_max() });
  detail::put_le(out, std::uint64_t{ A.edge_count() });
  std::vector<std::uint32_t> upper_degree(A.n());
  std::vector<std::uint32_t> targets;
  targets.reserve(A.edge_count());
  for (std::size_t i = 0; i < A.n(); ++i) {
    const auto row = A.neighbors(i);
    const auto first = std::upper_bound(row.begin(), row.end(), static_cast<std::uint32_t>(i));
    upper_degree[i] = static_cast<std::uint32_t>(row.end() - first);
    targets.insert(targets.end(), first, row.end());
  }
  detail::put_u32_array(out, upper_degree);
  detail::put_u32_array(out, targets);
}

inline AdjacencyMatrix load_network_binary(std::istream& in)
{
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kNetworkMagic.data(), 4) != 0)
    throw FormatError("missing FNAD magic bytes");
  const int version = in.get();
  if (version != kNetworkVersion)
    throw FormatError("unsupported network format version " + std::to_string(version));
  std::uint64_t n = 0, eps_bits = 0, t_max = 0, m = 0;
  if (!detail::get_le(in, n) || !detail::get_le(in, eps_bits) || !detail::get_le(in, t_max) || !detail::get_le(in, m))
    throw LengthMismatchError("truncated network header");
  if (n > std::numeric_limits<std::uint32_t>::max() || m > n * (n - (n > 0)) / 2)
    throw FormatError("implausible network dimensions");
  std::vector<std::uint32_t> upper_degree(n), targets(m);
  if (!detail::get_u32_array(in, upper_degree) || !detail::get_u32_array(in, targets))
    throw LengthMismatchError("network payload is truncated");
  if (in.peek() != std::char_traits<char>::eof())
    throw LengthMismatchError("trailing bytes after network payload");

  std::vector<std::uint64_t> offsets(n + 1, 0);
  std::uint64_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pos + upper_degree[i] > m)
      throw FormatError("upper degrees exceed the edge count");
    std::uint32_t prev = static_cast<std::uint32_t>(i);
    for (std::uint64_t k = pos; k < pos + upper_degree[i]; ++k) {
      const auto j = targets[k];
      if (j <= prev || j >= n)
        throw FormatError("neighbor list of node " + std::to_string(i) + " is not ascending above i");
      prev = j;
      ++offsets[j + 1];
    }
    offsets[i + 1] += upper_degree[i];
    pos += upper_degree[i];
  }
  if (pos != m)
    throw FormatError("upper degrees do not sum to the edge count");
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<std::uint32_t> full(offsets.back());
  std::vector<std::uint64_t> fill(offsets.begin(), offsets.end() - 1);
  pos = 0;
  // Lower neighbors arrive in ascending order because rows are visited in order.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint64_t k = pos; k < pos + upper_degree[i]; ++k)
      full[fill[targets[k]]++] = static_cast<std::uint32_t>(i);
    pos += upper_degree[i];
  }
  pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(targets.begin() + static_cast<std::ptrdiff_t>(pos), upper_degree[i],
                full.begin() + static_cast<std::ptrdiff_t>(fill[i]));
    pos += upper_degree[i];
  }
  return AdjacencyMatrix(n, std::move(offsets), std::move(full), std::bit_cast<double>(eps_bits), t_max);
}

/// Binary when the extension is .bin, edge-list CSV otherwise.
inline void save_network(const AdjacencyMatrix& A, const std::filesystem::path& path)
{
  const bool binary = path.extension() == ".bin";
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out)
    throw InputError("cannot write " + path.string());
  if (binary)
    save_network_binary(A, out);
  else
    save_edges_csv(A, out);
  if (!out)
    throw InputError("write failed for " + path.string());
}

inline AdjacencyMatrix load_network(const std::filesystem::path& path)
{
  const bool binary = path.extension() == ".bin";
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in)
    throw InputError("cannot open " + path.string());
  return binary ? load_network_binary(in) : load_edges_csv(in);
}

} // namespace flownet
