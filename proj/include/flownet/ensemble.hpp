#pragma once

#include "flownet/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace flownet {

/**
 * N trajectories observed at T+1 common time stamps in R^d.
 *
 * Positions are stored time-major: the slice for one time stamp is a
 * contiguous block of n_traj * dim values, trajectory-major within the
 * slice. The object is immutable once constructed.
 */
class TrajectoryEnsemble
{
public:
  TrajectoryEnsemble(std::size_t n_traj,
                     std::size_t dim,
                     std::vector<double> times,
                     std::vector<double> positions)
    : n_traj_(n_traj)
    , dim_(dim)
    , times_(std::move(times))
    , positions_(std::move(positions))
  {
    if (n_traj_ < 1)
      throw DomainError("ensemble needs at least one trajectory");
    if (dim_ < 1)
      throw DomainError("ensemble needs spatial dimension >= 1");
    if (times_.size() < 2)
      throw DomainError("ensemble needs at least two time slices");
    if (positions_.size() != times_.size() * n_traj_ * dim_)
      throw LengthMismatchError("positions hold " + std::to_string(positions_.size()) +
                                " values, expected " +
                                std::to_string(times_.size() * n_traj_ * dim_));
    for (std::size_t k = 0; k < times_.size(); ++k) {
      if (!std::isfinite(times_[k]))
        throw DomainError("non-finite time stamp at slice " + std::to_string(k));
      if (k > 0 && !(times_[k] > times_[k - 1]))
        throw DomainError("time stamps must be strictly increasing (slice " +
                          std::to_string(k) + ")");
    }
    for (std::size_t k = 0; k < positions_.size(); ++k)
      if (!std::isfinite(positions_[k]))
        throw DomainError("non-finite coordinate at slice " +
                          std::to_string(k / (n_traj_ * dim_)) + ", trajectory " +
                          std::to_string((k / dim_) % n_traj_));
  }

  std::size_t n_traj() const noexcept { return n_traj_; }
  std::size_t n_times() const noexcept { return times_.size(); }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const double> times() const noexcept { return times_; }
  std::span<const double> positions() const noexcept { return positions_; }

  /// Contiguous n_traj * dim block of slice t.
  std::span<const double> slice(std::size_t t) const
  {
    return std::span<const double>(positions_).subspan(t * n_traj_ * dim_, n_traj_ * dim_);
  }

  std::span<const double> point(std::size_t t, std::size_t traj) const
  {
    return std::span<const double>(positions_).subspan((t * n_traj_ + traj) * dim_, dim_);
  }

  double at(std::size_t t, std::size_t traj, std::size_t k) const
  {
    return positions_[(t * n_traj_ + traj) * dim_ + k];
  }

  friend bool operator==(const TrajectoryEnsemble&, const TrajectoryEnsemble&) = default;

private:
  std::size_t n_traj_;
  std::size_t dim_;
  std::vector<double> times_;
  std::vector<double> positions_;
};

/// One parsed CSV row, before grid assembly.
struct RawRow
{
  std::string traj_id;
  double t = 0.0;
  std::vector<double> coords;
  std::size_t line = 0;
};

/// Rows of a trajectory CSV exactly as read, possibly incomplete or non-finite.
struct RawTable
{
  std::size_t dim = 0;
  std::vector<RawRow> rows;
};

struct ValidationReport
{
  std::size_t missing_count = 0;
  std::size_t nonfinite_count = 0;
  std::size_t duplicate_id_count = 0;
  std::vector<std::pair<double, double>> bounding_box;

  bool clean() const noexcept
  {
    return missing_count == 0 && nonfinite_count == 0 && duplicate_id_count == 0;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

/// Parses a real, accepting nan/inf spellings so validation can count them.
inline bool parse_real(std::string_view s, double& out)
{
  if (s.empty())
    return false;
  if (s.front() == '+')
    s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

/// Shortest decimal text that parses back to the same double.
inline void append_real(std::string& out, double v)
{
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

template<typename T>
void put_le(std::ostream& os, T value)
{
  std::uint64_t bits;
  if constexpr (std::is_floating_point_v<T>)
    bits = std::bit_cast<std::uint64_t>(static_cast<double>(value));
  else
    bits = static_cast<std::uint64_t>(value);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i)
    bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes), 8);
}

inline bool get_le(std::istream& is, std::uint64_t& bits)
{
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8))
    return false;
  bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return true;
}

} // namespace detail

/**
 * Reads `traj_id,t,x0[,x1,...]` rows. Only syntax is checked here; the
 * grid structure is checked by assemble().
 */
inline RawTable parse_csv_table(std::istream& in)
{
  RawTable table;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty())
      continue;
    auto fields = detail::split_commas(body);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() < 3 || fields[0] != "traj_id" || fields[1] != "t")
        throw MalformedInputError(line_no, "expected header traj_id,t,x0[,x1,...]");
      for (std::size_t k = 2; k < fields.size(); ++k)
        if (fields[k] != "x" + std::to_string(k - 2))
          throw MalformedInputError(line_no, "unexpected column name '" +
                                               std::string(fields[k]) + "'");
      table.dim = fields.size() - 2;
      continue;
    }
    if (fields.size() != table.dim + 2)
      throw MalformedInputError(line_no, "expected " + std::to_string(table.dim + 2) +
                                           " fields, found " + std::to_string(fields.size()));
    RawRow row;
    row.line = line_no;
    row.traj_id = std::string(fields[0]);
    if (row.traj_id.empty())
      throw MalformedInputError(line_no, "empty traj_id");
    if (!detail::parse_real(fields[1], row.t))
      throw MalformedInputError(line_no, "cannot parse time '" + std::string(fields[1]) + "'");
    row.coords.resize(table.dim);
    for (std::size_t k = 0; k < table.dim; ++k)
      if (!detail::parse_real(fields[k + 2], row.coords[k]))
        throw MalformedInputError(line_no, "cannot parse coordinate '" +
                                             std::string(fields[k + 2]) + "'");
    table.rows.push_back(std::move(row));
  }
  if (!header_seen)
    throw MalformedInputError(line_no, "missing header");
  return table;
}

/**
 * Arranges raw rows into an ensemble: trajectories by first appearance of
 * their id, slices by ascending t.
 */
inline TrajectoryEnsemble assemble(const RawTable& table)
{
  std::unordered_map<std::string, std::size_t> id_index;
  std::vector<double> stamps;
  for (const auto& row : table.rows) {
    id_index.try_emplace(row.traj_id, id_index.size());
    if (!std::isfinite(row.t))
      throw MalformedInputError(row.line, "non-finite time stamp");
    stamps.push_back(row.t);
  }
  std::sort(stamps.begin(), stamps.end());
  stamps.erase(std::unique(stamps.begin(), stamps.end()), stamps.end());

  const std::size_t n = id_index.size();
  const std::size_t dim = table.dim;
  if (n == 0)
    throw IncompleteGridError("no data rows");
  if (stamps.size() < 2)
    throw IncompleteGridError("need at least two distinct time stamps");
  if (table.rows.size() != n * stamps.size())
    throw IncompleteGridError(std::to_string(table.rows.size()) + " rows do not form a " +
                              std::to_string(n) + " x " + std::to_string(stamps.size()) +
                              " (trajectory x time) grid");

  std::vector<double> positions(stamps.size() * n * dim);
  std::vector<char> seen(stamps.size() * n, 0);
  for (const auto& row : table.rows) {
    const std::size_t i = id_index.at(row.traj_id);
    const std::size_t t =
      static_cast<std::size_t>(std::lower_bound(stamps.begin(), stamps.end(), row.t) - stamps.begin());
    // With the row count already matching, a repeat means some other cell is missing.
    if (seen[t * n + i])
      throw IncompleteGridError("line " + std::to_string(row.line) + " repeats trajectory '" + row.traj_id +
                                "' at t=" + std::to_string(row.t) + ", leaving another cell of the grid empty");
    seen[t * n + i] = 1;
    for (std::size_t k = 0; k < dim; ++k) {
      if (!std::isfinite(row.coords[k]))
        throw MalformedInputError(row.line, "non-finite coordinate");
      positions[(t * n + i) * dim + k] = row.coords[k];
    }
  }
  // Row count matched, no duplicates, so every cell is filled.
  return TrajectoryEnsemble(n, dim, std::move(stamps), std::move(positions));
}

inline TrajectoryEnsemble load_csv(std::istream& in) { return assemble(parse_csv_table(in)); }

inline TrajectoryEnsemble load_csv(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw InputError("cannot open " + path.string());
  return load_csv(in);
}

/// Writes rows grouped by trajectory with ids 0..n-1; reals use shortest round-trip text.
inline void save_csv(const TrajectoryEnsemble& ens, std::ostream& out)
{
  std::string buf = "traj_id,t";
  for (std::size_t k = 0; k < ens.dim(); ++k)
    buf += ",x" + std::to_string(k);
  buf += '\n';
  for (std::size_t i = 0; i < ens.n_traj(); ++i) {
    for (std::size_t t = 0; t < ens.n_times(); ++t) {
      buf += std::to_string(i);
      buf += ',';
      detail::append_real(buf, ens.times()[t]);
      for (double x : ens.point(t, i)) {
        buf += ',';
        detail::append_real(buf, x);
      }
      buf += '\n';
    }
    if (buf.size() > (1u << 20)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

inline void save_csv(const TrajectoryEnsemble& ens, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw InputError("cannot write " + path.string());
  save_csv(ens, out);
}

inline constexpr std::array<char, 4> kEnsembleMagic{ 'F', 'N', 'E', 'T' };
inline constexpr std::uint8_t kEnsembleVersion = 1;

/**
 * Binary layout, all little-endian:
 *   "FNET" | u8 version | u64 n_traj | u64 n_times | u64 dim |
 *   f64 times[n_times] | f64 positions[n_times][n_traj][dim]
 */
inline void save_binary(const TrajectoryEnsemble& ens, std::ostream& out)
{
  out.write(kEnsembleMagic.data(), 4);
  out.put(static_cast<char>(kEnsembleVersion));
  detail::put_le(out, std::uint64_t{ ens.n_traj() });
  detail::put_le(out, std::uint64_t{ ens.n_times() });
  detail::put_le(out, std::uint64_t{ ens.dim() });
  for (double t : ens.times())
    detail::put_le(out, t);
  for (double x : ens.positions())
    detail::put_le(out, x);
}

inline void save_binary(const TrajectoryEnsemble& ens, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InputError("cannot write " + path.string());
  save_binary(ens, out);
}

inline TrajectoryEnsemble load_binary(std::istream& in)
{
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kEnsembleMagic.data(), 4) != 0)
    throw FormatError("missing FNET magic bytes");
  const int version = in.get();
  if (version != kEnsembleVersion)
    throw FormatError("unsupported ensemble format version " + std::to_string(version));
  std::uint64_t n = 0, n_times = 0, dim = 0;
  if (!detail::get_le(in, n) || !detail::get_le(in, n_times) || !detail::get_le(in, dim))
    throw LengthMismatchError("truncated header");
  constexpr std::uint64_t limit = std::uint64_t{ 1 } << 40;
  if (n == 0 || dim == 0 || n_times < 2 || n > limit || dim > limit || n_times > limit ||
      n * dim > limit / n_times)
    throw FormatError("implausible ensemble dimensions");

  std::vector<double> times(n_times);
  std::vector<double> positions(n_times * n * dim);
  std::uint64_t bits = 0;
  for (auto& t : times) {
    if (!detail::get_le(in, bits))
      throw LengthMismatchError("payload ends inside the time stamps");
    t = std::bit_cast<double>(bits);
  }
  for (std::size_t k = 0; k < positions.size(); ++k) {
    if (!detail::get_le(in, bits))
      throw LengthMismatchError("payload holds " + std::to_string(k) + " of " +
                                std::to_string(positions.size()) + " coordinates");
    positions[k] = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw LengthMismatchError("trailing bytes after payload");
  try {
    return TrajectoryEnsemble(n, dim, std::move(times), std::move(positions));
  } catch (const DomainError& e) {
    throw FormatError(e.what());
  }
}

inline TrajectoryEnsemble load_binary(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InputError("cannot open " + path.string());
  return load_binary(in);
}

namespace detail {
inline std::vector<std::pair<double, double>> empty_box(std::size_t dim)
{
  return std::vector<std::pair<double, double>>(
    dim, { std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity() });
}
} // namespace detail

/// Per-dimension (min, max) of one slice.
inline std::vector<std::pair<double, double>> bounding_box(const TrajectoryEnsemble& ens,
                                                           std::size_t t)
{
  auto box = detail::empty_box(ens.dim());
  for (std::size_t i = 0; i < ens.n_traj(); ++i)
    for (std::size_t k = 0; k < ens.dim(); ++k) {
      const double x = ens.at(t, i, k);
      box[k].first = std::min(box[k].first, x);
      box[k].second = std::max(box[k].second, x);
    }
  return box;
}

inline ValidationReport validate(const TrajectoryEnsemble& ens)
{
  ValidationReport report;
  report.bounding_box = detail::empty_box(ens.dim());
  for (std::size_t t = 0; t < ens.n_times(); ++t) {
    const auto box = bounding_box(ens, t);
    for (std::size_t k = 0; k < ens.dim(); ++k) {
      report.bounding_box[k].first = std::min(report.bounding_box[k].first, box[k].first);
      report.bounding_box[k].second = std::max(report.bounding_box[k].second, box[k].second);
    }
  }
  return report;
}

/**
 * Report on a table that may not form a valid ensemble. missing_count is
 * the number of absent (traj_id, t) combinations; duplicate_id_count the
 * number of rows repeating an already seen combination. Non-finite values
 * are excluded from the bounding box.
 */
inline ValidationReport validate(const RawTable& table)
{
  ValidationReport report;
  report.bounding_box = detail::empty_box(table.dim);
  std::map<std::string, std::size_t> ids;
  std::map<double, std::size_t> stamps;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> cells;
  for (const auto& row : table.rows) {
    bool finite = std::isfinite(row.t);
    for (std::size_t k = 0; k < table.dim; ++k) {
      const double x = row.coords[k];
      if (!std::isfinite(x)) {
        finite = false;
        continue;
      }
      report.bounding_box[k].first = std::min(report.bounding_box[k].first, x);
      report.bounding_box[k].second = std::max(report.bounding_box[k].second, x);
    }
    if (!finite)
      ++report.nonfinite_count;
    if (std::isnan(row.t))
      continue;
    const auto id = ids.try_emplace(row.traj_id, ids.size()).first->second;
    const auto st = stamps.try_emplace(row.t, stamps.size()).first->second;
    if (++cells[{ id, st }] > 1)
      ++report.duplicate_id_count;
  }
  report.missing_count = ids.size() * stamps.size() - cells.size();
  return report;
}

} // namespace flownet
