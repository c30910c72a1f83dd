#include "flownet/ensemble.hpp"
#include "flownet/flows.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace flownet;

namespace {

TrajectoryEnsemble from_csv(const std::string& text)
{
  std::istringstream in(text);
  return load_csv(in);
}

} // namespace

TEST(Ensemble, CsvRowsLandInTrajectoryTimeGrid)
{
  const auto ens = from_csv("traj_id,t,x0\n0,0,0.0\n0,1,0.5\n1,0,1.0\n1,1,1.0\n");
  ASSERT_EQ(ens.n_traj(), 2u);
  ASSERT_EQ(ens.n_times(), 2u);
  EXPECT_EQ(ens.dim(), 1u);
  EXPECT_EQ(ens.at(1, 0, 0), 0.5);
  EXPECT_EQ(ens.at(0, 1, 0), 1.0);
}

TEST(Ensemble, RowOrderDoesNotMatter)
{
  const auto a = from_csv("traj_id,t,x0,x1\na,0,1,2\nb,0,3,4\na,1,5,6\nb,1,7,8\n");
  const auto b = from_csv("traj_id,t,x0,x1\na,1,5,6\na,0,1,2\nb,1,7,8\nb,0,3,4\n");
  EXPECT_EQ(a, b);
}

TEST(Ensemble, IncompleteGridIsRejected)
{
  EXPECT_THROW(from_csv("traj_id,t,x0\n0,0,0\n0,1,0\n1,0,1\n"), IncompleteGridError);
}

TEST(Ensemble, MalformedRowsReportTheirLine)
{
  try {
    from_csv("traj_id,t,x0\n0,0,0\n0,1,zz\n");
    FAIL() << "expected MalformedInputError";
  } catch (const MalformedInputError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(from_csv("id,t,x0\n0,0,0\n"), MalformedInputError);
  EXPECT_THROW(from_csv("traj_id,t,x0\n0,0\n"), MalformedInputError);
  EXPECT_THROW(from_csv("traj_id,t,x0\n0,0,1\n0,0,2\n0,1,1\n1,0,0\n"), IncompleteGridError);
  EXPECT_THROW(from_csv("traj_id,t,x0\n0,0,1\n0,0,2\n1,0,1\n1,1,0\n"), IncompleteGridError);
}

TEST(Ensemble, ConstructorChecksInvariants)
{
  EXPECT_THROW(TrajectoryEnsemble(1, 1, { 0.0 }, { 0.0 }), DomainError);
  EXPECT_THROW(TrajectoryEnsemble(1, 1, { 1.0, 0.0 }, { 0.0, 0.0 }), DomainError);
  EXPECT_THROW(TrajectoryEnsemble(2, 1, { 0.0, 1.0 }, { 0.0, 0.0, 0.0 }), LengthMismatchError);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(TrajectoryEnsemble(1, 1, { 0.0, 1.0 }, { 0.0, nan }), DomainError);
}

TEST(Ensemble, BinaryRoundTripOnRandomEnsembles)
{
  for (std::uint64_t k = 0; k < 25; ++k) {
    const std::size_t n = 1 + k % 7, dim = 1 + k % 3, slices = 2 + k % 5;
    const auto ens = oracle::random_walks(11, k, n, dim, slices, 0.3);
    std::stringstream bin;
    save_binary(ens, bin);
    EXPECT_EQ(load_binary(bin), ens);
    std::stringstream csv;
    save_csv(ens, csv);
    EXPECT_EQ(load_csv(csv), ens) << "instance " << k;
  }
}

TEST(Ensemble, BinaryRejectsDamagedFiles)
{
  std::stringstream empty;
  EXPECT_THROW(load_binary(empty), FormatError);

  const auto ens = oracle::random_walks(3, 0, 10, 2, 3, 0.1);
  std::stringstream good;
  save_binary(ens, good);
  std::string bytes = good.str();

  // Header advertises ten trajectories but the payload only holds nine.
  std::stringstream short_payload(bytes.substr(0, bytes.size() - 3 * 2 * 8));
  EXPECT_THROW(load_binary(short_payload), LengthMismatchError);

  std::stringstream trailing(bytes + "x");
  EXPECT_THROW(load_binary(trailing), LengthMismatchError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream wrong(bad_magic);
  EXPECT_THROW(load_binary(wrong), FormatError);
}

TEST(Ensemble, ValidateCleanEnsemble)
{
  const auto ens = oracle::random_walks(5, 1, 20, 2, 4, 0.2);
  const auto r = validate(ens);
  EXPECT_TRUE(r.clean());
  EXPECT_EQ(r.missing_count, 0u);
  EXPECT_EQ(r.nonfinite_count, 0u);
}

TEST(Ensemble, ValidateRawTableCountsProblems)
{
  std::istringstream in("traj_id,t,x0\n0,0,nan\n0,1,1\n1,0,2\n1,0,3\n");
  const auto table = parse_csv_table(in);
  EXPECT_THROW(assemble(table), MalformedInputError);
  const auto r = validate(table);
  EXPECT_EQ(r.nonfinite_count, 1u);
  EXPECT_EQ(r.duplicate_id_count, 1u);
  EXPECT_EQ(r.missing_count, 1u);
  EXPECT_FALSE(r.clean());
}

TEST(Ensemble, DoubleGyreGridBoundingBox)
{
  const auto ens = generate_double_gyre_ensemble(double_gyre_grid(21, 11), 0.2, 0.1, 0.01);
  const auto box = bounding_box(ens, 0);
  EXPECT_DOUBLE_EQ(box[0].first, 0.0);
  EXPECT_DOUBLE_EQ(box[0].second, 2.0);
  EXPECT_DOUBLE_EQ(box[1].first, 0.0);
  EXPECT_DOUBLE_EQ(box[1].second, 1.0);
}
