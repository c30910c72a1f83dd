#include "flownet/flows.hpp"
#include "flownet/measures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace flownet;

namespace {

using EdgeList = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

AdjacencyMatrix complete(std::uint32_t n)
{
  EdgeList e;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      e.emplace_back(i, j);
  return AdjacencyMatrix::from_edges(n, e);
}

AdjacencyMatrix star(std::uint32_t leaves)
{
  EdgeList e;
  for (std::uint32_t j = 1; j <= leaves; ++j)
    e.emplace_back(0, j);
  return AdjacencyMatrix::from_edges(leaves + 1, e);
}

AdjacencyMatrix path3() { return AdjacencyMatrix::from_edges(3, EdgeList{ { 0, 1 }, { 1, 2 } }); }

AdjacencyMatrix ring(std::uint32_t n)
{
  EdgeList e;
  for (std::uint32_t i = 0; i < n; ++i)
    e.emplace_back(i, (i + 1) % n);
  return AdjacencyMatrix::from_edges(n, e);
}

oracle::Dense dense(const AdjacencyMatrix& A)
{
  oracle::Dense D(A.n(), std::vector<int>(A.n(), 0));
  for (std::size_t i = 0; i < A.n(); ++i)
    for (auto j : A.neighbors(i))
      D[i][j] = 1;
  return D;
}

} // namespace

TEST(Degree, SimpleGraphs)
{
  EXPECT_EQ(degree(AdjacencyMatrix::from_edges(4, EdgeList{})), std::vector<std::size_t>(4, 0));
  EXPECT_EQ(degree(complete(6)), std::vector<std::size_t>(6, 5));
}

TEST(AvgNeighbourDegree, RegularAndStar)
{
  for (auto v : avg_nn_degree(ring(7)))
    EXPECT_EQ(*v, 2.0);
  const auto s = avg_nn_degree(star(5));
  EXPECT_EQ(*s[0], 1.0);
  for (std::size_t i = 1; i <= 5; ++i)
    EXPECT_EQ(*s[i], 5.0);
  const auto iso = avg_nn_degree(AdjacencyMatrix::from_edges(2, EdgeList{}));
  EXPECT_FALSE(iso[0].has_value());
  const auto anomaly = degree_anomaly(star(5));
  EXPECT_EQ(*anomaly[0], 4.0);
  EXPECT_EQ(*anomaly[1], -4.0);
}

TEST(Clustering, CompleteTreeAndUndefined)
{
  for (auto v : clustering(complete(5)))
    EXPECT_EQ(*v, 1.0);
  const auto s = clustering(star(4));
  EXPECT_EQ(*s[0], 0.0);
  EXPECT_FALSE(s[1].has_value());
  const auto simple = clustering_simplified(complete(5));
  EXPECT_DOUBLE_EQ(*simple[0], 12.0 / 16.0);
}

TEST(Closeness, HandComputed)
{
  for (auto v : closeness(complete(5)))
    EXPECT_DOUBLE_EQ(v, 5.0 / 4.0);
  const auto p = closeness(path3());
  EXPECT_DOUBLE_EQ(p[1], 1.5);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_DOUBLE_EQ(p[2], 1.0);
  EXPECT_THROW(closeness(AdjacencyMatrix::from_edges(3, EdgeList{ { 0, 1 } })), ConnectivityError);
}

TEST(Betweenness, HandComputed)
{
  for (auto v : betweenness(complete(6)))
    EXPECT_EQ(v, 0.0);
  const auto p = betweenness(path3());
  EXPECT_DOUBLE_EQ(p[1], 1.0);
  EXPECT_DOUBLE_EQ(p[0], 0.0);
  const auto s = betweenness(star(5));
  EXPECT_DOUBLE_EQ(s[0], 10.0);
  // Two shortest paths between opposite corners of a square.
  const auto q = betweenness(ring(4));
  for (auto v : q)
    EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Betweenness, SampledPivots)
{
  const auto A = star(8);
  EXPECT_EQ(betweenness_sampled(A, 9, 3), betweenness(A));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto b = betweenness_sampled(A, 2, seed);
    for (std::size_t i = 1; i < 9; ++i)
      EXPECT_GT(b[0], b[i]);
  }
  EXPECT_EQ(betweenness_sampled(A, 3, 5), betweenness_sampled(A, 3, 5));
  EXPECT_THROW(betweenness_sampled(A, 0, 1), DomainError);
  EXPECT_THROW(betweenness_sampled(A, 10, 1), DomainError);
}

TEST(Triangles, MatchDenseOracle)
{
  for (std::uint64_t k = 0; k < 30; ++k) {
    const auto ens = oracle::random_walks(23, k, 40 + 5 * k, 2, 5, 0.15);
    const auto A = build_adjacency(ens, 0.07 + 0.005 * static_cast<double>(k % 7));
    EXPECT_EQ(triangle_counts(A), oracle::triangles(dense(A))) << "instance " << k;
  }
}

TEST(Triangles, DenseBlocksAndThreadCounts)
{
  // Large enough to span many 64-node blocks with heavy overlap.
  const auto ens = generate_double_gyre_ensemble(double_gyre_grid(50, 25), 3.0, 0.1, 0.01);
  const auto A = build_adjacency(ens, 0.12);
  const auto expect = oracle::triangles(dense(A));
  set_max_threads(1);
  EXPECT_EQ(triangle_counts(A), expect);
  set_max_threads(5);
  EXPECT_EQ(triangle_counts(A), expect);
  set_max_threads(0);
}

TEST(Measures, Map1DStaticClusteringIsExact)
{
  const auto A = build_adjacency(generate_map_ensemble(1000, 20), 0.01);
  const auto c = clustering(A);
  for (std::size_t i = 20; i < 230; ++i)
    EXPECT_EQ(*c[i], 216.0 / 306.0);
}

TEST(MeasureSeries, RegionMeans)
{
  const auto ens = generate_map_ensemble(200, 6);
  const auto prefixes = build_adjacency_prefixes(ens, 0.03, { 0, 2, 6 });
  const std::vector<std::size_t> region{ 5, 6, 7 };
  const auto d = measure_series(prefixes, MeasureKind::Degree, region);
  ASSERT_EQ(d.size(), 3u);
  for (std::size_t q = 0; q < 3; ++q) {
    double s = 0;
    for (auto i : region)
      s += static_cast<double>(prefixes[q].degree(i));
    EXPECT_DOUBLE_EQ(d[q], s / 3.0);
  }
  EXPECT_THROW(measure_series(prefixes, MeasureKind::Degree, std::vector<std::size_t>{}), DomainError);
  EXPECT_THROW(measure_series(prefixes, MeasureKind::Degree, std::vector<std::size_t>{ 500 }), DomainError);
  EXPECT_EQ(parse_measure_kind("clustering"), MeasureKind::Clustering);
  EXPECT_THROW(parse_measure_kind("pagerank"), DomainError);
}

TEST(MeasureTable, CsvRoundTrip)
{
  const auto ens = oracle::random_walks(8, 1, 60, 2, 4, 0.2);
  const auto A = build_adjacency(ens, 0.25);
  MeasureOptions opt;
  opt.closeness = component_count(A) == 1;
  opt.betweenness = opt.closeness;
  const auto t = compute_measures(A, opt);
  std::stringstream csv;
  write_measures_csv(t, csv);
  const auto back = read_measures_csv(csv);
  EXPECT_EQ(back.n, t.n);
  EXPECT_EQ(back.degree, t.degree);
  EXPECT_EQ(back.clustering, t.clustering);
  EXPECT_EQ(back.avg_nn_degree, t.avg_nn_degree);
  EXPECT_EQ(back.closeness, t.closeness);
  EXPECT_EQ(back.betweenness, t.betweenness);

  std::istringstream bad("node,degree\n0,1\n");
  EXPECT_THROW(read_measures_csv(bad), MalformedInputError);
}
