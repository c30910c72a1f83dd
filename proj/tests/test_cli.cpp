#include "flownet/ensemble.hpp"
#include "flownet/measures.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test
{
protected:
  void SetUp() override
  {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("flownet_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const
  {
    const std::string cmd = std::string(FLOWNET_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const fs::path& p) const
  {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

} // namespace

TEST_F(Cli, StagesChainThroughDefaultPaths)
{
  const std::string out = " --out-dir " + dir_.string();
  ASSERT_EQ(run("generate --flow map1d --n 200 --steps 10" + out), 0) << slurp(dir_ / "stderr.txt");
  const auto ens = flownet::load_binary(dir_ / "ensemble.bin");
  EXPECT_EQ(ens.n_traj(), 200u);
  EXPECT_EQ(ens.n_times(), 11u);
  ASSERT_EQ(run("network --epsilon 0.03" + out), 0) << slurp(dir_ / "stderr.txt");
  ASSERT_EQ(run("measures" + out), 0) << slurp(dir_ / "stderr.txt");
  std::ifstream m(dir_ / "measures.csv");
  const auto table = flownet::read_measures_csv(m);
  EXPECT_EQ(table.n, 200u);
  ASSERT_EQ(run("classify --m 3 --k 3" + out), 0) << slurp(dir_ / "stderr.txt");
  const auto classes = slurp(dir_ / "classes.csv");
  EXPECT_EQ(classes.substr(0, classes.find('\n')), "node,degree_std,clustering_std,dc1,dc2,dc3,label");
  EXPECT_NE(slurp(dir_ / "classes.json").find("\"eigenvalues\""), std::string::npos);
}

TEST_F(Cli, CsvOutputsByExtension)
{
  ASSERT_EQ(run("generate --flow map1d --n 50 --steps 3 --out " + (dir_ / "e.csv").string()), 0);
  const auto ens = flownet::load_csv(dir_ / "e.csv");
  EXPECT_EQ(ens.n_traj(), 50u);
  ASSERT_EQ(run("network --epsilon 0.05 --input " + (dir_ / "e.csv").string() + " --out " + (dir_ / "n.csv").string()),
            0);
  EXPECT_EQ(slurp(dir_ / "n.csv").substr(0, 6), "# n=50");
}

TEST_F(Cli, MissingStageInputNamesTheProducer)
{
  EXPECT_EQ(run("measures --out-dir " + dir_.string()), 3);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("flownet network"), std::string::npos);
  EXPECT_EQ(run("network --out-dir " + dir_.string()), 3);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("flownet generate"), std::string::npos);
}

TEST_F(Cli, ConfigurationErrors)
{
  EXPECT_EQ(run("generate --flow nonsense --out-dir " + dir_.string()), 2);
  EXPECT_EQ(run("network --epsilon -1 --out-dir " + dir_.string()), 3); // input is checked first
  EXPECT_EQ(run("frobnicate"), 2);
  {
    std::ofstream cfg(dir_ / "bad.cfg");
    cfg << "flow = map1d\nwibble = 3\n";
  }
  EXPECT_EQ(run("--config " + (dir_ / "bad.cfg").string() + " generate"), 2);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("wibble"), std::string::npos);
}

TEST_F(Cli, ConfigFileWithFlagOverride)
{
  {
    std::ofstream cfg(dir_ / "run.cfg");
    cfg << "# small run\nflow = map1d\nn = 40\nsteps = 5\nout-dir = " << dir_.string() << "\n";
  }
  ASSERT_EQ(run("--config " + (dir_ / "run.cfg").string() + " generate --n 60"), 0) << slurp(dir_ / "stderr.txt");
  EXPECT_EQ(flownet::load_binary(dir_ / "ensemble.bin").n_traj(), 60u);
}

TEST_F(Cli, PipelineIsDeterministicAcrossThreadCounts)
{
  const std::string common = "pipeline --flow double-gyre --grid 40x21 --T 2 --epsilon 0.08 --m 3 --k 3 --series-every 5";
  ASSERT_EQ(run("--threads 1 " + common + " --out-dir " + (dir_ / "a").string()), 0) << slurp(dir_ / "stderr.txt");
  ASSERT_EQ(run("--threads 4 " + common + " --out-dir " + (dir_ / "b").string()), 0) << slurp(dir_ / "stderr.txt");
  for (const char* f : { "measures.csv", "ftle.csv", "ftle_smooth.csv", "classes.csv", "series.csv", "network.bin" })
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  // Replaying the manifest reproduces the run.
  ASSERT_EQ(run("pipeline --manifest " + (dir_ / "a" / "manifest.json").string() + " --out-dir " +
                (dir_ / "c").string()),
            0)
    << slurp(dir_ / "stderr.txt");
  EXPECT_EQ(slurp(dir_ / "a" / "classes.csv"), slurp(dir_ / "c" / "classes.csv"));
}

TEST_F(Cli, TheoryTables)
{
  ASSERT_EQ(run("theory overlap --sigma-grid 1:3 --angles 0,pi/8 --samples 20000"), 0);
  const auto overlap = slurp(dir_ / "stdout.txt");
  EXPECT_EQ(overlap.substr(0, overlap.find('\n')), "sigma,max_angle,estimate,stderr");
  EXPECT_EQ(std::count(overlap.begin(), overlap.end(), '\n'), 7);
  EXPECT_NE(overlap.find("0.39269908169872414"), std::string::npos);
  ASSERT_EQ(run("theory volume --sigmas 1,2 --samples 20000 --out " + (dir_ / "v.csv").string()), 0);
  const auto volume = slurp(dir_ / "v.csv");
  EXPECT_EQ(volume.substr(0, volume.find('\n')), "sigma,formula,mc,stderr");
  EXPECT_EQ(run("theory overlap --angles pi/zero"), 2);
}
