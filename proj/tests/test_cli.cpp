#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include <mvreg/io.hpp>

#include "commands.hpp"

using namespace mvreg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mvreg");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mvreg_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void synth(const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"synth", "--out", path(out), "--n-scans", "5", "--points", "400", "--seed", "3"};
    args.insert(args.end(), extra.begin(), extra.end());
    const Outcome o = run_cli(args);
    ASSERT_EQ(o.code, 0) << o.err;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, RegisterTwoIdenticalAlignedClouds) {
  std::ofstream(path("a.xyz")) << "0 0 0\n1 0 0\n0 1 0\n0 0 1\n1 1 0\n1 0 1\n";
  fs::copy_file(path("a.xyz"), path("b.xyz"));
  const Outcome o = run_cli({"register", path("a.xyz"), path("b.xyz"), "--subsample", "1", "--out", path("out")});
  ASSERT_EQ(o.code, 0) << o.err;
  const GlobalMotions m = load_global_motions(path("out/motions.txt"));
  ASSERT_EQ(m.size(), 2u);
  EXPECT_LT((m[1].matrix() - Matrix4::Identity()).norm(), 1e-12);
  for (const char* f : {"graph.txt", "report.csv", "edges.csv", "overlap.csv", "timings.csv"})
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
}

TEST_F(Cli, MissingInputNamesPath) {
  const Outcome o = run_cli({"register", path("nope.ply"), path("nope2.ply"), "--out", path("out")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("nope.ply"), std::string::npos) << o.err;
}

TEST_F(Cli, BadConfigNamesFileAndKey) {
  std::ofstream(path("cfg.json")) << R"({"xi_thr": 0.5, "bogus": 1})";
  const Outcome o = run_cli({"register", "--config", path("cfg.json"), path("x.ply")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("cfg.json"), std::string::npos) << o.err;
  EXPECT_NE(o.err.find("bogus"), std::string::npos) << o.err;

  std::ofstream(path("typed.json")) << R"({"trials": "many"})";
  const Outcome t = run_cli({"mc", "--config", path("typed.json")});
  EXPECT_EQ(t.code, 1);
  EXPECT_NE(t.err.find("trials"), std::string::npos) << t.err;
}

TEST_F(Cli, InvalidModeAndUnknownFlag) {
  EXPECT_EQ(run_cli({"synth", "--out", path("s"), "--mode", "sometimes"}).code, 1);
  EXPECT_EQ(run_cli({"synth", "--no-such-flag"}).code, 1);
  EXPECT_EQ(run_cli({}).code, 1);
}

TEST_F(Cli, SynthIsDeterministic) {
  synth("a");
  synth("b");
  for (const auto& entry : fs::directory_iterator(dir_ / "a")) {
    const fs::path other = dir_ / "b" / entry.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(entry.path()), slurp(other)) << entry.path().filename();
  }
  EXPECT_TRUE(fs::exists(dir_ / "a" / "scan_005.ply"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "truth.txt"));
}

TEST_F(Cli, RegisterSyntheticSceneFromInitialMotions) {
  synth("scene");
  const Outcome o = run_cli({"register", path("scene/*.ply"), "--initial", path("scene/initial.txt"), "--subsample",
                             "1", "--out", path("out"), "--workers", "2"});
  ASSERT_EQ(o.code, 0) << o.err;
  const GlobalMotions truth = load_global_motions(path("scene/truth.txt"));
  const GlobalMotions est = load_global_motions(path("out/motions.txt"));
  EXPECT_LT(mean_motion_error(est, truth).rotation_deg, 0.5);

  std::ifstream report(path("out/report.csv"));
  std::string line;
  std::getline(report, line);
  EXPECT_EQ(line, "iteration,objective,step_norm,n_edges");
  int rows = 0;
  while (std::getline(report, line)) ++rows;
  EXPECT_GE(rows, 2);
}

TEST_F(Cli, NotConvergedExitCode) {
  synth("scene");
  const Outcome o = run_cli({"register", path("scene"), "--initial", path("scene/initial.txt"), "--subsample", "1",
                             "--max-outer", "1", "--delta", "1e-12", "--out", path("out")});
  EXPECT_EQ(o.code, 2) << o.err;
  EXPECT_TRUE(fs::exists(dir_ / "out" / "motions.txt"));
}

TEST_F(Cli, RegisterIsByteIdenticalAcrossRuns) {
  synth("scene");
  for (const char* out : {"r1", "r2"}) {
    const Outcome o = run_cli({"register", path("scene"), "--initial", path("scene/initial.txt"), "--subsample", "2",
                               "--out", path(out)});
    ASSERT_EQ(o.code, 0) << o.err;
  }
  for (const char* f : {"motions.txt", "graph.txt", "report.csv", "edges.csv", "overlap.csv"})
    EXPECT_EQ(slurp(dir_ / "r1" / f), slurp(dir_ / "r2" / f)) << f;
}

TEST_F(Cli, PairwiseIdenticalClouds) {
  synth("scene", {"--format", "xyz"});
  const Outcome o =
      run_cli({"pairwise", path("scene/scan_001.xyz"), path("scene/scan_001.xyz"), "--subsample", "1"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("xi 1\n"), std::string::npos) << o.out;
  const auto at = o.out.find("psi ");
  ASSERT_NE(at, std::string::npos) << o.out;
  EXPECT_LT(std::stod(o.out.substr(at + 4)), 1e-24) << o.out;
}

TEST_F(Cli, PairwiseCollinearCloudIsDegenerate) {
  std::ofstream line(path("line.xyz"));
  for (int k = 0; k < 10; ++k) line << k << " 0 0\n";
  line.close();
  const Outcome o = run_cli({"pairwise", path("line.xyz"), path("line.xyz"), "--subsample", "1"});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("error:"), std::string::npos);
}

TEST_F(Cli, OverlapPrintsMatrix) {
  synth("scene");
  const Outcome o = run_cli({"overlap", path("scene"), "--initial", path("scene/truth.txt"), "--subsample", "1",
                             "--out", path("out")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("threshold "), std::string::npos);
  EXPECT_NE(o.out.find("scan,1,2,3,4,5"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "overlap.csv"));
}

TEST_F(Cli, McPairedWritesBothModes) {
  const Outcome o = run_cli({"mc", "--out", path("mc"), "--n-scans", "4", "--points", "300", "--trials", "2",
                             "--levels", "0.02", "0.04", "--paired", "--workers", "2"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("weighted mean_objective"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("unweighted mean_objective"), std::string::npos) << o.out;
  for (const char* f : {"mc_weighted.csv", "mc_unweighted.csv", "mc_summary.csv"}) {
    std::ifstream in(dir_ / "mc" / f);
    ASSERT_TRUE(in) << f;
    int rows = 0;
    for (std::string l; std::getline(in, l);) ++rows;
    EXPECT_EQ(rows, 5) << f;  // header + 2 levels x 2 trials, or header + 2 levels x 2 modes
  }
}
