#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include <mvreg/io.hpp>

#include "oracles.hpp"

using namespace mvreg;

namespace {

GlobalMotions random_globals(std::mt19937_64& rng, std::size_t n) {
  std::vector<RigidMotion> m{RigidMotion::identity()};
  for (std::size_t k = 1; k < n; ++k) m.push_back(oracle::random_motion(rng, 2.0, 3.0));
  return GlobalMotions(std::move(m));
}

}  // namespace

TEST(MotionGraphText, RoundTripIsExact) {
  std::mt19937_64 rng(81);
  const GlobalMotions g = random_globals(rng, 4);
  MotionGraph graph = consistent_graph(g, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  graph.edges[2].weight = 0.123456789;
  std::stringstream s;
  write_motion_graph(s, graph);
  const MotionGraph back = read_motion_graph(s, "mem", 4);
  ASSERT_EQ(back.edges.size(), graph.edges.size());
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    EXPECT_EQ(back.edges[k].i, graph.edges[k].i);
    EXPECT_EQ(back.edges[k].j, graph.edges[k].j);
    EXPECT_EQ(back.edges[k].weight, graph.edges[k].weight);
    EXPECT_EQ(back.edges[k].motion.matrix(), graph.edges[k].motion.matrix());
  }
}

TEST(MotionGraphText, UsesOneBasedScanNumbers) {
  MotionGraph graph{2, {{0, 1, RigidMotion::from_translation({1, 2, 3}), 1.0}}};
  std::ostringstream s;
  write_motion_graph(s, graph);
  EXPECT_EQ(s.str().substr(0, 6), "1 2 1 ");
}

TEST(MotionGraphText, ErrorsNameSourceAndLine) {
  std::istringstream bad_count("1 2 1 1 0 0 0 0 1 0 0 0 0 1\n");
  try {
    read_motion_graph(bad_count, "graph.txt", 2);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("graph.txt:1"), std::string::npos) << e.what();
  }
  std::istringstream zero_scan("0 2 1 1 0 0 0 0 1 0 0 0 0 1 0\n");
  EXPECT_THROW(read_motion_graph(zero_scan, "g", 2), ParseError);
  std::istringstream not_rotation("1 2 1 2 0 0 0 0 1 0 0 0 0 1 0\n");
  EXPECT_THROW(read_motion_graph(not_rotation, "g", 2), ParseError);
}

TEST(GlobalMotionsText, RoundTripIsExact) {
  std::mt19937_64 rng(83);
  const GlobalMotions g = random_globals(rng, 5);
  std::stringstream s;
  write_global_motions(s, g);
  const GlobalMotions back = read_global_motions(s, "mem");
  ASSERT_EQ(back.size(), g.size());
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_EQ(back[k].matrix(), g[k].matrix());
}

TEST(GlobalMotionsText, RejectsBadBottomRow) {
  std::istringstream in("scan 1\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 2\n");
  EXPECT_THROW(read_global_motions(in, "m"), Error);
}

TEST(OverlapCsv, HeaderAndRows) {
  OverlapMatrix m{Eigen::MatrixXd::Identity(2, 2), 0.1};
  m.xi(0, 1) = 0.5;
  m.xi(1, 0) = 0.25;
  std::ostringstream s;
  write_overlap_csv(s, m);
  EXPECT_EQ(s.str(), "scan,1,2\n1,1,0.5\n2,0.25,1\n");
}

TEST(ReportCsv, Columns) {
  RegistrationReport r;
  IterationRecord a;
  a.objective = 0.5;
  a.n_edges = 3;
  a.seconds = 12.0;
  r.iterations.push_back(a);
  std::ostringstream s;
  write_report_csv(s, r);
  EXPECT_EQ(s.str(), "iteration,objective,step_norm,n_edges\n0,0.5,0,3\n");
}

TEST(McCsv, FailedTrialsAreNan) {
  McReport r;
  McTrial ok;
  ok.level = 0.02;
  ok.trial = 0;
  ok.objective = 0.25;
  ok.converged = true;
  McTrial bad = ok;
  bad.trial = 1;
  bad.failed = true;
  r.trials = {ok, bad};
  std::ostringstream s;
  write_mc_csv(s, r);
  EXPECT_EQ(s.str(),
            "level,trial,objective,mean_rot_err_deg,mean_trans_err,converged\n0.02,0,0.25,0,0,1\n0.02,1,nan,nan,nan,0\n");
}
