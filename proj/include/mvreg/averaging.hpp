// Weighted motion averaging on SE(3).
//
// Multi-view averaging linearises every edge residual
//
//   dM_ij = M_i * M_ij * M_j^-1 ~ exp(v_j - v_i)
//
// and solves the stacked system D * x = V in the least-squares sense, where
// each edge contributes a block row with -w_ij*I6 at scan i and +w_ij*I6 at
// scan j, and V stacks w_ij * mat2vec(log(dM_ij)). The reference scan's
// columns are dropped, so D has full column rank on a connected graph.
// Globals are then updated as M_k <- exp(x_k) * M_k until |x| < epsilon.
// With every weight equal to one this is plain (unweighted) motion averaging.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "mvreg/error.hpp"
#include "mvreg/graph.hpp"
#include "mvreg/lie.hpp"

namespace mvreg {

struct AveragingOptions {
  double epsilon = 1e-8;
  int max_iterations = 100;
};

// Weighted Karcher-style mean of a set of motions: iterates
// M <- M * exp(sum_i w_i log(M^-1 M_i) / sum_i w_i) until the step norm is
// <= epsilon. Throws NotConverged after max_iterations.
inline RigidMotion average_weighted_motions(std::span<const RigidMotion> motions, std::span<const double> weights,
                                            double epsilon = 1e-12, int max_iterations = 100) {
  if (motions.empty()) throw InvalidMotion("cannot average an empty set of motions");
  if (weights.size() != motions.size()) throw InvalidMotion("one weight per motion is required");
  double weight_sum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw InvalidMotion("averaging weights must be > 0");
    weight_sum += w;
  }

  RigidMotion mean = motions[0];
  for (int it = 0; it < max_iterations; ++it) {
    Twist step;
    const RigidMotion mean_inv = inverse(mean);
    for (std::size_t i = 0; i < motions.size(); ++i) step = step + log_map(compose(mean_inv, motions[i])) * weights[i];
    step = step * (1.0 / weight_sum);
    mean = compose(mean, exp_map(step));
    if (step.norm() <= epsilon) return mean;
  }
  std::ostringstream msg;
  msg << "weighted motion averaging did not converge in " << max_iterations << " iterations";
  throw NotConverged(msg.str());
}

inline Eigen::MatrixXd build_design_matrix(const MotionGraph& graph) {
  if (graph.n_scans < 2) throw RankDeficient("multi-view averaging needs at least 2 scans");
  const auto rows = static_cast<Eigen::Index>(6 * graph.edges.size());
  const auto cols = static_cast<Eigen::Index>(6 * (graph.n_scans - 1));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, cols);
  for (std::size_t r = 0; r < graph.edges.size(); ++r) {
    const MotionEdge& e = graph.edges[r];
    const auto row = static_cast<Eigen::Index>(6 * r);
    if (e.i != 0) d.block<6, 6>(row, static_cast<Eigen::Index>(6 * (e.i - 1))).diagonal().setConstant(-e.weight);
    if (e.j != 0) d.block<6, 6>(row, static_cast<Eigen::Index>(6 * (e.j - 1))).diagonal().setConstant(e.weight);
  }
  return d;
}

// Per edge, w_ij * mat2vec(log(M_i * M_ij * M_j^-1)), in edge order.
inline Eigen::VectorXd stack_residual_vector(const MotionGraph& graph, const GlobalMotions& globals) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(6 * graph.edges.size()));
  for (std::size_t r = 0; r < graph.edges.size(); ++r) {
    const MotionEdge& e = graph.edges[r];
    const RigidMotion delta = compose(compose(globals[e.i], e.motion), inverse(globals[e.j]));
    v.segment<6>(static_cast<Eigen::Index>(6 * r)) = e.weight * log_map(delta).coords();
  }
  return v;
}

// Least-squares solver for a fixed design matrix; factorises once.
class UpdateSolver {
 public:
  explicit UpdateSolver(const Eigen::MatrixXd& d) : qr_(d) {
    if (d.cols() == 0 || qr_.rank() < d.cols()) {
      std::ostringstream msg;
      msg << "design matrix has rank " << qr_.rank() << " < " << d.cols() << " columns";
      throw RankDeficient(msg.str());
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const { return qr_.solve(v); }

 private:
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
};

// Minimum-norm least-squares correction D^+ V (D must have full column rank).
inline Eigen::VectorXd solve_update(const Eigen::MatrixXd& d, const Eigen::VectorXd& v) {
  return UpdateSolver(d).solve(v);
}

inline void apply_update(GlobalMotions& globals, const Eigen::VectorXd& correction) {
  for (std::size_t k = 1; k < globals.size(); ++k) {
    const Vector6 dv = correction.segment<6>(static_cast<Eigen::Index>(6 * (k - 1)));
    globals.set(k, compose(exp_map(Twist::from_coords(dv)), globals[k]));
  }
}

struct AveragingResult {
  GlobalMotions globals;
  int iterations = 0;
  bool converged = false;
  std::vector<Eigen::VectorXd> corrections;  // the update vector of every iteration
};

// Non-convergence is reported through `converged`, not thrown, so callers
// keep the last iterate.
inline AveragingResult multiview_average(const MotionGraph& graph, const GlobalMotions& initial,
                                         const AveragingOptions& options = {}) {
  graph.validate();
  if (initial.size() != graph.n_scans) throw InvalidMotion("initial motions do not match the graph's scan count");
  const Eigen::MatrixXd d = build_design_matrix(graph);
  const UpdateSolver solver(d);

  AveragingResult result{initial, 0, false, {}};
  for (int it = 1; it <= options.max_iterations; ++it) {
    Eigen::VectorXd correction = solver.solve(stack_residual_vector(graph, result.globals));
    apply_update(result.globals, correction);
    result.iterations = it;
    const double norm = correction.norm();
    result.corrections.push_back(std::move(correction));
    if (norm < options.epsilon) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace mvreg
