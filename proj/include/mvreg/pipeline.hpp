// Multi-view registration loop: overlap estimation, pairwise TrICP on every
// sufficiently overlapping pair, weighted motion averaging, convergence test.
#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mvreg/averaging.hpp"
#include "mvreg/cloud.hpp"
#include "mvreg/error.hpp"
#include "mvreg/graph.hpp"
#include "mvreg/lie.hpp"
#include "mvreg/overlap.hpp"
#include "mvreg/pairwise.hpp"
#include "mvreg/parallel.hpp"

namespace mvreg {

enum class WeightMode { Weighted, Unweighted };

inline const char* to_string(WeightMode m) { return m == WeightMode::Weighted ? "weighted" : "unweighted"; }

struct PipelineConfig {
  double xi_thr = 0.4;
  double delta = 1e-4;
  int max_outer_iterations = 50;
  TrICPConfig tricp;
  AveragingOptions averaging;
  double threshold_factor = kDefaultThresholdFactor;
  WeightMode mode = WeightMode::Weighted;
  unsigned workers = 1;

  void validate() const {
    tricp.validate();
    if (!(tricp.xi_min <= xi_thr && xi_thr <= 1.0)) throw ConfigError("xi_thr must lie in [xi_min, 1]");
    if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
    if (max_outer_iterations < 1) throw ConfigError("max_outer_iterations must be >= 1");
    if (!(averaging.epsilon > 0.0) || averaging.max_iterations < 1)
      throw ConfigError("averaging epsilon must be > 0 and max_iter >= 1");
    if (!(threshold_factor > 0.0)) throw ConfigError("threshold factor must be > 0");
  }
};

struct EdgeRecord {
  std::size_t i, j;
  double xi;      // TrICP overlap estimate
  double weight;  // weight used in the averaging solve
  double psi;
};

struct IterationRecord {
  int iteration = 0;  // 0 is the state before the first update
  double objective = 0.0;
  double step_norm = 0.0;
  std::size_t n_edges = 0;
  int averaging_iterations = 0;
  double overlap_seconds = 0.0;
  double pairwise_seconds = 0.0;
  double averaging_seconds = 0.0;
  double seconds = 0.0;  // wall clock for the whole iteration
  std::vector<EdgeRecord> edges;
};

struct RegistrationReport {
  std::vector<IterationRecord> iterations;
  GlobalMotions final_motions;
  OverlapMatrix overlaps;  // from the last iteration
  double threshold = 0.0;
  bool converged = false;
  double total_seconds = 0.0;
  std::vector<std::string> warnings;
};

struct RegistrationResult {
  GlobalMotions motions;
  RegistrationReport report;
};

// Sum over scans of |log(M_new * M_old^-1)|.
inline double convergence_step_norm(const GlobalMotions& old_motions, const GlobalMotions& new_motions) {
  if (old_motions.size() != new_motions.size()) throw InvalidMotion("motion sets differ in size");
  double sum = 0.0;
  for (std::size_t k = 0; k < old_motions.size(); ++k)
    sum += log_map(compose(new_motions[k], inverse(old_motions[k]))).norm();
  return sum;
}

// Mean over `pairs` of the trimmed objective psi of scan j against scan i at
// the relative motion induced by `globals` (xi re-optimised, motion fixed).
inline double global_objective(std::span<const PointCloud> scans, std::span<const NearestNeighborIndex> indices,
                               const GlobalMotions& globals, std::span<const ScanPair> pairs,
                               const TrICPConfig& tricp_config, unsigned workers = 1) {
  if (pairs.empty()) return 0.0;
  std::vector<double> psi(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    psi[k] = trimmed_objective(scans[j], indices[i], globals.relative(i, j), tricp_config).psi;
  });
  double sum = 0.0;
  for (double p : psi) sum += p;
  return sum / static_cast<double>(pairs.size());
}

inline double global_objective(std::span<const PointCloud> scans, const GlobalMotions& globals,
                               std::span<const ScanPair> pairs, const TrICPConfig& tricp_config) {
  std::vector<NearestNeighborIndex> indices;
  for (const PointCloud& c : scans) indices.emplace_back(c);
  return global_objective(scans, indices, globals, pairs, tricp_config);
}

namespace pipeline_detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

}  // namespace pipeline_detail

inline RegistrationResult register_multiview(std::span<const PointCloud> scans, const GlobalMotions& initial,
                                             const PipelineConfig& config) {
  using pipeline_detail::Clock;
  using pipeline_detail::seconds_since;
  config.validate();
  if (scans.size() < 2) throw TooFewPoints("multi-view registration needs at least 2 scans");
  if (initial.size() != scans.size()) throw InvalidMotion("one initial motion per scan is required");

  const auto start = Clock::now();
  std::vector<NearestNeighborIndex> indices(scans.size());
  parallel_for(scans.size(), config.workers, [&](std::size_t k) { indices[k] = NearestNeighborIndex(scans[k]); });

  GlobalMotions globals(initial.motions());
  RegistrationReport report;
  report.threshold = estimate_threshold(scans, globals, config.threshold_factor);

  // The objective reported for a state is the mean psi over the pairs that
  // qualify under that state's motions, so it depends on the motions only.
  report.overlaps = compute_overlap_matrix(scans, indices, globals, report.threshold, config.workers);
  {
    IterationRecord r0;
    const auto pairs = build_pair_graph(report.overlaps, config.xi_thr);
    r0.objective = global_objective(scans, indices, globals, pairs, config.tricp, config.workers);
    r0.n_edges = pairs.size();
    r0.seconds = seconds_since(start);
    report.iterations.push_back(std::move(r0));
  }

  for (int it = 1; it <= config.max_outer_iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    const auto t_iter = Clock::now();

    // (1) pairs from the overlap matrix of the current motions
    const std::vector<ScanPair> pairs = build_pair_graph(report.overlaps, config.xi_thr);

    // (2) pairwise TrICP warm-started from the current relative motions
    const auto t_pair = Clock::now();
    std::vector<PairwiseResult> pairwise(pairs.size());
    parallel_for(pairs.size(), config.workers, [&](std::size_t k) {
      const auto [i, j] = pairs[k];
      pairwise[k] = tricp(scans[j], scans[i], indices[i], globals.relative(i, j), config.tricp);
    });
    MotionGraph graph{scans.size(), {}};
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const double w = config.mode == WeightMode::Weighted ? motion_weight(pairwise[k].overlap) : 1.0;
      graph.edges.push_back({pairs[k].first, pairs[k].second, pairwise[k].motion, w});
      rec.edges.push_back({pairs[k].first, pairs[k].second, pairwise[k].overlap, w, pairwise[k].psi});
    }
    rec.n_edges = pairs.size();
    rec.pairwise_seconds = seconds_since(t_pair);

    // (3) motion averaging
    const auto t_avg = Clock::now();
    AveragingResult averaged = multiview_average(graph, globals, config.averaging);
    rec.averaging_iterations = averaged.iterations;
    if (!averaged.converged) {
      std::ostringstream msg;
      msg << "iteration " << it << ": motion averaging stopped after " << averaged.iterations
          << " iterations without converging";
      report.warnings.push_back(msg.str());
    }
    rec.averaging_seconds = seconds_since(t_avg);

    // (4) convergence
    rec.step_norm = convergence_step_norm(globals, averaged.globals);
    globals = std::move(averaged.globals);

    const auto t_overlap = Clock::now();
    report.overlaps = compute_overlap_matrix(scans, indices, globals, report.threshold, config.workers);
    rec.overlap_seconds = seconds_since(t_overlap);
    const auto state_pairs = qualifying_pairs(report.overlaps, config.xi_thr);
    rec.objective = global_objective(scans, indices, globals, state_pairs, config.tricp, config.workers);
    rec.seconds = seconds_since(t_iter);

    const double previous = report.iterations.back().objective;
    if (rec.objective > previous + 1e-9) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "iteration " << it << ": objective increased from " << previous << " to " << rec.objective;
      report.warnings.push_back(msg.str());
    }
    report.iterations.push_back(std::move(rec));
    if (report.iterations.back().step_norm < config.delta) {
      report.converged = true;
      break;
    }
  }

  report.final_motions = globals;
  report.total_seconds = seconds_since(start);
  return {std::move(globals), std::move(report)};
}

}  // namespace mvreg
