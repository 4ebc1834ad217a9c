// Overlap percentages between scan pairs, their weights, and the pair graph.
#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mvreg/cloud.hpp"
#include "mvreg/error.hpp"
#include "mvreg/graph.hpp"
#include "mvreg/lie.hpp"
#include "mvreg/parallel.hpp"

namespace mvreg {

// xi(i, j): fraction of scan j's points lying within `threshold` of scan i
// once scan j is mapped into scan i's frame. Diagonal is 1.
struct OverlapMatrix {
  Eigen::MatrixXd xi;
  double threshold = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(xi.rows()); }
};

using ScanPair = std::pair<std::size_t, std::size_t>;

inline constexpr double kDefaultThresholdFactor = 3.0;

// Scene-wide distance threshold: factor x the median nearest-neighbour
// spacing of all scans merged under `motions`. Exactly coincident points
// are merged first so duplicated scans do not collapse the spacing to 0.
inline double estimate_threshold(std::span<const PointCloud> scans, const GlobalMotions& motions,
                                 double factor = kDefaultThresholdFactor) {
  if (scans.size() < 2) throw TooFewPoints("threshold estimation needs at least 2 scans");
  if (motions.size() != scans.size()) throw InvalidMotion("one global motion per scan is required");
  std::vector<Vector3> merged;
  for (std::size_t k = 0; k < scans.size(); ++k)
    for (const Vector3& p : scans[k]) merged.push_back(motions[k].apply(p));

  auto lex_less = [](const Vector3& a, const Vector3& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  };
  std::sort(merged.begin(), merged.end(), lex_less);
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  if (merged.size() < 2) throw TooFewPoints("merged scans have fewer than 2 distinct points");
  return factor * median_resolution(PointCloud(std::move(merged)));
}

inline double estimate_overlap_percentage(const NearestNeighborIndex& index_i, const PointCloud& p_j,
                                          const RigidMotion& m_ij, double threshold) {
  const double t2 = threshold * threshold;
  std::size_t inside = 0;
  for (const Vector3& p : p_j)
    if (index_i.nearest(m_ij.apply(p)).squared_distance <= t2) ++inside;
  return static_cast<double>(inside) / static_cast<double>(p_j.size());
}

inline double estimate_overlap_percentage(const PointCloud& p_i, const PointCloud& p_j, const RigidMotion& m_ij,
                                          double threshold) {
  return estimate_overlap_percentage(NearestNeighborIndex(p_i), p_j, m_ij, threshold);
}

// Full N x N matrix under the current global motions.
inline OverlapMatrix compute_overlap_matrix(std::span<const PointCloud> scans,
                                            std::span<const NearestNeighborIndex> indices,
                                            const GlobalMotions& globals, double threshold,
                                            unsigned workers = 1) {
  const std::size_t n = scans.size();
  OverlapMatrix out{Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)),
                    threshold};
  std::vector<ScanPair> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) pairs.emplace_back(i, j);
  parallel_for(pairs.size(), workers, [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    out.xi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
        estimate_overlap_percentage(indices[i], scans[j], globals.relative(i, j), threshold);
  });
  return out;
}

// Weight of a relative motion with overlap xi.
inline double motion_weight(double xi) { return xi * xi; }

// Pairs (i < j) with xi(i, j) >= xi_thr.
inline std::vector<ScanPair> qualifying_pairs(const OverlapMatrix& overlaps, double xi_thr) {
  const std::size_t n = overlaps.size();
  std::vector<ScanPair> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (overlaps.xi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) >= xi_thr) pairs.emplace_back(i, j);
  return pairs;
}

// As qualifying_pairs, but throws DisconnectedGraph when some scan cannot be
// reached from the reference scan.
inline std::vector<ScanPair> build_pair_graph(const OverlapMatrix& overlaps, double xi_thr) {
  std::vector<ScanPair> pairs = qualifying_pairs(overlaps, xi_thr);
  MotionGraph::check_connected(overlaps.size(), pairs);
  return pairs;
}

}  // namespace mvreg
