// Global motions and the weighted relative-motion graph over N scans.
//
// Scans are indexed from 0 in code; scan 0 is the reference frame. Text
// formats written by io.hpp use 1-based scan numbers.
#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mvreg/error.hpp"
#include "mvreg/lie.hpp"

namespace mvreg {

// Motions from each scan's frame into the reference frame; element 0 is the
// identity.
class GlobalMotions {
 public:
  GlobalMotions() = default;

  explicit GlobalMotions(std::size_t n) : motions_(n) {}

  // The first motion is re-anchored: every motion is left-multiplied by the
  // inverse of motions[0], which leaves all relative motions unchanged.
  explicit GlobalMotions(std::vector<RigidMotion> motions) : motions_(std::move(motions)) {
    if (motions_.empty()) return;
    const RigidMotion anchor = inverse(motions_[0]);
    for (std::size_t k = 1; k < motions_.size(); ++k) motions_[k] = compose(anchor, motions_[k]);
    motions_[0] = RigidMotion::identity();
  }

  std::size_t size() const { return motions_.size(); }
  const RigidMotion& operator[](std::size_t k) const { return motions_[k]; }
  const std::vector<RigidMotion>& motions() const { return motions_; }

  // Reference scan stays fixed.
  void set(std::size_t k, const RigidMotion& m) {
    if (k == 0) throw InvalidMotion("the reference scan's global motion is fixed to identity");
    motions_[k] = m;
  }

  // Relative motion M_i^-1 * M_j taking scan j's frame into scan i's frame.
  RigidMotion relative(std::size_t i, std::size_t j) const { return compose(inverse(motions_[i]), motions_[j]); }

 private:
  std::vector<RigidMotion> motions_;
};

struct MotionEdge {
  std::size_t i;
  std::size_t j;
  RigidMotion motion;  // M_ij: scan j's frame -> scan i's frame
  double weight = 1.0;
};

struct MotionGraph {
  std::size_t n_scans = 0;
  std::vector<MotionEdge> edges;

  // Throws on out-of-range or self edges, non-positive weights, or scans not
  // connected to the reference.
  void validate() const {
    for (const MotionEdge& e : edges) {
      if (e.i >= n_scans || e.j >= n_scans || e.i == e.j)
        throw InvalidMotion("edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) + ") is invalid for " +
                            std::to_string(n_scans) + " scans");
      if (!(e.weight > 0.0)) throw InvalidMotion("edge weights must be > 0");
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const MotionEdge& e : edges) pairs.emplace_back(e.i, e.j);
    check_connected(n_scans, pairs);
  }

  static void check_connected(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& [a, b] : pairs) parent[find(a)] = find(b);
    for (std::size_t k = 1; k < n; ++k)
      if (find(k) != find(0))
        throw DisconnectedGraph("scan " + std::to_string(k + 1) + " is not connected to the reference scan");
  }
};

// Graph whose edges are exactly consistent with `globals`.
inline MotionGraph consistent_graph(const GlobalMotions& globals,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                    double weight = 1.0) {
  MotionGraph g{globals.size(), {}};
  for (const auto& [i, j] : pairs) g.edges.push_back({i, j, globals.relative(i, j), weight});
  return g;
}

}  // namespace mvreg
