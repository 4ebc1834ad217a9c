// Exact nearest-neighbour search over a fixed set of 3D points.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace mvreg {

struct Neighbor {
  std::size_t index = 0;
  double squared_distance = std::numeric_limits<double>::infinity();
};

// Static k-d tree with median splits. Queries return the exact nearest
// point; equal distances resolve to the lowest point index.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(std::span<const Eigen::Vector3d> points)
      : points_(points.begin(), points.end()), order_(points.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 1);
    if (!points_.empty()) build(0, order_.size());
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Eigen::Vector3d& point(std::size_t i) const { return points_[i]; }

  Neighbor nearest(const Eigen::Vector3d& q) const {
    Neighbor best;
    if (!nodes_.empty()) search(0, q, best, kNoExclusion);
    return best;
  }

  // Nearest point other than `exclude` (used for resolution estimates).
  Neighbor nearest_excluding(const Eigen::Vector3d& q, std::size_t exclude) const {
    Neighbor best;
    if (!nodes_.empty()) search(0, q, best, exclude);
    return best;
  }

 private:
  static constexpr std::size_t kLeafSize = 8;
  static constexpr std::size_t kNoExclusion = std::numeric_limits<std::size_t>::max();
  static constexpr std::uint32_t kLeaf = std::numeric_limits<std::uint32_t>::max();

  struct Node {
    std::uint32_t begin = 0, end = 0;  // range in order_ (leaves)
    std::uint32_t left = kLeaf, right = kLeaf;
    int axis = 0;
    double split = 0.0;
  };

  std::uint32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(end)});
    if (end - begin <= kLeafSize) return id;

    Eigen::Vector3d lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       const double pa = points_[a][axis], pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    const double split = points_[order_[mid]][axis];
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    Node& n = nodes_[id];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  void search(std::uint32_t id, const Eigen::Vector3d& q, Neighbor& best, std::size_t exclude) const {
    const Node& n = nodes_[id];
    if (n.left == kLeaf) {
      for (std::uint32_t k = n.begin; k < n.end; ++k) {
        const std::size_t i = order_[k];
        if (i == exclude) continue;
        const double d2 = (points_[i] - q).squaredNorm();
        if (d2 < best.squared_distance || (d2 == best.squared_distance && i < best.index)) {
          best.squared_distance = d2;
          best.index = i;
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::uint32_t near = diff < 0.0 ? n.left : n.right;
    const std::uint32_t far = diff < 0.0 ? n.right : n.left;
    search(near, q, best, exclude);
    // `<=` keeps equal-distance candidates on the other side reachable for
    // the lowest-index tie rule.
    if (diff * diff <= best.squared_distance) search(far, q, best, exclude);
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace mvreg
