// Trimmed ICP between one data scan and one model scan.
//
// Each iteration pairs every data point with its nearest model point under
// the current motion, chooses the overlap fraction xi minimising
//
//   psi(xi) = e(xi) / (|P_xi| * xi^(1 + lambda))
//
// where e(xi) is the sum of the |P_xi| smallest squared residuals, and then
// re-solves the rigid motion on that trimmed subset.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "mvreg/cloud.hpp"
#include "mvreg/error.hpp"
#include "mvreg/lie.hpp"

namespace mvreg {

struct TrICPConfig {
  double lambda = 2.0;
  double xi_min = 0.3;  // xi is searched in (xi_min, 1]
  int max_iterations = 100;
  double motion_tolerance = 1e-6;

  void validate() const {
    if (!(lambda > 0.0)) throw ConfigError("tricp lambda must be > 0");
    if (!(xi_min > 0.0 && xi_min <= 1.0)) throw ConfigError("tricp xi_min must lie in (0, 1]");
    if (max_iterations < 1) throw ConfigError("tricp max_iterations must be >= 1");
    if (!(motion_tolerance > 0.0)) throw ConfigError("tricp motion_tolerance must be > 0");
  }
};

struct Correspondence {
  std::size_t data_index;
  std::size_t model_index;
  double squared_distance;
};

struct OverlapUpdate {
  double xi;
  std::size_t trim_count;
  double psi;
};

struct PointPair {
  Vector3 source;
  Vector3 target;
};

struct PairwiseResult {
  RigidMotion motion;  // maps the data scan into the model scan's frame
  double overlap = 1.0;
  double psi = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> psi_history;  // one entry per iteration plus the final evaluation
};

inline std::vector<Correspondence> find_correspondences(const PointCloud& data,
                                                        const NearestNeighborIndex& model_index,
                                                        const RigidMotion& m) {
  std::vector<Correspondence> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Neighbor n = model_index.nearest(m.apply(data[i]));
    out.push_back({i, n.index, n.squared_distance});
  }
  return out;
}

// Exhaustive search over every trim count k with k/N > xi_min; `sorted`
// must be ascending. Ties go to the larger xi.
inline OverlapUpdate update_overlap(std::span<const double> sorted, const TrICPConfig& config) {
  const std::size_t n = sorted.size();
  if (n == 0) throw NoFeasibleOverlap("no residuals");
  const double exponent = 1.0 + config.lambda;

  OverlapUpdate best{0.0, 0, std::numeric_limits<double>::infinity()};
  double prefix = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    prefix += sorted[k - 1];
    const double xi = static_cast<double>(k) / static_cast<double>(n);
    if (!(xi > config.xi_min)) continue;
    const double psi = prefix / (static_cast<double>(k) * std::pow(xi, exponent));
    if (psi <= best.psi) best = {xi, k, psi};
  }
  if (best.trim_count == 0) {
    std::ostringstream msg;
    msg << "no trim count of " << n << " residuals gives xi > xi_min = " << config.xi_min;
    throw NoFeasibleOverlap(msg.str());
  }
  return best;
}

// Least-squares R, t minimising sum |R*source + t - target|^2 (Kabsch), with
// the reflection case corrected so det(R) = +1.
inline RigidMotion estimate_rigid_transform(std::span<const PointPair> pairs) {
  if (pairs.size() < 3) throw DegenerateConfiguration("need at least 3 correspondences");
  Vector3 mu_s = Vector3::Zero(), mu_t = Vector3::Zero();
  for (const PointPair& p : pairs) {
    mu_s += p.source;
    mu_t += p.target;
  }
  mu_s /= static_cast<double>(pairs.size());
  mu_t /= static_cast<double>(pairs.size());

  Matrix3 cov = Matrix3::Zero();
  for (const PointPair& p : pairs) cov += (p.source - mu_s) * (p.target - mu_t).transpose();

  Eigen::JacobiSVD<Matrix3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector3 s = svd.singularValues();
  if (!(s(0) > 0.0) || s(1) <= 1e-12 * s(0))
    throw DegenerateConfiguration("correspondences span fewer than two directions");

  const Matrix3& u = svd.matrixU();
  const Matrix3& v = svd.matrixV();
  Matrix3 d = Matrix3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Matrix3 r = v * d * u.transpose();
  return RigidMotion::from_nearly_orthonormal(r, mu_t - r * mu_s);
}

namespace pairwise_detail {

struct TrimmedSet {
  std::vector<Correspondence> sorted;
  OverlapUpdate update;
};

inline TrimmedSet trim(const PointCloud& data, const NearestNeighborIndex& model_index, const RigidMotion& m,
                       const TrICPConfig& config) {
  TrimmedSet t;
  t.sorted = find_correspondences(data, model_index, m);
  std::sort(t.sorted.begin(), t.sorted.end(), [](const Correspondence& a, const Correspondence& b) {
    return a.squared_distance < b.squared_distance ||
           (a.squared_distance == b.squared_distance && a.data_index < b.data_index);
  });
  std::vector<double> residuals(t.sorted.size());
  std::ranges::transform(t.sorted, residuals.begin(), &Correspondence::squared_distance);
  t.update = update_overlap(residuals, config);
  return t;
}

}  // namespace pairwise_detail

// Trimmed objective at a fixed motion: fresh correspondences, optimal xi.
inline OverlapUpdate trimmed_objective(const PointCloud& data, const NearestNeighborIndex& model_index,
                                       const RigidMotion& m, const TrICPConfig& config) {
  return pairwise_detail::trim(data, model_index, m, config).update;
}

inline PairwiseResult tricp(const PointCloud& data, const PointCloud& model, const NearestNeighborIndex& model_index,
                            const RigidMotion& initial, const TrICPConfig& config) {
  config.validate();
  if (data.size() < 3 || model.size() < 3) throw DegenerateConfiguration("tricp needs at least 3 points per scan");

  PairwiseResult result;
  RigidMotion current = initial;
  std::vector<PointPair> pairs;
  for (int it = 1; it <= config.max_iterations; ++it) {
    const auto trimmed = pairwise_detail::trim(data, model_index, current, config);
    result.psi_history.push_back(trimmed.update.psi);

    pairs.clear();
    for (std::size_t k = 0; k < trimmed.update.trim_count; ++k) {
      const Correspondence& c = trimmed.sorted[k];
      pairs.push_back({data[c.data_index], model[c.model_index]});
    }
    const RigidMotion next = estimate_rigid_transform(pairs);
    const double step = geodesic_distance(current, next);
    current = next;
    result.iterations = it;
    if (step < config.motion_tolerance) {
      result.converged = true;
      break;
    }
  }

  const OverlapUpdate final = trimmed_objective(data, model_index, current, config);
  result.psi_history.push_back(final.psi);
  result.motion = current;
  result.overlap = final.xi;
  result.psi = final.psi;
  return result;
}

inline PairwiseResult tricp(const PointCloud& data, const PointCloud& model, const RigidMotion& initial,
                            const TrICPConfig& config) {
  return tricp(data, model, NearestNeighborIndex(model), initial, config);
}

}  // namespace mvreg
