// Synthetic multi-view scenes with known ground truth, initial-motion
// perturbation and the Monte-Carlo robustness harness.
//
// A scene is a closed ring of N scans over a curved surface. Each scan
// covers an angular window of the surface; consecutive windows overlap by a
// prescribed fraction (the last scan overlaps the first), so the pair graph
// has loops. Points are spread over the window's (angle, height) parameters
// by cropping one randomly shifted Halton sampling of the whole surface, so
// the fraction of scan j's points inside scan i's window equals the angular
// overlap of the windows. Each scan gets its own sensor noise.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mvreg/cloud.hpp"
#include "mvreg/error.hpp"
#include "mvreg/graph.hpp"
#include "mvreg/lie.hpp"
#include "mvreg/parallel.hpp"
#include "mvreg/pipeline.hpp"

namespace mvreg {

enum class SurfaceShape { SphereSection, Saddle, Wave };

inline const char* to_string(SurfaceShape s) {
  switch (s) {
    case SurfaceShape::SphereSection: return "sphere-section";
    case SurfaceShape::Saddle: return "saddle";
    case SurfaceShape::Wave: return "wave";
  }
  return "?";
}

inline std::optional<SurfaceShape> parse_shape(std::string_view s) {
  if (s == "sphere-section" || s == "sphere") return SurfaceShape::SphereSection;
  if (s == "saddle") return SurfaceShape::Saddle;
  if (s == "wave") return SurfaceShape::Wave;
  return std::nullopt;
}

struct SceneSpec {
  SurfaceShape shape = SurfaceShape::SphereSection;
  std::size_t n_scans = 8;
  std::size_t points_per_scan = 1000;
  double overlap = 0.6;  // nominal overlap of consecutive windows
  // Optional per-pair overlaps: entry k is the overlap of scan k with scan
  // k+1 (mod N). Overrides `overlap` when non-empty.
  std::vector<double> pair_overlaps;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
};

struct SyntheticScene {
  std::vector<PointCloud> scans;  // each in its own sensor frame
  GlobalMotions truth;            // scan frame -> reference (scan 0) frame
  SurfaceShape shape = SurfaceShape::SphereSection;
  double overlap = 0.0;
  std::vector<double> pair_overlaps;
  double noise_sigma = 0.0;
  double diameter = 0.0;  // bounding-box diagonal of the merged ground-truth scene
};

namespace synth_detail {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Surface point for angle u and normalised height v in [0, 1]. Shapes have
// unit scale. Pure spheres and planes are avoided since motions sliding
// along them are unobservable; the sphere carries a radial relief.
inline Vector3 surface_point(SurfaceShape shape, double u, double v) {
  switch (shape) {
    case SurfaceShape::SphereSection: {
      const double lat = -0.8 + 1.6 * v;
      const double r = 1.0 + 0.15 * std::sin(3.0 * u + 0.5) * std::cos(2.0 * lat) +
                       0.10 * std::sin(5.0 * u) * std::sin(3.0 * lat + 1.0) + 0.05 * std::cos(7.0 * u - 2.0 * lat);
      return {r * std::cos(lat) * std::cos(u), r * std::cos(lat) * std::sin(u), r * std::sin(lat)};
    }
    case SurfaceShape::Saddle: {
      const double rho = 0.45 + 0.55 * v;
      const double x = rho * std::cos(u), y = rho * std::sin(u);
      return {x, y, 0.6 * (x * x - y * y) + 0.15 * x * y * y};
    }
    case SurfaceShape::Wave: {
      const double rho = 0.45 + 0.55 * v;
      const double x = rho * std::cos(u), y = rho * std::sin(u);
      return {x, y, 0.12 * std::sin(4.0 * x + 0.3) * std::cos(3.0 * y - 0.2) + 0.08 * std::sin(5.0 * u)};
    }
  }
  return Vector3::Zero();
}

inline Matrix3 random_rotation(std::mt19937_64& rng, double max_angle) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, max_angle);
  Vector3 axis(normal(rng), normal(rng), normal(rng));
  axis.normalize();
  return exp_map(Twist{axis * angle(rng), Vector3::Zero()}).rotation();
}

}  // namespace synth_detail

inline SyntheticScene generate_scene(const SceneSpec& spec) {
  using synth_detail::kTwoPi;
  if (spec.n_scans < 2) throw InvalidOverlap("a scene needs at least 2 scans");
  if (spec.points_per_scan < 3) throw InvalidOverlap("a scene needs at least 3 points per scan");
  std::vector<double> overlaps = spec.pair_overlaps;
  if (overlaps.empty()) overlaps.assign(spec.n_scans, spec.overlap);
  if (overlaps.size() != spec.n_scans) throw InvalidOverlap("pair_overlaps needs one entry per scan");
  for (double f : overlaps)
    if (!(f > 0.0 && f <= 1.0)) throw InvalidOverlap("overlap fractions must lie in (0, 1]");
  if (spec.noise_sigma < 0.0) throw InvalidOverlap("noise sigma must be >= 0");

  // Window width w with sum_k w * (1 - f_k) = 2 pi closes the ring. With every
  // overlap equal to 1 all scans cover the whole surface.
  double gaps = 0.0;
  for (double f : overlaps) gaps += 1.0 - f;
  const double width = gaps == 0.0 ? kTwoPi : kTwoPi / gaps;
  if (width > kTwoPi) throw InvalidOverlap("overlaps too large: a single window would cover more than the ring");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticScene scene;
  scene.shape = spec.shape;
  scene.overlap = spec.overlap;
  scene.pair_overlaps = overlaps;
  scene.noise_sigma = spec.noise_sigma;

  // One sampling of the whole ring; every scan keeps the samples inside its
  // window, so overlapping scans see the same surface points (before noise).
  const auto n_total = static_cast<std::size_t>(
      std::llround(static_cast<double>(spec.points_per_scan) * kTwoPi / width));
  std::vector<double> us(n_total);
  std::vector<Vector3> samples(n_total);
  for (std::size_t p = 0; p < n_total; ++p) {
    us[p] = kTwoPi * unit(rng);
    samples[p] = synth_detail::surface_point(spec.shape, us[p], unit(rng));
  }

  std::vector<std::vector<Vector3>> world(spec.n_scans);
  double start = 0.0;
  for (std::size_t k = 0; k < spec.n_scans; ++k) {
    for (std::size_t p = 0; p < n_total; ++p) {
      const double offset = std::fmod(us[p] - start + 2.0 * kTwoPi, kTwoPi);
      if (offset < width) world[k].push_back(samples[p]);
    }
    if (world[k].size() < 3) throw InvalidOverlap("a scan window received fewer than 3 points");
    start += width * (1.0 - overlaps[k]);
  }

  std::vector<RigidMotion> truth{RigidMotion::identity()};
  std::uniform_real_distribution<double> shift(-0.2, 0.2);
  for (std::size_t k = 1; k < spec.n_scans; ++k) {
    const Matrix3 r = synth_detail::random_rotation(rng, std::numbers::pi / 2.0);
    truth.push_back(RigidMotion(r, Vector3(shift(rng), shift(rng), shift(rng))));
  }
  scene.truth = GlobalMotions(truth);

  Vector3 lo = world[0][0], hi = lo;
  for (std::size_t k = 0; k < spec.n_scans; ++k) {
    const RigidMotion to_local = inverse(scene.truth[k]);
    std::vector<Vector3> local;
    local.reserve(world[k].size());
    for (const Vector3& p : world[k]) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
      Vector3 q = to_local.apply(p);
      if (spec.noise_sigma > 0.0) q += spec.noise_sigma * Vector3(noise(rng), noise(rng), noise(rng));
      local.push_back(q);
    }
    scene.scans.emplace_back(std::move(local), static_cast<int>(k + 1));
  }
  scene.diameter = (hi - lo).norm();
  return scene;
}

// Like generate_scene, with the noise sigma given as a fraction of the scene
// diameter. Noise is drawn after all geometry, so the noise-free pass sees
// the same surface samples and motions.
inline SyntheticScene generate_scene_relative_noise(SceneSpec spec, double noise_fraction) {
  if (noise_fraction < 0.0) throw InvalidOverlap("noise fraction must be >= 0");
  spec.noise_sigma = 0.0;
  const double diameter = generate_scene(spec).diameter;
  spec.noise_sigma = noise_fraction * diameter;
  return generate_scene(spec);
}

// Perturbs every non-reference motion: the rotation is left-multiplied by
// exp of a rotation vector with per-axis components uniform in
// [-rotation_bound, rotation_bound], and each translation component gets a
// uniform offset in [-translation_bound, translation_bound].
inline GlobalMotions perturb_motions(const GlobalMotions& truth, double rotation_bound, double translation_bound,
                                     std::uint64_t seed) {
  if (rotation_bound < 0.0 || translation_bound < 0.0) throw ConfigError("noise bounds must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<RigidMotion> out{truth[0]};
  for (std::size_t k = 1; k < truth.size(); ++k) {
    const Vector3 w(rotation_bound * unit(rng), rotation_bound * unit(rng), rotation_bound * unit(rng));
    const Vector3 dt(translation_bound * unit(rng), translation_bound * unit(rng), translation_bound * unit(rng));
    const Matrix3 r = exp_map(Twist{w, Vector3::Zero()}).rotation() * truth[k].rotation();
    out.push_back(RigidMotion::from_nearly_orthonormal(r, truth[k].translation() + dt));
  }
  return GlobalMotions(std::move(out));
}

struct MotionError {
  double rotation_deg;
  double translation;
};

// Per-scan errors after aligning the estimate's gauge to the truth's.
inline std::vector<MotionError> motion_errors(const GlobalMotions& estimated, const GlobalMotions& truth) {
  if (estimated.size() != truth.size()) throw InvalidMotion("motion sets differ in size");
  const RigidMotion gauge = compose(truth[0], inverse(estimated[0]));
  std::vector<MotionError> out;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const RigidMotion aligned = compose(gauge, estimated[k]);
    const double angle = rotation_angle(truth[k].rotation().transpose() * aligned.rotation());
    out.push_back({angle * 180.0 / std::numbers::pi, (aligned.translation() - truth[k].translation()).norm()});
  }
  return out;
}

// Mean over the non-reference scans.
inline MotionError mean_motion_error(const GlobalMotions& estimated, const GlobalMotions& truth) {
  const auto errs = motion_errors(estimated, truth);
  MotionError mean{0.0, 0.0};
  if (errs.size() < 2) return mean;
  for (std::size_t k = 1; k < errs.size(); ++k) {
    mean.rotation_deg += errs[k].rotation_deg;
    mean.translation += errs[k].translation;
  }
  mean.rotation_deg /= static_cast<double>(errs.size() - 1);
  mean.translation /= static_cast<double>(errs.size() - 1);
  return mean;
}

struct McOptions {
  std::vector<double> levels{0.02, 0.04, 0.06};  // rotation noise bounds in radians
  int trials = 50;
  // Translation bound as a fraction of the scene diameter, applied at every level.
  double translation_fraction = 0.01;
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

struct McTrial {
  double level = 0.0;
  int trial = 0;
  bool failed = false;
  std::string error;
  double objective = 0.0;
  double mean_rot_err_deg = 0.0;
  double mean_trans_err = 0.0;
  double seconds = 0.0;
  bool converged = false;
  int outer_iterations = 0;
  bool objective_nonincreasing = true;  // within 1e-9 across outer iterations
};

struct McLevelSummary {
  double level = 0.0;
  int trials = 0;
  int failures = 0;
  double mean_objective = 0.0, std_objective = 0.0;
  double mean_rot_err_deg = 0.0, std_rot_err_deg = 0.0;
  double mean_trans_err = 0.0, std_trans_err = 0.0;
  double mean_seconds = 0.0;
};

struct McReport {
  WeightMode mode = WeightMode::Weighted;
  std::vector<McTrial> trials;
  std::vector<McLevelSummary> levels;
};

// Seed of one trial, independent of execution order.
inline std::uint64_t trial_seed(std::uint64_t master, std::size_t level_index, int trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(level_index), static_cast<std::uint32_t>(trial)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace synth_detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0};
}

}  // namespace synth_detail

inline McReport run_mc_trials(const SyntheticScene& scene, const McOptions& options, PipelineConfig config) {
  if (options.trials < 1) throw ConfigError("trials must be >= 1");
  McReport report;
  report.mode = config.mode;
  const unsigned trial_workers = options.workers;
  config.workers = 1;  // trials run concurrently instead

  std::vector<McTrial> trials;
  for (std::size_t l = 0; l < options.levels.size(); ++l)
    for (int t = 0; t < options.trials; ++t) {
      McTrial trial;
      trial.level = options.levels[l];
      trial.trial = t;
      trials.push_back(trial);
    }

  parallel_for(trials.size(), trial_workers, [&](std::size_t k) {
    McTrial& trial = trials[k];
    const std::size_t level_index = k / static_cast<std::size_t>(options.trials);
    const GlobalMotions initial =
        perturb_motions(scene.truth, trial.level, options.translation_fraction * scene.diameter,
                        trial_seed(options.seed, level_index, trial.trial));
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const RegistrationResult res = register_multiview(scene.scans, initial, config);
      const MotionError err = mean_motion_error(res.motions, scene.truth);
      trial.objective = res.report.iterations.back().objective;
      trial.mean_rot_err_deg = err.rotation_deg;
      trial.mean_trans_err = err.translation;
      trial.converged = res.report.converged;
      trial.outer_iterations = res.report.iterations.back().iteration;
      for (std::size_t r = 1; r < res.report.iterations.size(); ++r)
        if (res.report.iterations[r].objective > res.report.iterations[r - 1].objective + 1e-9)
          trial.objective_nonincreasing = false;
    } catch (const Error& e) {
      trial.failed = true;
      trial.error = e.what();
    }
    trial.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  for (double level : options.levels) {
    McLevelSummary s;
    s.level = level;
    std::vector<double> obj, rot, trans, secs;
    for (const McTrial& t : trials) {
      if (t.level != level) continue;
      ++s.trials;
      if (t.failed) {
        ++s.failures;
        continue;
      }
      obj.push_back(t.objective);
      rot.push_back(t.mean_rot_err_deg);
      trans.push_back(t.mean_trans_err);
      secs.push_back(t.seconds);
    }
    std::tie(s.mean_objective, s.std_objective) = synth_detail::mean_std(obj);
    std::tie(s.mean_rot_err_deg, s.std_rot_err_deg) = synth_detail::mean_std(rot);
    std::tie(s.mean_trans_err, s.std_trans_err) = synth_detail::mean_std(trans);
    s.mean_seconds = synth_detail::mean_std(secs).first;
    report.levels.push_back(s);
  }
  report.trials = std::move(trials);
  return report;
}

}  // namespace mvreg
