#include "commands.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include <mvreg/io.hpp>
#include <mvreg/overlap.hpp>
#include <mvreg/pairwise.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mvreg::cli {

namespace {

enum Command : unsigned {
  kRegister = 1u << 0,
  kPairwise = 1u << 1,
  kOverlap = 1u << 2,
  kSynth = 1u << 3,
  kMc = 1u << 4,
  kAll = 0x1f,
  kScene = kSynth | kMc,
  kPipeline = kRegister | kMc,
};

// A config field reachable both as a JSON key and as a command-line flag.
struct Field {
  std::string key;
  std::string flag;
  std::string help;
  unsigned commands;
  std::function<void(RunConfig&, const json&)> from_json;
  // Adds the flag to `app`; the returned callback copies the parsed value
  // into a config when the flag was given.
  std::function<std::function<void(RunConfig&)>(CLI::App*, const std::string&, const std::string&)> add_flag;
};

template <class T>
Field make_field(std::string key, std::string flag, std::string help, unsigned commands, T& (*get)(RunConfig&)) {
  Field f{std::move(key), std::move(flag), std::move(help), commands, {}, {}};
  f.from_json = [get, key = f.key](RunConfig& c, const json& j) {
    try {
      get(c) = j.get<T>();
    } catch (const json::exception&) {
      throw ConfigError("key '" + key + "' has the wrong type");
    }
  };
  f.add_flag = [get](CLI::App* app, const std::string& flag, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    return std::function<void(RunConfig&)>([opt, value, get](RunConfig& c) {
      if (opt->count() > 0) get(c) = *value;
    });
  };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    // shared
    t.push_back(make_field<std::string>("out", "--out", "output directory", kAll,
                                        [](RunConfig& c) -> std::string& { return c.out; }));
    t.push_back(make_field<std::uint64_t>("seed", "--seed", "random seed", kAll,
                                          [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
    t.push_back(make_field<unsigned>("workers", "--workers", "worker threads (default: all cores)", kAll,
                                     [](RunConfig& c) -> unsigned& { return c.workers; }));
    t.push_back(make_field<std::string>("mode", "--mode", "weighted | unweighted", kAll,
                                        [](RunConfig& c) -> std::string& { return c.mode; }));
    t.push_back(make_field<std::string>("format", "--format", "auto | ply | xyz", kAll,
                                        [](RunConfig& c) -> std::string& { return c.format; }));
    t.push_back(make_field<std::size_t>("subsample", "--subsample", "keep every n-th input point", kAll,
                                        [](RunConfig& c) -> std::size_t& { return c.subsample; }));
    t.push_back(make_field<std::vector<std::string>>("inputs", "", "", kRegister | kOverlap,
                                                     [](RunConfig& c) -> std::vector<std::string>& { return c.inputs; }));
    t.push_back(make_field<std::string>("initial", "--initial", "initial global motions file", kRegister | kOverlap,
                                        [](RunConfig& c) -> std::string& { return c.initial; }));
    // pipeline
    t.push_back(make_field<double>("xi_thr", "--xi-thr", "minimum overlap of a registered pair",
                                   kPipeline | kOverlap, [](RunConfig& c) -> double& { return c.pipeline.xi_thr; }));
    t.push_back(make_field<double>("delta", "--delta", "outer convergence threshold", kPipeline,
                                   [](RunConfig& c) -> double& { return c.pipeline.delta; }));
    t.push_back(make_field<int>("max_outer_iterations", "--max-outer", "outer iteration limit", kPipeline,
                                [](RunConfig& c) -> int& { return c.pipeline.max_outer_iterations; }));
    t.push_back(make_field<double>("lambda", "--lambda", "overlap preference exponent", kPipeline | kPairwise,
                                   [](RunConfig& c) -> double& { return c.pipeline.tricp.lambda; }));
    t.push_back(make_field<double>("xi_min", "--xi-min", "lower bound of the overlap search", kPipeline | kPairwise,
                                   [](RunConfig& c) -> double& { return c.pipeline.tricp.xi_min; }));
    t.push_back(make_field<int>("tricp_max_iterations", "--tricp-max-iter", "pairwise iteration limit",
                                kPipeline | kPairwise,
                                [](RunConfig& c) -> int& { return c.pipeline.tricp.max_iterations; }));
    t.push_back(make_field<double>("tricp_tolerance", "--tricp-tol", "pairwise motion-step tolerance",
                                   kPipeline | kPairwise,
                                   [](RunConfig& c) -> double& { return c.pipeline.tricp.motion_tolerance; }));
    t.push_back(make_field<double>("averaging_epsilon", "--avg-eps", "motion averaging tolerance", kPipeline,
                                   [](RunConfig& c) -> double& { return c.pipeline.averaging.epsilon; }));
    t.push_back(make_field<int>("averaging_max_iterations", "--avg-max-iter", "motion averaging iteration limit",
                                kPipeline, [](RunConfig& c) -> int& { return c.pipeline.averaging.max_iterations; }));
    t.push_back(make_field<double>("threshold_factor", "--threshold-factor",
                                   "overlap distance threshold in merged point spacings", kPipeline | kOverlap,
                                   [](RunConfig& c) -> double& { return c.pipeline.threshold_factor; }));
    // scene
    t.push_back(make_field<std::string>("shape", "--shape", "sphere-section | saddle | wave", kScene,
                                        [](RunConfig& c) -> std::string& { return c.shape; }));
    t.push_back(make_field<std::size_t>("n_scans", "--n-scans", "number of scans", kScene,
                                        [](RunConfig& c) -> std::size_t& { return c.n_scans; }));
    t.push_back(make_field<std::size_t>("points_per_scan", "--points", "points per scan", kScene,
                                        [](RunConfig& c) -> std::size_t& { return c.points_per_scan; }));
    t.push_back(make_field<double>("overlap", "--overlap", "overlap of consecutive scans", kScene,
                                   [](RunConfig& c) -> double& { return c.overlap; }));
    t.push_back(make_field<std::vector<double>>("pair_overlaps", "--pair-overlaps",
                                                "per-pair overlaps, scan k with scan k+1", kScene,
                                                [](RunConfig& c) -> std::vector<double>& { return c.pair_overlaps; }));
    t.push_back(make_field<double>("noise_fraction", "--noise", "sensor noise sigma / scene diameter", kScene,
                                   [](RunConfig& c) -> double& { return c.noise_fraction; }));
    t.push_back(make_field<double>("level", "--level", "rotation noise bound of the written initial motions", kSynth,
                                   [](RunConfig& c) -> double& { return c.level; }));
    t.push_back(make_field<double>("translation_fraction", "--translation-noise",
                                   "translation noise bound / scene diameter", kScene,
                                   [](RunConfig& c) -> double& { return c.translation_fraction; }));
    t.push_back(make_field<std::vector<double>>("levels", "--levels", "rotation noise bounds in radians", kMc,
                                                [](RunConfig& c) -> std::vector<double>& { return c.levels; }));
    t.push_back(make_field<int>("trials", "--trials", "trials per level", kMc,
                                [](RunConfig& c) -> int& { return c.trials; }));
    t.push_back(make_field<bool>("paired", "", "", kMc, [](RunConfig& c) -> bool& { return c.paired; }));
    return t;
  }();
  return table;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

WeightMode parse_mode(const std::string& s) {
  if (s == "weighted") return WeightMode::Weighted;
  if (s == "unweighted") return WeightMode::Unweighted;
  throw ConfigError("mode must be 'weighted' or 'unweighted', got '" + s + "'");
}

// Cross-field checks and derived values; run before any compute.
void finalize(RunConfig& c) {
  c.pipeline.mode = parse_mode(c.mode);
  if (c.workers == 0) throw ConfigError("workers must be >= 1");
  c.pipeline.workers = c.workers;
  if (c.subsample == 0) throw ConfigError("subsample must be >= 1");
  if (c.format != "auto" && !parse_cloud_format(c.format))
    throw ConfigError("format must be 'auto', 'ply' or 'xyz', got '" + c.format + "'");
  if (!parse_shape(c.shape)) throw ConfigError("unknown shape '" + c.shape + "'");
  if (c.trials < 1) throw ConfigError("trials must be >= 1");
  if (c.noise_fraction < 0.0 || c.translation_fraction < 0.0 || c.level < 0.0)
    throw ConfigError("noise bounds must be >= 0");
  for (double l : c.levels)
    if (l < 0.0) throw ConfigError("levels must be >= 0");
  c.pipeline.validate();
}

PointCloud load_input(const std::string& path, const RunConfig& c, int id) {
  const PointCloud raw = c.format == "auto" ? load_cloud(path, id) : load_cloud(path, *parse_cloud_format(c.format), id);
  return subsample(raw, c.subsample);
}

std::vector<PointCloud> load_scans(const RunConfig& c) {
  const auto paths = expand_inputs(c.inputs);
  if (paths.empty()) throw ConfigError("no input scans given");
  std::vector<PointCloud> scans;
  for (std::size_t k = 0; k < paths.size(); ++k) scans.push_back(load_input(paths[k], c, static_cast<int>(k + 1)));
  return scans;
}

GlobalMotions initial_motions(const RunConfig& c, std::size_t n) {
  if (c.initial.empty()) return GlobalMotions(std::vector<RigidMotion>(n));
  GlobalMotions m = load_global_motions(c.initial);
  if (m.size() != n)
    throw ConfigError("'" + c.initial + "' holds " + std::to_string(m.size()) + " motions for " + std::to_string(n) +
                      " scans");
  return m;
}

std::string out_path(const RunConfig& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

void make_out_dir(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + c.out + "': " + ec.message());
}

SceneSpec scene_spec(const RunConfig& c) {
  SceneSpec s;
  s.shape = *parse_shape(c.shape);
  s.n_scans = c.n_scans;
  s.points_per_scan = c.points_per_scan;
  s.overlap = c.overlap;
  s.pair_overlaps = c.pair_overlaps;
  s.seed = c.seed;
  return s;
}

int cmd_register(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto scans = load_scans(c);
  const GlobalMotions initial = initial_motions(c, scans.size());
  make_out_dir(c);
  const RegistrationResult res = register_multiview(scans, initial, c.pipeline);
  const RegistrationReport& rep = res.report;

  out << std::setprecision(10);
  for (const IterationRecord& r : rep.iterations)
    out << "iteration " << r.iteration << " objective " << r.objective << " step " << r.step_norm << " edges "
        << r.n_edges << '\n';
  for (const std::string& w : rep.warnings) err << "warning: " << w << '\n';

  save_global_motions(out_path(c, "motions.txt"), res.motions);
  MotionGraph final_graph{scans.size(), {}};
  for (const EdgeRecord& e : rep.iterations.back().edges)
    final_graph.edges.push_back({e.i, e.j, res.motions.relative(e.i, e.j), e.weight});
  save_motion_graph(out_path(c, "graph.txt"), final_graph);
  save_with(out_path(c, "report.csv"), write_report_csv, rep);
  save_with(out_path(c, "edges.csv"), write_edges_csv, rep);
  save_with(out_path(c, "overlap.csv"), write_overlap_csv, rep.overlaps);
  save_with(out_path(c, "timings.csv"), write_timings_csv, rep);

  if (!rep.converged) {
    err << "not converged after " << c.pipeline.max_outer_iterations << " outer iterations\n";
    return kExitNotConverged;
  }
  out << "converged in " << rep.iterations.back().iteration << " iterations\n";
  return kExitOk;
}

int cmd_overlap(const RunConfig& c, std::ostream& out, std::ostream&) {
  const auto scans = load_scans(c);
  const GlobalMotions globals = initial_motions(c, scans.size());
  std::vector<NearestNeighborIndex> indices(scans.size());
  parallel_for(scans.size(), c.workers, [&](std::size_t k) { indices[k] = NearestNeighborIndex(scans[k]); });
  const double threshold = estimate_threshold(scans, globals, c.pipeline.threshold_factor);
  const OverlapMatrix m = compute_overlap_matrix(scans, indices, globals, threshold, c.workers);
  make_out_dir(c);
  save_with(out_path(c, "overlap.csv"), write_overlap_csv, m);
  out << std::setprecision(17) << "threshold " << threshold << '\n';
  write_overlap_csv(out, m);
  return kExitOk;
}

int cmd_pairwise(const RunConfig& c, const std::string& data_path, const std::string& model_path, std::ostream& out,
                 std::ostream&) {
  const PointCloud data = load_input(data_path, c, 2);
  const PointCloud model = load_input(model_path, c, 1);
  const PairwiseResult r = tricp(data, model, RigidMotion::identity(), c.pipeline.tricp);
  out.imbue(std::locale::classic());
  out << std::setprecision(17) << "motion\n";
  const Matrix4 m = r.motion.matrix();
  for (int row = 0; row < 3; ++row) out << m(row, 0) << ' ' << m(row, 1) << ' ' << m(row, 2) << ' ' << m(row, 3) << '\n';
  out << "xi " << r.overlap << '\n'
      << "psi " << r.psi << '\n'
      << "iterations " << r.iterations << '\n'
      << "converged " << (r.converged ? 1 : 0) << '\n';
  return kExitOk;
}

int cmd_synth(const RunConfig& c, std::ostream& out, std::ostream&) {
  const SyntheticScene scene = generate_scene_relative_noise(scene_spec(c), c.noise_fraction);
  make_out_dir(c);
  const CloudFormat fmt = c.format == "xyz" ? CloudFormat::Xyz : CloudFormat::PlyAscii;
  const char* ext = fmt == CloudFormat::Xyz ? ".xyz" : ".ply";
  for (std::size_t k = 0; k < scene.scans.size(); ++k) {
    std::ostringstream name;
    name << "scan_" << std::setw(3) << std::setfill('0') << k + 1 << ext;
    save_cloud(scene.scans[k], out_path(c, name.str()), fmt);
  }
  save_global_motions(out_path(c, "truth.txt"), scene.truth);
  const GlobalMotions initial =
      perturb_motions(scene.truth, c.level, c.translation_fraction * scene.diameter, c.seed);
  save_global_motions(out_path(c, "initial.txt"), initial);

  json meta = {{"shape", to_string(scene.shape)},       {"n_scans", scene.scans.size()},
               {"pair_overlaps", scene.pair_overlaps}, {"noise_sigma", scene.noise_sigma},
               {"diameter", scene.diameter},           {"seed", c.seed},
               {"level", c.level},                     {"translation_bound", c.translation_fraction * scene.diameter}};
  std::ofstream(out_path(c, "scene.json"), std::ios::binary) << meta.dump(2) << '\n';
  out << "wrote " << scene.scans.size() << " scans to " << c.out << '\n';
  return kExitOk;
}

int cmd_mc(const RunConfig& c, std::ostream& out, std::ostream&) {
  const SyntheticScene scene = generate_scene_relative_noise(scene_spec(c), c.noise_fraction);
  McOptions opts;
  opts.levels = c.levels;
  opts.trials = c.trials;
  opts.translation_fraction = c.translation_fraction;
  opts.seed = c.seed;
  opts.workers = c.workers;
  make_out_dir(c);

  std::vector<WeightMode> modes{c.pipeline.mode};
  if (c.paired) modes = {WeightMode::Weighted, WeightMode::Unweighted};
  std::vector<McReport> reports;
  std::ofstream summary(out_path(c, "mc_summary.csv"), std::ios::binary);
  bool header = true;
  for (WeightMode mode : modes) {
    PipelineConfig cfg = c.pipeline;
    cfg.mode = mode;
    reports.push_back(run_mc_trials(scene, opts, cfg));
    const std::string suffix = c.paired ? std::string("_") + to_string(mode) : std::string();
    save_with(out_path(c, "mc" + suffix + ".csv"), write_mc_csv, reports.back());
    save_with(out_path(c, "mc_timings" + suffix + ".csv"), write_mc_timings_csv, reports.back());
    std::ostringstream rows;
    write_mc_summary_csv(rows, reports.back());
    std::string text = rows.str();
    if (!header) text = text.substr(text.find('\n') + 1);
    summary << text;
    header = false;
  }

  out << std::setprecision(6);
  for (std::size_t l = 0; l < c.levels.size(); ++l) {
    out << "level " << c.levels[l];
    for (const McReport& r : reports) {
      const McLevelSummary& s = r.levels[l];
      out << " | " << to_string(r.mode) << " mean_objective " << s.mean_objective << " std " << s.std_objective
          << " rot_err_deg " << s.mean_rot_err_deg << " failures " << s.failures;
    }
    out << '\n';
  }
  return kExitOk;
}

bool has_wildcard(const std::string& s) { return s.find_first_of("*?[") != std::string::npos; }

bool is_cloud_file(const fs::path& p) { return p.extension() == ".ply" || p.extension() == ".xyz"; }

}  // namespace

void apply_json(RunConfig& config, const std::string& json_text, const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(source + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError(source + ": unknown key '" + key + "'");
    try {
      it->from_json(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ": " + e.what());
    }
  }
}

std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const std::string& in : inputs) {
    const fs::path p(in);
    std::vector<std::string> found;
    if (has_wildcard(p.filename().string())) {
      const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
      if (!fs::is_directory(dir)) throw ParseError("no such directory '" + dir.string() + "'");
      for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && fnmatch(p.filename().c_str(), entry.path().filename().c_str(), 0) == 0)
          found.push_back(entry.path().string());
      if (found.empty()) throw ParseError("pattern '" + in + "' matches no files");
    } else if (fs::is_directory(p)) {
      for (const auto& entry : fs::directory_iterator(p))
        if (entry.is_regular_file() && is_cloud_file(entry.path())) found.push_back(entry.path().string());
      if (found.empty()) throw ParseError("directory '" + in + "' holds no .ply or .xyz files");
    } else {
      if (!fs::exists(p)) throw ParseError("no such file '" + in + "'");
      found.push_back(in);
    }
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view range-scan registration by weighted motion averaging"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app;
    Command command;
    std::string config_path;
    std::vector<std::function<void(RunConfig&)>> overrides;
  };
  std::vector<std::unique_ptr<Sub>> subs;
  auto add_sub = [&](const char* name, const char* help, Command command) {
    auto sub = std::make_unique<Sub>();
    sub->app = app.add_subcommand(name, help);
    sub->command = command;
    sub->app->add_option("--config", sub->config_path, "JSON config file (flags override it)");
    for (const Field& f : fields())
      if ((f.commands & command) && !f.flag.empty())
        sub->overrides.push_back(f.add_flag(sub->app, f.flag, f.help));
    subs.push_back(std::move(sub));
    return subs.back().get();
  };

  Sub* reg = add_sub("register", "register scans by weighted motion averaging", kRegister);
  Sub* ovl = add_sub("overlap", "estimate the overlap matrix under given motions", kOverlap);
  Sub* pw = add_sub("pairwise", "register one pair with trimmed ICP", kPairwise);
  add_sub("synth", "write a synthetic scene with ground truth", kSynth);
  Sub* mc = add_sub("mc", "Monte-Carlo robustness trials on a synthetic scene", kMc);

  std::vector<std::string> inputs;
  for (Sub* s : {reg, ovl}) {
    auto* opt = s->app->add_option("inputs", inputs, "scan files, directories or wildcard patterns");
    s->overrides.push_back([opt, &inputs](RunConfig& c) {
      if (opt->count() > 0) c.inputs = inputs;
    });
  }
  std::string data_path, model_path;
  pw->app->add_option("data", data_path, "scan moved onto the model")->required();
  pw->app->add_option("model", model_path, "fixed scan")->required();
  bool paired = false;
  auto* paired_opt = mc->app->add_flag("--paired", paired, "run weighted and unweighted modes on the same trials");
  mc->overrides.push_back([paired_opt, &paired](RunConfig& c) {
    if (paired_opt->count() > 0) c.paired = paired;
  });

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitError;
  }

  try {
    for (const auto& s : subs) {
      if (!s->app->parsed()) continue;
      RunConfig config;
      if (!s->config_path.empty()) apply_json(config, read_text(s->config_path), s->config_path);
      for (const auto& apply : s->overrides) apply(config);
      finalize(config);
      switch (s->command) {
        case kRegister: return cmd_register(config, out, err);
        case kOverlap: return cmd_overlap(config, out, err);
        case kPairwise: return cmd_pairwise(config, data_path, model_path, out, err);
        case kSynth: return cmd_synth(config, out, err);
        case kMc: return cmd_mc(config, out, err);
        default: break;
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

}  // namespace mvreg::cli
