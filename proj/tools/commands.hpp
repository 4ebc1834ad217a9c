// Command-line front end. Every command reads a flat JSON config (--config)
// whose keys mirror RunConfig; flags given on the command line override it.
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <mvreg/cloud.hpp>
#include <mvreg/parallel.hpp>
#include <mvreg/pipeline.hpp>
#include <mvreg/synth.hpp>

namespace mvreg::cli {

struct RunConfig {
  PipelineConfig pipeline;
  std::vector<std::string> inputs;  // files, directories or wildcard patterns
  std::string format = "auto";      // auto | ply | xyz
  std::size_t subsample = 8;
  std::string out = "out";
  std::uint64_t seed = 1;
  unsigned workers = default_workers();
  std::string initial;            // global-motions file; identity when empty
  std::string mode = "weighted";  // weighted | unweighted

  // synth / mc
  std::string shape = "sphere-section";
  std::size_t n_scans = 8;
  std::size_t points_per_scan = 1000;
  double overlap = 0.6;
  std::vector<double> pair_overlaps;
  double noise_fraction = 0.001;  // sensor noise sigma as a fraction of the scene diameter
  double level = 0.02;            // rotation noise of the initial motions written by synth
  std::vector<double> levels{0.02, 0.04, 0.06};
  int trials = 50;
  double translation_fraction = 0.01;
  bool paired = false;
};

// Exit codes of the register command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotConverged = 2;

// Parses argv (argv[0] is the program name) and runs the selected command.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Applies the keys of a JSON object to `config`; throws ConfigError naming
// the offending key.
void apply_json(RunConfig& config, const std::string& json_text, const std::string& source);

// Expands files, directories (their .ply/.xyz files) and wildcard patterns,
// sorted by name within each entry.
std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs);

}  // namespace mvreg::cli
