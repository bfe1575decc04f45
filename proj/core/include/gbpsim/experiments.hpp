#pragma once

#include "gbpsim/sim.hpp"

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace gbpsim {

enum class EarlyStop { kNone, kCoverage, kSource };

/// One simulation run: a fully resolved configuration plus output location.
struct RunSpec {
  WorldConfig config;
  EarlyStop stop = EarlyStop::kNone;
  std::filesystem::path out_dir;
  bool write_trajectory = true;
  std::string experiment;  // labels recorded in config.json; may stay empty
  std::string cell;
};

struct RunResult {
  double end_time = 0.0;
  double source_time = -1.0;    // -1: never reached within the run
  double coverage_time = -1.0;  // -1: never reached within the run
  double final_coverage = 0.0;
  double final_rms = 0.0;
  double min_pair_distance = std::numeric_limits<double>::infinity();
  double max_speed = 0.0;
};

/// Simulates one world and writes metrics.csv, trajectory.csv, config.json,
/// and summary.json into spec.out_dir. Deterministic byte-for-byte per config.
RunResult run_single(const RunSpec& spec);

/// Parameter lists swept by an experiment; singletons pin a dimension.
struct SweepLists {
  std::vector<int> n_r;
  std::vector<double> r_c;
  std::vector<double> alpha;
  std::vector<std::string> init;
};

struct ExperimentSpec {
  std::string experiment;  // source-seek | coverage | rc-sweep | comms-failure
  WorldConfig base;
  SweepLists sweep;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::filesystem::path out_dir = "out";
  bool write_trajectory = true;
};

/// Baseline configuration and default sweep grid for a named experiment.
/// Throws ConfigError for an unknown experiment name.
ExperimentSpec experiment_defaults(const std::string& experiment);

/// Flat-key JSON configuration. Precedence: overrides > file > defaults.
/// Unknown keys and malformed values throw ConfigError.
void apply_config_file(ExperimentSpec& spec, const std::filesystem::path& file);
void apply_override(ExperimentSpec& spec, const std::string& key_equals_value);
std::vector<std::uint64_t> parse_seed_list(const std::string& csv);

struct Cell {
  std::string name;
  WorldConfig config;
};

/// The (cell) grid an experiment spec expands to, in deterministic order.
std::vector<Cell> experiment_cells(const ExperimentSpec& spec);
EarlyStop experiment_stop(const std::string& experiment);

/// Runs every (cell, seed), writing per-run files under
/// out_dir/<cell>/seed<NNN>/ and a sweep summary CSV out_dir/<experiment>.csv.
void run_experiment(const ExperimentSpec& spec);

}  // namespace gbpsim
