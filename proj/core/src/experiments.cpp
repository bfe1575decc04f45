#include "gbpsim/experiments.hpp"

#include "gbpsim/metrics.hpp"
#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gbpsim {

namespace {

using nlohmann::json;

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
}

std::string fmt_g(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%g", v);
  return b;
}

double as_double(const json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    std::size_t used = 0;
    try {
      const double d = std::stod(s, &used);
      if (used == s.size()) return d;
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("expected a number for key '" + key + "'");
}

int as_int(const json& v, const std::string& key) {
  const double d = as_double(v, key);
  const double r = std::round(d);
  if (std::abs(d - r) > 1e-9) throw ConfigError("expected an integer for key '" + key + "'");
  return static_cast<int>(r);
}

bool as_bool(const json& v, const std::string& key) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number()) return v.get<double>() != 0.0;
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
  }
  throw ConfigError("expected a boolean for key '" + key + "'");
}

std::string as_string(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  throw ConfigError("expected a string for key '" + key + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

std::vector<double> as_double_list(const json& v, const std::string& key) {
  std::vector<double> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(as_double(e, key));
  } else if (v.is_number()) {
    out.push_back(as_double(v, key));
  } else {
    for (const auto& s : split_list(as_string(v, key))) out.push_back(as_double(json(s), key));
  }
  if (out.empty()) throw ConfigError("empty list for key '" + key + "'");
  return out;
}

std::vector<int> as_int_list(const json& v, const std::string& key) {
  std::vector<int> out;
  for (double d : as_double_list(v, key)) {
    if (std::abs(d - std::round(d)) > 1e-9)
      throw ConfigError("expected integers for key '" + key + "'");
    out.push_back(static_cast<int>(std::round(d)));
  }
  return out;
}

std::vector<std::string> as_string_list(const json& v, const std::string& key) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(as_string(e, key));
  } else {
    out = split_list(as_string(v, key));
  }
  if (out.empty()) throw ConfigError("empty list for key '" + key + "'");
  return out;
}

void apply_key(ExperimentSpec& s, const std::string& k, const json& v) {
  WorldConfig& c = s.base;
  StackParams& p = c.stack;
  if (k == "n_r") c.n_r = as_int(v, k);
  else if (k == "d_world") c.d_world = as_double(v, k);
  else if (k == "region_width") c.region_width = as_double(v, k);
  else if (k == "r_c") c.r_c = as_double(v, k);
  else if (k == "r_s") c.r_s = as_double(v, k);
  else if (k == "dt") c.dt = as_double(v, k);
  else if (k == "t_cadence") c.t_cadence = as_double(v, k);
  else if (k == "n_i") c.n_i = as_int(v, k);
  else if (k == "t_max") c.t_max = as_double(v, k);
  else if (k == "alpha") c.alpha = as_double(v, k);
  else if (k == "init") c.init = as_string(v, k);
  else if (k == "psi_star") c.psi_star = as_double(v, k);
  else if (k == "octaves") c.field.octaves = as_int(v, k);
  else if (k == "persistence") c.field.persistence = as_double(v, k);
  else if (k == "frequency") c.field.frequency = as_double(v, k);
  else if (k == "sigma_pos") p.sigma_pos = as_double(v, k);
  else if (k == "sigma_zeta") p.sigma_zeta = as_double(v, k);
  else if (k == "sigma_psi") p.sigma_psi = as_double(v, k);
  else if (k == "prior_state_precision") p.prior_state_precision = as_double(v, k);
  else if (k == "sigma_consensus") p.sigma_consensus = as_double(v, k);
  else if (k == "sigma_signal") p.sigma_signal = as_double(v, k);
  else if (k == "sigma_explore") p.sigma_explore = as_double(v, k);
  else if (k == "sigma_goal_sep") p.sigma_goal_sep = as_double(v, k);
  else if (k == "goal_sep_radius") p.goal_sep_radius = as_double(v, k);
  else if (k == "explored_threshold") p.explored_threshold = as_double(v, k);
  else if (k == "horizon_states") p.horizon_states = as_int(v, k);
  else if (k == "plan_dt") p.plan_dt = as_double(v, k);
  else if (k == "sigma_dynamics") p.sigma_dynamics = as_double(v, k);
  else if (k == "sigma_pose_anchor") p.sigma_pose_anchor = as_double(v, k);
  else if (k == "horizon_vel_precision") p.horizon_vel_precision = as_double(v, k);
  else if (k == "sigma_collision") p.sigma_collision = as_double(v, k);
  else if (k == "robot_radius") p.robot_radius = as_double(v, k);
  else if (k == "safety_scale") p.safety_scale = as_double(v, k);
  else if (k == "v_max") p.v_max = as_double(v, k);
  else if (k == "seeds") s.seeds = parse_seed_list(v.is_string() ? v.get<std::string>() : v.dump());
  else if (k == "sweep_n_r") s.sweep.n_r = as_int_list(v, k);
  else if (k == "sweep_r_c") s.sweep.r_c = as_double_list(v, k);
  else if (k == "sweep_alpha") s.sweep.alpha = as_double_list(v, k);
  else if (k == "sweep_init") s.sweep.init = as_string_list(v, k);
  else if (k == "write_trajectory") s.write_trajectory = as_bool(v, k);
  else if (k == "experiment") {
    const std::string e = as_string(v, k);
    if (!e.empty() && e != s.experiment)
      throw ConfigError("config file targets experiment '" + e + "', not '" + s.experiment + "'");
  } else if (k == "cell") {
    // informational label emitted with results; nothing to resolve
  } else {
    throw ConfigError("unknown configuration key '" + k + "'");
  }
}

json config_as_json(const RunSpec& spec) {
  const WorldConfig& c = spec.config;
  const StackParams& p = c.stack;
  json j;
  j["experiment"] = spec.experiment;
  j["cell"] = spec.cell;
  j["seeds"] = std::to_string(c.seed);
  j["n_r"] = c.n_r;
  j["d_world"] = c.d_world;
  j["region_width"] = c.region_width;
  j["r_c"] = c.r_c;
  j["r_s"] = c.r_s;
  j["dt"] = c.dt;
  j["t_cadence"] = c.t_cadence;
  j["n_i"] = c.n_i;
  j["t_max"] = c.t_max;
  j["alpha"] = c.alpha;
  j["init"] = c.init;
  j["psi_star"] = c.psi_star;
  j["octaves"] = c.field.octaves;
  j["persistence"] = c.field.persistence;
  j["frequency"] = c.field.frequency;
  j["sigma_pos"] = p.sigma_pos;
  j["sigma_zeta"] = p.sigma_zeta;
  j["sigma_psi"] = p.sigma_psi;
  j["prior_state_precision"] = p.prior_state_precision;
  j["sigma_consensus"] = p.sigma_consensus;
  j["sigma_signal"] = p.sigma_signal;
  j["sigma_explore"] = p.sigma_explore;
  j["sigma_goal_sep"] = p.sigma_goal_sep;
  j["goal_sep_radius"] = p.goal_sep_radius;
  j["explored_threshold"] = p.explored_threshold;
  j["horizon_states"] = p.horizon_states;
  j["plan_dt"] = p.plan_dt;
  j["sigma_dynamics"] = p.sigma_dynamics;
  j["sigma_pose_anchor"] = p.sigma_pose_anchor;
  j["horizon_vel_precision"] = p.horizon_vel_precision;
  j["sigma_collision"] = p.sigma_collision;
  j["robot_radius"] = p.robot_radius;
  j["safety_scale"] = p.safety_scale;
  j["v_max"] = p.v_max;
  // Pin the sweep dimensions so re-running this file reproduces this one cell.
  j["sweep_n_r"] = std::to_string(c.n_r);
  j["sweep_r_c"] = fmt_g(c.r_c);
  j["sweep_alpha"] = fmt_g(c.alpha);
  j["sweep_init"] = c.init;
  j["write_trajectory"] = spec.write_trajectory;
  return j;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(csv)) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      seeds.push_back(static_cast<std::uint64_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("invalid seed '" + item + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("seed list is empty");
  return seeds;
}

ExperimentSpec experiment_defaults(const std::string& experiment) {
  ExperimentSpec s;
  s.experiment = experiment;
  WorldConfig& c = s.base;
  if (experiment == "source-seek") {
    c.d_world = 100.0;
    c.init = "corner";
    c.n_r = 10;
    c.r_c = 40.0;
    c.t_max = 1000.0;
    c.stack.sigma_psi = 0.01;
    c.stack.sigma_signal = 0.5;
    s.sweep.n_r = {5, 10, 15, 20};
    s.sweep.r_c = {20.0, 40.0, 60.0};
  } else if (experiment == "coverage") {
    c.d_world = 200.0;
    c.init = "random";
    c.n_r = 20;
    c.r_c = 50.0;
    c.t_max = 1000.0;
    c.stack.sigma_psi = 0.1;
    c.stack.sigma_signal = 1000.0;
    s.sweep.n_r = {5, 10, 20};
  } else if (experiment == "rc-sweep") {
    c.d_world = 200.0;
    c.init = "corner";
    c.n_r = 20;
    c.r_c = 50.0;
    c.t_max = 1000.0;
    c.stack.sigma_psi = 0.1;
    c.stack.sigma_signal = 1000.0;
    s.sweep.r_c = {20.0, 50.0, 100.0};
    s.sweep.init = {"corner", "random"};
  } else if (experiment == "comms-failure") {
    c.d_world = 200.0;
    c.init = "random";
    c.n_r = 20;
    c.r_c = 50.0;
    c.t_max = 2000.0;
    c.stack.sigma_psi = 0.1;
    c.stack.sigma_signal = 1000.0;
    s.sweep.alpha = {0.0, 0.25, 0.5, 0.75, 1.0};
  } else {
    throw ConfigError("unknown experiment '" + experiment + "'");
  }
  return s;
}

EarlyStop experiment_stop(const std::string& experiment) {
  if (experiment == "source-seek") return EarlyStop::kSource;
  if (experiment == "comms-failure") return EarlyStop::kCoverage;
  if (experiment == "coverage" || experiment == "rc-sweep") return EarlyStop::kNone;
  throw ConfigError("unknown experiment '" + experiment + "'");
}

void apply_config_file(ExperimentSpec& spec, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config file " + file.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a flat JSON object");
  for (const auto& [k, v] : j.items()) apply_key(spec, k, v);
}

void apply_override(ExperimentSpec& spec, const std::string& key_equals_value) {
  const auto eq = key_equals_value.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value, got '" + key_equals_value + "'");
  const std::string key = key_equals_value.substr(0, eq);
  const std::string raw = key_equals_value.substr(eq + 1);
  json v;
  try {
    v = json::parse(raw);
    if (v.is_object() || v.is_array()) v = raw;  // flat values only
  } catch (const json::exception&) {
    v = raw;
  }
  apply_key(spec, key, v);
}

std::vector<Cell> experiment_cells(const ExperimentSpec& spec) {
  std::vector<Cell> cells;
  auto with = [&](const std::string& name, auto mutate) {
    WorldConfig c = spec.base;
    mutate(c);
    cells.push_back({name, c});
  };
  if (spec.experiment == "source-seek") {
    for (int n : spec.sweep.n_r)
      for (double rc : spec.sweep.r_c)
        with("nr" + std::to_string(n) + "_rc" + fmt_g(rc), [&](WorldConfig& c) {
          c.n_r = n;
          c.r_c = rc;
        });
  } else if (spec.experiment == "coverage") {
    for (int n : spec.sweep.n_r)
      with("nr" + std::to_string(n), [&](WorldConfig& c) { c.n_r = n; });
  } else if (spec.experiment == "rc-sweep") {
    for (const auto& init : spec.sweep.init)
      for (double rc : spec.sweep.r_c)
        with(init + "_rc" + fmt_g(rc), [&](WorldConfig& c) {
          c.init = init;
          c.r_c = rc;
        });
  } else if (spec.experiment == "comms-failure") {
    for (double a : spec.sweep.alpha)
      with("alpha" + fmt_g(a), [&](WorldConfig& c) { c.alpha = a; });
  } else {
    throw ConfigError("unknown experiment '" + spec.experiment + "'");
  }
  return cells;
}

RunResult run_single(const RunSpec& spec) {
  spec.config.validate();
  std::filesystem::create_directories(spec.out_dir);
  World world(spec.config);

  RunResult res;
  std::string metrics = "t,coverage,rms_psi,robots_done,fleet_done\n";
  std::string traj = "t,robot,x,y,vx,vy,goal_x,goal_y\n";
  char buf[512];

  auto log_tick = [&](double t) {
    const double cov = coverage(world);
    const double rms = rms_psi(world);
    const int done = robots_done(world);
    const bool fleet = source_found_by_all(world);
    std::snprintf(buf, sizeof buf, "%.1f,%.6f,%.6f,%d,%d\n", t, cov, rms, done, fleet ? 1 : 0);
    metrics += buf;
    if (spec.write_trajectory) {
      for (int i = 0; i < world.n_robots(); ++i) {
        const Robot& r = world.robot(i);
        const Eigen::Vector2d g = r.goal.mean();
        std::snprintf(buf, sizeof buf, "%.1f,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", t, i,
                      r.position.x(), r.position.y(), r.velocity.x(), r.velocity.y(), g.x(),
                      g.y());
        traj += buf;
      }
    }
    return std::make_pair(cov, fleet);
  };

  const int cadence = spec.config.steps_per_cadence();
  const long total = std::llround(spec.config.t_max / spec.config.dt);
  bool stop = false;
  for (long k = 0; k < total && !stop; ++k) {
    const bool fired = (world.step_count() % cadence) == 0;
    world.step();
    if (!fired) continue;
    const double t_tick = static_cast<double>(k) * spec.config.dt;
    const auto [cov, fleet_done] = log_tick(t_tick);
    const bool covered = cov >= 1.0 - 1e-12;
    if (res.coverage_time < 0 && covered) res.coverage_time = t_tick;
    if (res.source_time < 0 && fleet_done) res.source_time = t_tick;
    stop = (spec.stop == EarlyStop::kCoverage && covered) ||
           (spec.stop == EarlyStop::kSource && fleet_done);
  }

  res.end_time = world.time();
  const auto [cov, fleet_done] = log_tick(res.end_time);
  if (res.coverage_time < 0 && cov >= 1.0 - 1e-12) res.coverage_time = res.end_time;
  if (res.source_time < 0 && fleet_done) res.source_time = res.end_time;
  res.final_coverage = cov;
  res.final_rms = rms_psi(world);
  res.min_pair_distance = world.min_pair_distance();
  res.max_speed = world.max_speed();

  write_file(spec.out_dir / "metrics.csv", metrics);
  if (spec.write_trajectory) write_file(spec.out_dir / "trajectory.csv", traj);
  write_file(spec.out_dir / "config.json", config_as_json(spec).dump(2) + "\n");

  json summary;
  summary["seed"] = spec.config.seed;
  summary["end_time"] = res.end_time;
  summary["source_time"] = res.source_time >= 0 ? json(res.source_time) : json(nullptr);
  summary["coverage_time"] = res.coverage_time >= 0 ? json(res.coverage_time) : json(nullptr);
  summary["final_coverage"] = res.final_coverage;
  summary["final_rms"] = res.final_rms;
  summary["min_pair_distance"] =
      std::isfinite(res.min_pair_distance) ? json(res.min_pair_distance) : json(nullptr);
  summary["max_speed"] = res.max_speed;
  write_file(spec.out_dir / "summary.json", summary.dump(2) + "\n");
  return res;
}

void run_experiment(const ExperimentSpec& spec) {
  const auto cells = experiment_cells(spec);
  const EarlyStop stop = experiment_stop(spec.experiment);
  if (spec.seeds.empty()) throw ConfigError("seed list is empty");
  for (const auto& cell : cells) cell.config.validate();  // reject before any output
  std::filesystem::create_directories(spec.out_dir);

  std::string sweep =
      "experiment,cell,n_r,r_c,alpha,init,seed,end_time,source_time,source_censored,"
      "coverage_time,coverage_censored,final_coverage,final_rms,min_pair_distance,max_speed\n";
  char buf[1024];
  for (const auto& cell : cells) {
    std::vector<double> source_times, coverage_times;
    for (std::uint64_t seed : spec.seeds) {
      RunSpec rs;
      rs.config = cell.config;
      rs.config.seed = seed;
      rs.stop = stop;
      rs.out_dir = spec.out_dir / cell.name / ("seed" + std::to_string(seed));
      rs.write_trajectory = spec.write_trajectory;
      rs.experiment = spec.experiment;
      rs.cell = cell.name;
      const RunResult r = run_single(rs);
      const bool sc = r.source_time < 0;
      const bool cc = r.coverage_time < 0;
      source_times.push_back(sc ? rs.config.t_max : r.source_time);
      coverage_times.push_back(cc ? rs.config.t_max : r.coverage_time);
      std::snprintf(buf, sizeof buf,
                    "%s,%s,%d,%g,%g,%s,%llu,%.1f,%.1f,%d,%.1f,%d,%.6f,%.6f,%.6f,%.6f\n",
                    spec.experiment.c_str(), cell.name.c_str(), rs.config.n_r, rs.config.r_c,
                    rs.config.alpha, rs.config.init.c_str(),
                    static_cast<unsigned long long>(seed), r.end_time,
                    sc ? rs.config.t_max : r.source_time, sc ? 1 : 0,
                    cc ? rs.config.t_max : r.coverage_time, cc ? 1 : 0, r.final_coverage,
                    r.final_rms, r.min_pair_distance, r.max_speed);
      sweep += buf;
    }
    // Console digest per cell; the CSV keeps the per-seed rows so any other
    // aggregation stays possible downstream.
    auto mean_std = [](const std::vector<double>& xs) {
      double m = 0.0;
      for (double x : xs) m += x;
      m /= static_cast<double>(xs.size());
      double v = 0.0;
      for (double x : xs) v += (x - m) * (x - m);
      v = xs.size() > 1 ? v / static_cast<double>(xs.size() - 1) : 0.0;
      return std::make_pair(m, std::sqrt(v));
    };
    const auto [sm, ss] = mean_std(source_times);
    const auto [cm, cs] = mean_std(coverage_times);
    std::snprintf(buf, sizeof buf,
                  "%s %s: source time %.1f +/- %.1f s, coverage time %.1f +/- %.1f s (censored "
                  "runs count as t_max, %zu seeds)\n",
                  spec.experiment.c_str(), cell.name.c_str(), sm, ss, cm, cs, spec.seeds.size());
    std::fputs(buf, stdout);
    std::fflush(stdout);
  }
  write_file(spec.out_dir / (spec.experiment + ".csv"), sweep);
}

}  // namespace gbpsim
