// Acceptance gate for the whole stack: nine release criteria, one verdict line
// each. Criteria 1-3 exercise the inference engine in process; criteria 4-8
// drive full simulation sweeps and aggregate their summaries; criterion 9
// replays an experiment cell and compares output bytes.
//
// Usage: acceptance [criterion ...]   (no arguments runs all nine)

#include "gbpsim/experiments.hpp"
#include "gbpsim/layers.hpp"
#include "gbpsim/metrics.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace gbpsim;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int idx, const std::string& title, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", idx, title.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------------
// Criterion 1: message passing is exact on tree graphs.

void criterion_tree_exactness() {
  const auto t0 = Clock::now();
  std::mt19937 rng(2024);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> dim_pick(1, 4);
  std::uniform_int_distribution<int> size_pick(2, 12);

  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    FactorGraph g;
    const int n = size_pick(rng);
    std::vector<VariableNode*> vars;
    // bipartite adjacency over variables and factors; vars get ids [0, n)
    std::vector<std::vector<int>> adj;
    adj.resize(static_cast<std::size_t>(n));
    auto new_node = [&adj] {
      adj.emplace_back();
      return static_cast<int>(adj.size()) - 1;
    };
    auto connect = [&adj](int a, int b) {
      adj[static_cast<std::size_t>(a)].push_back(b);
      adj[static_cast<std::size_t>(b)].push_back(a);
    };

    for (int i = 0; i < n; ++i) {
      const int d = dim_pick(rng);
      vars.push_back(g.add_variable(d, Vec(Vec::Zero(d))));
      Vec z(d);
      for (int k = 0; k < d; ++k) z(k) = noise(rng);
      g.add_factor(
          {vars.back()}, [](const Vec& x) { return x; },
          [d](const Vec&) { return Mat(Mat::Identity(d, d)); }, z,
          Mat((0.5 + std::abs(noise(rng))) * Mat::Identity(d, d)), {.linear = true});
      connect(i, new_node());
    }
    for (int i = 1; i < n; ++i) {
      std::uniform_int_distribution<int> parent_pick(0, i - 1);
      const int p = parent_pick(rng);
      auto* a = vars[static_cast<std::size_t>(i)];
      auto* b = vars[static_cast<std::size_t>(p)];
      const int rows = std::min(a->dim(), b->dim());
      Mat j(rows, a->dim() + b->dim());
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < j.cols(); ++c) j(r, c) = noise(rng);
      Vec z(rows);
      for (int r = 0; r < rows; ++r) z(r) = noise(rng);
      g.add_factor(
          {a, b}, [j](const Vec& x) { return Vec(j * x); }, [j](const Vec&) { return j; }, z,
          Mat((0.5 + std::abs(noise(rng))) * Mat::Identity(rows, rows)), {.linear = true});
      const int f = new_node();
      connect(i, f);
      connect(p, f);
    }

    // graph diameter in message hops, by BFS from every node
    int diameter = 0;
    const int total_nodes = static_cast<int>(adj.size());
    for (int s = 0; s < total_nodes; ++s) {
      std::vector<int> dist(static_cast<std::size_t>(total_nodes), -1);
      std::deque<int> q{s};
      dist[static_cast<std::size_t>(s)] = 0;
      while (!q.empty()) {
        const int u = q.front();
        q.pop_front();
        for (int w : adj[static_cast<std::size_t>(u)])
          if (dist[static_cast<std::size_t>(w)] < 0) {
            dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
            q.push_back(w);
          }
      }
      diameter = std::max(diameter, *std::max_element(dist.begin(), dist.end()));
    }
    // one synchronous round covers two hops (factor->variable, variable->factor)
    g.iterate(std::max(1, (diameter + 1) / 2));

    const Eigen::VectorXd dense = testsupport::dense_map(g.factor_ptrs(), g.variable_ptrs());
    int at = 0;
    for (auto* v : g.variable_ptrs()) {
      const auto mu = v->belief().mean();
      for (int k = 0; k < v->dim(); ++k)
        worst = std::max(worst, std::abs(mu(k) - dense(at + k)));
      at += v->dim();
    }
  }
  const double elapsed = seconds_since(t0);
  report(1, "tree graphs solve exactly after one diameter of sweeps",
         worst < 1e-9 && elapsed < 5.0,
         fmt("50 random trees, worst mean deviation %.3e (limit 1e-9), %.2f s (limit 5 s)", worst,
             elapsed));
}

// ---------------------------------------------------------------------------
// Criterion 2: the two-robot agreement fixture lands on the hand-derived
// stationary point.

void criterion_two_robot_fixture() {
  const auto t0 = Clock::now();
  const auto f = env::SignalField::generate(1, 20.0, 10.0);
  StackParams p;
  p.sigma_psi = 1.0;  // observation and coupling equally weighted
  InfoLayer a(f, p), b(f, p);
  a.apply_measurement({0, 0.4, f.center(0)});
  b.apply_measurement({0, 0.6, f.center(0)});
  a.set_activation(f.center(0), 100.0);
  b.set_activation(f.center(0), 100.0);
  FactorGraph links;
  add_consensus_factor(links, a.variable(0), b.variable(0), p.sigma_consensus);

  std::vector<FactorNode*> fs;
  std::vector<VariableNode*> vs;
  for (auto* g : {&a.graph(), &b.graph(), &links}) {
    fs.insert(fs.end(), g->factor_ptrs().begin(), g->factor_ptrs().end());
    vs.insert(vs.end(), g->variable_ptrs().begin(), g->variable_ptrs().end());
  }
  iterate(fs, vs, 20);

  const double ea = std::abs(a.psi_mean(0) - 0.4667);
  const double eb = std::abs(b.psi_mean(0) - 0.5333);
  const double elapsed = seconds_since(t0);
  report(2, "two coupled mappers settle on the derived stationary point",
         ea < 1e-3 && eb < 1e-3 && elapsed < 1.0,
         fmt("psi means (%.6f, %.6f) vs (0.4667, 0.5333), errors (%.1e, %.1e), %.3f s", a.psi_mean(0),
             b.psi_mean(0), ea, eb, elapsed));
}

// ---------------------------------------------------------------------------
// Criterion 3: analytic Jacobians of every factor type agree with finite
// differences.

void criterion_jacobians() {
  const auto t0 = Clock::now();
  std::mt19937 rng(7781);
  std::uniform_real_distribution<double> span(-10.0, 10.0);

  double worst = 0.0;
  int checked = 0;
  auto check_at = [&](const FactorNode* f, const Vec& x) {
    const Eigen::MatrixXd an = f->eval_jac(x);
    const Eigen::MatrixXd fd =
        testsupport::fd_jacobian([&](const Vec& v) { return f->eval_h(v); }, x);
    const double scale = std::max(1.0, an.cwiseAbs().maxCoeff());
    worst = std::max(worst, (an - fd).cwiseAbs().maxCoeff() / scale);
    ++checked;
  };
  auto rand_vec = [&](int d) {
    Vec x(d);
    for (int i = 0; i < d; ++i) x(i) = span(rng);
    return x;
  };

  // region observation: identity on a 4-D region state
  const auto field = env::SignalField::generate(1, 20.0, 10.0);
  StackParams p;
  InfoLayer layer(field, p);
  layer.apply_measurement({0, 0.5, field.center(0)});
  for (int i = 0; i < 100; ++i) check_at(layer.sensor_factor(0), rand_vec(4));

  // agreement: difference of two 4-D region states
  FactorGraph g;
  auto* r1 = g.add_variable(4, rand_vec(4));
  auto* r2 = g.add_variable(4, rand_vec(4));
  const auto* consensus = add_consensus_factor(g, r1, r2, 1.0);
  for (int i = 0; i < 100; ++i) check_at(consensus, rand_vec(8));

  // constant-velocity transition between two 4-D plan states
  auto* s1 = g.add_variable(4, rand_vec(4));
  auto* s2 = g.add_variable(4, rand_vec(4));
  const auto* dynamics = add_dynamics_factor(g, s1, s2, 0.1, 2.0);
  for (int i = 0; i < 100; ++i) check_at(dynamics, rand_vec(8));

  // goal separation hinge on two 2-D goals; keep clear of the kink and origin
  auto* g1 = g.add_variable(2, rand_vec(2));
  auto* g2 = g.add_variable(2, rand_vec(2));
  const double radius = 5.0;
  const auto* separation = add_goal_separation_factor(g, g1, g2, radius, 1.0);
  for (int i = 0; i < 100;) {
    const Vec x = rand_vec(4);
    const double d = (x.head(2) - x.tail(2)).norm();
    if (std::abs(d - radius) < 1e-2 || d < 1e-2) continue;
    check_at(separation, x);
    ++i;
  }

  // collision hinge on the positions of two 4-D plan states
  const double d_safe = 2.5;
  const auto* collision = add_collision_factor(g, s1, s2, d_safe, 0.01);
  for (int i = 0; i < 100;) {
    const Vec x = rand_vec(8);
    const double d = (x.head(2) - x.segment(4, 2)).norm();
    if (std::abs(d - d_safe) < 1e-2 || d < 1e-2) continue;
    check_at(collision, x);
    ++i;
  }

  const double elapsed = seconds_since(t0);
  report(3, "analytic Jacobians match finite differences for all factor types",
         worst < 1e-4 && elapsed < 10.0,
         fmt("%d evaluations over 5 factor types, worst relative error %.3e (limit 1e-4), %.2f s",
             checked, worst, elapsed));
}

// ---------------------------------------------------------------------------
// Simulation sweeps shared by criteria 4-8.

struct SweepData {
  // init -> r_c -> per-seed results (communication-radius sweep, D=200)
  std::map<std::string, std::map<int, std::vector<RunResult>>> rc;
  std::map<int, double> rc50_random_wall;  // seed -> wall seconds
  // source hunt: n_r -> results at r_c=40, and r_c -> results at n_r=10
  std::map<int, std::vector<RunResult>> seek_nr;
  std::map<int, std::vector<RunResult>> seek_rc;
  // comms dropout: percent alpha -> results
  std::map<int, std::vector<RunResult>> comms;
  double min_pair = std::numeric_limits<double>::infinity();  // criteria 4-6 runs only
  double max_speed = 0.0;
  std::string error;  // non-empty if a block aborted
};

RunResult one_run(const WorldConfig& cfg, EarlyStop stop, const std::string& block,
                  const std::string& cell, double* wall_out = nullptr) {
  RunSpec rs;
  rs.config = cfg;
  rs.stop = stop;
  rs.write_trajectory = false;
  rs.experiment = block;
  rs.cell = cell;
  rs.out_dir = fs::path("acceptance_out") / block / cell / ("seed" + std::to_string(cfg.seed));
  const auto t0 = Clock::now();
  const RunResult r = run_single(rs);
  const double wall = seconds_since(t0);
  if (wall_out) *wall_out = wall;
  std::printf("  run %-12s %-14s seed %llu: cover=%7.1f source=%7.1f rms=%.4f pair=%.2f wall=%.0fs\n",
              block.c_str(), cell.c_str(), static_cast<unsigned long long>(cfg.seed),
              r.coverage_time, r.source_time, r.final_rms, r.min_pair_distance, wall);
  std::fflush(stdout);
  return r;
}

void run_rc_block(SweepData& d) {
  const WorldConfig base = experiment_defaults("rc-sweep").base;
  for (const std::string init : {"corner", "random"})
    for (int rc : {20, 50, 100})
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        WorldConfig cfg = base;
        cfg.init = init;
        cfg.r_c = rc;
        cfg.seed = seed;
        const std::string cell = init + "_rc" + std::to_string(rc);
        double wall = 0.0;
        const RunResult r = one_run(cfg, EarlyStop::kNone, "radius", cell, &wall);
        d.rc[init][rc].push_back(r);
        if (init == "random" && rc == 50) d.rc50_random_wall[static_cast<int>(seed)] = wall;
        d.min_pair = std::min(d.min_pair, r.min_pair_distance);
        d.max_speed = std::max(d.max_speed, r.max_speed);
      }
}

void run_seek_block(SweepData& d) {
  const WorldConfig base = experiment_defaults("source-seek").base;
  auto cell_runs = [&](int n_r, int rc) {
    std::vector<RunResult> rs;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      WorldConfig cfg = base;
      cfg.n_r = n_r;
      cfg.r_c = rc;
      cfg.seed = seed;
      const std::string cell = "nr" + std::to_string(n_r) + "_rc" + std::to_string(rc);
      const RunResult r = one_run(cfg, EarlyStop::kSource, "seek", cell);
      d.min_pair = std::min(d.min_pair, r.min_pair_distance);
      d.max_speed = std::max(d.max_speed, r.max_speed);
      rs.push_back(r);
    }
    return rs;
  };
  for (int n_r : {5, 10, 15, 20}) d.seek_nr[n_r] = cell_runs(n_r, 40);
  d.seek_rc[40] = d.seek_nr[10];
  for (int rc : {20, 60}) d.seek_rc[rc] = cell_runs(10, rc);
}

void run_comms_block(SweepData& d) {
  const WorldConfig base = experiment_defaults("comms-failure").base;
  for (int pct : {0, 50, 100})
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      WorldConfig cfg = base;
      cfg.alpha = pct / 100.0;
      cfg.seed = seed;
      d.comms[pct].push_back(
          one_run(cfg, EarlyStop::kCoverage, "dropout", "alpha" + std::to_string(pct)));
    }
}

double mean_coverage_time(const std::vector<RunResult>& rs, double cap) {
  double s = 0.0;
  for (const auto& r : rs) s += r.coverage_time < 0 ? cap : r.coverage_time;
  return s / static_cast<double>(rs.size());
}

double mean_source_time(const std::vector<RunResult>& rs, double cap) {
  double s = 0.0;
  for (const auto& r : rs) s += r.source_time < 0 ? cap : r.source_time;
  return s / static_cast<double>(rs.size());
}

double mean_rms(const std::vector<RunResult>& rs) {
  double s = 0.0;
  for (const auto& r : rs) s += r.final_rms;
  return s / static_cast<double>(rs.size());
}

bool non_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1] + 1e-9) return false;
  return true;
}

void criterion_noise_beating(const SweepData& d) {
  if (!d.error.empty() || d.rc.count("random") == 0 || d.rc.at("random").count(50) == 0 ||
      d.rc.at("random").at(50).size() != 5) {
    report(4, "fused map error beats sensor noise", false, "runs missing: " + d.error);
    return;
  }
  const auto& runs = d.rc.at("random").at(50);
  double worst_rms = 0.0, worst_wall = 0.0;
  for (const auto& r : runs) worst_rms = std::max(worst_rms, r.final_rms);
  for (const auto& [seed, wall] : d.rc50_random_wall) worst_wall = std::max(worst_wall, wall);
  const double mean = mean_rms(runs);
  const bool pass = worst_rms < 0.1 && mean <= 0.07 && worst_wall <= 600.0;
  report(4, "fused map error beats sensor noise", pass,
         fmt("steady-state rms: worst %.4f (limit 0.1), mean %.4f (limit 0.07); slowest seed %.0f s "
             "(limit 600 s)",
             worst_rms, mean, worst_wall));
}

void criterion_radius_trends(const SweepData& d) {
  if (!d.error.empty()) {
    report(5, "coverage speed and accuracy improve with communication radius", false,
           "runs missing: " + d.error);
    return;
  }
  std::string detail;
  bool pass = true;
  std::map<std::string, std::map<int, double>> tc;
  for (const auto& [init, by_rc] : d.rc) {
    std::vector<double> times, errs;
    for (int rc : {20, 50, 100}) {
      tc[init][rc] = mean_coverage_time(by_rc.at(rc), 1000.0);
      times.push_back(tc[init][rc]);
      errs.push_back(mean_rms(by_rc.at(rc)));
    }
    const bool t_ok = non_increasing(times);
    const bool e_ok = non_increasing(errs);
    pass = pass && t_ok && e_ok;
    detail += fmt("%s cover(20/50/100)=%.1f/%.1f/%.1f%s rms=%.4f/%.4f/%.4f%s; ", init.c_str(),
                  times[0], times[1], times[2], t_ok ? "" : " NOT MONOTONE", errs[0], errs[1],
                  errs[2], e_ok ? "" : " NOT MONOTONE");
  }
  const bool corner_wins_short = tc["corner"][20] < tc["random"][20];
  const bool random_wins_long = tc["random"][100] < tc["corner"][100];
  pass = pass && corner_wins_short && random_wins_long;
  detail += fmt("crossover: corner<random @20 %s, random<corner @100 %s",
                corner_wins_short ? "yes" : "NO", random_wins_long ? "yes" : "NO");
  report(5, "coverage speed and accuracy improve with communication radius", pass, detail);
}

void criterion_seek_trends(const SweepData& d) {
  if (!d.error.empty()) {
    report(6, "source hunts finish faster with more robots and longer range", false,
           "runs missing: " + d.error);
    return;
  }
  std::vector<double> by_nr, by_rc;
  for (int n : {5, 10, 15, 20}) by_nr.push_back(mean_source_time(d.seek_nr.at(n), 1000.0));
  for (int rc : {20, 40, 60}) by_rc.push_back(mean_source_time(d.seek_rc.at(rc), 1000.0));
  const bool nr_ok = non_increasing(by_nr);
  const bool rc_ok = non_increasing(by_rc);
  report(6, "source hunts finish faster with more robots and longer range", nr_ok && rc_ok,
         fmt("mean time vs fleet size (5/10/15/20 @ rc40): %.1f/%.1f/%.1f/%.1f%s; vs radius "
             "(20/40/60 @ nr10): %.1f/%.1f/%.1f%s",
             by_nr[0], by_nr[1], by_nr[2], by_nr[3], nr_ok ? "" : " NOT MONOTONE", by_rc[0],
             by_rc[1], by_rc[2], rc_ok ? "" : " NOT MONOTONE"));
}

void criterion_safety(const SweepData& d) {
  if (!d.error.empty()) {
    report(7, "paths stay collision-free and within the speed limit", false,
           "runs missing: " + d.error);
    return;
  }
  const bool pass = d.min_pair >= 2.0 && d.max_speed <= 5.0 + 1e-6;
  report(7, "paths stay collision-free and within the speed limit", pass,
         fmt("min pairwise distance %.3f m (limit 2.0), max speed %.7f m/s (limit 5 + 1e-6)",
             d.min_pair, d.max_speed));
}

void criterion_dropout(const SweepData& d) {
  if (!d.error.empty() || d.comms.empty()) {
    report(8, "coverage survives communication dropout", false, "runs missing: " + d.error);
    return;
  }
  std::vector<double> means;
  for (int pct : {0, 50, 100}) means.push_back(mean_coverage_time(d.comms.at(pct), 2000.0));
  const bool monotone = means[0] <= means[1] + 1e-9 && means[1] <= means[2] + 1e-9;
  bool all_covered = true;
  for (const auto& r : d.comms.at(100))
    all_covered = all_covered && r.coverage_time >= 0 && r.coverage_time < 2000.0;
  report(8, "coverage survives communication dropout", monotone && all_covered,
         fmt("mean coverage time alpha 0/0.5/1: %.1f/%.1f/%.1f%s; fully isolated fleet covered on "
             "all seeds: %s",
             means[0], means[1], means[2], monotone ? "" : " NOT MONOTONE",
             all_covered ? "yes" : "NO"));
}

// ---------------------------------------------------------------------------
// Criterion 9: replaying a cell yields byte-identical artifacts.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<missing " + p.string() + ">";
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_determinism() {
  ExperimentSpec spec = experiment_defaults("source-seek");
  spec.seeds = {3};
  apply_override(spec, "sweep_n_r=10");
  apply_override(spec, "sweep_r_c=40");
  const fs::path a = fs::path("acceptance_out") / "replay_a";
  const fs::path b = fs::path("acceptance_out") / "replay_b";
  std::string mismatches;
  try {
    spec.out_dir = a;
    run_experiment(spec);
    spec.out_dir = b;
    run_experiment(spec);
    const fs::path cell = fs::path("nr10_rc40") / "seed3";
    for (const fs::path rel :
         {fs::path("source-seek.csv"), cell / "metrics.csv", cell / "trajectory.csv",
          cell / "summary.json", cell / "config.json"})
      if (slurp(a / rel) != slurp(b / rel)) mismatches += rel.string() + " ";
  } catch (const std::exception& e) {
    mismatches = std::string("aborted: ") + e.what();
  }
  report(9, "replaying an experiment cell reproduces identical bytes", mismatches.empty(),
         mismatches.empty() ? "5 artifacts byte-identical across two runs"
                            : "differs: " + mismatches);
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));
  const auto want = [&pick](int c) { return pick.empty() || pick.count(c) > 0; };

  std::error_code ec;
  fs::remove_all("acceptance_out", ec);

  if (want(1)) criterion_tree_exactness();
  if (want(2)) criterion_two_robot_fixture();
  if (want(3)) criterion_jacobians();

  SweepData data;
  const bool need_rc = want(4) || want(5) || want(7);
  const bool need_seek = want(6) || want(7);
  const bool need_comms = want(8);
  try {
    if (need_rc) run_rc_block(data);
    if (need_seek) run_seek_block(data);
    if (need_comms) run_comms_block(data);
  } catch (const std::exception& e) {
    data.error = e.what();
  }

  if (want(4)) criterion_noise_beating(data);
  if (want(5)) criterion_radius_trends(data);
  if (want(6)) criterion_seek_trends(data);
  if (want(7)) criterion_safety(data);
  if (want(8)) criterion_dropout(data);
  if (want(9)) criterion_determinism();

  if (g_failures == 0) {
    std::printf("all criteria passed\n");
    return 0;
  }
  std::printf("%d criterion(s) failed\n", g_failures);
  return 1;
}
