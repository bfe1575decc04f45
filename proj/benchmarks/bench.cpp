// Microbenchmarks for the hot paths: message rounds on the inference engine,
// per-layer sweeps at production sizes, and whole simulator steps.

#include "gbpsim/layers.hpp"
#include "gbpsim/sim.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

using namespace gbpsim;

namespace {

// A chain of `n` 4-D variables under identity anchors and difference links —
// the shape of one region's consensus cluster, scaled up.
static void BM_ChainRound(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  FactorGraph g;
  std::mt19937 rng(42);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<VariableNode*> vars;
  for (int i = 0; i < n; ++i) {
    vars.push_back(g.add_variable(4, Vec(Vec::Zero(4))));
    Vec z(4);
    for (int k = 0; k < 4; ++k) z(k) = noise(rng);
    g.add_factor(
        {vars.back()}, [](const Vec& x) { return x; },
        [](const Vec&) { return Mat(Mat::Identity(4, 4)); }, z, Mat(Mat::Identity(4, 4)),
        {.linear = true});
  }
  for (int i = 1; i < n; ++i) add_consensus_factor(g, vars[i - 1u], vars[i], 1.0);
  for (auto _ : state) g.iterate(1);
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(g.factor_ptrs().size()));
}

// One sweep over a full-size map layer (400 regions) with fused observations.
static void BM_MapLayerRound(benchmark::State& state) {
  const auto field = env::SignalField::generate(3, 200.0, 10.0);
  StackParams p;
  p.sigma_psi = 0.1;
  InfoLayer layer(field, p);
  std::mt19937_64 rng(7);
  Eigen::Vector2d pos(100.0, 100.0);
  for (const auto& s : env::sample(field, pos, 50.0, p.sigma_psi, rng))
    layer.apply_measurement(s);
  for (auto _ : state) layer.graph().iterate(1);
  state.SetItemsProcessed(state.iterations() * layer.n_regions());
}

// One sweep over a receding-horizon plan with an active collision pair.
static void BM_PlanRound(benchmark::State& state) {
  StackParams p;
  PlanLayer a({0.0, 0.0}, p);
  PlanLayer b({1.0, 0.0}, p);
  a.aim({40.0, 0.0});
  b.aim({-40.0, 0.0});
  FactorGraph links;
  for (int t = 0; t < a.horizon(); ++t)
    add_collision_factor(links, a.variable(t), b.variable(t), 2.5, 0.01);
  std::vector<FactorNode*> fs;
  std::vector<VariableNode*> vs;
  for (auto* g : std::initializer_list<FactorGraph*>{&a.graph(), &b.graph(), &links}) {
    fs.insert(fs.end(), g->factor_ptrs().begin(), g->factor_ptrs().end());
    vs.insert(vs.end(), g->variable_ptrs().begin(), g->variable_ptrs().end());
  }
  for (auto _ : state) iterate(fs, vs, 1);
}

// Whole simulator steps in steady state (mix of exchange and plan-only ticks).
static void BM_WorldStep(benchmark::State& state) {
  WorldConfig cfg;
  cfg.n_r = static_cast<int>(state.range(0));
  cfg.d_world = 100.0;
  cfg.r_c = 40.0;
  cfg.seed = 5;
  World world(cfg);
  for (int i = 0; i < 50; ++i) world.step();  // let links and activity form
  for (auto _ : state) world.step();
}

static void BM_FieldGenerate(benchmark::State& state) {
  std::uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(env::SignalField::generate(seed++, 200.0, 10.0));
}

}  // namespace

BENCHMARK(BM_ChainRound)->Arg(16)->Arg(64)->Arg(256);
BENCHMARK(BM_MapLayerRound);
BENCHMARK(BM_PlanRound);
BENCHMARK(BM_WorldStep)->Arg(5)->Arg(10);
BENCHMARK(BM_FieldGenerate);

BENCHMARK_MAIN();
