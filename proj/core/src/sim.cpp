#include "gbpsim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gbpsim {

namespace {

// Deterministic, platform-independent stream splitter for sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

bool integer_multiple(double a, double b) {
  const double k = a / b;
  return std::round(k) >= 1.0 && std::abs(k - std::round(k)) < 1e-9;
}

}  // namespace

void WorldConfig::validate() const {
  auto fail = [](const char* msg) { throw ConfigError(msg); };
  if (n_r < 1) fail("n_r must be at least 1");
  if (!(d_world > 0.0)) fail("d_world must be positive");
  if (!(region_width > 0.0)) fail("region_width must be positive");
  if (!integer_multiple(d_world, region_width))
    fail("d_world must be an integer multiple of region_width");
  if (!(r_c > 0.0)) fail("r_c must be positive");
  if (!(r_s > 0.0)) fail("r_s must be positive");
  if (!(dt > 0.0)) fail("dt must be positive");
  if (!(t_cadence > 0.0) || !integer_multiple(t_cadence, dt))
    fail("t_cadence must be a positive integer multiple of dt");
  if (n_i < 1) fail("n_i must be at least 1");
  if (t_max < 0.0) fail("t_max must be non-negative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (init != "corner" && init != "random") fail("init must be \"corner\" or \"random\"");
  if (!(psi_star > 0.0 && psi_star < 1.0)) fail("psi_star must lie in (0, 1)");
  if (field.octaves < 1) fail("field.octaves must be at least 1");
  if (!(field.persistence > 0.0)) fail("field.persistence must be positive");
  if (field.frequency < 0.0) fail("field.frequency must be non-negative");
  if (!(stack.v_max > 0.0)) fail("v_max must be positive");
  if (stack.horizon_states < 2) fail("the plan horizon needs at least 2 states");
  if (!(stack.plan_dt > 0.0)) fail("plan_dt must be positive");
  if (!(stack.robot_radius > 0.0)) fail("robot_radius must be positive");
  if (!(stack.safety_scale > 0.0)) fail("safety_scale must be positive");
  if (stack.sigma_psi < 0.0) fail("sigma_psi must be non-negative");
  const double spreads[] = {stack.sigma_pos,      stack.sigma_zeta,    stack.sigma_consensus,
                            stack.sigma_signal,   stack.sigma_explore, stack.sigma_goal_sep,
                            stack.sigma_dynamics, stack.sigma_pose_anchor,
                            stack.sigma_collision};
  for (double s : spreads)
    if (!(s > 0.0)) fail("model spreads must be positive");
  if (!(stack.prior_state_precision > 0.0)) fail("prior_state_precision must be positive");
  if (!(stack.goal_sep_radius > 0.0)) fail("goal_sep_radius must be positive");
  if (!(stack.horizon_vel_precision > 0.0)) fail("horizon_vel_precision must be positive");
  if (!(stack.explored_threshold > 0.0 && stack.explored_threshold < 1.0))
    fail("explored_threshold must lie in (0, 1)");
}

int WorldConfig::steps_per_cadence() const {
  return static_cast<int>(std::llround(t_cadence / dt));
}

Robot::Robot(int id_, const Eigen::Vector2d& pos, const env::SignalField& field,
             const StackParams& params, std::uint64_t rng_seed)
    : id(id_),
      position(pos),
      velocity(Eigen::Vector2d::Zero()),
      info(field, params),
      goal(pos, params),
      plan(pos, params),
      rng(rng_seed) {
  heard.assign(static_cast<std::size_t>(info.n_regions()), 0);
}

World::World(const WorldConfig& cfg)
    : World(cfg, [&cfg] {
        cfg.validate();
        return env::SignalField::generate(cfg.seed, cfg.d_world, cfg.region_width, cfg.field);
      }()) {}

World::World(const WorldConfig& cfg, env::SignalField field)
    : cfg_(cfg), field_(std::move(field)), world_rng_(mix_seed(cfg.seed, 0)) {
  cfg_.validate();
  if (std::abs(field_.d_world() - cfg_.d_world) > 1e-9 ||
      std::abs(field_.r_d() - cfg_.region_width) > 1e-9)
    throw ConfigError("field geometry does not match the configuration");
  failed_mask_.assign(static_cast<std::size_t>(cfg_.n_r), 0);
  place_robots();
}

void World::place_robots() {
  robots_.reserve(static_cast<std::size_t>(cfg_.n_r));
  std::vector<Eigen::Vector2d> spots;
  spots.reserve(static_cast<std::size_t>(cfg_.n_r));
  const double rr = cfg_.stack.robot_radius;
  if (cfg_.init == "corner") {
    const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg_.n_r))));
    const double margin = 2.0 * rr;
    const double spacing = 4.0 * rr;
    if (margin + spacing * (side - 1) > cfg_.d_world - margin)
      throw ConfigError("corner grid does not fit inside the world");
    for (int k = 0; k < cfg_.n_r; ++k)
      spots.emplace_back(margin + spacing * (k % side), margin + spacing * (k / side));
  } else {
    std::uniform_real_distribution<double> u(rr, cfg_.d_world - rr);
    const double d_safe = cfg_.safety_distance();
    const long cap = 10000L * cfg_.n_r;
    long attempts = 0;
    while (static_cast<int>(spots.size()) < cfg_.n_r) {
      if (++attempts > cap)
        throw ConfigError("could not place robots with the required separation");
      const double x = u(world_rng_);
      const double y = u(world_rng_);
      const Eigen::Vector2d p(x, y);
      bool clear = true;
      for (const auto& q : spots) clear = clear && (p - q).norm() >= d_safe;
      if (clear) spots.push_back(p);
    }
  }
  for (int i = 0; i < cfg_.n_r; ++i)
    robots_.push_back(std::make_unique<Robot>(i, spots[static_cast<std::size_t>(i)], field_,
                                              cfg_.stack, mix_seed(cfg_.seed, 1 + i)));
}

void World::step() {
  draw_failures();
  sync_links(false);
  const bool fire = (step_ % cfg_.steps_per_cadence()) == 0;
  if (fire) {
    try {
      for (auto& r : robots_) {
        const auto readings =
            env::sample(field_, r->position, cfg_.r_s, cfg_.stack.sigma_psi, r->rng);
        for (const auto& s : readings) r->info.apply_measurement(s);
        r->info.set_activation(r->position, cfg_.r_c);
      }
    } catch (const std::runtime_error&) {
      throw NumericalError("info", time(), step_);
    }
    sync_links(true);  // freshly activated regions join the shared-map links now
    set_comm_gates();
    iterate_info_layer();
    iterate_goal_layer();
  }
  iterate_plan_layer();
  integrate();
  prune_links();
  ++step_;
}

void World::draw_failures() {
  failed_.clear();
  std::fill(failed_mask_.begin(), failed_mask_.end(), 0);
  const int k = static_cast<int>(std::floor(cfg_.alpha * cfg_.n_r + 1e-9));
  if (k <= 0) return;
  std::vector<int> ids(static_cast<std::size_t>(cfg_.n_r));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < k; ++i) {  // partial shuffle: the first k are the draw
    std::uniform_int_distribution<int> pick(i, cfg_.n_r - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(world_rng_))]);
  }
  failed_.assign(ids.begin(), ids.begin() + k);
  std::sort(failed_.begin(), failed_.end());
  for (int id : failed_) failed_mask_[static_cast<std::size_t>(id)] = 1;
}

void World::sync_links(bool top_up_existing) {
  const double d_safe = cfg_.safety_distance();
  for (int i = 0; i < cfg_.n_r; ++i) {
    for (int j = i + 1; j < cfg_.n_r; ++j) {
      Robot& a = *robots_[static_cast<std::size_t>(i)];
      Robot& b = *robots_[static_cast<std::size_t>(j)];
      if ((a.position - b.position).norm() >= cfg_.r_c) continue;
      auto [it, fresh] = pairs_.try_emplace({i, j});
      PairLink& link = it->second;
      if (fresh) {
        link.separation =
            add_goal_separation_factor(links_, a.goal.variable(), b.goal.variable(),
                                       cfg_.stack.goal_sep_radius, cfg_.stack.sigma_goal_sep);
        link.collisions.reserve(static_cast<std::size_t>(cfg_.stack.horizon_states));
        for (int t = 0; t < cfg_.stack.horizon_states; ++t)
          link.collisions.push_back(add_collision_factor(links_, a.plan.variable(t),
                                                         b.plan.variable(t), d_safe,
                                                         cfg_.stack.sigma_collision));
      }
      if (fresh || top_up_existing) {
        // Region activations only change on measurement ticks, so existing
        // links only need a rescan when this step performed one.
        for (int m = 0; m < a.info.n_regions(); ++m) {
          if (!a.info.variable(m)->active() || !b.info.variable(m)->active()) continue;
          if (link.consensus.count(m) != 0) continue;
          link.consensus.emplace(m, add_consensus_factor(links_, a.info.variable(m),
                                                         b.info.variable(m),
                                                         cfg_.stack.sigma_consensus));
        }
      }
    }
  }
  rebuild_connected();
}

void World::prune_links() {
  for (auto it = pairs_.begin(); it != pairs_.end();) {
    const auto [i, j] = it->first;
    const double dist = (robots_[static_cast<std::size_t>(i)]->position -
                         robots_[static_cast<std::size_t>(j)]->position)
                            .norm();
    if (dist >= cfg_.r_c)
      it = drop_link(it);
    else
      ++it;
  }
  rebuild_connected();
}

World::LinkMap::iterator World::drop_link(LinkMap::iterator it) {
  PairLink& link = it->second;
  const auto [i, j] = it->first;
  Robot& ra = *robots_[static_cast<std::size_t>(i)];
  Robot& rb = *robots_[static_cast<std::size_t>(j)];
  // Shared-map messages persist in the endpoints' memories, but only when the
  // sender's knowledge traces back to a real measurement (its own, or relayed
  // from someone who measured). Keeping the rest would fossilize echoes of the
  // shared prior: in a dense cluster the agreement loops inflate those echoes
  // to high confidence, and once folded in they outweigh genuine relays that
  // arrive later. Discarding them leaves the belief at the prior, which says
  // the same thing without the fake certainty. A later teardown of the same
  // pair and region replaces its earlier snapshot instead of stacking another
  // copy, so hearsay stays bounded and tracks the freshest exchange. The
  // repulsive couplings leave nothing behind.
  auto& store = retained_[it->first];
  for (auto& [m, f] : link.consensus) {
    VariableNode* va = ra.info.variable(m);
    VariableNode* vb = rb.info.variable(m);
    CanonicalGaussian sa = *va->slot(f);  // message sent by rb, folded into ra
    CanonicalGaussian sb = *vb->slot(f);  // message sent by ra, folded into rb
    links_.remove_factor(f, FactorGraph::Disposal::kDiscard);
    if (sa.zero() && sb.zero()) continue;  // never exchanged: keep any older snapshot
    const std::size_t mi = static_cast<std::size_t>(m);
    if (!(rb.info.measurement_count(m) > 0 || rb.heard[mi])) sa = CanonicalGaussian(va->dim());
    if (!(ra.info.measurement_count(m) > 0 || ra.heard[mi])) sb = CanonicalGaussian(vb->dim());
    if (sa.zero() && sb.zero()) continue;  // both senders uninformed: nothing worth keeping
    auto [sit, fresh] = store.try_emplace(m, RetainedPair{sa, sb});
    if (!fresh) {
      va->deduct(sit->second.into_first);
      vb->deduct(sit->second.into_second);
      sit->second = RetainedPair{sa, sb};
    }
    if (!sa.zero()) {
      va->absorb(sa);
      ra.heard[mi] = 1;
    }
    if (!sb.zero()) {
      vb->absorb(sb);
      rb.heard[mi] = 1;
    }
  }
  if (store.empty()) retained_.erase(it->first);
  links_.remove_factor(link.separation, FactorGraph::Disposal::kDiscard);
  for (auto* f : link.collisions) links_.remove_factor(f, FactorGraph::Disposal::kDiscard);
  return pairs_.erase(it);
}

void World::rebuild_connected() {
  for (auto& r : robots_) r->connected.clear();
  for (const auto& [key, link] : pairs_) {
    robots_[static_cast<std::size_t>(key.first)]->connected.push_back(key.second);
    robots_[static_cast<std::size_t>(key.second)]->connected.push_back(key.first);
  }
  for (auto& r : robots_) std::sort(r->connected.begin(), r->connected.end());
}

void World::set_comm_gates() {
  for (auto& [key, link] : pairs_) {
    const bool open = failed_mask_[static_cast<std::size_t>(key.first)] == 0 &&
                      failed_mask_[static_cast<std::size_t>(key.second)] == 0;
    link.separation->set_active(open);
    for (auto& [m, f] : link.consensus) f->set_active(open);
  }
}

void World::iterate_info_layer() {
  span_factors_.clear();
  span_vars_.clear();
  for (auto& r : robots_) {
    const auto& g = r->info.graph();
    span_factors_.insert(span_factors_.end(), g.factor_ptrs().begin(), g.factor_ptrs().end());
    span_vars_.insert(span_vars_.end(), g.variable_ptrs().begin(), g.variable_ptrs().end());
  }
  for (const auto& [key, link] : pairs_)
    for (const auto& [m, f] : link.consensus) span_factors_.push_back(f);
  try {
    iterate(span_factors_, span_vars_, cfg_.n_i);
  } catch (const std::runtime_error&) {
    throw NumericalError("info", time(), step_);
  }
}

void World::iterate_goal_layer() {
  for (auto& r : robots_) {
    r->info.snapshot(psi_snap_, zeta_snap_);
    const TargetChoice sig = select_signal_target(psi_snap_);
    const TargetChoice exp =
        select_exploration_target(zeta_snap_, field_, r->position,
                                  cfg_.stack.explored_threshold, r->rng, r->explore_target);
    r->explore_target = exp.region;
    const Eigen::Vector2d sig_c = sig.region >= 0 ? field_.center(sig.region) : r->position;
    const Eigen::Vector2d exp_c = exp.region >= 0 ? field_.center(exp.region) : r->position;
    r->goal.set_pulls(sig_c, sig.strength, exp_c, exp.strength);
  }
  span_factors_.clear();
  span_vars_.clear();
  for (auto& r : robots_) {
    const auto& g = r->goal.graph();
    span_factors_.insert(span_factors_.end(), g.factor_ptrs().begin(), g.factor_ptrs().end());
    span_vars_.insert(span_vars_.end(), g.variable_ptrs().begin(), g.variable_ptrs().end());
  }
  for (const auto& [key, link] : pairs_) span_factors_.push_back(link.separation);
  try {
    iterate(span_factors_, span_vars_, cfg_.n_i);
  } catch (const std::runtime_error&) {
    throw NumericalError("goal", time(), step_);
  }
  for (auto& r : robots_) r->goal.project_into(cfg_.d_world);
}

void World::iterate_plan_layer() {
  span_factors_.clear();
  span_vars_.clear();
  for (auto& r : robots_) {
    const auto& g = r->plan.graph();
    span_factors_.insert(span_factors_.end(), g.factor_ptrs().begin(), g.factor_ptrs().end());
    span_vars_.insert(span_vars_.end(), g.variable_ptrs().begin(), g.variable_ptrs().end());
  }
  for (const auto& [key, link] : pairs_)
    span_factors_.insert(span_factors_.end(), link.collisions.begin(), link.collisions.end());
  try {
    iterate(span_factors_, span_vars_, cfg_.n_i);
  } catch (const std::runtime_error&) {
    throw NumericalError("plan", time(), step_);
  }
}

void World::integrate() {
  for (auto& r : robots_) {
    const Eigen::Vector2d v = r->plan.exec_velocity();
    r->position += cfg_.dt * v;
    r->velocity = v;
    Vec pose(4);
    pose << r->position.x(), r->position.y(), v.x(), v.y();
    r->plan.re_anchor(pose);
    r->plan.aim(r->goal.mean());
    max_speed_ = std::max(max_speed_, v.norm());
  }
  for (int i = 0; i < cfg_.n_r; ++i)
    for (int j = i + 1; j < cfg_.n_r; ++j)
      min_pair_distance_ = std::min(min_pair_distance_,
                                    (robots_[static_cast<std::size_t>(i)]->position -
                                     robots_[static_cast<std::size_t>(j)]->position)
                                        .norm());
}

void World::teleport(int i, const Eigen::Vector2d& pos) {
  Robot& r = *robots_[static_cast<std::size_t>(i)];
  r.position = pos;
  r.velocity.setZero();
  Vec pose(4);
  pose << pos.x(), pos.y(), 0.0, 0.0;
  r.plan.re_anchor(pose);
  r.plan.aim(r.goal.mean());
}

int World::consensus_factor_count() const {
  int n = 0;
  for (const auto& [key, link] : pairs_) n += static_cast<int>(link.consensus.size());
  return n;
}

int World::separation_factor_count() const { return static_cast<int>(pairs_.size()); }

int World::collision_factor_count() const {
  int n = 0;
  for (const auto& [key, link] : pairs_) n += static_cast<int>(link.collisions.size());
  return n;
}

std::vector<std::pair<int, int>> World::linked_pairs() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(pairs_.size());
  for (const auto& [key, link] : pairs_) out.push_back(key);
  return out;
}

}  // namespace gbpsim
