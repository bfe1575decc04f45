#pragma once

#include "gbpsim/environment.hpp"
#include "gbpsim/layers.hpp"

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbpsim {

/// Rejected configuration (caller should exit with a usage error).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Inference produced a non-finite belief; carries the failing context.
struct NumericalError : std::runtime_error {
  NumericalError(const std::string& layer_name, double at_time, int at_step)
      : std::runtime_error("non-finite belief in the " + layer_name + " layer at t=" +
                           std::to_string(at_time) + " (step " + std::to_string(at_step) + ")"),
        layer(layer_name),
        t(at_time),
        step(at_step) {}
  std::string layer;
  double t;
  int step;
};

struct WorldConfig {
  int n_r = 20;
  double d_world = 200.0;
  double region_width = 10.0;
  double r_c = 50.0;   // communication radius
  double r_s = 10.0;   // sampling radius
  double dt = 0.1;
  double t_cadence = 1.0;  // measurement + map/goal exchange period
  int n_i = 5;             // message rounds per layer per firing
  double t_max = 1000.0;
  double alpha = 0.0;  // fraction of robots with silenced map/goal comms per step
  std::string init = "random";  // "corner" | "random"
  std::uint64_t seed = 1;
  double psi_star = 10.0 / 255.0;
  env::FieldParams field;
  StackParams stack;

  /// Throws ConfigError with a reason on the first violated constraint.
  void validate() const;
  [[nodiscard]] int steps_per_cadence() const;
  [[nodiscard]] double safety_distance() const {
    return 2.0 * stack.robot_radius * stack.safety_scale;
  }
};

struct Robot {
  Robot(int id_, const Eigen::Vector2d& pos, const env::SignalField& field,
        const StackParams& params, std::uint64_t rng_seed);

  int id;
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
  InfoLayer info;
  GoalLayer goal;
  PlanLayer plan;
  std::mt19937_64 rng;
  std::vector<int> connected;  // sorted peer ids, symmetric across the fleet
  int explore_target = -1;     // committed exploration destination (region)
  // Per region: a retained link snapshot arrived from a measurement-backed
  // sender. Together with own measurements this marks which region beliefs
  // trace back to real data rather than echoes of the shared prior.
  std::vector<char> heard;
};

/// The full fleet: per-robot stacks, pairwise link factors, communication
/// failure injection, and the per-step schedule (discover, link, measure,
/// iterate map -> goal -> plan, integrate, prune).
class World {
 public:
  explicit World(const WorldConfig& cfg);
  World(const WorldConfig& cfg, env::SignalField field);

  void step();

  [[nodiscard]] double time() const { return step_ * cfg_.dt; }
  [[nodiscard]] int step_count() const { return step_; }
  [[nodiscard]] int n_robots() const { return static_cast<int>(robots_.size()); }
  [[nodiscard]] Robot& robot(int i) { return *robots_[static_cast<size_t>(i)]; }
  [[nodiscard]] const Robot& robot(int i) const { return *robots_[static_cast<size_t>(i)]; }
  [[nodiscard]] const env::SignalField& field() const { return field_; }
  [[nodiscard]] const WorldConfig& config() const { return cfg_; }

  /// Robots whose map/goal exchange was silenced on the last completed step.
  [[nodiscard]] const std::vector<int>& failed_now() const { return failed_; }

  // Full-resolution safety statistics, accumulated at every integration.
  [[nodiscard]] double min_pair_distance() const { return min_pair_distance_; }
  [[nodiscard]] double max_speed() const { return max_speed_; }

  // Link introspection (scenario tests audit the factor lifecycle).
  [[nodiscard]] int consensus_factor_count() const;
  [[nodiscard]] int separation_factor_count() const;
  [[nodiscard]] int collision_factor_count() const;
  [[nodiscard]] std::vector<std::pair<int, int>> linked_pairs() const;
  [[nodiscard]] const FactorGraph& link_graph() const { return links_; }

  /// Scenario hook: relocates a robot and re-pins its plan there.
  void teleport(int i, const Eigen::Vector2d& pos);

 private:
  struct PairLink {
    FactorNode* separation = nullptr;
    std::vector<FactorNode*> collisions;
    std::map<int, FactorNode*> consensus;  // region -> factor, orderered for determinism
  };

  using LinkMap = std::map<std::pair<int, int>, PairLink>;

  // Consensus knowledge folded into the endpoint variables' memories when a
  // link is torn down, keyed by (pair, region). The next teardown of the same
  // pair and region deducts the stored snapshot before absorbing the new one,
  // so every pair contributes at most one snapshot per region — always its
  // freshest — no matter how often the robots drift in and out of range.
  // A side that absorbed nothing (sender had no measurement-backed knowledge)
  // stores a zero snapshot, which deducts as a no-op.
  struct RetainedPair {
    CanonicalGaussian into_first;   // folded into the lower-id robot's belief
    CanonicalGaussian into_second;  // folded into the higher-id robot's belief
  };
  using RetainedMap = std::map<std::pair<int, int>, std::map<int, RetainedPair>>;

  void place_robots();
  void sync_links(bool top_up_existing);
  void prune_links();
  LinkMap::iterator drop_link(LinkMap::iterator it);
  void rebuild_connected();
  void set_comm_gates();
  void draw_failures();
  void iterate_info_layer();
  void iterate_goal_layer();
  void iterate_plan_layer();
  void integrate();

  WorldConfig cfg_;
  env::SignalField field_;
  std::vector<std::unique_ptr<Robot>> robots_;
  FactorGraph links_;  // declared after robots_: link factors detach first
  LinkMap pairs_;
  RetainedMap retained_;
  std::mt19937_64 world_rng_;
  std::vector<int> failed_;
  std::vector<char> failed_mask_;
  int step_ = 0;
  double min_pair_distance_ = std::numeric_limits<double>::infinity();
  double max_speed_ = 0.0;

  // scratch buffers reused across steps
  std::vector<double> psi_snap_, zeta_snap_;
  std::vector<FactorNode*> span_factors_;
  std::vector<VariableNode*> span_vars_;
};

}  // namespace gbpsim
