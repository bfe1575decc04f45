#pragma once

#include "gbpsim/environment.hpp"
#include "gbpsim/factor_graph.hpp"

#include <random>
#include <span>
#include <vector>

namespace gbpsim {

// Noise scales and shape parameters for one robot's three-layer stack.
struct StackParams {
  // region-belief layer
  double sigma_pos = 1e-5;    // region center observation spread
  double sigma_zeta = 1e-5;   // visit observation spread
  double sigma_psi = 0.1;     // field observation spread
  double prior_state_precision = 1e-3;  // initial pull toward (value 1, unvisited)
  double sigma_consensus = 1.0;

  // goal layer
  double sigma_signal = 0.5;
  double sigma_explore = 0.1;
  double sigma_goal_sep = 0.01;
  double goal_sep_radius = 10.0;
  double explored_threshold = 0.5;

  // planning layer
  int horizon_states = 11;
  double plan_dt = 0.1;
  double sigma_dynamics = 2.0;
  double sigma_pose_anchor = 1e-4;
  double horizon_vel_precision = 1e6;
  double sigma_collision = 0.01;
  double robot_radius = 1.0;
  double safety_scale = 2.2;  // safety distance = 2 * robot_radius * safety_scale
  double v_max = 5.0;
};

struct TargetChoice {
  int region = -1;
  double strength = 0.0;
};

// Lowest believed field value wins; ties break to the lowest region index.
// Strength is 1 - value, saturated to [0, 1].
TargetChoice select_signal_target(std::span<const double> psi_means);

// Nearest region whose visit belief is below the threshold; ties break to the
// lowest index. A still-unexplored `current` target is kept (commitment stops
// a robot from dithering between equidistant frontiers). A fully visited map
// falls back to a uniform seeded draw.
TargetChoice select_exploration_target(std::span<const double> zeta_means,
                                       const env::SignalField& field, const Eigen::Vector2d& p0,
                                       double explored_threshold, std::mt19937_64& rng,
                                       int current = -1);

/// Per-robot belief over every region's state [center_x, center_y, value,
/// visited], each region one 4-D variable anchored at its center. Repeated
/// field observations fold into a single per-region factor (running mean with
/// accumulated precision), so the graph never grows with revisits.
class InfoLayer {
 public:
  InfoLayer(const env::SignalField& field, const StackParams& params);

  [[nodiscard]] int n_regions() const { return static_cast<int>(vars_.size()); }
  [[nodiscard]] VariableNode* variable(int m) { return vars_[static_cast<size_t>(m)]; }
  [[nodiscard]] const VariableNode* variable(int m) const { return vars_[static_cast<size_t>(m)]; }
  [[nodiscard]] const Vec& mean(int m) const { return vars_[static_cast<size_t>(m)]->estimate(); }
  [[nodiscard]] double psi_mean(int m) const { return mean(m)(2); }
  [[nodiscard]] double zeta_mean(int m) const { return mean(m)(3); }

  void apply_measurement(const env::Sample& s);
  [[nodiscard]] int measurement_count(int m) const { return count_[static_cast<size_t>(m)]; }
  [[nodiscard]] const FactorNode* sensor_factor(int m) const {
    return sensors_[static_cast<size_t>(m)];
  }

  /// Marks regions whose centers lie within `radius` of `pos` as eligible for
  /// cross-robot exchange; everything else goes quiet (beliefs are kept).
  void set_activation(const Eigen::Vector2d& pos, double radius);

  void snapshot(std::vector<double>& psi, std::vector<double>& zeta) const;

  [[nodiscard]] FactorGraph& graph() { return graph_; }
  [[nodiscard]] const FactorGraph& graph() const { return graph_; }

 private:
  const env::SignalField* field_;
  StackParams p_;
  FactorGraph graph_;
  std::vector<VariableNode*> vars_;
  std::vector<FactorNode*> sensors_;
  std::vector<int> count_;
  std::vector<double> psi_sum_;
};

/// One 2-D goal position with two retargetable pulls: toward the best believed
/// field region and toward the nearest unexplored region. A pull of gain u
/// toward c with spread sigma enters as an identity observation of c with
/// precision (u/sigma)^2, so a zero gain is exactly silent.
class GoalLayer {
 public:
  GoalLayer(const Eigen::Vector2d& init, const StackParams& params);

  [[nodiscard]] VariableNode* variable() { return var_; }
  [[nodiscard]] Eigen::Vector2d mean() const {
    return {var_->estimate()(0), var_->estimate()(1)};
  }

  void set_pulls(const Eigen::Vector2d& signal_center, double signal_strength,
                 const Eigen::Vector2d& explore_center, double explore_strength);

  /// Clamps the goal mean into [0, d]^2 (world square).
  void project_into(double d_world);

  [[nodiscard]] FactorGraph& graph() { return graph_; }

 private:
  StackParams p_;
  FactorGraph graph_;
  VariableNode* var_;
  FactorNode* signal_;
  FactorNode* explore_;
};

/// Receding-horizon state chain [x, y, vx, vy] under constant-velocity
/// transition factors. Variable 0 is pinned to the robot's integrated pose;
/// the last variable carries a strong velocity prior aimed at the goal.
class PlanLayer {
 public:
  PlanLayer(const Eigen::Vector2d& pos, const StackParams& params);

  [[nodiscard]] int horizon() const { return static_cast<int>(vars_.size()); }
  [[nodiscard]] VariableNode* variable(int t) { return vars_[static_cast<size_t>(t)]; }
  [[nodiscard]] const Vec& mean(int t) const { return vars_[static_cast<size_t>(t)]->estimate(); }

  /// Velocity of the next-step state, clamped to the speed limit.
  [[nodiscard]] Eigen::Vector2d exec_velocity() const;

  void re_anchor(const Vec& pose);
  void aim(const Eigen::Vector2d& goal);
  [[nodiscard]] const FactorNode* horizon_anchor() const { return horizon_anchor_; }

  [[nodiscard]] FactorGraph& graph() { return graph_; }

 private:
  StackParams p_;
  FactorGraph graph_;
  std::vector<VariableNode*> vars_;
  FactorNode* pose_anchor_;
  FactorNode* horizon_anchor_;
};

// Cross-robot factor builders. The owning graph is a link container; the
// variables may live in other graphs.

/// Difference factor driving two equal-width variables together. Exchange is
/// gated on both endpoints being active.
FactorNode* add_consensus_factor(FactorGraph& owner, VariableNode* a, VariableNode* b,
                                 double sigma);

/// Scalar hinge pushing two 2-D goals apart while they sit within `radius` of
/// each other.
FactorNode* add_goal_separation_factor(FactorGraph& owner, VariableNode* a, VariableNode* b,
                                       double radius, double sigma);

/// Constant-velocity transition between consecutive 4-D plan states. The noise
/// precision is the inverse of a white-acceleration covariance over `dt`
/// (override `noise_dt` to decouple it from the transition step).
FactorNode* add_dynamics_factor(FactorGraph& owner, VariableNode* a, VariableNode* b, double dt,
                                double sigma_d, double noise_dt = -1.0);

/// Scalar hinge between the position components of two 4-D plan states,
/// active within the safety distance `d_safe`.
FactorNode* add_collision_factor(FactorGraph& owner, VariableNode* a, VariableNode* b,
                                 double d_safe, double sigma);

}  // namespace gbpsim
