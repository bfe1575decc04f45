#include "gbpsim/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gbpsim {
namespace {

MeasFn identity_fn(int d) {
  return [d](const Vec& x) { return Vec(x.head(d)); };
}

JacFn identity_jac(int d) {
  return [d](const Vec&) { return Mat(Mat::Identity(d, d)); };
}

Mat diag4(double a, double b, double c, double d) {
  Mat m = Mat::Zero(4, 4);
  m(0, 0) = a;
  m(1, 1) = b;
  m(2, 2) = c;
  m(3, 3) = d;
  return m;
}

double inv_sq(double sigma) { return 1.0 / (sigma * sigma); }

}  // namespace

TargetChoice select_signal_target(std::span<const double> psi_means) {
  if (psi_means.empty()) return {};
  int best = 0;
  for (int m = 1; m < static_cast<int>(psi_means.size()); ++m)
    if (psi_means[static_cast<size_t>(m)] < psi_means[static_cast<size_t>(best)]) best = m;
  const double u = std::clamp(1.0 - psi_means[static_cast<size_t>(best)], 0.0, 1.0);
  return {best, u};
}

TargetChoice select_exploration_target(std::span<const double> zeta_means,
                                       const env::SignalField& field, const Eigen::Vector2d& p0,
                                       double explored_threshold, std::mt19937_64& rng,
                                       int current) {
  const int n = static_cast<int>(zeta_means.size());
  // Stay committed to a destination that is still unexplored. Re-selecting
  // from scratch on every tick lets a robot sitting midway between two
  // equidistant frontier regions flip its goal back and forth and hover at
  // the midpoint without ever reaching either one.
  if (current >= 0 && current < n && zeta_means[static_cast<size_t>(current)] < explored_threshold)
    return {current, 1.0};
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int m = 0; m < static_cast<int>(zeta_means.size()); ++m) {
    if (zeta_means[static_cast<size_t>(m)] >= explored_threshold) continue;
    const double d2 = (field.center(m) - p0).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = m;
    }
  }
  if (best < 0) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(zeta_means.size()) - 1);
    best = pick(rng);
  }
  return {best, 1.0};
}

// ---- InfoLayer --------------------------------------------------------------

InfoLayer::InfoLayer(const env::SignalField& field, const StackParams& params)
    : field_(&field), p_(params) {
  const int n = field.n_regions();
  vars_.reserve(static_cast<size_t>(n));
  sensors_.assign(static_cast<size_t>(n), nullptr);
  count_.assign(static_cast<size_t>(n), 0);
  psi_sum_.assign(static_cast<size_t>(n), 0.0);

  const Mat prior = diag4(inv_sq(p_.sigma_pos), inv_sq(p_.sigma_pos), p_.prior_state_precision,
                          p_.prior_state_precision);
  for (int m = 0; m < n; ++m) {
    Vec z(4);
    z << field.center(m).x(), field.center(m).y(), 1.0, 0.0;
    auto* v = graph_.add_variable(4, z);
    v->set_active(false);
    vars_.push_back(v);
    graph_.add_factor({v}, identity_fn(4), identity_jac(4), z, prior, {.linear = true});
  }
  graph_.iterate(1);  // beliefs start at the priors, not empty
}

void InfoLayer::apply_measurement(const env::Sample& s) {
  if (s.region < 0 || s.region >= n_regions())
    throw std::invalid_argument("region outside environment");
  const auto m = static_cast<size_t>(s.region);
  ++count_[m];
  psi_sum_[m] += s.psi;

  Vec z(4);
  z << s.position.x(), s.position.y(), psi_sum_[m] / count_[m], 1.0;
  const double psi_prec = count_[m] * inv_sq(std::max(p_.sigma_psi, 1e-5));
  const Mat lam = diag4(inv_sq(p_.sigma_pos), inv_sq(p_.sigma_pos), psi_prec,
                        inv_sq(p_.sigma_zeta));
  if (sensors_[m] == nullptr) {
    sensors_[m] =
        graph_.add_factor({vars_[m]}, identity_fn(4), identity_jac(4), z, lam, {.linear = true});
  } else {
    sensors_[m]->set_noise(lam);
    sensors_[m]->set_observation(z);
  }
}

void InfoLayer::set_activation(const Eigen::Vector2d& pos, double radius) {
  for (auto* v : vars_) v->set_active(false);
  for (int m : field_->regions_within(pos, radius))
    vars_[static_cast<size_t>(m)]->set_active(true);
}

void InfoLayer::snapshot(std::vector<double>& psi, std::vector<double>& zeta) const {
  psi.resize(vars_.size());
  zeta.resize(vars_.size());
  for (size_t m = 0; m < vars_.size(); ++m) {
    psi[m] = vars_[m]->estimate()(2);
    zeta[m] = vars_[m]->estimate()(3);
  }
}

// ---- GoalLayer --------------------------------------------------------------

GoalLayer::GoalLayer(const Eigen::Vector2d& init, const StackParams& params) : p_(params) {
  Vec e(2);
  e << init.x(), init.y();
  var_ = graph_.add_variable(2, e);
  const Mat silent = Mat::Zero(2, 2);
  signal_ = graph_.add_factor({var_}, identity_fn(2), identity_jac(2), e, silent, {.linear = true});
  explore_ =
      graph_.add_factor({var_}, identity_fn(2), identity_jac(2), e, silent, {.linear = true});
}

void GoalLayer::set_pulls(const Eigen::Vector2d& signal_center, double signal_strength,
                          const Eigen::Vector2d& explore_center, double explore_strength) {
  const auto apply = [](FactorNode* f, const Eigen::Vector2d& c, double u, double sigma) {
    const double prec = (u / sigma) * (u / sigma);
    Vec z(2);
    z << c.x(), c.y();
    f->set_noise(Mat(prec * Mat::Identity(2, 2)));
    f->set_observation(z);
  };
  apply(signal_, signal_center, signal_strength, p_.sigma_signal);
  apply(explore_, explore_center, explore_strength, p_.sigma_explore);
}

void GoalLayer::project_into(double d_world) {
  const Eigen::Vector2d mu = mean();
  const Eigen::Vector2d clamped{std::clamp(mu.x(), 0.0, d_world),
                                std::clamp(mu.y(), 0.0, d_world)};
  if (clamped != mu) {
    Vec z(2);
    z << clamped.x(), clamped.y();
    var_->force_mean(z);
  }
}

// ---- PlanLayer --------------------------------------------------------------

PlanLayer::PlanLayer(const Eigen::Vector2d& pos, const StackParams& params) : p_(params) {
  if (p_.horizon_states < 2) throw std::invalid_argument("horizon needs at least two states");
  Vec x0(4);
  x0 << pos.x(), pos.y(), 0.0, 0.0;
  for (int t = 0; t < p_.horizon_states; ++t) vars_.push_back(graph_.add_variable(4, x0));
  for (int t = 0; t + 1 < p_.horizon_states; ++t)
    add_dynamics_factor(graph_, vars_[static_cast<size_t>(t)], vars_[static_cast<size_t>(t) + 1],
                        p_.plan_dt, p_.sigma_dynamics);

  const Mat pose_lam = Mat(inv_sq(p_.sigma_pose_anchor) * Mat::Identity(4, 4));
  pose_anchor_ = graph_.add_factor({vars_.front()}, identity_fn(4), identity_jac(4), x0, pose_lam,
                                   {.linear = true});

  const Mat vel_lam = Mat(p_.horizon_vel_precision * Mat::Identity(2, 2));
  horizon_anchor_ = graph_.add_factor(
      {vars_.back()}, [](const Vec& x) { return Vec(x.tail(2)); },
      [](const Vec&) {
        Mat j = Mat::Zero(2, 4);
        j(0, 2) = 1.0;
        j(1, 3) = 1.0;
        return j;
      },
      Vec(Vec::Zero(2)), vel_lam, {.linear = true});
}

Eigen::Vector2d PlanLayer::exec_velocity() const {
  const Vec& x1 = vars_[1]->estimate();
  Eigen::Vector2d v{x1(2), x1(3)};
  const double n = v.norm();
  if (n > p_.v_max) v *= p_.v_max / n;
  return v;
}

void PlanLayer::re_anchor(const Vec& pose) {
  pose_anchor_->set_observation(pose);
  vars_.front()->force_mean(pose);
}

void PlanLayer::aim(const Eigen::Vector2d& goal) {
  const Vec& h = vars_.back()->estimate();
  const Eigen::Vector2d delta = goal - Eigen::Vector2d{h(0), h(1)};
  Vec z = Vec::Zero(2);
  const double n = delta.norm();
  if (n >= 1e-6) {
    z(0) = p_.v_max * delta.x() / n;
    z(1) = p_.v_max * delta.y() / n;
  }
  horizon_anchor_->set_observation(z);
}

// ---- cross-robot factors -----------------------------------------------------

FactorNode* add_consensus_factor(FactorGraph& owner, VariableNode* a, VariableNode* b,
                                 double sigma) {
  if (a->dim() != b->dim()) throw std::invalid_argument("dimension mismatch");
  const int d = a->dim();
  MeasFn h = [d](const Vec& x) { return Vec(x.head(d) - x.tail(d)); };
  JacFn jac = [d](const Vec&) {
    Mat j(d, 2 * d);
    j.leftCols(d) = Mat::Identity(d, d);
    j.rightCols(d) = -Mat::Identity(d, d);
    return j;
  };
  return owner.add_factor({a, b}, std::move(h), std::move(jac), Vec(Vec::Zero(d)),
                          Mat(inv_sq(sigma) * Mat::Identity(d, d)),
                          {.linear = true, .requires_active_endpoints = true});
}

namespace {

// Shared hinge: 1 - |pa - pb| / range inside the range, silent outside. The
// positions sit at `off_a`/`off_b` inside the stacked state.
MeasFn hinge_fn(double range, int off_a, int off_b) {
  return [range, off_a, off_b](const Vec& x) {
    const double n = (x.segment(off_a, 2) - x.segment(off_b, 2)).norm();
    Vec out(1);
    out(0) = n < range ? 1.0 - n / range : 0.0;
    return out;
  };
}

JacFn hinge_jac(double range, int off_a, int off_b, int total) {
  return [range, off_a, off_b, total](const Vec& x) {
    Mat j = Mat::Zero(1, total);
    const Eigen::Vector2d delta = x.segment(off_a, 2) - x.segment(off_b, 2);
    const double n = delta.norm();
    if (n > 0.0 && n < range) {
      const double guarded = std::max(n, 1e-6 * range);
      const Eigen::RowVector2d row = -delta.transpose() / (range * guarded);
      j(0, off_a) = row(0);
      j(0, off_a + 1) = row(1);
      j(0, off_b) = -row(0);
      j(0, off_b + 1) = -row(1);
    }
    return j;
  };
}

}  // namespace

FactorNode* add_goal_separation_factor(FactorGraph& owner, VariableNode* a, VariableNode* b,
                                       double radius, double sigma) {
  if (a->dim() != 2 || b->dim() != 2) throw std::invalid_argument("dimension mismatch");
  return owner.add_factor({a, b}, hinge_fn(radius, 0, 2), hinge_jac(radius, 0, 2, 4),
                          Vec(Vec::Zero(1)), Mat(inv_sq(sigma) * Mat::Identity(1, 1)));
}

FactorNode* add_collision_factor(FactorGraph& owner, VariableNode* a, VariableNode* b,
                                 double d_safe, double sigma) {
  if (a->dim() != 4 || b->dim() != 4) throw std::invalid_argument("dimension mismatch");
  return owner.add_factor({a, b}, hinge_fn(d_safe, 0, 4), hinge_jac(d_safe, 0, 4, 8),
                          Vec(Vec::Zero(1)), Mat(inv_sq(sigma) * Mat::Identity(1, 1)));
}

FactorNode* add_dynamics_factor(FactorGraph& owner, VariableNode* a, VariableNode* b, double dt,
                                double sigma_d, double noise_dt) {
  if (a->dim() != 4 || b->dim() != 4) throw std::invalid_argument("dimension mismatch");
  Mat phi = Mat::Identity(4, 4);
  phi(0, 2) = dt;
  phi(1, 3) = dt;
  MeasFn h = [phi](const Vec& x) { return Vec(x.tail(4) - phi * x.head(4)); };
  JacFn jac = [phi](const Vec&) {
    Mat j(4, 8);
    j.leftCols(4) = -phi;
    j.rightCols(4) = Mat::Identity(4, 4);
    return j;
  };

  const double ndt = noise_dt > 0.0 ? noise_dt : dt;
  if (!(ndt > 0.0)) throw std::invalid_argument("transition needs a positive noise step");
  const double s2 = sigma_d * sigma_d;
  const double q11 = 12.0 / (s2 * ndt * ndt * ndt);
  const double q12 = -6.0 / (s2 * ndt * ndt);
  const double q22 = 4.0 / (s2 * ndt);
  Mat lam = Mat::Zero(4, 4);
  lam(0, 0) = lam(1, 1) = q11;
  lam(2, 2) = lam(3, 3) = q22;
  lam(0, 2) = lam(2, 0) = q12;
  lam(1, 3) = lam(3, 1) = q12;
  return owner.add_factor({a, b}, std::move(h), std::move(jac), Vec(Vec::Zero(4)), lam,
                          {.linear = true});
}

}  // namespace gbpsim
