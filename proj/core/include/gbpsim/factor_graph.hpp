#pragma once

#include "gbpsim/gaussian.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace gbpsim {

class FactorNode;

/// One inference variable. Its belief is always the product of the retained
/// memory term and every inbox message; the estimate is the last informative
/// belief mean and doubles as the linearization point while the belief carries
/// no information.
class VariableNode {
 public:
  VariableNode(std::uint32_t id, int dim, Vec estimate);
  VariableNode(const VariableNode&) = delete;
  VariableNode& operator=(const VariableNode&) = delete;

  [[nodiscard]] std::uint32_t id() const { return id_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] const CanonicalGaussian& belief() const { return belief_; }
  [[nodiscard]] const CanonicalGaussian& memory() const { return memory_; }
  [[nodiscard]] const Vec& estimate() const { return estimate_; }
  void set_estimate(const Vec& x);

  [[nodiscard]] bool active() const { return active_; }
  void set_active(bool a) { active_ = a; }
  [[nodiscard]] bool tracks_estimate() const { return tracks_estimate_; }
  void set_tracks_estimate(bool t) { tracks_estimate_ = t; }

  /// belief = memory * prod(inbox); refreshes the estimate when informative.
  /// Throws std::runtime_error("non-finite belief") on NaN/inf.
  void update_belief() { recompute_belief(true); }

  /// Same recomputation without the finiteness check, for teardown paths
  /// that must never throw.
  void recompute_belief(bool check_finite);

  /// Message to f: the product of every inbox message except f's own,
  /// computed as quotient(belief, inbox[f]).
  [[nodiscard]] CanonicalGaussian to_factor(const FactorNode* f) const;

  /// Folds a message into the permanent memory term (knowledge kept after the
  /// factor that produced it is gone) and refreshes the belief.
  void absorb(const CanonicalGaussian& g);

  /// Divides previously absorbed knowledge back out of the memory term, for
  /// when a newer message supersedes a stale one, and refreshes the belief.
  void deduct(const CanonicalGaussian& g);

  [[nodiscard]] int degree() const { return static_cast<int>(inbox_.size()); }

  /// Forces the belief mean (and estimate) to mu without touching precision;
  /// used to project read-out states back into bounds.
  void force_mean(const Vec& mu);

  // Factor-side wiring. attach/detach keep the inbox keyed by factor.
  void attach(const FactorNode* f);
  void detach(const FactorNode* f, bool absorb_message);
  [[nodiscard]] CanonicalGaussian* slot(const FactorNode* f);
  [[nodiscard]] const CanonicalGaussian* slot(const FactorNode* f) const;

 private:
  std::uint32_t id_;
  int dim_;
  CanonicalGaussian belief_;
  CanonicalGaussian memory_;
  Vec estimate_;
  bool active_ = true;
  bool tracks_estimate_ = true;
  std::vector<std::pair<const FactorNode*, CanonicalGaussian>> inbox_;
};

using MeasFn = std::function<Vec(const Vec&)>;
using JacFn = std::function<Mat(const Vec&)>;

struct FactorOptions {
  bool linear = false;                    // constant Jacobian: linearize once
  bool requires_active_endpoints = false; // gated by variable activity flags
};

struct IterationStats {
  std::uint64_t messages = 0;
  std::uint64_t singular_marginalizations = 0;
  IterationStats& operator+=(const IterationStats& o) {
    messages += o.messages;
    singular_marginalizations += o.singular_marginalizations;
    return *this;
  }
};

/// Gaussian observation factor over one or two variables (the engine caps the
/// stacked block at kMaxDim). Holds the cached linearized likelihood
///   lambda_f = J^T lambda_s J,  eta_f = J^T lambda_s (J x0 + z - h(x0))
/// and one inbound message per neighbor slot.
class FactorNode {
 public:
  FactorNode(std::uint32_t id, std::vector<VariableNode*> vars, MeasFn h, JacFn jac, Vec z,
             Mat lambda_s, FactorOptions opts = {});
  ~FactorNode();
  FactorNode(const FactorNode&) = delete;
  FactorNode& operator=(const FactorNode&) = delete;

  [[nodiscard]] std::uint32_t id() const { return id_; }
  [[nodiscard]] std::span<VariableNode* const> variables() const { return vars_; }
  [[nodiscard]] int slot_of(const VariableNode* v) const;
  [[nodiscard]] int slot_offset(int slot) const { return offset_[static_cast<size_t>(slot)]; }
  [[nodiscard]] int total_dim() const { return total_dim_; }

  [[nodiscard]] const Vec& z() const { return z_; }
  [[nodiscard]] const Mat& lambda_s() const { return lambda_s_; }
  [[nodiscard]] Vec eval_h(const Vec& x) const { return h_(x); }
  [[nodiscard]] Mat eval_jac(const Vec& x) const { return jac_(x); }
  [[nodiscard]] const CanonicalGaussian& likelihood() const { return likelihood_; }
  [[nodiscard]] const Vec& lin_point() const { return lin_point_; }
  [[nodiscard]] bool linear() const { return linear_; }

  [[nodiscard]] bool active() const { return active_; }
  void set_active(bool a) { active_ = a; }
  [[nodiscard]] bool requires_active_endpoints() const { return requires_active_endpoints_; }

  /// Replaces z and refreshes the likelihood at the current linearization
  /// point (in-place observation updates: fused measurements, moving anchors).
  void set_observation(Vec z);
  void set_noise(Mat lambda_s);

  /// Relinearizes at the neighbors' current estimates.
  void relinearize();

  /// 0.5 * r^T lambda_s r with r = z - h(estimates).
  [[nodiscard]] double energy() const;

  /// Marginal of (likelihood * inbound messages from the other neighbors)
  /// onto `slot`. Zero information when the eliminated block is singular.
  [[nodiscard]] CanonicalGaussian message_to(int slot) const;

  [[nodiscard]] const CanonicalGaussian& inbound(int slot) const {
    return inbox_[static_cast<size_t>(slot)];
  }

  // One synchronous round, split into phases by iterate():
  void exchange(double beta, IterationStats& stats);  // deliver all messages out
  void collect();                                     // pull variable->factor messages

  /// Detaches from all variables. Consensus-style knowledge can be absorbed
  /// into the variables' memory; coordination constraints are discarded.
  void detach(bool absorb_into_variables);

 private:
  void linearize_at(const Vec& x0);
  [[nodiscard]] Vec stacked_estimates() const;
  [[nodiscard]] CanonicalGaussian compute_message(int slot, IterationStats* stats) const;

  std::uint32_t id_;
  std::vector<VariableNode*> vars_;
  std::vector<int> offset_;
  int total_dim_ = 0;
  MeasFn h_;
  JacFn jac_;
  Vec z_;
  Mat lambda_s_;
  Vec lin_point_;
  CanonicalGaussian likelihood_;
  std::vector<CanonicalGaussian> inbox_;
  bool diag_pairwise_ = false;  // likelihood blocks all diagonal: O(d) marginals
  bool linear_ = false;
  bool active_ = true;
  bool requires_active_endpoints_ = false;
  bool attached_ = false;
};

struct IterateOptions {
  double beta = 0.0;  // message damping: new = (1-beta)*fresh + beta*old
};

[[nodiscard]] bool factor_participates(const FactorNode& f);

/// Synchronous rounds over an arbitrary node set (the sim stitches views that
/// span robot boundaries). Each round: relinearize, all factor->variable
/// messages, all belief updates, all variable->factor messages.
IterationStats iterate(std::span<FactorNode* const> factors,
                       std::span<VariableNode* const> variables, int rounds,
                       IterateOptions opts = {});

/// Owning container for a self-contained graph.
class FactorGraph {
 public:
  enum class Disposal { kAbsorb, kDiscard };

  VariableNode* add_variable(int dim, Vec estimate);
  FactorNode* add_factor(std::vector<VariableNode*> vars, MeasFn h, JacFn jac, Vec z,
                         Mat lambda_s, FactorOptions opts = {});
  void remove_factor(FactorNode* f, Disposal disposal);

  IterationStats iterate(int rounds, IterateOptions opts = {});
  [[nodiscard]] double energy() const;

  [[nodiscard]] const std::vector<VariableNode*>& variable_ptrs() const { return vptrs_; }
  [[nodiscard]] const std::vector<FactorNode*>& factor_ptrs() const { return fptrs_; }
  [[nodiscard]] const IterationStats& stats() const { return stats_; }

 private:
  std::vector<std::unique_ptr<VariableNode>> variables_;
  std::vector<std::unique_ptr<FactorNode>> factors_;
  std::vector<VariableNode*> vptrs_;
  std::vector<FactorNode*> fptrs_;
  IterationStats stats_;
  std::uint32_t next_variable_id_ = 0;
  std::uint32_t next_factor_id_ = 0;
};

/// Directed message frame for mailbox transport and replay files.
struct Message {
  std::uint32_t from = 0;
  std::uint32_t to = 0;
  CanonicalGaussian payload;
};

[[nodiscard]] std::vector<std::uint8_t> to_bytes(const Message& m);
[[nodiscard]] Message message_from_bytes(std::span<const std::uint8_t> bytes);

}  // namespace gbpsim
