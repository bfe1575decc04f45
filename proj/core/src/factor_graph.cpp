#include "gbpsim/factor_graph.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <utility>

namespace gbpsim {

// ---- VariableNode ----------------------------------------------------------

VariableNode::VariableNode(std::uint32_t id, int dim, Vec estimate)
    : id_(id), dim_(dim), belief_(dim), memory_(dim), estimate_(std::move(estimate)) {
  if (dim_ <= 0 || dim_ > kMaxDim || estimate_.size() != dim_)
    throw std::invalid_argument("dimension mismatch");
}

void VariableNode::set_estimate(const Vec& x) {
  if (x.size() != dim_) throw std::invalid_argument("dimension mismatch");
  estimate_ = x;
}

void VariableNode::recompute_belief(bool check_finite) {
  belief_ = memory_;
  for (const auto& [f, msg] : inbox_) belief_ *= msg;
  if (check_finite && (!belief_.eta().allFinite() || !belief_.lambda().allFinite()))
    throw std::runtime_error("non-finite belief");
  if (tracks_estimate_) {
    Eigen::LLT<Mat> llt(belief_.lambda());
    if (llt.info() == Eigen::Success) {
      Vec mu = llt.solve(belief_.eta());
      if (mu.allFinite()) estimate_ = std::move(mu);
    }
  }
}

CanonicalGaussian VariableNode::to_factor(const FactorNode* f) const {
  const CanonicalGaussian* s = slot(f);
  if (s == nullptr) throw std::invalid_argument("unknown factor");
  return quotient(belief_, *s);
}

void VariableNode::absorb(const CanonicalGaussian& g) {
  memory_ *= g;
  update_belief();
}

void VariableNode::deduct(const CanonicalGaussian& g) {
  memory_ /= g;
  update_belief();
}

void VariableNode::force_mean(const Vec& mu) {
  if (mu.size() != dim_) throw std::invalid_argument("dimension mismatch");
  belief_ = CanonicalGaussian(Vec(belief_.lambda() * mu), Mat(belief_.lambda()));
  if (tracks_estimate_) estimate_ = mu;
}

void VariableNode::attach(const FactorNode* f) {
  if (slot(f) != nullptr) throw std::invalid_argument("factor already attached");
  inbox_.emplace_back(f, CanonicalGaussian(dim_));
}

void VariableNode::detach(const FactorNode* f, bool absorb_message) {
  auto it = std::find_if(inbox_.begin(), inbox_.end(),
                         [f](const auto& e) { return e.first == f; });
  if (it == inbox_.end()) return;
  if (absorb_message) memory_ *= it->second;
  inbox_.erase(it);
  recompute_belief(false);  // detach runs from destructors and must not throw
}

CanonicalGaussian* VariableNode::slot(const FactorNode* f) {
  for (auto& e : inbox_)
    if (e.first == f) return &e.second;
  return nullptr;
}

const CanonicalGaussian* VariableNode::slot(const FactorNode* f) const {
  for (const auto& e : inbox_)
    if (e.first == f) return &e.second;
  return nullptr;
}

// ---- FactorNode ------------------------------------------------------------

FactorNode::FactorNode(std::uint32_t id, std::vector<VariableNode*> vars, MeasFn h, JacFn jac,
                       Vec z, Mat lambda_s, FactorOptions opts)
    : id_(id),
      vars_(std::move(vars)),
      h_(std::move(h)),
      jac_(std::move(jac)),
      z_(std::move(z)),
      lambda_s_(std::move(lambda_s)),
      linear_(opts.linear),
      requires_active_endpoints_(opts.requires_active_endpoints) {
  if (vars_.empty()) throw std::invalid_argument("factor needs at least one variable");
  offset_.reserve(vars_.size());
  for (const auto* v : vars_) {
    offset_.push_back(total_dim_);
    total_dim_ += v->dim();
  }
  if (total_dim_ > kMaxDim) throw std::invalid_argument("joint block exceeds engine cap");
  if (lambda_s_.rows() != z_.size() || lambda_s_.cols() != z_.size())
    throw std::invalid_argument("dimension mismatch");
  lin_point_ = stacked_estimates();
  linearize_at(lin_point_);
  inbox_.assign(vars_.size(), CanonicalGaussian(0));
  for (size_t k = 0; k < vars_.size(); ++k) {
    inbox_[k] = CanonicalGaussian(vars_[k]->dim());
    vars_[k]->attach(this);
  }
  attached_ = true;
}

FactorNode::~FactorNode() {
  if (attached_) detach(false);
}

int FactorNode::slot_of(const VariableNode* v) const {
  for (size_t k = 0; k < vars_.size(); ++k)
    if (vars_[k] == v) return static_cast<int>(k);
  throw std::invalid_argument("unknown variable");
}

void FactorNode::set_observation(Vec z) {
  if (z.size() != z_.size()) throw std::invalid_argument("dimension mismatch");
  z_ = std::move(z);
  linearize_at(lin_point_);
}

void FactorNode::set_noise(Mat lambda_s) {
  if (lambda_s.rows() != z_.size() || lambda_s.cols() != z_.size())
    throw std::invalid_argument("dimension mismatch");
  lambda_s_ = std::move(lambda_s);
  linearize_at(lin_point_);
}

void FactorNode::relinearize() {
  lin_point_ = stacked_estimates();
  linearize_at(lin_point_);
}

Vec FactorNode::stacked_estimates() const {
  Vec x0(total_dim_);
  for (size_t k = 0; k < vars_.size(); ++k)
    x0.segment(offset_[k], vars_[k]->dim()) = vars_[k]->estimate();
  return x0;
}

void FactorNode::linearize_at(const Vec& x0) {
  const Mat j = jac_(x0);
  const Vec r = z_ - h_(x0);
  if (j.cols() != total_dim_ || j.rows() != z_.size())
    throw std::invalid_argument("dimension mismatch");
  if (!j.allFinite() || !r.allFinite()) throw std::runtime_error("factor evaluation failed");
  const Mat jt_l = j.transpose() * lambda_s_;
  likelihood_ = CanonicalGaussian(Vec(jt_l * (j * x0 + r)), Mat(jt_l * j));

  // Difference-style pairwise factors (consensus) produce a likelihood whose
  // four blocks are all diagonal; their marginals reduce to elementwise Schur
  // complements, which dominates the fleet-scale message budget.
  diag_pairwise_ = false;
  if (vars_.size() == 2 && vars_[0]->dim() == vars_[1]->dim()) {
    const int d = vars_[0]->dim();
    const Mat& l = likelihood_.lambda();
    bool structured = true;
    for (int r2 = 0; r2 < total_dim_ && structured; ++r2)
      for (int c2 = 0; c2 < total_dim_; ++c2)
        if (r2 != c2 && std::abs(r2 - c2) != d && l(r2, c2) != 0.0) {
          structured = false;
          break;
        }
    diag_pairwise_ = structured;
  }
}

namespace {

bool is_diagonal(const Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (r != c && m(r, c) != 0.0) return false;
  return true;
}

}  // namespace

double FactorNode::energy() const {
  const Vec r = z_ - h_(stacked_estimates());
  return 0.5 * double(r.transpose() * lambda_s_ * r);
}

CanonicalGaussian FactorNode::compute_message(int slot, IterationStats* stats) const {
  const auto k = static_cast<size_t>(slot);
  const int dim_k = vars_[k]->dim();
  if (likelihood_.zero()) return CanonicalGaussian(dim_k);
  if (vars_.size() == 1) return likelihood_;
  if (diag_pairwise_) {
    const size_t o = 1 - k;
    if (is_diagonal(inbox_[o].lambda())) {
      const Mat& l = likelihood_.lambda();
      const Vec& e = likelihood_.eta();
      const int oa = offset_[k], ob = offset_[o];
      double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
      for (int i = 0; i < dim_k; ++i) {
        const double mbb = l(ob + i, ob + i) + inbox_[o].lambda()(i, i);
        dmax = std::max(dmax, std::abs(mbb));
        dmin = std::min(dmin, std::abs(mbb));
      }
      if (!(dmax > 0.0) || dmin <= 1e-12 * std::max(dmax, 1.0)) {
        if (stats != nullptr) ++stats->singular_marginalizations;
        return CanonicalGaussian(dim_k);
      }
      Vec eta(dim_k);
      Mat lam = Mat::Zero(dim_k, dim_k);
      for (int i = 0; i < dim_k; ++i) {
        const double mab = l(oa + i, ob + i);
        const double mbb = l(ob + i, ob + i) + inbox_[o].lambda()(i, i);
        lam(i, i) = l(oa + i, oa + i) - mab * mab / mbb;
        eta(i) = e(oa + i) - mab * (e(ob + i) + inbox_[o].eta()(i)) / mbb;
      }
      return CanonicalGaussian(std::move(eta), std::move(lam));
    }
  }
  CanonicalGaussian joint = likelihood_;
  for (size_t j = 0; j < vars_.size(); ++j)
    if (j != k) joint.add_block(offset_[j], inbox_[j]);
  auto msg = try_marginalize_block(joint, offset_[k], dim_k);
  if (!msg) {
    if (stats != nullptr) ++stats->singular_marginalizations;
    return CanonicalGaussian(dim_k);
  }
  return *std::move(msg);
}

CanonicalGaussian FactorNode::message_to(int slot) const {
  if (slot < 0 || slot >= static_cast<int>(vars_.size()))
    throw std::invalid_argument("unknown variable");
  return compute_message(slot, nullptr);
}

void FactorNode::exchange(double beta, IterationStats& stats) {
  for (size_t k = 0; k < vars_.size(); ++k) {
    CanonicalGaussian msg = compute_message(static_cast<int>(k), &stats);
    CanonicalGaussian* s = vars_[k]->slot(this);
    s->mix_from(msg, beta);
    ++stats.messages;
  }
}

void FactorNode::collect() {
  for (size_t k = 0; k < vars_.size(); ++k) inbox_[k] = vars_[k]->to_factor(this);
}

void FactorNode::detach(bool absorb_into_variables) {
  if (!attached_) return;
  for (auto* v : vars_) v->detach(this, absorb_into_variables);
  attached_ = false;
}

// ---- iteration -------------------------------------------------------------

bool factor_participates(const FactorNode& f) {
  if (!f.active()) return false;
  if (!f.requires_active_endpoints()) return true;
  for (const auto* v : f.variables())
    if (!v->active()) return false;
  return true;
}

IterationStats iterate(std::span<FactorNode* const> factors,
                       std::span<VariableNode* const> variables, int rounds,
                       IterateOptions opts) {
  IterationStats stats;
  for (int r = 0; r < rounds; ++r) {
    for (auto* f : factors)
      if (!f->linear() && factor_participates(*f)) f->relinearize();
    for (auto* f : factors)
      if (factor_participates(*f)) f->exchange(opts.beta, stats);
    for (auto* v : variables) v->update_belief();
    for (auto* f : factors)
      if (factor_participates(*f)) f->collect();
  }
  return stats;
}

// ---- FactorGraph -----------------------------------------------------------

VariableNode* FactorGraph::add_variable(int dim, Vec estimate) {
  variables_.push_back(std::make_unique<VariableNode>(next_variable_id_++, dim,
                                                      std::move(estimate)));
  vptrs_.push_back(variables_.back().get());
  return vptrs_.back();
}

FactorNode* FactorGraph::add_factor(std::vector<VariableNode*> vars, MeasFn h, JacFn jac, Vec z,
                                    Mat lambda_s, FactorOptions opts) {
  factors_.push_back(std::make_unique<FactorNode>(next_factor_id_++, std::move(vars),
                                                  std::move(h), std::move(jac), std::move(z),
                                                  std::move(lambda_s), opts));
  fptrs_.push_back(factors_.back().get());
  return fptrs_.back();
}

void FactorGraph::remove_factor(FactorNode* f, Disposal disposal) {
  f->detach(disposal == Disposal::kAbsorb);
  auto it = std::find_if(factors_.begin(), factors_.end(),
                         [f](const auto& p) { return p.get() == f; });
  if (it == factors_.end()) throw std::invalid_argument("unknown factor");
  factors_.erase(it);
  fptrs_.erase(std::find(fptrs_.begin(), fptrs_.end(), f));
}

IterationStats FactorGraph::iterate(int rounds, IterateOptions opts) {
  IterationStats s = gbpsim::iterate(fptrs_, vptrs_, rounds, opts);
  stats_ += s;
  return s;
}

double FactorGraph::energy() const {
  double e = 0.0;
  for (const auto* f : fptrs_)
    if (f->active()) e += f->energy();
  return e;
}

// ---- message framing -------------------------------------------------------

std::vector<std::uint8_t> to_bytes(const Message& m) {
  auto payload = to_bytes(m.payload);
  std::vector<std::uint8_t> out(2 * sizeof(std::uint32_t) + payload.size());
  std::memcpy(out.data(), &m.from, sizeof(std::uint32_t));
  std::memcpy(out.data() + sizeof(std::uint32_t), &m.to, sizeof(std::uint32_t));
  std::memcpy(out.data() + 2 * sizeof(std::uint32_t), payload.data(), payload.size());
  return out;
}

Message message_from_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 * sizeof(std::uint32_t))
    throw std::invalid_argument("truncated message frame");
  Message m;
  std::memcpy(&m.from, bytes.data(), sizeof(std::uint32_t));
  std::memcpy(&m.to, bytes.data() + sizeof(std::uint32_t), sizeof(std::uint32_t));
  m.payload = gaussian_from_bytes(bytes.subspan(2 * sizeof(std::uint32_t)));
  return m;
}

}  // namespace gbpsim
