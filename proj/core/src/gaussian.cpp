#include "gbpsim/gaussian.hpp"

#include <Eigen/Cholesky>

#include <cstring>
#include <stdexcept>

namespace gbpsim {

namespace {

void require_same_dim(const CanonicalGaussian& a, const CanonicalGaussian& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("dimension mismatch");
}

}  // namespace

CanonicalGaussian::CanonicalGaussian(int dim)
    : eta_(Vec::Zero(dim)), lambda_(Mat::Zero(dim, dim)) {}

CanonicalGaussian::CanonicalGaussian(Vec eta, Mat lambda)
    : eta_(std::move(eta)), lambda_(std::move(lambda)) {
  if (lambda_.rows() != eta_.size() || lambda_.cols() != eta_.size())
    throw std::invalid_argument("dimension mismatch");
  lambda_ = ((lambda_ + lambda_.transpose()) * 0.5).eval();
}

CanonicalGaussian CanonicalGaussian::from_moments(const Vec& mu, const Mat& sigma) {
  if (sigma.rows() != mu.size() || sigma.cols() != mu.size())
    throw std::invalid_argument("dimension mismatch");
  Eigen::LLT<Mat> llt(sigma);
  if (llt.info() != Eigen::Success) throw std::runtime_error("non-invertible covariance");
  Mat lambda = llt.solve(Mat::Identity(mu.size(), mu.size()));
  Vec eta = llt.solve(mu);
  if (!lambda.allFinite() || !eta.allFinite())
    throw std::runtime_error("non-invertible covariance");
  return CanonicalGaussian(std::move(eta), std::move(lambda));
}

bool CanonicalGaussian::zero() const { return eta_.isZero(0.0) && lambda_.isZero(0.0); }

bool CanonicalGaussian::informative() const {
  if (dim() == 0 || !lambda_.allFinite()) return false;
  Eigen::LLT<Mat> llt(lambda_);
  return llt.info() == Eigen::Success;
}

std::pair<Vec, Mat> CanonicalGaussian::moments() const {
  Eigen::LLT<Mat> llt(lambda_);
  if (dim() == 0 || !lambda_.allFinite() || llt.info() != Eigen::Success)
    throw std::runtime_error("belief not yet informative");
  Mat sigma = llt.solve(Mat::Identity(dim(), dim()));
  Vec mu = llt.solve(eta_);
  if (!sigma.allFinite() || !mu.allFinite())
    throw std::runtime_error("belief not yet informative");
  return {std::move(mu), std::move(sigma)};
}

Vec CanonicalGaussian::mean() const {
  Eigen::LLT<Mat> llt(lambda_);
  if (dim() == 0 || !lambda_.allFinite() || llt.info() != Eigen::Success)
    throw std::runtime_error("belief not yet informative");
  Vec mu = llt.solve(eta_);
  if (!mu.allFinite()) throw std::runtime_error("belief not yet informative");
  return mu;
}

CanonicalGaussian& CanonicalGaussian::operator*=(const CanonicalGaussian& rhs) {
  require_same_dim(*this, rhs);
  eta_ += rhs.eta_;
  lambda_ += rhs.lambda_;
  return *this;
}

CanonicalGaussian& CanonicalGaussian::operator/=(const CanonicalGaussian& rhs) {
  require_same_dim(*this, rhs);
  eta_ -= rhs.eta_;
  lambda_ -= rhs.lambda_;
  return *this;
}

void CanonicalGaussian::add_block(int offset, const CanonicalGaussian& g) {
  if (offset < 0 || offset + g.dim() > dim()) throw std::invalid_argument("dimension mismatch");
  eta_.segment(offset, g.dim()) += g.eta_;
  lambda_.block(offset, offset, g.dim(), g.dim()) += g.lambda_;
}

void CanonicalGaussian::mix_from(const CanonicalGaussian& fresh, double beta) {
  require_same_dim(*this, fresh);
  if (beta == 0.0) {
    eta_ = fresh.eta_;
    lambda_ = fresh.lambda_;
    return;
  }
  eta_ = (1.0 - beta) * fresh.eta_ + beta * eta_;
  lambda_ = (1.0 - beta) * fresh.lambda_ + beta * lambda_;
}

CanonicalGaussian product(const CanonicalGaussian& a, const CanonicalGaussian& b) {
  CanonicalGaussian out = a;
  out *= b;
  return out;
}

CanonicalGaussian quotient(const CanonicalGaussian& a, const CanonicalGaussian& b) {
  CanonicalGaussian out = a;
  out /= b;
  return out;
}

namespace {

struct Partition {
  Vec eta_a, eta_b;
  Mat lam_aa, lam_bb, lam_ba;  // lam_ab = lam_ba^T by symmetry
};

Partition split(const CanonicalGaussian& g, std::span<const int> keep) {
  const int dim = g.dim();
  const int ka = static_cast<int>(keep.size());
  if (ka == 0 || ka > dim) throw std::invalid_argument("invalid keep set");
  std::array<bool, kMaxDim> kept{};
  for (int idx : keep) {
    if (idx < 0 || idx >= dim || kept[static_cast<size_t>(idx)])
      throw std::invalid_argument("invalid keep set");
    kept[static_cast<size_t>(idx)] = true;
  }
  std::array<int, kMaxDim> drop{};
  int kb = 0;
  for (int i = 0; i < dim; ++i)
    if (!kept[static_cast<size_t>(i)]) drop[static_cast<size_t>(kb++)] = i;

  Partition p;
  p.eta_a.resize(ka);
  p.eta_b.resize(kb);
  p.lam_aa.resize(ka, ka);
  p.lam_bb.resize(kb, kb);
  p.lam_ba.resize(kb, ka);
  for (int i = 0; i < ka; ++i) {
    p.eta_a(i) = g.eta()(keep[static_cast<size_t>(i)]);
    for (int j = 0; j < ka; ++j)
      p.lam_aa(i, j) = g.lambda()(keep[static_cast<size_t>(i)], keep[static_cast<size_t>(j)]);
  }
  for (int i = 0; i < kb; ++i) {
    p.eta_b(i) = g.eta()(drop[static_cast<size_t>(i)]);
    for (int j = 0; j < kb; ++j)
      p.lam_bb(i, j) = g.lambda()(drop[static_cast<size_t>(i)], drop[static_cast<size_t>(j)]);
    for (int j = 0; j < ka; ++j)
      p.lam_ba(i, j) = g.lambda()(drop[static_cast<size_t>(i)], keep[static_cast<size_t>(j)]);
  }
  return p;
}

std::optional<CanonicalGaussian> schur_marginal(const CanonicalGaussian& g,
                                                std::span<const int> keep) {
  if (static_cast<int>(keep.size()) == g.dim()) {
    // Nothing eliminated; reorder only if the caller asked for it.
    bool in_order = true;
    for (size_t i = 0; i < keep.size(); ++i)
      if (keep[i] != static_cast<int>(i)) in_order = false;
    if (in_order) return g;
  }
  Partition p = split(g, keep);
  if (p.eta_b.size() == 0) {
    return CanonicalGaussian(std::move(p.eta_a), std::move(p.lam_aa));
  }
  Eigen::LDLT<Mat> ldlt(p.lam_bb);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  const auto& d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(dmax > 0.0) || d.cwiseAbs().minCoeff() <= 1e-12 * std::max(dmax, 1.0))
    return std::nullopt;
  Mat w = ldlt.solve(p.lam_ba);                        // lam_bb^-1 lam_ba
  Mat lam = p.lam_aa - p.lam_ba.transpose() * w;       // Schur complement
  Vec eta = p.eta_a - p.lam_ba.transpose() * ldlt.solve(p.eta_b);
  if (!lam.allFinite() || !eta.allFinite()) return std::nullopt;
  return CanonicalGaussian(std::move(eta), std::move(lam));
}

}  // namespace

CanonicalGaussian marginalize(const CanonicalGaussian& g, std::span<const int> keep) {
  auto m = schur_marginal(g, keep);
  if (!m) throw std::runtime_error("unconstrained marginalization");
  return *std::move(m);
}

std::optional<CanonicalGaussian> try_marginalize(const CanonicalGaussian& g,
                                                 std::span<const int> keep) {
  return schur_marginal(g, keep);
}

std::optional<CanonicalGaussian> try_marginalize_block(const CanonicalGaussian& g, int offset,
                                                       int len) {
  if (offset < 0 || len <= 0 || offset + len > g.dim())
    throw std::invalid_argument("invalid keep set");
  std::array<int, kMaxDim> keep{};
  for (int i = 0; i < len; ++i) keep[static_cast<size_t>(i)] = offset + i;
  return schur_marginal(g, std::span<const int>(keep.data(), static_cast<size_t>(len)));
}

std::vector<std::uint8_t> to_bytes(const CanonicalGaussian& g) {
  const std::int32_t dim = g.dim();
  std::vector<std::uint8_t> out(sizeof(dim) + sizeof(double) * (static_cast<size_t>(dim) +
                                                                static_cast<size_t>(dim) * dim));
  std::uint8_t* p = out.data();
  std::memcpy(p, &dim, sizeof(dim));
  p += sizeof(dim);
  for (int i = 0; i < dim; ++i, p += sizeof(double)) {
    const double v = g.eta()(i);
    std::memcpy(p, &v, sizeof(double));
  }
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j, p += sizeof(double)) {
      const double v = g.lambda()(i, j);
      std::memcpy(p, &v, sizeof(double));
    }
  return out;
}

CanonicalGaussian gaussian_from_bytes(std::span<const std::uint8_t> bytes) {
  std::int32_t dim = 0;
  if (bytes.size() < sizeof(dim)) throw std::invalid_argument("truncated gaussian payload");
  std::memcpy(&dim, bytes.data(), sizeof(dim));
  if (dim < 0 || dim > kMaxDim) throw std::invalid_argument("truncated gaussian payload");
  const size_t need =
      sizeof(dim) + sizeof(double) * (static_cast<size_t>(dim) + static_cast<size_t>(dim) * dim);
  if (bytes.size() != need) throw std::invalid_argument("truncated gaussian payload");
  const std::uint8_t* p = bytes.data() + sizeof(dim);
  Vec eta(dim);
  Mat lambda(dim, dim);
  for (int i = 0; i < dim; ++i, p += sizeof(double)) std::memcpy(&eta(i), p, sizeof(double));
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j, p += sizeof(double)) std::memcpy(&lambda(i, j), p, sizeof(double));
  return CanonicalGaussian(std::move(eta), std::move(lambda));
}

}  // namespace gbpsim
