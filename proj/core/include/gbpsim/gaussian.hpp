#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace gbpsim {

// Largest joint block the engine ever forms: two 4-dof variables side by side.
// Capping the Eigen types here keeps every message computation heap-free.
inline constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

/// Gaussian in canonical (information) form: lambda = sigma^-1, eta = lambda * mu.
/// The all-zero state is valid and means "no information yet". lambda is kept
/// symmetric; transient non-positive-definite states are allowed and only
/// rejected when moments are actually read.
class CanonicalGaussian {
 public:
  CanonicalGaussian() = default;
  explicit CanonicalGaussian(int dim);
  CanonicalGaussian(Vec eta, Mat lambda);  // symmetrizes lambda

  static CanonicalGaussian from_moments(const Vec& mu, const Mat& sigma);

  [[nodiscard]] int dim() const { return static_cast<int>(eta_.size()); }
  [[nodiscard]] const Vec& eta() const { return eta_; }
  [[nodiscard]] const Mat& lambda() const { return lambda_; }
  [[nodiscard]] bool zero() const;

  /// (mu, sigma); throws std::runtime_error("belief not yet informative")
  /// unless lambda is positive-definite.
  [[nodiscard]] std::pair<Vec, Mat> moments() const;
  [[nodiscard]] Vec mean() const;
  [[nodiscard]] bool informative() const;  // lambda positive-definite

  CanonicalGaussian& operator*=(const CanonicalGaussian& rhs);
  CanonicalGaussian& operator/=(const CanonicalGaussian& rhs);

  /// Adds g onto the sub-block starting at `offset` (joint assembly).
  void add_block(int offset, const CanonicalGaussian& g);

  /// Damped in-place update: this = (1 - beta) * fresh + beta * this.
  void mix_from(const CanonicalGaussian& fresh, double beta);

 private:
  Vec eta_;
  Mat lambda_;
};

[[nodiscard]] CanonicalGaussian product(const CanonicalGaussian& a, const CanonicalGaussian& b);
[[nodiscard]] CanonicalGaussian quotient(const CanonicalGaussian& a, const CanonicalGaussian& b);

/// Marginal onto `keep` (indices into [0, dim)); the remaining block is
/// eliminated by Schur complement. Throws std::runtime_error
/// ("unconstrained marginalization") when the eliminated block is singular.
[[nodiscard]] CanonicalGaussian marginalize(const CanonicalGaussian& g, std::span<const int> keep);

/// Non-throwing variant: nullopt on a singular eliminated block. Loopy
/// message passing degrades such messages to zero information and keeps going.
[[nodiscard]] std::optional<CanonicalGaussian> try_marginalize(const CanonicalGaussian& g,
                                                               std::span<const int> keep);

/// Contiguous keep block [offset, offset + len); the message hot path.
[[nodiscard]] std::optional<CanonicalGaussian> try_marginalize_block(const CanonicalGaussian& g,
                                                                     int offset, int len);

/// Payload layout: int32 dim, dim doubles (eta), dim*dim doubles (lambda,
/// row-major), native endianness.
[[nodiscard]] std::vector<std::uint8_t> to_bytes(const CanonicalGaussian& g);
[[nodiscard]] CanonicalGaussian gaussian_from_bytes(std::span<const std::uint8_t> bytes);

}  // namespace gbpsim
