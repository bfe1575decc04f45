#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace gbpsim::env {

struct FieldParams {
  int octaves = 4;
  double persistence = 0.5;
  double frequency = 0.0;  // 0 means 2 / d_world
};

// A static scalar field over a square world, discretized into square regions.
// Region m = iy * n_side + ix has its center at ((ix+0.5)r_d, (iy+0.5)r_d).
// Generated values are affinely rescaled so the weakest region reads exactly
// 0 and the strongest exactly 1.
class SignalField {
 public:
  static SignalField generate(std::uint64_t seed, double d_world, double r_d,
                              const FieldParams& params = {});

  // Retries incremented sub-seeds until some region reads below `threshold`.
  // The rescale already pins the minimum to zero, so the first attempt always
  // qualifies; the retry loop guards custom params that skip rescaling later.
  static SignalField generate_with_source(std::uint64_t seed, double d_world, double r_d,
                                          double threshold, const FieldParams& params = {},
                                          int max_attempts = 64);

  double d_world() const { return d_world_; }
  double r_d() const { return r_d_; }
  int n_side() const { return n_side_; }
  int n_regions() const { return n_side_ * n_side_; }
  std::uint64_t seed() const { return seed_; }

  Eigen::Vector2d center(int m) const;
  double truth(int m) const { return values_[static_cast<std::size_t>(m)]; }
  const std::vector<double>& values() const { return values_; }

  int nearest_region(const Eigen::Vector2d& pos) const;

  // Indices of regions whose centers lie within `radius` of `pos`, ascending.
  std::vector<int> regions_within(const Eigen::Vector2d& pos, double radius) const;

  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static SignalField load(std::istream& in);
  static SignalField load_file(const std::string& path);

 private:
  SignalField() = default;

  double d_world_ = 0.0;
  double r_d_ = 0.0;
  int n_side_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> values_;
};

// One reading of a region's value, taken at the region center.
struct Sample {
  int region = -1;
  double psi = 0.0;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
};

// Reads every region within `r_s` of `pos`, in ascending region order, each
// perturbed by independent zero-mean Gaussian noise of spread `sigma_psi`.
std::vector<Sample> sample(const SignalField& field, const Eigen::Vector2d& pos, double r_s,
                           double sigma_psi, std::mt19937_64& rng);

}  // namespace gbpsim::env
