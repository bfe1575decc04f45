#include "gbpsim/environment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "gbpsim/perlin.hpp"

namespace gbpsim::env {

SignalField SignalField::generate(std::uint64_t seed, double d_world, double r_d,
                                  const FieldParams& params) {
  if (!(d_world > 0.0) || !(r_d > 0.0))
    throw std::invalid_argument("world and region sizes must be positive");
  const double ratio = d_world / r_d;
  const int n_side = static_cast<int>(std::lround(ratio));
  if (std::abs(ratio - n_side) > 1e-9 || n_side < 1)
    throw std::invalid_argument("world side must be an integer multiple of the region side");

  SignalField f;
  f.d_world_ = d_world;
  f.r_d_ = r_d;
  f.n_side_ = n_side;
  f.seed_ = seed;
  f.values_.resize(static_cast<std::size_t>(n_side) * n_side);

  const double freq = params.frequency > 0.0 ? params.frequency : 2.0 / d_world;
  PerlinNoise noise(seed);
  for (int m = 0; m < f.n_regions(); ++m) {
    const Eigen::Vector2d c = f.center(m);
    f.values_[static_cast<std::size_t>(m)] =
        noise.fractal(c.x() * freq, c.y() * freq, params.octaves, params.persistence);
  }

  const auto [lo_it, hi_it] = std::minmax_element(f.values_.begin(), f.values_.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi - lo < 1e-12) throw std::runtime_error("degenerate field: no spatial variation");
  for (double& v : f.values_) v = (v - lo) / (hi - lo);
  return f;
}

SignalField SignalField::generate_with_source(std::uint64_t seed, double d_world, double r_d,
                                              double threshold, const FieldParams& params,
                                              int max_attempts) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    SignalField f = generate(seed + static_cast<std::uint64_t>(attempt), d_world, r_d, params);
    if (*std::min_element(f.values_.begin(), f.values_.end()) < threshold) return f;
  }
  throw std::runtime_error("no source region found within the sub-seed budget");
}

Eigen::Vector2d SignalField::center(int m) const {
  const int ix = m % n_side_;
  const int iy = m / n_side_;
  return {(ix + 0.5) * r_d_, (iy + 0.5) * r_d_};
}

int SignalField::nearest_region(const Eigen::Vector2d& pos) const {
  int best = 0;
  double best_d2 = (center(0) - pos).squaredNorm();
  for (int m = 1; m < n_regions(); ++m) {
    const double d2 = (center(m) - pos).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = m;
    }
  }
  return best;
}

std::vector<int> SignalField::regions_within(const Eigen::Vector2d& pos, double radius) const {
  std::vector<int> out;
  const double r2 = radius * radius;
  // scan only the rows/columns the disc can touch
  const auto lo_idx = [&](double v) {
    return std::max(0, static_cast<int>(std::floor((v - radius) / r_d_ - 0.5)));
  };
  const auto hi_idx = [&](double v) {
    return std::min(n_side_ - 1, static_cast<int>(std::ceil((v + radius) / r_d_ - 0.5)));
  };
  for (int iy = lo_idx(pos.y()); iy <= hi_idx(pos.y()); ++iy)
    for (int ix = lo_idx(pos.x()); ix <= hi_idx(pos.x()); ++ix) {
      const int m = iy * n_side_ + ix;
      if ((center(m) - pos).squaredNorm() <= r2) out.push_back(m);
    }
  return out;
}

void SignalField::save(std::ostream& out) const {
  out << d_world_ << ' ' << r_d_ << ' ' << seed_ << '\n';
  char buf[32];
  for (int iy = 0; iy < n_side_; ++iy) {
    for (int ix = 0; ix < n_side_; ++ix) {
      std::snprintf(buf, sizeof buf, "%.6f", values_[static_cast<std::size_t>(iy) * n_side_ + ix]);
      out << buf << (ix + 1 < n_side_ ? ' ' : '\n');
    }
  }
  if (!out) throw std::runtime_error("field write failed");
}

void SignalField::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open field file for writing: " + path);
  save(out);
}

SignalField SignalField::load(std::istream& in) {
  double d_world = 0.0, r_d = 0.0;
  std::uint64_t seed = 0;
  if (!(in >> d_world >> r_d >> seed)) throw std::runtime_error("malformed field header");
  if (!(d_world > 0.0) || !(r_d > 0.0) || !(d_world / r_d > 0.5))
    throw std::runtime_error("malformed field header");

  SignalField f;
  f.d_world_ = d_world;
  f.r_d_ = r_d;
  f.n_side_ = static_cast<int>(std::lround(d_world / r_d));
  f.seed_ = seed;
  f.values_.resize(static_cast<std::size_t>(f.n_side_) * f.n_side_);
  for (double& v : f.values_)
    if (!(in >> v)) throw std::runtime_error("truncated field file");
  return f;
}

SignalField SignalField::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open field file: " + path);
  return load(in);
}

std::vector<Sample> sample(const SignalField& field, const Eigen::Vector2d& pos, double r_s,
                           double sigma_psi, std::mt19937_64& rng) {
  std::vector<Sample> out;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int m : field.regions_within(pos, r_s)) {
    Sample s;
    s.region = m;
    s.psi = field.truth(m) + (sigma_psi > 0.0 ? sigma_psi * noise(rng) : 0.0);
    s.position = field.center(m);
    out.push_back(s);
  }
  return out;
}

}  // namespace gbpsim::env
