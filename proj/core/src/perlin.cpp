#include "gbpsim/perlin.hpp"

#include <cmath>
#include <numeric>

namespace gbpsim::env {
namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double lerp(double a, double b, double t) { return a + t * (b - a); }

double grad(std::uint8_t hash, double x, double y) {
  switch (hash & 7u) {
    case 0: return x + y;
    case 1: return x - y;
    case 2: return -x + y;
    case 3: return -x - y;
    case 4: return x;
    case 5: return -x;
    case 6: return y;
    default: return -y;
  }
}

}  // namespace

PerlinNoise::PerlinNoise(std::uint64_t seed) {
  std::array<std::uint8_t, 256> table{};
  std::iota(table.begin(), table.end(), 0);
  std::uint64_t state = seed;
  for (int i = 255; i > 0; --i) {
    const auto j = static_cast<int>(splitmix64(state) % static_cast<std::uint64_t>(i + 1));
    std::swap(table[i], table[j]);
  }
  for (int i = 0; i < 512; ++i) perm_[i] = table[i & 255];
}

double PerlinNoise::noise(double x, double y) const {
  const int xi = static_cast<int>(std::floor(x)) & 255;
  const int yi = static_cast<int>(std::floor(y)) & 255;
  const double xf = x - std::floor(x);
  const double yf = y - std::floor(y);
  const double u = fade(xf);
  const double v = fade(yf);

  const std::uint8_t aa = perm_[perm_[xi] + yi];
  const std::uint8_t ab = perm_[perm_[xi] + yi + 1];
  const std::uint8_t ba = perm_[perm_[xi + 1] + yi];
  const std::uint8_t bb = perm_[perm_[xi + 1] + yi + 1];

  const double x1 = lerp(grad(aa, xf, yf), grad(ba, xf - 1.0, yf), u);
  const double x2 = lerp(grad(ab, xf, yf - 1.0), grad(bb, xf - 1.0, yf - 1.0), u);
  return lerp(x1, x2, v);
}

double PerlinNoise::fractal(double x, double y, int octaves, double persistence) const {
  double total = 0.0, amplitude = 1.0, frequency = 1.0, weight = 0.0;
  for (int o = 0; o < octaves; ++o) {
    total += amplitude * noise(x * frequency, y * frequency);
    weight += amplitude;
    amplitude *= persistence;
    frequency *= 2.0;
  }
  return total / weight;
}

}  // namespace gbpsim::env
