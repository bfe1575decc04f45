#pragma once

#include <array>
#include <cstdint>

namespace gbpsim::env {

// Classic 2-D gradient noise with a seeded permutation table. The shuffle is
// hand-rolled (splitmix64 + Fisher-Yates) so the table, and therefore every
// generated field, is identical across standard libraries and platforms.
class PerlinNoise {
 public:
  explicit PerlinNoise(std::uint64_t seed);

  // Single octave, roughly in [-1, 1], zero at integer lattice points.
  double noise(double x, double y) const;

  // Octave sum with geometric amplitude falloff, normalized back to ~[-1, 1].
  double fractal(double x, double y, int octaves, double persistence) const;

 private:
  std::array<std::uint8_t, 512> perm_{};
};

}  // namespace gbpsim::env
