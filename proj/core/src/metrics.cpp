#include "gbpsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gbpsim {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::vector<const InfoLayer*> fleet_of(const World& world) {
  std::vector<const InfoLayer*> fleet;
  fleet.reserve(static_cast<std::size_t>(world.n_robots()));
  for (int i = 0; i < world.n_robots(); ++i) fleet.push_back(&world.robot(i).info);
  return fleet;
}

}  // namespace

double coverage(std::span<const InfoLayer* const> fleet, double explored_threshold) {
  if (fleet.empty()) return 0.0;
  double acc = 0.0;
  for (const InfoLayer* info : fleet) {
    int explored = 0;
    for (int m = 0; m < info->n_regions(); ++m)
      if (clamp01(info->zeta_mean(m)) > explored_threshold) ++explored;
    acc += static_cast<double>(explored) / info->n_regions();
  }
  return acc / static_cast<double>(fleet.size());
}

double rms_psi(std::span<const InfoLayer* const> fleet, const env::SignalField& truth) {
  if (fleet.empty()) return 0.0;
  double sq = 0.0;
  std::size_t cells = 0;
  for (const InfoLayer* info : fleet) {
    for (int m = 0; m < info->n_regions(); ++m) {
      const double e = clamp01(info->psi_mean(m)) - truth.truth(m);
      sq += e * e;
      ++cells;
    }
  }
  return std::sqrt(sq / static_cast<double>(cells));
}

bool found_source(const InfoLayer& info, double psi_star, double explored_threshold) {
  for (int m = 0; m < info.n_regions(); ++m)
    if (clamp01(info.psi_mean(m)) <= psi_star && clamp01(info.zeta_mean(m)) > explored_threshold)
      return true;
  return false;
}

bool source_found_by_all(std::span<const InfoLayer* const> fleet, double psi_star,
                         double explored_threshold) {
  if (fleet.empty()) return false;
  for (const InfoLayer* info : fleet)
    if (!found_source(*info, psi_star, explored_threshold)) return false;
  return true;
}

double coverage(const World& world) {
  const auto fleet = fleet_of(world);
  return coverage(fleet, world.config().stack.explored_threshold);
}

double rms_psi(const World& world) {
  const auto fleet = fleet_of(world);
  return rms_psi(fleet, world.field());
}

bool source_found_by_all(const World& world) {
  const auto fleet = fleet_of(world);
  return source_found_by_all(fleet, world.config().psi_star,
                             world.config().stack.explored_threshold);
}

int robots_done(const World& world) {
  int n = 0;
  for (int i = 0; i < world.n_robots(); ++i)
    if (found_source(world.robot(i).info, world.config().psi_star,
                     world.config().stack.explored_threshold))
      ++n;
  return n;
}

}  // namespace gbpsim
