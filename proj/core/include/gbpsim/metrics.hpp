#pragma once

#include "gbpsim/environment.hpp"
#include "gbpsim/layers.hpp"
#include "gbpsim/sim.hpp"

#include <span>

namespace gbpsim {

/// Mean over robots of (regions believed explored) / (total regions).
/// A region counts once its explored-mass mean exceeds the threshold.
double coverage(std::span<const InfoLayer* const> fleet, double explored_threshold = 0.5);

/// Root-mean-square error of the believed signal against the true field,
/// pooled over every (robot, region) cell. Beliefs are clamped to [0, 1].
double rms_psi(std::span<const InfoLayer* const> fleet, const env::SignalField& truth);

/// True when this map contains a region believed explored with signal <= psi_star.
bool found_source(const InfoLayer& info, double psi_star, double explored_threshold = 0.5);

/// True when every robot in the fleet has found the source.
bool source_found_by_all(std::span<const InfoLayer* const> fleet, double psi_star,
                         double explored_threshold = 0.5);

// World-level conveniences.
double coverage(const World& world);
double rms_psi(const World& world);
bool source_found_by_all(const World& world);
int robots_done(const World& world);

}  // namespace gbpsim
