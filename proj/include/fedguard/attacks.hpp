#pragma once

#include <cstdint>
#include <vector>

#include "fedguard/config.hpp"
#include "fedguard/detector.hpp"
#include "fedguard/rng.hpp"

namespace fedguard {

using AttackSpec = AttackConfig;

struct PoisonResult {
  Dataset data;
  int changed_anchors = 0;  // 0 means the call was a no-op
};

// Relabels every source anchor as target; boxes and objectness untouched.
PoisonResult poison_class(const Dataset& d, int source, int target);

// Shrinks every source box by `shrink` and moves its center uniformly within
// +-jitter_scale*(1-shrink)*w/2 (resp. h/2), clipped to [0,1].
PoisonResult poison_bbox(const Dataset& d, int source, double shrink, Rng& rng, double jitter_scale = 1.0);

// Turns every source anchor into background.
PoisonResult poison_objn(const Dataset& d, int source, int background);

struct RoundPoison {
  Dataset data;
  bool poisoned = false;
  std::vector<std::size_t> sample_indices;  // sorted
};

// Number of samples a gamma-adaptive attacker poisons (round to nearest, ties up).
std::size_t gamma_count(double gamma, std::size_t n);

// Decides whether a malicious client poisons in `round` and returns the data it
// trains on. The skip decision draws from a (client, round) seed. The poisoned
// sample subset and any box jitter draw from a per-client seed, so an attacker
// who poisons applies the same crafted set every time.
RoundPoison effective_poison_for_round(const AttackSpec& spec, int client, int round, const Dataset& clean,
                                       std::uint64_t master_seed, int num_classes);

}  // namespace fedguard
