#include "fedguard/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedguard {

PoisonResult poison_class(const Dataset& d, int source, int target) {
  if (source == target) throw std::invalid_argument("source and target must differ");
  PoisonResult r{d, 0};
  for (auto& s : r.data)
    for (auto& a : s.anchors)
      if (a.cls == source) {
        a.cls = target;
        ++r.changed_anchors;
      }
  return r;
}

PoisonResult poison_bbox(const Dataset& d, int source, double shrink, Rng& rng, double jitter_scale) {
  if (!(shrink > 0.0 && shrink <= 1.0)) throw std::invalid_argument("shrink factor must be in (0,1]");
  PoisonResult r{d, 0};
  const double range = jitter_scale * (1.0 - shrink) / 2.0;
  for (auto& s : r.data)
    for (auto& a : s.anchors) {
      if (a.cls != source) continue;
      Box& b = a.box;
      b.cx = std::clamp(b.cx + rng.uniform(-1.0, 1.0) * range * b.w, 0.0, 1.0);
      b.cy = std::clamp(b.cy + rng.uniform(-1.0, 1.0) * range * b.h, 0.0, 1.0);
      b.w *= shrink;
      b.h *= shrink;
      ++r.changed_anchors;
    }
  return r;
}

PoisonResult poison_objn(const Dataset& d, int source, int background) {
  PoisonResult r{d, 0};
  for (auto& s : r.data)
    for (auto& a : s.anchors)
      if (a.cls == source) {
        a.cls = background;
        a.objn = false;
        a.box = {};
        ++r.changed_anchors;
      }
  return r;
}

std::size_t gamma_count(double gamma, std::size_t n) {
  return static_cast<std::size_t>(std::floor(gamma * static_cast<double>(n) + 0.5));
}

RoundPoison effective_poison_for_round(const AttackSpec& spec, int client, int round, const Dataset& clean,
                                       std::uint64_t master_seed, int num_classes) {
  RoundPoison out{clean, false, {}};
  if (spec.poison_type == PoisonType::None || round < spec.onset_round) return out;
  if (spec.beta > 0.0) {
    Rng skip(derive_seed(master_seed, "attack-skip", client, round));
    if (skip.bernoulli(spec.beta)) return out;
  }

  Rng craft(derive_seed(master_seed, "attack-craft", client, 0));
  auto idx = craft.sample_without_replacement(clean.size(), gamma_count(spec.gamma, clean.size()));
  std::sort(idx.begin(), idx.end());

  Dataset subset;
  for (auto i : idx) subset.push_back(clean[i]);
  PoisonResult p;
  switch (spec.poison_type) {
    case PoisonType::Class: p = poison_class(subset, spec.source_class, spec.target_class); break;
    case PoisonType::BBox: p = poison_bbox(subset, spec.source_class, spec.shrink_factor, craft, spec.jitter_scale); break;
    case PoisonType::Objn: p = poison_objn(subset, spec.source_class, num_classes); break;
    case PoisonType::None: break;
  }
  for (std::size_t k = 0; k < idx.size(); ++k) out.data[idx[k]] = std::move(p.data[k]);
  out.poisoned = true;
  out.sample_indices = std::move(idx);
  return out;
}

}  // namespace fedguard
