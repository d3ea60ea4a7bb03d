#pragma once

#include <vector>

#include "takeoff/dataset.hpp"
#include "takeoff/rng.hpp"

namespace takeoff::testing {

// Observed window from per-step new-infection counts (entry 0 = seeds). Node
// ids are assigned consecutively starting at 0.
inline ObservedSequence observed_from_counts(const std::vector<std::uint32_t>& per_step) {
  ObservedSequence s;
  s.t_o = per_step.size() - 1;
  NodeId next = 0;
  std::uint32_t cum = 0;
  for (std::size_t t = 0; t < per_step.size(); ++t) {
    std::vector<NodeId> nodes;
    for (std::uint32_t k = 0; k < per_step[t]; ++k) nodes.push_back(next++);
    cum += per_step[t];
    s.cum_counts.push_back(cum);
    s.new_counts.push_back(t == 0 ? 0 : per_step[t]);
    s.infected_nodes.push_back(std::move(nodes));
  }
  return s;
}

// Separable toy set: die-outs see 0-2 new cases per step, take-offs 50-80.
inline Dataset separable_dataset(std::size_t n, std::size_t t_o, std::uint64_t seed) {
  Dataset ds;
  ds.provenance.t_o = t_o;
  ds.provenance.phi_star = 100;
  RandomStream rng(seed, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i % 2 == 0 ? 1 : 0;
    std::vector<std::uint32_t> steps{1};
    for (std::size_t t = 1; t <= t_o; ++t)
      steps.push_back(y ? static_cast<std::uint32_t>(50 + rng.below(31)) : static_cast<std::uint32_t>(rng.below(3)));
    LabeledSample s;
    s.id = i;
    s.observed = observed_from_counts(steps);
    s.label = y;
    s.final_r = y ? 1000 : 10;
    s.split = i % 10 < 7 ? Split::Train : (i % 10 < 8 ? Split::Validation : Split::Test);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace takeoff::testing
