#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "slsdrop/errors.hpp"
#include "slsdrop/rng.hpp"

namespace slsdrop {

// ---------------------------------------------------------------------------
// Communication model. Links are described from the sender's side: the
// out-set V(i) is the set of subsystems that receive subsystem i's broadcast
// in a given exchange round. Every realized out-set S satisfies
// out_min(i) <= S <= out_max(i), and the self-link i in S never drops.
// ---------------------------------------------------------------------------

struct CommTopology {
  std::vector<std::vector<int>> out_max;  // sorted receiver sets
  std::vector<std::vector<int>> out_min;

  int subsystem_count() const { return static_cast<int>(out_max.size()); }

  // Mirror view: in_max(j) = senders i with j in out_max(i).
  std::vector<std::vector<int>> in_max() const { return mirror(out_max); }
  std::vector<std::vector<int>> in_min() const { return mirror(out_min); }

  void validate() const {
    if (out_min.size() != out_max.size()) {
      throw DimensionError("CommTopology: out_min/out_max size mismatch");
    }
    const int count = subsystem_count();
    for (int i = 0; i < count; ++i) {
      check_set(out_max[i], count, "out_max", i);
      check_set(out_min[i], count, "out_min", i);
      if (!std::binary_search(out_min[i].begin(), out_min[i].end(), i)) {
        throw DimensionError("CommTopology: out_min(" + std::to_string(i) +
                             ") must contain the self-link");
      }
      if (!std::includes(out_max[i].begin(), out_max[i].end(),
                         out_min[i].begin(), out_min[i].end())) {
        throw DimensionError("CommTopology: out_min(" + std::to_string(i) +
                             ") is not contained in out_max");
      }
    }
  }

 private:
  static void check_set(const std::vector<int>& set, int count,
                        const char* name, int i) {
    if (!std::is_sorted(set.begin(), set.end()) ||
        std::adjacent_find(set.begin(), set.end()) != set.end()) {
      throw DimensionError(std::string(name) + "(" + std::to_string(i) +
                           ") must be sorted and duplicate-free");
    }
    if (!set.empty() && (set.front() < 0 || set.back() >= count)) {
      throw DimensionError(std::string(name) + "(" + std::to_string(i) +
                           ") has out-of-range members");
    }
  }

  static std::vector<std::vector<int>> mirror(
      const std::vector<std::vector<int>>& out) {
    std::vector<std::vector<int>> in(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (int j : out[i]) {
        in[static_cast<std::size_t>(j)].push_back(static_cast<int>(i));
      }
    }
    return in;
  }
};

// Receiver sets of a chain of N subsystems where i reaches everyone within
// distance d: V(i) = { j : |i - j| <= d }, truncated at the chain ends.
inline std::vector<std::vector<int>> chain_receiver_sets(int count, int reach) {
  if (count <= 0 || reach < 0) {
    throw DimensionError("chain_receiver_sets: need count > 0 and reach >= 0");
  }
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int lo = std::max(0, i - reach);
    const int hi = std::min(count - 1, i + reach);
    for (int j = lo; j <= hi; ++j) sets[static_cast<std::size_t>(i)].push_back(j);
  }
  return sets;
}

inline CommTopology chain_topology(int count, int reach_max, int reach_min) {
  if (reach_min > reach_max) {
    throw DimensionError("chain_topology: reach_min exceeds reach_max");
  }
  CommTopology topo;
  topo.out_max = chain_receiver_sets(count, reach_max);
  topo.out_min = chain_receiver_sets(count, reach_min);
  topo.validate();
  return topo;
}

// ---------------------------------------------------------------------------
// Dropout distribution: per subsystem, a finite pmf over realized out-sets,
// i.i.d. across subsystems and across time.
// ---------------------------------------------------------------------------

struct PatternEntry {
  std::vector<int> receivers;  // sorted
  double probability = 0.0;
};

struct DropoutDistribution {
  std::vector<std::vector<PatternEntry>> subsystems;  // [i][k]

  int subsystem_count() const { return static_cast<int>(subsystems.size()); }
  int entry_count(int i) const {
    return static_cast<int>(subsystems[static_cast<std::size_t>(i)].size());
  }
  const std::vector<PatternEntry>& support_of(int i) const {
    return subsystems[static_cast<std::size_t>(i)];
  }

  void validate(const CommTopology& topo) const {
    if (subsystem_count() != topo.subsystem_count()) {
      throw DimensionError("DropoutDistribution: subsystem count disagrees "
                           "with the topology");
    }
    for (int i = 0; i < subsystem_count(); ++i) {
      const auto& entries = support_of(i);
      if (entries.empty()) {
        throw DimensionError("DropoutDistribution: empty support for "
                             "subsystem " + std::to_string(i));
      }
      double total = 0.0;
      for (std::size_t k = 0; k < entries.size(); ++k) {
        const auto& set = entries[k].receivers;
        if (entries[k].probability < 0.0) {
          throw DimensionError("DropoutDistribution: negative probability");
        }
        total += entries[k].probability;
        if (!std::includes(topo.out_max[i].begin(), topo.out_max[i].end(),
                           set.begin(), set.end()) ||
            !std::includes(set.begin(), set.end(), topo.out_min[i].begin(),
                           topo.out_min[i].end())) {
          throw DimensionError(
              "DropoutDistribution: pattern " + std::to_string(k) +
              " of subsystem " + std::to_string(i) +
              " violates the topology bounds");
        }
        for (std::size_t l = 0; l < k; ++l) {
          if (entries[l].receivers == set) {
            throw DimensionError("DropoutDistribution: duplicate pattern in "
                                 "subsystem " + std::to_string(i));
          }
        }
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw DimensionError("DropoutDistribution: probabilities of "
                             "subsystem " + std::to_string(i) +
                             " sum to " + std::to_string(total));
      }
    }
  }
};

// Uniform pmf over chain reaches d in `reach_values` (sorted ascending):
// each exchange round, subsystem i reaches everyone within the sampled d.
inline DropoutDistribution uniform_reach_distribution(
    int count, std::vector<int> reach_values) {
  if (reach_values.empty()) {
    throw DimensionError("uniform_reach_distribution: empty reach set");
  }
  std::sort(reach_values.begin(), reach_values.end());
  reach_values.erase(std::unique(reach_values.begin(), reach_values.end()),
                     reach_values.end());
  const double prob = 1.0 / static_cast<double>(reach_values.size());
  DropoutDistribution dist;
  dist.subsystems.resize(static_cast<std::size_t>(count));
  for (int reach : reach_values) {
    auto sets = chain_receiver_sets(count, reach);
    for (int i = 0; i < count; ++i) {
      dist.subsystems[static_cast<std::size_t>(i)].push_back(
          PatternEntry{std::move(sets[static_cast<std::size_t>(i)]), prob});
    }
  }
  return dist;
}

// Realized exchange round: per subsystem, the index of the drawn pattern in
// its support list.
struct DropoutPattern {
  std::vector<int> entry;
};

inline DropoutPattern sample_pattern(const DropoutDistribution& dist,
                                     SeedStream& stream) {
  DropoutPattern pattern;
  pattern.entry.resize(static_cast<std::size_t>(dist.subsystem_count()));
  for (int i = 0; i < dist.subsystem_count(); ++i) {
    const double u = stream.next_unit();
    double cumulative = 0.0;
    int chosen = dist.entry_count(i) - 1;
    for (int k = 0; k < dist.entry_count(i); ++k) {
      cumulative += dist.support_of(i)[static_cast<std::size_t>(k)].probability;
      if (u < cumulative) {
        chosen = k;
        break;
      }
    }
    pattern.entry[static_cast<std::size_t>(i)] = chosen;
  }
  return pattern;
}

inline const std::vector<int>& pattern_receivers(
    const DropoutDistribution& dist, const DropoutPattern& pattern, int i) {
  return dist.support_of(i)[static_cast<std::size_t>(
      pattern.entry[static_cast<std::size_t>(i)])].receivers;
}

// Receivers of out_max(i) that do not hear subsystem i this round.
inline std::vector<int> dropped_set(const CommTopology& topo,
                                    const DropoutDistribution& dist,
                                    const DropoutPattern& pattern, int i) {
  const auto& received = pattern_receivers(dist, pattern, i);
  std::vector<int> dropped;
  std::set_difference(topo.out_max[static_cast<std::size_t>(i)].begin(),
                      topo.out_max[static_cast<std::size_t>(i)].end(),
                      received.begin(), received.end(),
                      std::back_inserter(dropped));
  return dropped;
}

}  // namespace slsdrop
