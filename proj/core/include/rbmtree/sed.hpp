#pragma once

#include "rbmtree/dataset.hpp"

#include <cstdint>
#include <vector>

namespace rbmtree {

/// Synthetic evolution: breadth-wise growth from an all-zeros ancestor with
/// per-site mutations, global deduplication, and family/subfamily labels.
struct SedConfig {
  int seq_length = 805;
  int n_root_children = 5;
  double mutation_prob = 0.0; // <= 0: use 1/seq_length
  int max_children = 5;
  int target_size = 4508;
  std::uint64_t rng_seed = 0;
  int label_depth = 2; // 1: families only, 2: also grandchild sublabels

  void validate() const;
  double effective_mutation_prob() const;
};

struct SedOutput {
  OneHotDataset dataset;       // N_q = 2; sample 0 is the ancestor
  std::vector<int> genealogy;  // parent sample index, -1 for the ancestor
  std::vector<int> labels;     // family = root-child subtree, -1 for ancestor
  std::vector<int> sublabels;  // grandchild subtree, -1 above that depth
  bool reached_target = false;
};

SedOutput generate_sed(const SedConfig &config);

} // namespace rbmtree
