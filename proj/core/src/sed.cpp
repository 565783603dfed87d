#include "rbmtree/sed.hpp"

#include <random>
#include <set>
#include <stdexcept>
#include <string>

namespace rbmtree {

void SedConfig::validate() const {
  if (seq_length < 1 || n_root_children < 1 || max_children < 1 ||
      target_size < 1)
    throw std::invalid_argument("SedConfig: counts must be positive");
  const double p = effective_mutation_prob();
  if (!(p > 0.0) || !(p < 1.0))
    throw std::invalid_argument("SedConfig: mutation_prob must be in (0,1)");
  if (label_depth < 1 || label_depth > 2)
    throw std::invalid_argument("SedConfig: label_depth must be 1 or 2");
}

double SedConfig::effective_mutation_prob() const {
  return mutation_prob > 0.0 ? mutation_prob
                             : 1.0 / static_cast<double>(seq_length);
}

SedOutput generate_sed(const SedConfig &config) {
  config.validate();
  const int L = config.seq_length;
  const double p = config.effective_mutation_prob();
  std::mt19937_64 rng(config.rng_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<std::vector<std::uint8_t>> seqs;
  std::set<std::vector<std::uint8_t>> seen;
  SedOutput out;
  auto push = [&](std::vector<std::uint8_t> s, int parent, int label,
                  int sublabel) {
    seen.insert(s);
    seqs.push_back(std::move(s));
    out.genealogy.push_back(parent);
    out.labels.push_back(label);
    out.sublabels.push_back(sublabel);
  };

  push(std::vector<std::uint8_t>(L, 0), -1, -1, -1);

  auto mutate = [&](const std::vector<std::uint8_t> &parent) {
    std::vector<std::uint8_t> child = parent;
    for (int i = 0; i < L; ++i)
      if (unif(rng) < p)
        child[i] ^= 1;
    return child;
  };

  // root generation: each heir must differ from the ancestor in >= 1 site
  constexpr int kMaxRetries = 1000;
  for (int c = 0;
       c < config.n_root_children &&
       static_cast<int>(seqs.size()) < config.target_size;
       ++c) {
    std::vector<std::uint8_t> child;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
      child = mutate(seqs[0]);
      if (child != seqs[0] && !seen.count(child)) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      // force a single flip at a fresh random site instead
      child = seqs[0];
      for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
        std::vector<std::uint8_t> forced = child;
        forced[rng() % L] ^= 1;
        if (!seen.count(forced)) {
          child = std::move(forced);
          ok = true;
        }
      }
      if (!ok)
        break;
    }
    push(std::move(child), 0, c, -1);
  }

  // later generations: FIFO over samples in insertion order; duplicates are
  // dropped without retry
  std::uniform_int_distribution<int> n_children_dist(1, config.max_children);
  int next_sublabel = 0;
  std::size_t head = 1; // heirs onward
  while (head < seqs.size() &&
         static_cast<int>(seqs.size()) < config.target_size) {
    const std::size_t parent = head++;
    const bool parent_is_heir = out.genealogy[parent] == 0;
    const int n_children = n_children_dist(rng);
    for (int c = 0;
         c < n_children && static_cast<int>(seqs.size()) < config.target_size;
         ++c) {
      std::vector<std::uint8_t> child = mutate(seqs[parent]);
      if (seen.count(child))
        continue;
      int sublabel = out.sublabels[parent];
      if (config.label_depth >= 2 && parent_is_heir)
        sublabel = next_sublabel++;
      push(std::move(child), static_cast<int>(parent), out.labels[parent],
           sublabel);
    }
  }
  out.reached_target = static_cast<int>(seqs.size()) >= config.target_size;

  const int m = static_cast<int>(seqs.size());
  Eigen::MatrixXi states(m, L);
  for (int s = 0; s < m; ++s)
    for (int i = 0; i < L; ++i)
      states(s, i) = seqs[s][i];
  out.dataset = OneHotDataset::from_states(states, 2);
  out.dataset.labels.resize(m);
  for (int s = 0; s < m; ++s)
    out.dataset.labels[s] =
        "s" + std::to_string(s) + "_f" + std::to_string(out.labels[s]);
  return out;
}

} // namespace rbmtree
