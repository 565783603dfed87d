#pragma once

#include "rbmtree/checkpoint.hpp"
#include "rbmtree/dataset.hpp"
#include "rbmtree/dbscan.hpp"
#include "rbmtree/meanfield.hpp"

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace rbmtree {

/// Clustered fixed points at one checkpoint age.
struct FixedPointSet {
  std::uint64_t age = 0;
  std::vector<MagnetizationState> points;
  std::vector<bool> point_converged;
  std::vector<int> cluster_ids;                    // per point, >= 0
  std::vector<MagnetizationState> representatives; // per cluster
  std::vector<bool> unsettled;                     // per cluster

  int n_clusters() const { return static_cast<int>(representatives.size()); }
};

/// DBSCAN (min_pts=1) over the converged states in (f, m) space.
/// Non-converged states join the nearest representative if within eps,
/// otherwise they become singleton clusters flagged unsettled.
FixedPointSet cluster_fixed_points(const std::vector<FixedPointResult> &results,
                                   double eps, std::uint64_t age = 0);

struct TreeNode {
  int id = -1;
  std::int64_t age = 0;
  int parent = -1;
  std::vector<int> children;
  std::vector<int> members; // leaf sample indices, sorted
  bool is_leaf = false;
  int sample = -1;
  bool has_state = false;
  MagnetizationState state; // cluster representative, when has_state
  bool unsettled = false;
};

struct TreeLayer {
  std::int64_t age = 0;
  std::vector<int> node_ids;
};

/// Rooted tree over the dataset; leaves are samples, internal nodes are
/// fixed points tagged with the checkpoint age where they exist. Layers are
/// stored in materialization order (oldest age first).
struct MergeTree {
  std::vector<TreeNode> nodes;
  int root = -1;
  int n_leaves = 0;
  std::vector<TreeLayer> layers;
};

struct LayerDiagnostic {
  std::uint64_t age = 0;
  int n_clusters = 0;
  int n_clusters_nmf = -1; // -1 when not computed
  bool materialized = false;
};

struct TreeBuildOptions {
  TapConfig tap;
  double eps = 1.0;
  MeanFieldVariant variant = MeanFieldVariant::Tap;
  int threads = 1;
  std::int64_t min_age = -1; // -1: no bound
  std::int64_t max_age = -1;
  bool with_nmf_counts = false;
};

/// Backward merge procedure: data-initialized fixed points at the oldest
/// checkpoint, then representative propagation through younger checkpoints;
/// a layer is materialized only when the fixed-point count decreases.
MergeTree build_tree(const CheckpointSeries &series, const OneHotDataset &data,
                     const TreeBuildOptions &options,
                     std::vector<LayerDiagnostic> *diagnostics = nullptr);

/// Newick text; branch length = age difference to the parent, scaled 1e-3.
std::string export_newick(const MergeTree &tree,
                          const std::vector<std::string> &leaf_names = {});

nlohmann::json export_tree_json(const MergeTree &tree);

/// Throws std::runtime_error on any structural invariant violation.
void validate_tree(const MergeTree &tree, int n_samples);

/// Number of distinct fixed points reached from all data points at one
/// checkpoint (the nMF-vs-TAP diagnostic).
int count_data_fixed_points(const PottsRBM &model, const OneHotDataset &data,
                            const TapConfig &config, MeanFieldVariant variant,
                            double eps, int threads);

} // namespace rbmtree
