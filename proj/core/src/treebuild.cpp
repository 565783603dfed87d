#include "rbmtree/treebuild.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace rbmtree {

namespace {

std::string sanitize_name(std::string s) {
  for (char &c : s)
    if (c == ' ' || c == '\t' || c == '(' || c == ')' || c == ',' ||
        c == ':' || c == ';' || c == '\'' || c == '[' || c == ']')
      c = '_';
  return s;
}

std::string format_length(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

MagnetizationState mean_state(const std::vector<const MagnetizationState *> &pts) {
  MagnetizationState rep;
  rep.f = pts.front()->f;
  rep.m = pts.front()->m;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    rep.f += pts[k]->f;
    rep.m += pts[k]->m;
  }
  rep.f /= static_cast<double>(pts.size());
  rep.m /= static_cast<double>(pts.size());
  return rep;
}

} // namespace

FixedPointSet cluster_fixed_points(const std::vector<FixedPointResult> &results,
                                   double eps, std::uint64_t age) {
  if (results.empty())
    throw std::invalid_argument("cluster_fixed_points: no results");
  const int n = static_cast<int>(results.size());

  FixedPointSet set;
  set.age = age;
  set.points.reserve(n);
  set.point_converged.reserve(n);
  for (const auto &r : results) {
    set.points.push_back(r.state);
    set.point_converged.push_back(r.converged);
  }
  set.cluster_ids.assign(n, -1);

  std::vector<int> converged_idx;
  std::vector<Eigen::VectorXd> converged_pts;
  for (int k = 0; k < n; ++k)
    if (results[k].converged) {
      converged_idx.push_back(k);
      converged_pts.push_back(flatten_magnetizations(results[k].state));
    }

  int n_clusters = 0;
  std::vector<Eigen::VectorXd> rep_coords;
  if (!converged_pts.empty()) {
    std::vector<int> labels = dbscan(converged_pts, eps, 1);
    n_clusters = *std::max_element(labels.begin(), labels.end()) + 1;
    for (std::size_t k = 0; k < converged_idx.size(); ++k)
      set.cluster_ids[converged_idx[k]] = labels[k];
    for (int c = 0; c < n_clusters; ++c) {
      std::vector<const MagnetizationState *> members;
      for (std::size_t k = 0; k < converged_idx.size(); ++k)
        if (labels[k] == c)
          members.push_back(&set.points[converged_idx[k]]);
      set.representatives.push_back(mean_state(members));
      set.unsettled.push_back(false);
      rep_coords.push_back(flatten_magnetizations(set.representatives.back()));
    }
  }

  for (int k = 0; k < n; ++k) {
    if (results[k].converged)
      continue;
    const Eigen::VectorXd coord = flatten_magnetizations(results[k].state);
    int best = -1;
    double best_d2 = eps * eps;
    for (int c = 0; c < n_clusters; ++c) {
      const double d2 = (coord - rep_coords[c]).squaredNorm();
      if (d2 <= best_d2) {
        best_d2 = d2;
        best = c;
      }
    }
    if (best >= 0) {
      set.cluster_ids[k] = best;
    } else {
      set.cluster_ids[k] = static_cast<int>(set.representatives.size());
      set.representatives.push_back(results[k].state);
      set.unsettled.push_back(true);
    }
  }
  return set;
}

MergeTree build_tree(const CheckpointSeries &series, const OneHotDataset &data,
                     const TreeBuildOptions &options,
                     std::vector<LayerDiagnostic> *diagnostics) {
  series.validate();
  data.validate();
  options.tap.validate();
  if (series.checkpoints.empty())
    throw std::invalid_argument("build_tree: empty checkpoint series");

  std::vector<const Checkpoint *> ckpts;
  for (const auto &c : series.checkpoints) {
    const std::int64_t age = static_cast<std::int64_t>(c.age);
    if (options.min_age >= 0 && age < options.min_age)
      continue;
    if (options.max_age >= 0 && age > options.max_age)
      continue;
    ckpts.push_back(&c);
  }
  if (ckpts.empty())
    throw std::invalid_argument("build_tree: no checkpoints in age window");
  const PottsRBM &shape = ckpts.front()->model;
  if (shape.n_visible() != data.n_visible || shape.n_states() != data.n_states)
    throw std::invalid_argument("build_tree: dataset/model shape mismatch");

  const int m = data.n_samples;
  MergeTree tree;
  tree.n_leaves = m;
  const std::int64_t oldest_age =
      static_cast<std::int64_t>(ckpts.back()->age);

  for (int s = 0; s < m; ++s) {
    TreeNode leaf;
    leaf.id = s;
    leaf.age = oldest_age + 1;
    leaf.is_leaf = true;
    leaf.sample = s;
    leaf.members = {s};
    tree.nodes.push_back(std::move(leaf));
  }

  struct Group {
    int node_id;
    MagnetizationState state;
  };
  std::vector<Group> current;

  // parallel nMF bookkeeping for the fixed-point-count diagnostic
  std::vector<MagnetizationState> nmf_states;
  auto nmf_count_at = [&](const PottsRBM &model, bool from_data) -> int {
    std::vector<MagnetizationState> inits;
    if (from_data) {
      for (int s = 0; s < m; ++s) {
        MagnetizationState st =
            init_from_data(model, data.states.row(s).transpose());
        st.origin.index = s;
        inits.push_back(std::move(st));
      }
    } else {
      inits = nmf_states;
    }
    auto results = solve_fixed_points(model, inits, options.tap,
                                      MeanFieldVariant::Nmf, options.threads);
    FixedPointSet set = cluster_fixed_points(results, options.eps);
    nmf_states = set.representatives;
    return set.n_clusters();
  };

  // oldest checkpoint: propagate every data point
  {
    const Checkpoint &oldest = *ckpts.back();
    std::vector<MagnetizationState> inits;
    inits.reserve(m);
    for (int s = 0; s < m; ++s) {
      MagnetizationState st =
          init_from_data(oldest.model, data.states.row(s).transpose());
      st.origin.index = s;
      inits.push_back(std::move(st));
    }
    auto results = solve_fixed_points(oldest.model, inits, options.tap,
                                      options.variant, options.threads);
    FixedPointSet set = cluster_fixed_points(results, options.eps, oldest.age);

    TreeLayer layer;
    layer.age = oldest_age;
    for (int c = 0; c < set.n_clusters(); ++c) {
      TreeNode node;
      node.id = static_cast<int>(tree.nodes.size());
      node.age = oldest_age;
      node.has_state = true;
      node.state = set.representatives[c];
      node.state.origin = {Origin::Kind::FixedPoint, node.id};
      node.unsettled = set.unsettled[c];
      for (int s = 0; s < m; ++s)
        if (set.cluster_ids[s] == c) {
          node.members.push_back(s);
          node.children.push_back(s);
        }
      layer.node_ids.push_back(node.id);
      current.push_back({node.id, node.state});
      tree.nodes.push_back(std::move(node));
    }
    for (int id : layer.node_ids)
      for (int child : tree.nodes[id].children)
        tree.nodes[child].parent = id;
    tree.layers.push_back(std::move(layer));

    if (diagnostics) {
      LayerDiagnostic d;
      d.age = oldest.age;
      d.n_clusters = set.n_clusters();
      d.materialized = true;
      if (options.with_nmf_counts)
        d.n_clusters_nmf = nmf_count_at(oldest.model, true);
      diagnostics->push_back(d);
    }
  }

  // younger checkpoints, descending age: propagate the previous fixed points
  for (int k = static_cast<int>(ckpts.size()) - 2; k >= 0; --k) {
    const Checkpoint &ckpt = *ckpts[k];
    std::vector<MagnetizationState> inits;
    inits.reserve(current.size());
    for (std::size_t g = 0; g < current.size(); ++g) {
      MagnetizationState st = current[g].state;
      st.origin = {Origin::Kind::FixedPoint, static_cast<int>(g)};
      inits.push_back(std::move(st));
    }
    auto results = solve_fixed_points(ckpt.model, inits, options.tap,
                                      options.variant, options.threads);
    FixedPointSet set = cluster_fixed_points(results, options.eps, ckpt.age);
    const int n_new = set.n_clusters();
    const bool materialize = n_new < static_cast<int>(current.size());

    if (materialize) {
      TreeLayer layer;
      layer.age = static_cast<std::int64_t>(ckpt.age);
      std::vector<Group> next;
      for (int c = 0; c < n_new; ++c) {
        TreeNode node;
        node.id = static_cast<int>(tree.nodes.size());
        node.age = layer.age;
        node.has_state = true;
        node.state = set.representatives[c];
        node.state.origin = {Origin::Kind::FixedPoint, node.id};
        node.unsettled = set.unsettled[c];
        for (std::size_t g = 0; g < current.size(); ++g)
          if (set.cluster_ids[g] == c) {
            node.children.push_back(current[g].node_id);
            const auto &mem = tree.nodes[current[g].node_id].members;
            node.members.insert(node.members.end(), mem.begin(), mem.end());
          }
        std::sort(node.members.begin(), node.members.end());
        layer.node_ids.push_back(node.id);
        next.push_back({node.id, node.state});
        tree.nodes.push_back(std::move(node));
      }
      for (int id : layer.node_ids)
        for (int child : tree.nodes[id].children)
          tree.nodes[child].parent = id;
      tree.layers.push_back(std::move(layer));
      current = std::move(next);
    } else {
      // count preserved: a bijection between groups and clusters; just
      // carry the converged positions forward
      for (std::size_t g = 0; g < current.size(); ++g)
        current[g].state = set.representatives[set.cluster_ids[g]];
    }

    if (diagnostics) {
      LayerDiagnostic d;
      d.age = ckpt.age;
      d.n_clusters = n_new;
      d.materialized = materialize;
      if (options.with_nmf_counts)
        d.n_clusters_nmf = nmf_count_at(ckpt.model, false);
      diagnostics->push_back(d);
    }
  }

  if (current.size() == 1) {
    tree.root = current.front().node_id;
  } else {
    std::int64_t min_age = std::numeric_limits<std::int64_t>::max();
    for (const auto &layer : tree.layers)
      min_age = std::min(min_age, layer.age);
    TreeNode root;
    root.id = static_cast<int>(tree.nodes.size());
    root.age = min_age > 0 ? 0 : min_age - 1;
    for (const auto &g : current) {
      root.children.push_back(g.node_id);
      const auto &mem = tree.nodes[g.node_id].members;
      root.members.insert(root.members.end(), mem.begin(), mem.end());
    }
    std::sort(root.members.begin(), root.members.end());
    tree.root = root.id;
    for (int child : root.children)
      tree.nodes[child].parent = root.id;
    tree.nodes.push_back(std::move(root));
  }
  return tree;
}

std::string export_newick(const MergeTree &tree,
                          const std::vector<std::string> &leaf_names) {
  if (tree.root < 0)
    throw std::invalid_argument("export_newick: tree has no root");
  auto name_of = [&](const TreeNode &node) -> std::string {
    if (node.is_leaf) {
      if (!leaf_names.empty())
        return sanitize_name(leaf_names.at(node.sample));
      return "s" + std::to_string(node.sample);
    }
    if (node.id == tree.root)
      return "root";
    return "n" + std::to_string(node.id);
  };
  std::function<std::string(int)> rec = [&](int id) -> std::string {
    const TreeNode &node = tree.nodes[id];
    std::string out;
    if (!node.children.empty()) {
      out += "(";
      for (std::size_t k = 0; k < node.children.size(); ++k) {
        if (k > 0)
          out += ",";
        out += rec(node.children[k]);
      }
      out += ")";
    }
    out += name_of(node);
    if (node.parent >= 0) {
      const double len =
          1e-3 * static_cast<double>(node.age - tree.nodes[node.parent].age);
      out += ":" + format_length(len);
    }
    return out;
  };
  return rec(tree.root) + ";";
}

nlohmann::json export_tree_json(const MergeTree &tree) {
  nlohmann::json j;
  j["n_leaves"] = tree.n_leaves;
  j["root"] = tree.root;
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto &node : tree.nodes) {
    nlohmann::json n;
    n["id"] = node.id;
    n["age"] = node.age;
    n["parent"] = node.parent;
    n["children"] = node.children;
    n["members"] = node.members;
    n["leaf"] = node.is_leaf;
    if (node.is_leaf)
      n["sample"] = node.sample;
    n["unsettled"] = node.unsettled;
    if (node.has_state) {
      n["m"] = std::vector<double>(node.state.m.data(),
                                   node.state.m.data() + node.state.m.size());
      nlohmann::json f = nlohmann::json::array();
      for (int i = 0; i < node.state.f.rows(); ++i)
        f.push_back(std::vector<double>(
            node.state.f.row(i).begin(), node.state.f.row(i).end()));
      n["f"] = f;
    }
    nodes.push_back(std::move(n));
  }
  j["nodes"] = std::move(nodes);
  nlohmann::json layers = nlohmann::json::array();
  for (const auto &layer : tree.layers)
    layers.push_back({{"age", layer.age}, {"nodes", layer.node_ids}});
  j["layers"] = std::move(layers);
  return j;
}

void validate_tree(const MergeTree &tree, int n_samples) {
  if (tree.root < 0 || tree.root >= static_cast<int>(tree.nodes.size()))
    throw std::runtime_error("tree: invalid root");
  int root_count = 0;
  for (const auto &node : tree.nodes)
    if (node.parent < 0)
      ++root_count;
  if (root_count != 1 || tree.nodes[tree.root].parent != -1)
    throw std::runtime_error("tree: not single-rooted");

  std::vector<int> leaf_owner(n_samples, -1);
  std::vector<bool> visited(tree.nodes.size(), false);
  std::function<void(int)> dfs = [&](int id) {
    if (visited[id])
      throw std::runtime_error("tree: cycle detected");
    visited[id] = true;
    const TreeNode &node = tree.nodes[id];
    if (node.is_leaf) {
      if (node.sample < 0 || node.sample >= n_samples ||
          leaf_owner[node.sample] != -1)
        throw std::runtime_error("tree: duplicate or invalid leaf sample");
      leaf_owner[node.sample] = id;
      if (node.members != std::vector<int>{node.sample})
        throw std::runtime_error("tree: leaf member set mismatch");
      return;
    }
    std::vector<int> merged;
    for (int child : node.children) {
      if (tree.nodes[child].parent != id)
        throw std::runtime_error("tree: broken parent link");
      if (!(node.age < tree.nodes[child].age))
        throw std::runtime_error("tree: parent age not below child age");
      dfs(child);
      merged.insert(merged.end(), tree.nodes[child].members.begin(),
                    tree.nodes[child].members.end());
    }
    std::sort(merged.begin(), merged.end());
    if (merged != node.members)
      throw std::runtime_error("tree: member union invariant violated");
  };
  dfs(tree.root);
  for (int s = 0; s < n_samples; ++s)
    if (leaf_owner[s] < 0)
      throw std::runtime_error("tree: missing leaf for sample " +
                               std::to_string(s));

  // materialized layers: strictly decreasing counts backward and partition
  // refinement from older to younger layers
  for (std::size_t k = 0; k < tree.layers.size(); ++k) {
    const auto &layer = tree.layers[k];
    std::vector<int> covered;
    for (int id : layer.node_ids)
      covered.insert(covered.end(), tree.nodes[id].members.begin(),
                     tree.nodes[id].members.end());
    std::sort(covered.begin(), covered.end());
    for (int s = 0; s < n_samples; ++s)
      if (covered[s] != s)
        throw std::runtime_error("tree: layer is not a partition");
    if (k > 0) {
      if (!(layer.node_ids.size() < tree.layers[k - 1].node_ids.size()))
        throw std::runtime_error("tree: layer counts not strictly decreasing");
      if (!(layer.age < tree.layers[k - 1].age))
        throw std::runtime_error("tree: layer ages not decreasing");
      // every older-layer node must sit inside exactly one node here
      for (int old_id : tree.layers[k - 1].node_ids) {
        const auto &old_members = tree.nodes[old_id].members;
        int containing = 0;
        for (int id : layer.node_ids) {
          const auto &mem = tree.nodes[id].members;
          if (std::includes(mem.begin(), mem.end(), old_members.begin(),
                            old_members.end()))
            ++containing;
        }
        if (containing != 1)
          throw std::runtime_error("tree: refinement invariant violated");
      }
    }
  }
}

int count_data_fixed_points(const PottsRBM &model, const OneHotDataset &data,
                            const TapConfig &config, MeanFieldVariant variant,
                            double eps, int threads) {
  std::vector<MagnetizationState> inits;
  inits.reserve(data.n_samples);
  for (int s = 0; s < data.n_samples; ++s) {
    MagnetizationState st =
        init_from_data(model, data.states.row(s).transpose());
    st.origin.index = s;
    inits.push_back(std::move(st));
  }
  auto results = solve_fixed_points(model, inits, config, variant, threads);
  return cluster_fixed_points(results, eps).n_clusters();
}

} // namespace rbmtree
