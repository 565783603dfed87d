#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace rbmtree {

/// Categorical dataset: M samples over N_v sites with N_q states per site,
/// plus optional per-sample weights x_m and labels.
struct OneHotDataset {
  int n_samples = 0;
  int n_visible = 0;
  int n_states = 0;
  Eigen::MatrixXi states;            // M x N_v, entries in [0, N_q)
  Eigen::VectorXd weights;           // M, all >= 0
  std::vector<std::string> labels;   // empty or length M

  double effective_size() const { return weights.sum(); }

  /// Throws std::runtime_error on any invariant violation.
  void validate() const;

  static OneHotDataset from_states(const Eigen::MatrixXi &states, int n_states);
};

} // namespace rbmtree
