#pragma once

#include <Eigen/Dense>
#include <vector>

namespace rbmtree {

/// Density-based clustering with Euclidean distance. Returns one id per
/// point; noise points (only possible when min_pts > 1) get id -1.
/// With min_pts = 1 this reduces to connected components of the eps-graph.
std::vector<int> dbscan(const std::vector<Eigen::VectorXd> &points, double eps,
                        int min_pts);

} // namespace rbmtree
