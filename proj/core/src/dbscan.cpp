#include "rbmtree/dbscan.hpp"

#include <deque>
#include <stdexcept>

namespace rbmtree {

std::vector<int> dbscan(const std::vector<Eigen::VectorXd> &points, double eps,
                        int min_pts) {
  if (!(eps > 0.0) || min_pts < 1)
    throw std::invalid_argument("dbscan: eps must be > 0 and min_pts >= 1");
  const int n = static_cast<int>(points.size());
  const double eps2 = eps * eps;

  auto neighbors = [&](int p) {
    std::vector<int> out;
    for (int q = 0; q < n; ++q)
      if ((points[p] - points[q]).squaredNorm() <= eps2)
        out.push_back(q);
    return out;
  };

  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  int next_cluster = 0;

  for (int p = 0; p < n; ++p) {
    if (label[p] != kUnvisited)
      continue;
    std::vector<int> nb = neighbors(p);
    if (static_cast<int>(nb.size()) < min_pts) {
      label[p] = kNoise;
      continue;
    }
    const int cid = next_cluster++;
    label[p] = cid;
    std::deque<int> queue(nb.begin(), nb.end());
    while (!queue.empty()) {
      const int q = queue.front();
      queue.pop_front();
      if (label[q] == kNoise)
        label[q] = cid; // border point
      if (label[q] != kUnvisited)
        continue;
      label[q] = cid;
      std::vector<int> nb2 = neighbors(q);
      if (static_cast<int>(nb2.size()) >= min_pts)
        queue.insert(queue.end(), nb2.begin(), nb2.end());
    }
  }
  return label;
}

} // namespace rbmtree
