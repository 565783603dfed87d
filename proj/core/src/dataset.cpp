#include "rbmtree/dataset.hpp"

#include <stdexcept>

namespace rbmtree {

void OneHotDataset::validate() const {
  if (n_samples < 1 || n_visible < 1 || n_states < 2)
    throw std::runtime_error("OneHotDataset: invalid shape");
  if (states.rows() != n_samples || states.cols() != n_visible)
    throw std::runtime_error("OneHotDataset: states shape mismatch");
  if (states.minCoeff() < 0 || states.maxCoeff() >= n_states)
    throw std::runtime_error("OneHotDataset: state index out of range");
  if (weights.size() != n_samples)
    throw std::runtime_error("OneHotDataset: weights length mismatch");
  if (weights.minCoeff() < 0.0)
    throw std::runtime_error("OneHotDataset: negative sample weight");
  if (!(effective_size() > 0.0))
    throw std::runtime_error("OneHotDataset: effective size must be positive");
  if (!labels.empty() && static_cast<int>(labels.size()) != n_samples)
    throw std::runtime_error("OneHotDataset: labels length mismatch");
}

OneHotDataset OneHotDataset::from_states(const Eigen::MatrixXi &states,
                                         int n_states) {
  OneHotDataset d;
  d.n_samples = static_cast<int>(states.rows());
  d.n_visible = static_cast<int>(states.cols());
  d.n_states = n_states;
  d.states = states;
  d.weights = Eigen::VectorXd::Ones(d.n_samples);
  d.validate();
  return d;
}

} // namespace rbmtree
