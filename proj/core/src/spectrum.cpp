#include "rbmtree/spectrum.hpp"

#include <Eigen/SVD>
#include <stdexcept>

namespace rbmtree {

Eigen::MatrixXd weight_matrix_state_major(const PottsRBM &model) {
  const int nv = model.n_visible();
  const int nq = model.n_states();
  const int nh = model.n_hidden();
  Eigen::MatrixXd m(nq * nv, nh);
  for (int q = 0; q < nq; ++q)
    for (int i = 0; i < nv; ++i)
      m.row(q * nv + i) = model.weights().row(i * nq + q);
  return m;
}

Eigen::VectorXd weight_spectrum(const PottsRBM &model) {
  Eigen::MatrixXd m = weight_matrix_state_major(model);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues();
}

Eigen::MatrixXd project_dataset(const PottsRBM &model, const OneHotDataset &data,
                                int k) {
  const int nv = model.n_visible();
  const int nq = model.n_states();
  if (data.n_visible != nv || data.n_states != nq)
    throw std::invalid_argument("project_dataset: dataset/model shape mismatch");
  const int max_k = std::min(nq * nv, model.n_hidden());
  if (k < 1 || k > max_k)
    throw std::invalid_argument("project_dataset: k out of range");

  Eigen::MatrixXd m = weight_matrix_state_major(model);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
  const Eigen::MatrixXd u = svd.matrixU().leftCols(k);

  // The one-hot matrix has exactly one nonzero per site, so the product is
  // a gather-sum over rows of U.
  Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(data.n_samples, k);
  for (int s = 0; s < data.n_samples; ++s)
    for (int i = 0; i < nv; ++i)
      proj.row(s) += u.row(data.states(s, i) * nv + i);
  return proj;
}

} // namespace rbmtree
