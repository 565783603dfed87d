#pragma once

#include "rbmtree/dataset.hpp"
#include "rbmtree/model.hpp"

namespace rbmtree {

/// Reshape of the weight tensor used for spectral analysis: rows indexed
/// q*N_v + i (state-major), columns indexed by hidden unit.
Eigen::MatrixXd weight_matrix_state_major(const PottsRBM &model);

/// Singular values of the state-major reshaped weight matrix, descending.
/// Length min(N_q*N_v, N_h).
Eigen::VectorXd weight_spectrum(const PottsRBM &model);

/// Projects the one-hot encoded dataset (columns in the same state-major
/// order as the weight reshape) onto the first k left-singular vectors of
/// the weight matrix. Returns an M x k matrix.
Eigen::MatrixXd project_dataset(const PottsRBM &model, const OneHotDataset &data,
                                int k);

} // namespace rbmtree
