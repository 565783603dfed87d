#pragma once

#include "rbmtree/model.hpp"

#include <vector>

namespace rbmtree {

/// Where a magnetization trajectory started.
struct Origin {
  enum class Kind { Data, FixedPoint } kind = Kind::Data;
  int index = -1;
};

/// Visible magnetizations f[i][q] (per-site probability rows) and hidden
/// magnetizations m[mu] in (0,1).
struct MagnetizationState {
  Eigen::MatrixXd f; // N_v x N_q
  Eigen::VectorXd m; // N_h
  Origin origin;

  void validate(double tol = 1e-9) const;
};

struct TapConfig {
  int max_iters = 2000;
  double tolerance = 1e-8; // max-abs change over concatenated (f, m)
  double damping = 0.3;    // new = (1-lambda)*update + lambda*old
  double beta = 1.0;

  void validate() const;
};

enum class MeanFieldVariant { Tap, Nmf };

/// Data-initialized magnetizations: m from the hidden conditional of the
/// sample, then f from the visible mean-field response to that m.
MagnetizationState init_from_data(const PottsRBM &model,
                                  const Eigen::VectorXi &v);

/// One synchronous second-order (TAP) update: all hidden units from the
/// current f, then all visible sites from the fresh m. The linear coupling
/// carries beta, the Onsager corrections carry beta^2. `damping` blends the
/// raw update with the previous state.
MagnetizationState tap_step(const PottsRBM &model,
                            const MagnetizationState &state, double beta,
                            double damping = 0.0);

/// First-order (naive mean-field) update: tap_step without Onsager terms.
MagnetizationState nmf_step(const PottsRBM &model,
                            const MagnetizationState &state, double beta,
                            double damping = 0.0);

struct FixedPointResult {
  MagnetizationState state;
  bool converged = false;
  int iters = 0;
};

/// Damped fixed-point iteration of the chosen update map. Non-convergence
/// is reported through the flag, not as an error.
FixedPointResult iterate_to_fixed_point(const PottsRBM &model,
                                        MagnetizationState state,
                                        const TapConfig &config,
                                        MeanFieldVariant variant =
                                            MeanFieldVariant::Tap);

/// Trajectories are independent; solved in parallel, results in input order.
std::vector<FixedPointResult>
solve_fixed_points(const PottsRBM &model,
                   const std::vector<MagnetizationState> &inits,
                   const TapConfig &config, MeanFieldVariant variant,
                   int threads);

/// Second-order Gibbs free entropy, reported with its three components
/// (gamma2 = entropic + first_order + second_order; the entropic component
/// carries the local-field terms of the zeroth order).
struct FreeEnergyValue {
  double gamma2 = 0.0;
  double entropic = 0.0;
  double first_order = 0.0;
  double second_order = 0.0;
};

FreeEnergyValue gibbs_free_energy_2(const PottsRBM &model,
                                    const MagnetizationState &state,
                                    double beta);

/// Concatenated (f, m) coordinates; the clustering metric space.
Eigen::VectorXd flatten_magnetizations(const MagnetizationState &state);

} // namespace rbmtree
