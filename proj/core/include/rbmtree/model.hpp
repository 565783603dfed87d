#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>

namespace rbmtree {

enum class Gauge : std::uint8_t { None = 0, ZeroSum = 1, LatticeGas = 2 };

/// Categorical (Potts) RBM: N_v visible sites with N_q states each, N_h
/// binary hidden units. Weights are stored as a (N_v*N_q) x N_h matrix with
/// row index i*N_q + q, so the states of one site are contiguous.
class PottsRBM {
public:
  PottsRBM() = default;
  PottsRBM(int n_visible, int n_states, int n_hidden,
           Gauge gauge = Gauge::None);

  int n_visible() const { return n_visible_; }
  int n_states() const { return n_states_; }
  int n_hidden() const { return n_hidden_; }
  Gauge gauge() const { return gauge_; }
  void set_gauge_tag(Gauge g) { gauge_ = g; }

  /// Visible fields a[i][q], shape N_v x N_q.
  Eigen::MatrixXd &visible_fields() { return a_; }
  const Eigen::MatrixXd &visible_fields() const { return a_; }

  /// Hidden fields b[mu], length N_h.
  Eigen::VectorXd &hidden_fields() { return b_; }
  const Eigen::VectorXd &hidden_fields() const { return b_; }

  /// Weight tensor w[i][mu][q], stored as (N_v*N_q) x N_h, row = i*N_q + q.
  Eigen::MatrixXd &weights() { return w_; }
  const Eigen::MatrixXd &weights() const { return w_; }

  double weight(int i, int mu, int q) const { return w_(i * n_states_ + q, mu); }
  double &weight(int i, int mu, int q) { return w_(i * n_states_ + q, mu); }

  bool same_shape(const PottsRBM &other) const {
    return n_visible_ == other.n_visible_ && n_states_ == other.n_states_ &&
           n_hidden_ == other.n_hidden_;
  }

  /// Throws std::runtime_error if any entry is non-finite or the stored
  /// gauge invariant is violated beyond `tol`.
  void validate(double tol = 1e-10) const;

private:
  int n_visible_ = 0;
  int n_states_ = 0;
  int n_hidden_ = 0;
  Gauge gauge_ = Gauge::None;
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  Eigen::MatrixXd w_;
};

/// Hamiltonian value for a joint configuration (v, h).
/// v holds state indices in [0, N_q), h entries must be 0 or 1.
double energy(const PottsRBM &model, const Eigen::VectorXi &v,
              const Eigen::VectorXi &h);

/// Re-gauges the parameters to `target` without changing the Boltzmann
/// distribution over (v, h).
PottsRBM apply_gauge(const PottsRBM &model, Gauge target);

/// In-place variant used by the training loop.
void apply_gauge_in_place(PottsRBM &model, Gauge target);

} // namespace rbmtree
