#include "rbmtree/model.hpp"

#include <cmath>

namespace rbmtree {

PottsRBM::PottsRBM(int n_visible, int n_states, int n_hidden, Gauge gauge)
    : n_visible_(n_visible), n_states_(n_states), n_hidden_(n_hidden),
      gauge_(gauge) {
  if (n_visible < 1 || n_states < 2 || n_hidden < 1)
    throw std::invalid_argument("PottsRBM: invalid shape");
  a_ = Eigen::MatrixXd::Zero(n_visible, n_states);
  b_ = Eigen::VectorXd::Zero(n_hidden);
  w_ = Eigen::MatrixXd::Zero(n_visible * n_states, n_hidden);
}

void PottsRBM::validate(double tol) const {
  if (!a_.allFinite() || !b_.allFinite() || !w_.allFinite())
    throw std::runtime_error("PottsRBM: non-finite parameter");
  if (gauge_ == Gauge::ZeroSum) {
    for (int i = 0; i < n_visible_; ++i) {
      if (std::abs(a_.row(i).sum()) > tol)
        throw std::runtime_error("PottsRBM: zero-sum gauge violated in a");
      for (int mu = 0; mu < n_hidden_; ++mu) {
        double s = w_.block(i * n_states_, mu, n_states_, 1).sum();
        if (std::abs(s) > tol)
          throw std::runtime_error("PottsRBM: zero-sum gauge violated in w");
      }
    }
  } else if (gauge_ == Gauge::LatticeGas) {
    int last = n_states_ - 1;
    for (int i = 0; i < n_visible_; ++i) {
      if (a_(i, last) != 0.0)
        throw std::runtime_error("PottsRBM: lattice-gas gauge violated in a");
      for (int mu = 0; mu < n_hidden_; ++mu)
        if (w_(i * n_states_ + last, mu) != 0.0)
          throw std::runtime_error("PottsRBM: lattice-gas gauge violated in w");
    }
  }
}

double energy(const PottsRBM &model, const Eigen::VectorXi &v,
              const Eigen::VectorXi &h) {
  if (v.size() != model.n_visible() || h.size() != model.n_hidden())
    throw std::invalid_argument("energy: dimension mismatch");
  const int nq = model.n_states();
  double e = 0.0;
  for (int i = 0; i < model.n_visible(); ++i) {
    const int q = v(i);
    if (q < 0 || q >= nq)
      throw std::invalid_argument("energy: state index out of range");
    e -= model.visible_fields()(i, q);
  }
  for (int mu = 0; mu < model.n_hidden(); ++mu) {
    if (h(mu) != 0 && h(mu) != 1)
      throw std::invalid_argument("energy: hidden unit must be 0 or 1");
    if (h(mu) == 0)
      continue;
    e -= model.hidden_fields()(mu);
    for (int i = 0; i < model.n_visible(); ++i)
      e -= model.weight(i, mu, v(i));
  }
  return e;
}

void apply_gauge_in_place(PottsRBM &model, Gauge target) {
  const int nv = model.n_visible();
  const int nq = model.n_states();
  const int nh = model.n_hidden();
  auto &a = model.visible_fields();
  auto &b = model.hidden_fields();
  auto &w = model.weights();

  if (target == Gauge::ZeroSum) {
    for (int i = 0; i < nv; ++i)
      a.row(i).array() -= a.row(i).mean();
    for (int i = 0; i < nv; ++i) {
      // c_{i mu} = mean_q w[i][mu][q]; shifting w by -c changes the hidden
      // field by -sum_i c, compensated in b.
      Eigen::RowVectorXd c =
          w.block(i * nq, 0, nq, nh).colwise().mean();
      w.block(i * nq, 0, nq, nh).rowwise() -= c;
      b += c.transpose();
    }
  } else if (target == Gauge::LatticeGas) {
    const int last = nq - 1;
    for (int i = 0; i < nv; ++i)
      a.row(i).array() -= a(i, last);
    for (int i = 0; i < nv; ++i) {
      Eigen::RowVectorXd c = w.row(i * nq + last);
      w.block(i * nq, 0, nq, nh).rowwise() -= c;
      b += c.transpose();
    }
  }
  model.set_gauge_tag(target);
}

PottsRBM apply_gauge(const PottsRBM &model, Gauge target) {
  PottsRBM out = model;
  apply_gauge_in_place(out, target);
  return out;
}

} // namespace rbmtree
