#include "rbmtree/meanfield.hpp"

#include "rbmtree/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace rbmtree {

namespace {

struct StepCache {
  const PottsRBM *model = nullptr;
  Eigen::MatrixXd w2; // elementwise squared weights

  void bind(const PottsRBM &m) {
    if (model != &m) {
      model = &m;
      w2 = m.weights().array().square();
    }
  }
};

Eigen::VectorXd flatten_f(const Eigen::MatrixXd &f) {
  const int nv = static_cast<int>(f.rows());
  const int nq = static_cast<int>(f.cols());
  Eigen::VectorXd out(nv * nq);
  for (int i = 0; i < nv; ++i)
    out.segment(i * nq, nq) = f.row(i).transpose();
  return out;
}

/// Undamped synchronous update (hidden from current f, visible from the new m).
MagnetizationState raw_step(const PottsRBM &model,
                            const MagnetizationState &state, double beta,
                            MeanFieldVariant variant, StepCache &cache) {
  const int nv = model.n_visible();
  const int nq = model.n_states();
  const int nh = model.n_hidden();
  if (state.f.rows() != nv || state.f.cols() != nq || state.m.size() != nh)
    throw std::invalid_argument("mean-field step: state/model shape mismatch");
  cache.bind(model);
  const Eigen::MatrixXd &w = model.weights();

  const Eigen::VectorXd f_flat = flatten_f(state.f);
  const Eigen::VectorXd lin_h = w.transpose() * f_flat;

  Eigen::MatrixXd s;              // s(i,mu) = sum_q w_{i mu}^q f_i^q
  Eigen::VectorXd quad_h;         // Onsager bracket per hidden unit
  const bool tap = variant == MeanFieldVariant::Tap;
  if (tap) {
    s.resize(nv, nh);
    for (int i = 0; i < nv; ++i)
      s.row(i) = state.f.row(i) * w.middleRows(i * nq, nq);
    quad_h = cache.w2.transpose() * f_flat -
             s.array().square().colwise().sum().matrix().transpose();
  }

  MagnetizationState next;
  next.origin = state.origin;
  Eigen::VectorXd arg_m =
      model.hidden_fields() + beta * lin_h;
  if (tap)
    arg_m -= beta * beta * (state.m.array() - 0.5).matrix().cwiseProduct(quad_h);
  next.m = (1.0 / (1.0 + (-arg_m.array()).exp())).matrix();

  Eigen::VectorXd field = beta * (w * next.m);
  if (tap) {
    const Eigen::VectorXd g =
        (next.m.array() - next.m.array().square()).matrix();
    field += 0.5 * beta * beta * (cache.w2 * g);
    for (int i = 0; i < nv; ++i) {
      const Eigen::VectorXd gs = g.cwiseProduct(s.row(i).transpose());
      field.segment(i * nq, nq) -=
          beta * beta * (w.middleRows(i * nq, nq) * gs);
    }
  }
  next.f.resize(nv, nq);
  for (int i = 0; i < nv; ++i) {
    Eigen::VectorXd row = model.visible_fields().row(i).transpose() +
                          field.segment(i * nq, nq);
    row.array() -= row.maxCoeff();
    Eigen::VectorXd e = row.array().exp();
    next.f.row(i) = (e / e.sum()).transpose();
  }
  return next;
}

MagnetizationState blend(const MagnetizationState &raw,
                         const MagnetizationState &old, double damping) {
  if (damping <= 0.0)
    return raw;
  MagnetizationState out = raw;
  out.f = (1.0 - damping) * raw.f + damping * old.f;
  out.m = (1.0 - damping) * raw.m + damping * old.m;
  return out;
}

double max_abs_change(const MagnetizationState &a, const MagnetizationState &b) {
  return std::max((a.f - b.f).cwiseAbs().maxCoeff(),
                  a.m.size() > 0 ? (a.m - b.m).cwiseAbs().maxCoeff() : 0.0);
}

} // namespace

void MagnetizationState::validate(double tol) const {
  if (!f.allFinite() || !m.allFinite())
    throw std::runtime_error("MagnetizationState: non-finite entry");
  if (f.minCoeff() < 0.0 || f.maxCoeff() > 1.0)
    throw std::runtime_error("MagnetizationState: f outside [0,1]");
  for (int i = 0; i < f.rows(); ++i)
    if (std::abs(f.row(i).sum() - 1.0) > tol)
      throw std::runtime_error("MagnetizationState: f row not normalized");
  if (m.size() > 0 && (m.minCoeff() <= 0.0 || m.maxCoeff() >= 1.0))
    throw std::runtime_error("MagnetizationState: m outside (0,1)");
}

void TapConfig::validate() const {
  if (max_iters < 1 || !(tolerance > 0.0) || damping < 0.0 || damping >= 1.0)
    throw std::invalid_argument("TapConfig: invalid settings");
}

MagnetizationState init_from_data(const PottsRBM &model,
                                  const Eigen::VectorXi &v) {
  if (v.size() != model.n_visible())
    throw std::invalid_argument("init_from_data: dimension mismatch");
  const int nv = model.n_visible();
  const int nq = model.n_states();
  MagnetizationState state;
  state.origin = {Origin::Kind::Data, -1};

  Eigen::VectorXd arg = model.hidden_fields();
  for (int i = 0; i < nv; ++i)
    arg += model.weights().row(i * nq + v(i)).transpose();
  state.m = (1.0 / (1.0 + (-arg.array()).exp())).matrix();

  const Eigen::VectorXd field = model.weights() * state.m;
  state.f.resize(nv, nq);
  for (int i = 0; i < nv; ++i) {
    Eigen::VectorXd row = model.visible_fields().row(i).transpose() +
                          field.segment(i * nq, nq);
    row.array() -= row.maxCoeff();
    Eigen::VectorXd e = row.array().exp();
    state.f.row(i) = (e / e.sum()).transpose();
  }
  return state;
}

MagnetizationState tap_step(const PottsRBM &model,
                            const MagnetizationState &state, double beta,
                            double damping) {
  StepCache cache;
  return blend(raw_step(model, state, beta, MeanFieldVariant::Tap, cache),
               state, damping);
}

MagnetizationState nmf_step(const PottsRBM &model,
                            const MagnetizationState &state, double beta,
                            double damping) {
  StepCache cache;
  return blend(raw_step(model, state, beta, MeanFieldVariant::Nmf, cache),
               state, damping);
}

FixedPointResult iterate_to_fixed_point(const PottsRBM &model,
                                        MagnetizationState state,
                                        const TapConfig &config,
                                        MeanFieldVariant variant) {
  config.validate();
  StepCache cache;
  FixedPointResult result;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    // late-age models oscillate; escalate damping if still moving
    const double damping =
        iter > 500 ? std::max(config.damping, 0.7) : config.damping;
    MagnetizationState raw = raw_step(model, state, config.beta, variant, cache);
    const double change = max_abs_change(raw, state);
    result.iters = iter;
    if (change < config.tolerance) {
      state = std::move(raw);
      result.converged = true;
      break;
    }
    state = blend(raw, state, damping);
  }
  result.state = std::move(state);
  return result;
}

std::vector<FixedPointResult>
solve_fixed_points(const PottsRBM &model,
                   const std::vector<MagnetizationState> &inits,
                   const TapConfig &config, MeanFieldVariant variant,
                   int threads) {
  std::vector<FixedPointResult> results(inits.size());
  parallel_for(static_cast<int>(inits.size()), threads, [&](int idx) {
    results[idx] =
        iterate_to_fixed_point(model, inits[idx], config, variant);
  });
  return results;
}

FreeEnergyValue gibbs_free_energy_2(const PottsRBM &model,
                                    const MagnetizationState &state,
                                    double beta) {
  const int nv = model.n_visible();
  const int nq = model.n_states();
  const int nh = model.n_hidden();
  const Eigen::MatrixXd &w = model.weights();

  const double eps = 1e-12;
  Eigen::MatrixXd f = state.f.cwiseMax(eps).cwiseMin(1.0 - eps);
  Eigen::VectorXd m = state.m.cwiseMax(eps).cwiseMin(1.0 - eps);

  FreeEnergyValue out;
  out.entropic = (state.f.array() * model.visible_fields().array()).sum() +
                 state.m.dot(model.hidden_fields()) -
                 (f.array() * f.array().log()).sum() -
                 (m.array() * m.array().log() +
                  (1.0 - m.array()) * (1.0 - m.array()).log())
                     .sum();

  const Eigen::VectorXd f_flat = flatten_f(state.f);
  out.first_order = beta * m.dot(w.transpose() * f_flat);

  Eigen::MatrixXd s(nv, nh);
  for (int i = 0; i < nv; ++i)
    s.row(i) = state.f.row(i) * w.middleRows(i * nq, nq);
  const Eigen::VectorXd quad =
      w.array().square().matrix().transpose() * f_flat -
      s.array().square().colwise().sum().matrix().transpose();
  const Eigen::VectorXd g = (m.array() - m.array().square()).matrix();
  out.second_order = 0.5 * beta * beta * g.dot(quad);

  out.gamma2 = out.entropic + out.first_order + out.second_order;
  return out;
}

Eigen::VectorXd flatten_magnetizations(const MagnetizationState &state) {
  const int nf = static_cast<int>(state.f.size());
  Eigen::VectorXd out(nf + state.m.size());
  out.head(nf) = flatten_f(state.f);
  out.tail(state.m.size()) = state.m;
  return out;
}

} // namespace rbmtree
