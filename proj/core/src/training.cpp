#include "rbmtree/training.hpp"

#include "rbmtree/parallel.hpp"
#include "rbmtree/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace rbmtree {

namespace {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double uniform01(std::mt19937_64 &rng) {
  // 53-bit mantissa draw in [0, 1)
  return (rng() >> 11) * 0x1.0p-53;
}

Eigen::VectorXd flat_visible_fields(const PottsRBM &model) {
  const int nv = model.n_visible(), nq = model.n_states();
  Eigen::VectorXd a(nv * nq);
  for (int i = 0; i < nv; ++i)
    for (int q = 0; q < nq; ++q)
      a(i * nq + q) = model.visible_fields()(i, q);
  return a;
}

/// Scratch buffers reused across Gibbs steps.
struct GibbsWorkspace {
  RowMajorMatrix wr;      // row-major weight copy, (N_v*N_q) x N_h
  Eigen::VectorXd a_flat; // N_v*N_q
  RowMajorMatrix fh, ph;  // n_chains x N_h
  RowMajorMatrix fv, ev;  // n_chains x (N_v*N_q)
  RowMajorMatrix pv;      // n_chains x N_v, binary fast path

  void bind(const PottsRBM &model, int n_chains) {
    wr = model.weights();
    a_flat = flat_visible_fields(model);
    const int nh = model.n_hidden();
    const int nvq = model.n_visible() * model.n_states();
    if (fh.rows() != n_chains) {
      fh.resize(n_chains, nh);
      ph.resize(n_chains, nh);
      fv.resize(n_chains, nvq);
      ev.resize(n_chains, nvq);
    }
  }
};

void gibbs_step(const PottsRBM &model, ChainState &chains, GibbsWorkspace &ws,
                int threads) {
  const int nv = model.n_visible();
  const int nq = model.n_states();
  const int nh = model.n_hidden();
  const int nc = chains.n_chains();
  const Eigen::MatrixXd &w = model.weights();

  // h | v
  parallel_for(nc, threads, [&](int c) {
    double *out = ws.fh.data() + static_cast<std::ptrdiff_t>(c) * nh;
    const double *b = model.hidden_fields().data();
    for (int mu = 0; mu < nh; ++mu)
      out[mu] = b[mu];
    const double *wr = ws.wr.data();
    const int *v = chains.v.data() + c; // column-major, stride nc
    for (int i = 0; i < nv; ++i) {
      const double *src =
          wr + static_cast<std::ptrdiff_t>(i * nq + v[static_cast<std::ptrdiff_t>(i) * nc]) * nh;
      for (int mu = 0; mu < nh; ++mu)
        out[mu] += src[mu];
    }
  });
  ws.ph = 1.0 / (1.0 + (-ws.fh.array()).exp());
  parallel_for(nc, threads, [&](int c) {
    auto &rng = chains.rng[c];
    for (int mu = 0; mu < nh; ++mu)
      chains.h(c, mu) = uniform01(rng) < ws.ph(c, mu) ? 1.0 : 0.0;
  });

  // v | h
  const int nvq = nv * nq;
  parallel_for(nc, threads, [&](int c) {
    double *out = ws.fv.data() + static_cast<std::ptrdiff_t>(c) * nvq;
    const double *a = ws.a_flat.data();
    for (int r = 0; r < nvq; ++r)
      out[r] = a[r];
    const double *h = chains.h.data() + c; // column-major, stride nc
    const double *wc = w.data();           // column-major, columns contiguous
    for (int mu = 0; mu < nh; ++mu) {
      if (h[static_cast<std::ptrdiff_t>(mu) * nc] == 0.0)
        continue;
      const double *src = wc + static_cast<std::ptrdiff_t>(mu) * nvq;
      for (int r = 0; r < nvq; ++r)
        out[r] += src[r];
    }
  });
  if (nq == 2) {
    // binary sites: sample from the sigmoid of the field difference
    using Strided =
        Eigen::Map<const RowMajorMatrix, 0, Eigen::Stride<Eigen::Dynamic, 2>>;
    const Eigen::Stride<Eigen::Dynamic, 2> stride(nvq, 2);
    Strided f0(ws.fv.data(), nc, nv, stride);
    Strided f1(ws.fv.data() + 1, nc, nv, stride);
    ws.pv = f0 - f1; // contiguous copy so the exp below vectorizes
    ws.pv = 1.0 / (1.0 + ws.pv.array().exp());
    parallel_for(nc, threads, [&](int c) {
      auto &rng = chains.rng[c];
      int *vc = chains.v.data() + c;
      const double *p = ws.pv.data() + static_cast<std::ptrdiff_t>(c) * nv;
      for (int i = 0; i < nv; ++i)
        vc[static_cast<std::ptrdiff_t>(i) * nc] = uniform01(rng) < p[i] ? 1 : 0;
    });
    return;
  }

  const bool careful = ws.fv.maxCoeff() > 300.0;
  if (!careful)
    ws.ev = ws.fv.array().exp();
  parallel_for(nc, threads, [&](int c) {
    auto &rng = chains.rng[c];
    for (int i = 0; i < nv; ++i) {
      const int base = i * nq;
      double total = 0.0;
      if (careful) {
        double mx = ws.fv(c, base);
        for (int q = 1; q < nq; ++q)
          mx = std::max(mx, ws.fv(c, base + q));
        for (int q = 0; q < nq; ++q) {
          ws.ev(c, base + q) = std::exp(ws.fv(c, base + q) - mx);
          total += ws.ev(c, base + q);
        }
      } else {
        for (int q = 0; q < nq; ++q)
          total += ws.ev(c, base + q);
      }
      const double r = uniform01(rng) * total;
      double acc = 0.0;
      int pick = nq - 1;
      for (int q = 0; q < nq; ++q) {
        acc += ws.ev(c, base + q);
        if (r < acc) {
          pick = q;
          break;
        }
      }
      chains.v(c, i) = pick;
    }
  });
}

} // namespace

void TrainingConfig::validate() const {
  if (epochs < 0 || minibatch_size < 1 || gibbs_steps_k < 0 ||
      n_checkpoints < 1 || n_chains < 0 || threads < 1)
    throw std::invalid_argument("TrainingConfig: invalid counts");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("TrainingConfig: learning rate must be > 0");
  if (centered_gradients)
    throw std::invalid_argument("TrainingConfig: centered gradients unsupported");
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"epochs", epochs},
          {"minibatch_size", minibatch_size},
          {"gibbs_steps_k", gibbs_steps_k},
          {"learning_rate", learning_rate},
          {"n_chains", n_chains},
          {"n_checkpoints", n_checkpoints},
          {"rng_seed", rng_seed},
          {"centered_gradients", centered_gradients}};
}

ChainState init_chains(const PottsRBM &model, int n_chains,
                       std::uint64_t seed) {
  ChainState chains;
  chains.v.resize(n_chains, model.n_visible());
  chains.h.resize(n_chains, model.n_hidden());
  chains.rng.reserve(n_chains);
  for (int c = 0; c < n_chains; ++c) {
    std::seed_seq seq{static_cast<std::uint64_t>(0xC5A1E5u), seed,
                      static_cast<std::uint64_t>(c)};
    chains.rng.emplace_back(seq);
  }
  for (int c = 0; c < n_chains; ++c) {
    auto &rng = chains.rng[c];
    for (int i = 0; i < model.n_visible(); ++i)
      chains.v(c, i) = static_cast<int>(uniform01(rng) * model.n_states());
    Eigen::VectorXd p = hidden_conditional(model, chains.v.row(c).transpose());
    for (int mu = 0; mu < model.n_hidden(); ++mu)
      chains.h(c, mu) = uniform01(rng) < p(mu) ? 1.0 : 0.0;
  }
  return chains;
}

Eigen::VectorXd hidden_conditional(const PottsRBM &model,
                                   const Eigen::VectorXi &v) {
  if (v.size() != model.n_visible())
    throw std::invalid_argument("hidden_conditional: dimension mismatch");
  const int nq = model.n_states();
  Eigen::VectorXd f = model.hidden_fields();
  for (int i = 0; i < model.n_visible(); ++i)
    f += model.weights().row(i * nq + v(i)).transpose();
  return (1.0 / (1.0 + (-f.array()).exp())).matrix();
}

Eigen::MatrixXd visible_conditional(const PottsRBM &model,
                                    const Eigen::VectorXi &h) {
  if (h.size() != model.n_hidden())
    throw std::invalid_argument("visible_conditional: dimension mismatch");
  const int nv = model.n_visible(), nq = model.n_states();
  Eigen::VectorXd field = flat_visible_fields(model);
  for (int mu = 0; mu < model.n_hidden(); ++mu)
    if (h(mu) != 0)
      field += model.weights().col(mu);
  Eigen::MatrixXd p(nv, nq);
  for (int i = 0; i < nv; ++i) {
    Eigen::VectorXd row = field.segment(i * nq, nq);
    row.array() -= row.maxCoeff();
    Eigen::VectorXd e = row.array().exp();
    p.row(i) = (e / e.sum()).transpose();
  }
  return p;
}

void gibbs_sweep(const PottsRBM &model, ChainState &chains, int k,
                 int threads) {
  if (chains.v.cols() != model.n_visible() ||
      chains.h.cols() != model.n_hidden())
    throw std::invalid_argument("gibbs_sweep: chain/model shape mismatch");
  GibbsWorkspace ws;
  ws.bind(model, chains.n_chains());
  for (int step = 0; step < k; ++step)
    gibbs_step(model, chains, ws, threads);
}

GradientTriple data_statistics(const PottsRBM &model, const OneHotDataset &data,
                               const std::vector<int> &batch) {
  if (batch.empty())
    throw std::invalid_argument("data_statistics: empty batch");
  const int nv = model.n_visible(), nq = model.n_states(),
            nh = model.n_hidden();
  GradientTriple g;
  g.da = Eigen::MatrixXd::Zero(nv, nq);
  g.db = Eigen::VectorXd::Zero(nh);
  g.dw = Eigen::MatrixXd::Zero(nv * nq, nh);

  RowMajorMatrix wr = model.weights();
  double total_weight = 0.0;
  for (int m : batch) {
    const double x = data.weights(m);
    total_weight += x;
    Eigen::RowVectorXd field = model.hidden_fields().transpose();
    for (int i = 0; i < nv; ++i)
      field += wr.row(i * nq + data.states(m, i));
    Eigen::RowVectorXd ph = 1.0 / (1.0 + (-field.array()).exp());
    g.db += x * ph.transpose();
    for (int i = 0; i < nv; ++i) {
      const int q = data.states(m, i);
      g.da(i, q) += x;
      g.dw.row(i * nq + q) += x * ph;
    }
  }
  g.da /= total_weight;
  g.db /= total_weight;
  g.dw /= total_weight;
  return g;
}

GradientTriple model_statistics(const PottsRBM &model,
                                const ChainState &chains) {
  const int nv = model.n_visible(), nq = model.n_states(),
            nh = model.n_hidden();
  const int nc = chains.n_chains();
  GradientTriple g;
  g.da = Eigen::MatrixXd::Zero(nv, nq);
  g.db = Eigen::VectorXd::Zero(nh);
  g.dw = Eigen::MatrixXd::Zero(nv * nq, nh);
  for (int c = 0; c < nc; ++c) {
    g.db += chains.h.row(c).transpose();
    for (int i = 0; i < nv; ++i) {
      const int q = chains.v(c, i);
      g.da(i, q) += 1.0;
      g.dw.row(i * nq + q) += chains.h.row(c);
    }
  }
  g.da /= nc;
  g.db /= nc;
  g.dw /= nc;
  return g;
}

GradientTriple gradient(const PottsRBM &model, const OneHotDataset &data,
                        const std::vector<int> &batch,
                        const ChainState &chains) {
  GradientTriple d = data_statistics(model, data, batch);
  GradientTriple m = model_statistics(model, chains);
  d.da -= m.da;
  d.db -= m.db;
  d.dw -= m.dw;
  return d;
}

double exact_loglik(const PottsRBM &model, const OneHotDataset &data) {
  const int nv = model.n_visible(), nq = model.n_states(),
            nh = model.n_hidden();
  const double states = std::pow(static_cast<double>(nq), nv) *
                        std::pow(2.0, nh);
  if (states > static_cast<double>(1ULL << 26))
    throw std::invalid_argument("exact_loglik: model too large to enumerate");

  auto free_entropy = [&](const Eigen::VectorXi &v) {
    double s = 0.0;
    for (int i = 0; i < nv; ++i)
      s += model.visible_fields()(i, v(i));
    for (int mu = 0; mu < nh; ++mu) {
      double t = model.hidden_fields()(mu);
      for (int i = 0; i < nv; ++i)
        t += model.weight(i, mu, v(i));
      s += softplus(t);
    }
    return s;
  };

  // streaming log-sum-exp over all visible configurations
  double mx = -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  Eigen::VectorXi v = Eigen::VectorXi::Zero(nv);
  while (true) {
    const double s = free_entropy(v);
    if (s > mx) {
      acc = acc * std::exp(mx - s) + 1.0;
      mx = s;
    } else {
      acc += std::exp(s - mx);
    }
    int i = 0;
    for (; i < nv; ++i) {
      if (++v(i) < nq)
        break;
      v(i) = 0;
    }
    if (i == nv)
      break;
  }
  const double log_z = mx + std::log(acc);

  double ll = 0.0;
  for (int m = 0; m < data.n_samples; ++m) {
    Eigen::VectorXi vm = data.states.row(m).transpose();
    ll += data.weights(m) * (free_entropy(vm) - log_z);
  }
  return ll / data.effective_size();
}

double pseudo_loglik(const PottsRBM &model, const OneHotDataset &data,
                     int max_samples) {
  const int nv = model.n_visible(), nq = model.n_states(),
            nh = model.n_hidden();
  const int m_use = std::min(max_samples, data.n_samples);
  double total = 0.0;
  for (int m = 0; m < m_use; ++m) {
    Eigen::VectorXd theta = model.hidden_fields();
    for (int i = 0; i < nv; ++i)
      theta += model.weights().row(i * nq + data.states(m, i)).transpose();
    for (int i = 0; i < nv; ++i) {
      const int q0 = data.states(m, i);
      Eigen::VectorXd logw(nq);
      for (int q = 0; q < nq; ++q) {
        double s = model.visible_fields()(i, q);
        for (int mu = 0; mu < nh; ++mu)
          s += softplus(theta(mu) - model.weight(i, mu, q0) +
                        model.weight(i, mu, q));
        logw(q) = s;
      }
      const double mx = logw.maxCoeff();
      total += logw(q0) - mx - std::log((logw.array() - mx).exp().sum());
    }
  }
  return total / m_use;
}

CheckpointSeries train(PottsRBM model, const OneHotDataset &data,
                       const TrainingConfig &config, const CheckpointSink &sink,
                       const UpdateObserver &observer, bool keep_in_memory) {
  config.validate();
  data.validate();
  if (data.n_visible != model.n_visible() || data.n_states != model.n_states())
    throw std::invalid_argument("train: dataset/model shape mismatch");

  const int mb = std::min(config.minibatch_size, data.n_samples);
  const int n_chains = config.n_chains > 0 ? config.n_chains : mb;
  const int updates_per_epoch = (data.n_samples + mb - 1) / mb;
  const std::uint64_t total_updates =
      static_cast<std::uint64_t>(config.epochs) * updates_per_epoch;

  std::set<std::uint64_t> ckpt_ages;
  if (total_updates == 0) {
    ckpt_ages.insert(0);
  } else {
    for (int j = 1; j <= config.n_checkpoints; ++j) {
      std::uint64_t age = static_cast<std::uint64_t>(std::llround(
          static_cast<double>(j) * total_updates / config.n_checkpoints));
      if (age >= 1)
        ckpt_ages.insert(age);
    }
    ckpt_ages.insert(total_updates);
  }

  CheckpointSeries series;
  series.training_config = config.to_json();

  auto emit = [&](std::uint64_t age) {
    Checkpoint ckpt{age, model};
    if (sink) {
      double ll;
      const double n_conf = std::pow(static_cast<double>(model.n_states()),
                                     model.n_visible()) *
                            std::pow(2.0, model.n_hidden());
      if (n_conf <= static_cast<double>(1ULL << 26))
        ll = exact_loglik(model, data);
      else
        ll = pseudo_loglik(model, data);
      Eigen::VectorXd sv = weight_spectrum(model);
      Eigen::VectorXd top = Eigen::VectorXd::Zero(10);
      top.head(std::min<int>(10, static_cast<int>(sv.size()))) =
          sv.head(std::min<int>(10, static_cast<int>(sv.size())));
      sink(ckpt, ll, top);
    }
    if (keep_in_memory)
      series.checkpoints.push_back(std::move(ckpt));
  };

  if (total_updates == 0) {
    emit(0);
    return series;
  }

  ChainState chains = init_chains(model, n_chains, config.rng_seed);
  GibbsWorkspace ws;
  std::mt19937_64 perm_rng(config.rng_seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<int> order(data.n_samples);
  std::iota(order.begin(), order.end(), 0);

  std::uint64_t age = 0;
  std::vector<int> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), perm_rng);
    for (int u = 0; u < updates_per_epoch; ++u) {
      const int lo = u * mb;
      const int hi = std::min<int>(lo + mb, data.n_samples);
      batch.assign(order.begin() + lo, order.begin() + hi);

      ws.bind(model, n_chains);
      for (int step = 0; step < config.gibbs_steps_k; ++step)
        gibbs_step(model, chains, ws, config.threads);

      GradientTriple g = gradient(model, data, batch, chains);
      model.visible_fields() += config.learning_rate * g.da;
      model.hidden_fields() += config.learning_rate * g.db;
      model.weights() += config.learning_rate * g.dw;
      apply_gauge_in_place(model, Gauge::ZeroSum);
      ++age;

      if (!model.visible_fields().allFinite() ||
          !model.hidden_fields().allFinite() || !model.weights().allFinite())
        throw std::runtime_error(
            "train: non-finite parameters at age " + std::to_string(age) +
            " (learning rate " + std::to_string(config.learning_rate) + ")");

      if (observer)
        observer(age, model, chains);
      if (ckpt_ages.count(age))
        emit(age);
    }
  }
  return series;
}

Eigen::VectorXd compute_sequence_weights(const OneHotDataset &data,
                                         double identity_threshold) {
  if (!(identity_threshold > 0.0 && identity_threshold < 1.0))
    throw std::invalid_argument(
        "compute_sequence_weights: threshold must be in (0,1)");
  const int m = data.n_samples;
  std::vector<int> parent(m);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      int equal = 0;
      for (int s = 0; s < data.n_visible; ++s)
        equal += data.states(i, s) == data.states(j, s);
      const double identity = static_cast<double>(equal) / data.n_visible;
      if (identity > identity_threshold)
        parent[find(i)] = find(j);
    }
  std::vector<int> size(m, 0);
  for (int i = 0; i < m; ++i)
    ++size[find(i)];
  Eigen::VectorXd x(m);
  for (int i = 0; i < m; ++i)
    x(i) = 1.0 / size[find(i)];
  return x;
}

PottsRBM init_model_from_data(const OneHotDataset &data, int n_hidden,
                              std::uint64_t seed) {
  data.validate();
  PottsRBM model(data.n_visible, data.n_states, n_hidden, Gauge::None);
  const double alpha = 1e-4;
  const double m_eff = data.effective_size();
  for (int i = 0; i < data.n_visible; ++i) {
    Eigen::VectorXd freq =
        Eigen::VectorXd::Constant(data.n_states, alpha);
    for (int m = 0; m < data.n_samples; ++m)
      freq(data.states(m, i)) += data.weights(m);
    freq /= m_eff + alpha * data.n_states;
    model.visible_fields().row(i) = freq.array().log().transpose();
  }
  std::mt19937_64 rng(seed ^ 0xA24BAED4963EE407ULL);
  std::normal_distribution<double> gauss(0.0, 1e-4);
  for (int r = 0; r < model.weights().rows(); ++r)
    for (int mu = 0; mu < n_hidden; ++mu)
      model.weights()(r, mu) = gauss(rng);
  apply_gauge_in_place(model, Gauge::ZeroSum);
  return model;
}

} // namespace rbmtree
