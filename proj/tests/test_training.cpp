#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle.hpp"
#include "rbmtree/training.hpp"

#include <algorithm>
#include <limits>
#include <vector>

using namespace rbmtree;

namespace {

OneHotDataset random_dataset(int m, int nv, int nq, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXi states(m, nv);
  for (int s = 0; s < m; ++s)
    for (int i = 0; i < nv; ++i)
      states(s, i) = static_cast<int>(rng() % nq);
  return OneHotDataset::from_states(states, nq);
}

} // namespace

TEST_CASE("conditionals match enumeration") {
  PottsRBM model = oracle::random_model(3, 2, 2, 42, 0.9);
  oracle::for_each_visible(3, 2, [&](const Eigen::VectorXi &v) {
    Eigen::VectorXd p = hidden_conditional(model, v);
    Eigen::VectorXd p0 = oracle::hidden_conditional(model, v);
    CHECK((p - p0).cwiseAbs().maxCoeff() < 1e-12);
  });
  oracle::for_each_hidden(2, [&](const Eigen::VectorXi &h) {
    Eigen::MatrixXd p = visible_conditional(model, h);
    Eigen::MatrixXd p0 = oracle::visible_conditional(model, h);
    CHECK((p - p0).cwiseAbs().maxCoeff() < 1e-12);
  });
}

TEST_CASE("exact_loglik matches naive enumeration") {
  PottsRBM model = oracle::random_model(3, 2, 2, 43, 0.8);
  OneHotDataset data = random_dataset(7, 3, 2, 1);
  data.weights << 1.0, 0.5, 2.0, 1.0, 0.25, 1.0, 3.0;
  CHECK(exact_loglik(model, data) ==
        doctest::Approx(oracle::loglik(model, data)).epsilon(1e-10));

  PottsRBM huge(100, 2, 40);
  CHECK_THROWS(exact_loglik(huge, random_dataset(2, 100, 2, 2)));
}

TEST_CASE("analytic gradient matches finite differences") {
  PottsRBM model = oracle::random_model(4, 2, 3, 44, 1.0);
  OneHotDataset data = random_dataset(6, 4, 2, 3);
  data.weights << 1.0, 2.0, 0.5, 1.0, 1.0, 0.25;
  std::vector<int> batch(6);
  for (int i = 0; i < 6; ++i)
    batch[i] = i;

  GradientTriple g = data_statistics(model, data, batch);
  GradientTriple mm = oracle::model_moments(model);
  g.da -= mm.da;
  g.db -= mm.db;
  g.dw -= mm.dw;

  const double h = 1e-5;
  auto fd = [&](double &theta) {
    const double keep = theta;
    theta = keep + h;
    const double up = exact_loglik(model, data);
    theta = keep - h;
    const double dn = exact_loglik(model, data);
    theta = keep;
    return (up - dn) / (2 * h);
  };
  double max_rel = 0.0;
  auto rel = [&](double analytic, double numeric) {
    const double err =
        std::abs(analytic - numeric) / std::max(std::abs(analytic), 1e-4);
    max_rel = std::max(max_rel, err);
  };
  for (int i = 0; i < 4; ++i)
    for (int q = 0; q < 2; ++q)
      rel(g.da(i, q), fd(model.visible_fields()(i, q)));
  for (int mu = 0; mu < 3; ++mu)
    rel(g.db(mu), fd(model.hidden_fields()(mu)));
  for (int r = 0; r < 8; ++r)
    for (int mu = 0; mu < 3; ++mu)
      rel(g.dw(r, mu), fd(model.weights()(r, mu)));
  CHECK(max_rel < 1e-5);
}

TEST_CASE("model statistics count chain configurations") {
  PottsRBM model = oracle::random_model(2, 3, 2, 45, 0.5);
  ChainState chains;
  chains.v.resize(2, 2);
  chains.v << 0, 2, 1, 2;
  chains.h.resize(2, 2);
  chains.h << 1, 0, 1, 1;
  GradientTriple g = model_statistics(model, chains);
  CHECK(g.da(0, 0) == doctest::Approx(0.5));
  CHECK(g.da(0, 1) == doctest::Approx(0.5));
  CHECK(g.da(1, 2) == doctest::Approx(1.0));
  CHECK(g.db(0) == doctest::Approx(1.0));
  CHECK(g.db(1) == doctest::Approx(0.5));
  CHECK(g.dw(0 * 3 + 0, 0) == doctest::Approx(0.5));
  CHECK(g.dw(1 * 3 + 2, 1) == doctest::Approx(0.5));
}

TEST_CASE("gibbs sampling approaches exact marginals") {
  PottsRBM model = oracle::random_model(3, 2, 2, 46, 0.6);
  ChainState chains = init_chains(model, 256, 7);
  gibbs_sweep(model, chains, 50);

  // average indicator over chains and a further long window
  Eigen::MatrixXd f_hat = Eigen::MatrixXd::Zero(3, 2);
  Eigen::VectorXd m_hat = Eigen::VectorXd::Zero(2);
  const int windows = 40;
  for (int t = 0; t < windows; ++t) {
    gibbs_sweep(model, chains, 2);
    for (int c = 0; c < chains.n_chains(); ++c) {
      for (int i = 0; i < 3; ++i)
        f_hat(i, chains.v(c, i)) += 1.0;
      m_hat += chains.h.row(c).transpose();
    }
  }
  f_hat /= 256.0 * windows;
  m_hat /= 256.0 * windows;

  Eigen::MatrixXd f;
  Eigen::VectorXd m;
  oracle::marginals(model, f, m);
  CHECK((f - f_hat).cwiseAbs().maxCoeff() < 0.03);
  CHECK((m - m_hat).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("gibbs sweep is deterministic and thread-count invariant") {
  PottsRBM model = oracle::random_model(4, 3, 3, 47, 0.8);
  ChainState c1 = init_chains(model, 16, 5);
  ChainState c2 = init_chains(model, 16, 5);
  CHECK(c1.v == c2.v);
  gibbs_sweep(model, c1, 20, 1);
  gibbs_sweep(model, c2, 20, 2);
  CHECK(c1.v == c2.v);
  CHECK(c1.h == c2.h);

  ChainState c3 = init_chains(model, 16, 6);
  gibbs_sweep(model, c3, 20, 1);
  CHECK(c1.v != c3.v);
}

TEST_CASE("training keeps persistent chains and emits scheduled checkpoints") {
  OneHotDataset data = random_dataset(12, 3, 2, 9);
  PottsRBM model = init_model_from_data(data, 2, 1);

  TrainingConfig cfg;
  cfg.epochs = 4;
  cfg.minibatch_size = 4;
  cfg.gibbs_steps_k = 3;
  cfg.learning_rate = 0.05;
  cfg.n_checkpoints = 3;
  cfg.rng_seed = 2;

  std::vector<std::uint64_t> ages;
  Eigen::MatrixXi prev_v;
  int moved = 0;
  auto observer = [&](std::uint64_t, const PottsRBM &m, const ChainState &c) {
    m.validate(1e-8);
    if (prev_v.size() > 0 && c.v != prev_v)
      ++moved;
    prev_v = c.v;
  };
  CheckpointSeries series =
      train(model, data, cfg,
            [&](const Checkpoint &c, double ll, const Eigen::VectorXd &sv) {
              ages.push_back(c.age);
              CHECK(std::isfinite(ll));
              CHECK(sv.size() == 10);
            },
            observer);
  series.validate();

  // 4 epochs x 3 updates = 12 updates, checkpoints at 4, 8, 12
  CHECK(ages == std::vector<std::uint64_t>{4, 8, 12});
  CHECK(series.checkpoints.size() == 3);
  CHECK(series.checkpoints.back().age == 12);
  CHECK(moved > 0); // chains persist and keep moving between updates

  // zero epochs: initial model only
  cfg.epochs = 0;
  CheckpointSeries init_only = train(model, data, cfg);
  CHECK(init_only.checkpoints.size() == 1);
  CHECK(init_only.checkpoints[0].age == 0);
}

TEST_CASE("training improves the likelihood on a small dataset") {
  Eigen::MatrixXi states(8, 3);
  states << 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 1,
      1, 1;
  OneHotDataset data = OneHotDataset::from_states(states, 2);
  PottsRBM model = init_model_from_data(data, 3, 4);
  const double ll0 = exact_loglik(model, data);

  TrainingConfig cfg;
  cfg.epochs = 1000;
  cfg.minibatch_size = 8;
  cfg.gibbs_steps_k = 5;
  cfg.learning_rate = 0.05;
  cfg.n_checkpoints = 10;
  cfg.rng_seed = 3;
  CheckpointSeries series = train(model, data, cfg);
  // PCD with a handful of chains is noisy late in training; the trajectory
  // should still visit models that clearly beat the independent-site init.
  double ll1 = -std::numeric_limits<double>::infinity();
  for (const Checkpoint &c : series.checkpoints)
    ll1 = std::max(ll1, exact_loglik(c.model, data));
  CHECK(ll1 > ll0 + 0.1);
}

TEST_CASE("training is deterministic for fixed seed and threads") {
  OneHotDataset data = random_dataset(10, 4, 2, 21);
  PottsRBM model = init_model_from_data(data, 3, 5);
  TrainingConfig cfg;
  cfg.epochs = 5;
  cfg.minibatch_size = 5;
  cfg.gibbs_steps_k = 2;
  cfg.n_checkpoints = 2;
  cfg.rng_seed = 11;
  CheckpointSeries a = train(model, data, cfg);
  CheckpointSeries b = train(model, data, cfg);
  REQUIRE(a.checkpoints.size() == b.checkpoints.size());
  for (std::size_t k = 0; k < a.checkpoints.size(); ++k) {
    CHECK(a.checkpoints[k].model.weights() == b.checkpoints[k].model.weights());
    CHECK(a.checkpoints[k].model.visible_fields() ==
          b.checkpoints[k].model.visible_fields());
  }
}

TEST_CASE("centered gradients flag is rejected") {
  TrainingConfig cfg;
  cfg.centered_gradients = true;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("sequence reweighting splits weight over identical clusters") {
  Eigen::MatrixXi states(5, 5);
  states << 0, 0, 0, 0, 0, //
      0, 0, 0, 0, 0,       //
      1, 1, 1, 1, 1,       //
      1, 1, 1, 1, 1,       //
      0, 1, 0, 1, 1;
  OneHotDataset data = OneHotDataset::from_states(states, 2);
  Eigen::VectorXd x = compute_sequence_weights(data, 0.8);
  CHECK(x(0) == doctest::Approx(0.5));
  CHECK(x(1) == doctest::Approx(0.5));
  CHECK(x(2) == doctest::Approx(0.5));
  CHECK(x(3) == doctest::Approx(0.5));
  CHECK(x(4) == doctest::Approx(1.0));
}

TEST_CASE("pseudo log-likelihood tracks the exact one in sign of change") {
  OneHotDataset data = random_dataset(6, 3, 2, 31);
  PottsRBM weak = oracle::random_model(3, 2, 2, 50, 0.05);
  CHECK(std::isfinite(pseudo_loglik(weak, data)));
  // perfectly matched fields raise both scores
  PottsRBM fit = init_model_from_data(data, 2, 1);
  CHECK(pseudo_loglik(fit, data) > pseudo_loglik(weak, data) - 1e-9);
}

TEST_CASE("data-driven initialization reproduces empirical frequencies") {
  OneHotDataset data = random_dataset(50, 4, 3, 41);
  PottsRBM model = init_model_from_data(data, 5, 7);
  CHECK_NOTHROW(model.validate(1e-8));
  CHECK(model.gauge() == Gauge::ZeroSum);
  CHECK(model.weights().cwiseAbs().maxCoeff() < 1e-2);
  // visible softmax of fields ~ empirical single-site frequencies
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd row = model.visible_fields().row(i).transpose();
    row.array() -= row.maxCoeff();
    Eigen::VectorXd p = row.array().exp();
    p /= p.sum();
    for (int q = 0; q < 3; ++q) {
      double freq = 0.0;
      for (int m = 0; m < 50; ++m)
        freq += data.states(m, i) == q;
      freq /= 50.0;
      CHECK(p(q) == doctest::Approx(freq).epsilon(0.02).scale(1.0));
    }
  }
}
