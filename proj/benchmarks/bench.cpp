#include "rbmtree/dbscan.hpp"
#include "rbmtree/meanfield.hpp"
#include "rbmtree/training.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace rbmtree;

namespace {

PottsRBM make_model(int nv, int nq, int nh, double scale) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss(0.0, scale);
  PottsRBM model(nv, nq, nh);
  for (int r = 0; r < nv * nq; ++r)
    for (int mu = 0; mu < nh; ++mu)
      model.weights()(r, mu) = gauss(rng);
  apply_gauge_in_place(model, Gauge::ZeroSum);
  return model;
}

void bm_gibbs_sweep(benchmark::State &state) {
  const int nv = static_cast<int>(state.range(0));
  const int nh = static_cast<int>(state.range(1));
  PottsRBM model = make_model(nv, 2, nh, 0.1);
  ChainState chains = init_chains(model, 128, 7);
  for (auto _ : state)
    gibbs_sweep(model, chains, 1);
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(bm_gibbs_sweep)->Args({200, 64})->Args({805, 512});

void bm_tap_step(benchmark::State &state) {
  const int nv = static_cast<int>(state.range(0));
  const int nh = static_cast<int>(state.range(1));
  PottsRBM model = make_model(nv, 2, nh, 0.1);
  Eigen::VectorXi v = Eigen::VectorXi::Zero(nv);
  MagnetizationState s = init_from_data(model, v);
  for (auto _ : state) {
    s = tap_step(model, s, 1.0, 0.3);
    benchmark::DoNotOptimize(s.m.sum());
  }
}
BENCHMARK(bm_tap_step)->Args({200, 64})->Args({805, 512});

void bm_dbscan(benchmark::State &state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<Eigen::VectorXd> pts;
  for (int s = 0; s < n; ++s) {
    Eigen::VectorXd p(16);
    for (int k = 0; k < 16; ++k)
      p(k) = u(rng);
    pts.push_back(p);
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(dbscan(pts, 1.0, 1));
}
BENCHMARK(bm_dbscan)->Arg(200)->Arg(800);

} // namespace

BENCHMARK_MAIN();
