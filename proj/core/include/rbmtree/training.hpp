#pragma once

#include "rbmtree/checkpoint.hpp"
#include "rbmtree/dataset.hpp"
#include "rbmtree/model.hpp"

#include <functional>
#include <random>

#include <json.hpp>

namespace rbmtree {

struct TrainingConfig {
  int epochs = 10000;
  int minibatch_size = 512;
  int gibbs_steps_k = 100;   // PCD-k
  double learning_rate = 1e-3;
  int n_chains = 0;          // 0 -> minibatch_size
  int n_checkpoints = 500;
  std::uint64_t rng_seed = 0;
  bool centered_gradients = false; // accepted for manifest compatibility, unsupported
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Persistent Gibbs chains, one independent RNG stream per chain.
struct ChainState {
  Eigen::MatrixXi v;                  // n_chains x N_v
  Eigen::MatrixXd h;                  // n_chains x N_h, entries 0/1
  std::vector<std::mt19937_64> rng;

  int n_chains() const { return static_cast<int>(v.rows()); }
};

ChainState init_chains(const PottsRBM &model, int n_chains,
                       std::uint64_t seed);

/// p(h_mu = 1 | v) = sigmoid(b_mu + sum_iq delta_{v_i,q} w_{i mu}^q)
Eigen::VectorXd hidden_conditional(const PottsRBM &model,
                                   const Eigen::VectorXi &v);

/// Row i = softmax_q(a_i^q + sum_mu h_mu w_{i mu}^q); rows sum to 1.
Eigen::MatrixXd visible_conditional(const PottsRBM &model,
                                    const Eigen::VectorXi &h);

/// k alternating block updates (h|v then v|h) on every chain.
void gibbs_sweep(const PottsRBM &model, ChainState &chains, int k,
                 int threads = 1);

/// Parameter-shaped gradient triple; shapes match (a, b, w) storage.
struct GradientTriple {
  Eigen::MatrixXd da; // N_v x N_q
  Eigen::VectorXd db; // N_h
  Eigen::MatrixXd dw; // (N_v*N_q) x N_h
};

/// Weighted data-side moments over the given batch; hidden statistics use
/// the conditional means p(h|v).
GradientTriple data_statistics(const PottsRBM &model, const OneHotDataset &data,
                               const std::vector<int> &batch);

/// Model-side moments estimated from the chain samples.
GradientTriple model_statistics(const PottsRBM &model, const ChainState &chains);

/// Log-likelihood gradient: data moments minus chain moments.
GradientTriple gradient(const PottsRBM &model, const OneHotDataset &data,
                        const std::vector<int> &batch, const ChainState &chains);

/// Weighted mean log-probability with Z computed by exact enumeration of the
/// visible states (hidden layer marginalized analytically). Refuses when
/// N_q^N_v * 2^N_h exceeds 2^26.
double exact_loglik(const PottsRBM &model, const OneHotDataset &data);

/// Mean per-sample pseudo-log-likelihood sum_i log p(v_i | v_rest) on at
/// most `max_samples` samples. Cheap trajectory proxy for large models.
double pseudo_loglik(const PottsRBM &model, const OneHotDataset &data,
                     int max_samples = 64);

/// Called for every emitted checkpoint with the trajectory diagnostics.
using CheckpointSink = std::function<void(
    const Checkpoint &, double loglik, const Eigen::VectorXd &top_svals)>;

/// Called after every gradient update; used by tests to observe PCD state.
using UpdateObserver = std::function<void(std::uint64_t age, const PottsRBM &,
                                          const ChainState &)>;

/// PCD-k stochastic gradient ascent. Re-projects to the zero-sum gauge after
/// every update and emits n_checkpoints equally spaced models (final model
/// always included). Throws on non-finite parameters.
CheckpointSeries train(PottsRBM model, const OneHotDataset &data,
                       const TrainingConfig &config,
                       const CheckpointSink &sink = nullptr,
                       const UpdateObserver &observer = nullptr,
                       bool keep_in_memory = true);

/// Single-linkage clusters under normalized Hamming identity > threshold;
/// each sample gets weight 1/|cluster|.
Eigen::VectorXd compute_sequence_weights(const OneHotDataset &data,
                                         double identity_threshold);

/// High-temperature start: tiny random weights, visible fields from smoothed
/// empirical frequencies, zero hidden fields; zero-sum gauge.
PottsRBM init_model_from_data(const OneHotDataset &data, int n_hidden,
                              std::uint64_t seed);

} // namespace rbmtree
