#pragma once

#include "rbmtree/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace rbmtree {

/// One saved model together with its age (number of gradient updates).
struct Checkpoint {
  std::uint64_t age = 0;
  PottsRBM model;
};

/// Ordered series of checkpoints from one training run.
struct CheckpointSeries {
  std::vector<Checkpoint> checkpoints;
  nlohmann::json training_config;

  void validate() const; // ages strictly increasing, shapes equal
};

/// Binary checkpoint container:
///   8-byte magic "RBMTREE1"
///   little-endian u32 N_v, u32 N_q, u32 N_h
///   u64 age
///   1 gauge byte (0=None, 1=ZeroSum, 2=LatticeGas)
///   a[i][q]      N_v*N_q doubles, i-major
///   b[mu]        N_h doubles
///   w[i][mu][q]  N_v*N_h*N_q doubles, i outermost, q innermost
void save_checkpoint(const std::filesystem::path &path, const PottsRBM &model,
                     std::uint64_t age);
Checkpoint load_checkpoint(const std::filesystem::path &path);

/// Directory layout: ckpt_<age>.rbm files plus manifest.json with the list
/// of ages and the training configuration.
void save_series_manifest(const std::filesystem::path &dir,
                          const std::vector<std::uint64_t> &ages,
                          const nlohmann::json &training_config);
CheckpointSeries load_series(const std::filesystem::path &dir);

/// Writes `contents` to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path &path,
                       const std::string &contents);

} // namespace rbmtree
