#pragma once

// Single-file model container:
//
//   bytes 0..7   "LPCGMN01"
//   bytes 8..11  header length n (uint32, little-endian)
//   n bytes      JSON header: model config, seed, metadata, tensor table
//                [{name, shape: [rows, cols], offset}] with offsets in floats
//   rest         float32 little-endian tensor data, column-major per tensor
//
// Tensor names: "param/<path>" for weights; a training snapshot adds
// "adam.m/<path>", "adam.v/<path>" and "best/<path>" plus a "trainer" header
// object (step, next epoch, epoch history, best epoch).

#include "lpcgmn/train.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace lpcgmn::checkpoint {

inline constexpr char kMagic[9] = "LPCGMN01";

struct Checkpoint {
  ModelConfig model;
  std::uint64_t seed = 0;
  std::string metadata_json = "{}";
  train::NamedTensors params;
  std::optional<train::TrainerState> trainer;
};

void save(const std::filesystem::path& path, Network<float>& model, const std::string& metadata_json = "{}",
          const train::TrainerState* trainer = nullptr);

/// Throws LoadError on a missing, truncated or malformed file.
Checkpoint read(const std::filesystem::path& path);

/// Network with the checkpoint's config, seed and weights.
Network<float> instantiate(const Checkpoint& ckpt);

}  // namespace lpcgmn::checkpoint
