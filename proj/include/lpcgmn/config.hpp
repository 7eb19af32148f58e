#pragma once

// JSON run configuration: one file drives every CLI command. Unknown keys
// are rejected; `section.key=value` overrides are applied before parsing.

#include "lpcgmn/lpcgmn.hpp"
#include "lpcgmn/synthgen.hpp"
#include "lpcgmn/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace lpcgmn::config {

using json = nlohmann::json;

struct DataConfig {
  std::string dataset = "data/synthetic";  // dataset root (datagen writes here)
  std::string layout = "toolkit";          // toolkit | radiomapseer
  int count = 100;                         // datagen sample count
  int max_samples = 0;                     // 0 = use every sample
  std::string eval_dataset;                // eval: dataset to score (defaults to the test split of `dataset`)
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct OutputConfig {
  std::string dir = "runs/default";
  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct RunConfig {
  synth::SynthConfig synth;
  ModelConfig model;
  train::TrainConfig train;
  DataConfig data;
  OutputConfig output;
};

json to_json(const GridSpec& g);
json to_json(const ModelConfig& m);
json to_json(const train::TrainConfig& t);
json to_json(const RunConfig& c);

GridSpec grid_from_json(const json& j);
ModelConfig model_from_json(const json& j);
train::TrainConfig train_from_json(const json& j);
/// Throws ConfigError on unknown sections/keys or ill-typed values.
RunConfig from_json(const json& j);

/// Applies "section.key=value"; the value is parsed as JSON when possible,
/// otherwise taken as a string. Throws ConfigError on malformed input.
void apply_override(json& j, const std::string& assignment);

RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

DatasetLayout parse_layout(const std::string& s);

/// output.dir, placed under $LPCGMN_OUTPUT_ROOT when set and relative.
std::filesystem::path output_dir(const RunConfig& c);

void validate(const RunConfig& c);

}  // namespace lpcgmn::config
