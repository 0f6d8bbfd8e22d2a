#pragma once

#include <string>
#include <utility>
#include <vector>

#include "milatp/model.hpp"

namespace milatp {

struct CheckpointTensor {
  std::string name;
  std::vector<Index> shape;
  std::vector<float> values;
};

struct CheckpointData {
  std::string config_json;  // {"codec": {...}, "model": {...}}
  std::vector<CheckpointTensor> tensors;
};

/// Binary checkpoint: magic, version, config echo, then named float32
/// tensors. Little-endian, written and read on the same architecture.
void write_checkpoint_file(const std::string& path,
                           const CheckpointData& data);
CheckpointData read_checkpoint_file(const std::string& path);

/// Serializes a model's weights together with the codec/model config
/// needed to rebuild it.
void save_model(const std::string& path, MilModel<float>& model);

/// Rebuilds a model from a checkpoint; throws std::runtime_error with a
/// mismatch diagnostic when tensors and config disagree.
MilModel<float> load_model(const std::string& path);

}  // namespace milatp
