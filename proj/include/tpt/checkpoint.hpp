#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "tpt/model.hpp"
#include "tpt/rng.hpp"
#include "tpt/tensor.hpp"

namespace tpt {

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

/// On disk a checkpoint is a directory with manifest.json and tensors.bin.
/// The blob is raw little-endian f32 in manifest order.
struct Checkpoint {
  static constexpr int kVersion = 1;

  std::uint64_t step = 0;
  Rng::State rng;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
  /// Throws IoError when the tensor is missing.
  const CheckpointTensor& at(const std::string& name) const;
  void put(std::string name, Shape shape, std::vector<float> data);
};

/// Creates `dir` if needed and overwrites both files. Throws IoError.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
/// Throws IoError on missing files, bad manifest, or size mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Parameters go in as "param/<name>", theta snapshots as "theta_init/<layer>".
void export_model(const model::Model<float>& m, Checkpoint& ckpt);
/// Shapes must match the model's layout exactly; throws IoError otherwise.
void import_model(model::Model<float>& m, const Checkpoint& ckpt);

}  // namespace tpt
