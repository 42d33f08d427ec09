#pragma once

// Binary checkpoint: "LGSE" magic, u32 version, model configuration,
// step counter, RNG state, then name/shape/float64 records in canonical
// order. All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lgse/model.hpp"
#include "lgse/training.hpp"

namespace lgse {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Mat value;
};

class Checkpoint {
 public:
  ModelConfig model;
  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<NamedTensor> tensors;  // parameters, then "adam.m.*"/"adam.v.*"

  static Checkpoint capture(const EnhancementModel& m, const Adam* opt = nullptr, const Rng* rng = nullptr);

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  /// Rebuilds the model; every parameter shape is checked against the
  /// stored configuration.
  EnhancementModel restore_model() const;
  void restore_optimizer(Adam& opt) const;
  void restore_rng(Rng& rng) const;

  const NamedTensor* find(const std::string& name) const;
};

}  // namespace lgse
