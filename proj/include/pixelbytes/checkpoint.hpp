#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pixelbytes/parameter.hpp"

namespace pixelbytes {

class SequenceModel;

// Single-file parameter container, little-endian:
//   "PXCK" | u8 version (1) | u32 json length | config json | u64 seed
//   | u32 array count | per array: u16 name length, name, u8 rank,
//     u32 dims[rank], f64 values (row-major)
struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<NamedArray> arrays;
};

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config, std::uint64_t seed,
                     const ParameterList& parameters);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies arrays into parameters by name; throws on missing names or shape
// mismatches.
void restore_parameters(const Checkpoint& checkpoint, const ParameterList& parameters);

// Rebuilds a sequence model from a checkpoint whose config has a "model"
// entry.
SequenceModel load_model(const std::filesystem::path& path);

}  // namespace pixelbytes
