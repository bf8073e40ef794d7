#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "eatt/tensor.hpp"

namespace eatt {

// A named list of float32 tensors plus free-form metadata.
//
// On disk: a JSON manifest
//   {"format": "eatt-checkpoint", "version": 1, "blob": "<file>",
//    "tensors": [{"name", "shape", "dtype": "float32", "offset"}...],
//    "meta": {...}}
// next to a blob of little-endian float32 values; "offset" is in bytes.
// Tensors keep their insertion order and round-trip bit-exactly.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const Tensor<float>& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

// Writes `manifest` and `<manifest without extension>.bin` beside it.
void save_checkpoint(const std::filesystem::path& manifest, const Checkpoint& ckpt);

// Throws FormatError when a file is missing, the manifest is malformed or
// the blob is too short.
Checkpoint load_checkpoint(const std::filesystem::path& manifest);

}  // namespace eatt
