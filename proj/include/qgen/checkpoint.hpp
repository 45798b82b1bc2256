#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qgen/tensor.hpp"

namespace qgen {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Binary checkpoint: versioned header followed by named tensors (name, shape,
// raw 64-bit floats). Round trips are bit-exact. Throws std::runtime_error on
// I/O failure or malformed files.
void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

// Lookup helper; throws std::runtime_error when the name is missing.
const Tensor& find_tensor(const NamedTensors& tensors, const std::string& name);

}  // namespace qgen
