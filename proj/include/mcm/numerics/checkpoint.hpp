#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mcm/numerics/autograd.hpp"

namespace mcm {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Binary parameter file: magic "FMW1", u32 count, then per parameter a u32
// name length, UTF-8 name, u32 rank, u32 dims, little-endian f64 values.
std::vector<char> encode_checkpoint(const std::vector<NamedTensor>& params);
std::vector<NamedTensor> decode_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const std::filesystem::path& path,
                     const ParameterStore& store);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

// Copies values into the store by name; every stored parameter must be
// present with a matching shape.
void load_checkpoint(const std::filesystem::path& path, ParameterStore& store);
void assign_parameters(const std::vector<NamedTensor>& values,
                       ParameterStore& store);

std::vector<NamedTensor> snapshot(const ParameterStore& store);

}  // namespace mcm
