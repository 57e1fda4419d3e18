#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dannet/core/tensor.hpp"
#include "dannet/nn/layers.hpp"

namespace dannet::trainer {

/// Named arrays plus scalars, written as one versioned binary archive.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::int64_t> integers;
  std::map<std::string, std::vector<double>> vectors;
  std::map<std::string, std::string> strings;

  bool operator==(const Checkpoint&) const = default;
};

/// Writes to a sibling temp file and renames it into place.
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameters and buffers of `m` into `ck`.
void store_module(Checkpoint& ck, nn::Module& m);
/// Restores every parameter and buffer of `m`; missing or mis-shaped entries
/// throw DataError.
void restore_module(const Checkpoint& ck, nn::Module& m);
void store_buffers(Checkpoint& ck, const std::vector<nn::NamedBuffer>& buffers);
void restore_buffers(const Checkpoint& ck, const std::vector<nn::NamedBuffer>& buffers);

}  // namespace dannet::trainer
