#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "psfr/errors.hpp"

namespace psfr::checkpoint {

/// File layout (all integers little-endian):
///   "PSFRCKPT" | u32 version | str kind | str config | i64 step | u64 count |
///   count x { str name | u8 dtype | u32 ndim | i64 dims[ndim] | raw data }
/// where str = u64 length + bytes.
inline constexpr char kMagic[8] = {'P', 'S', 'F', 'R', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kVersion = 1;

struct Checkpoint {
  std::string kind;    // "fpn", "psfr" or "weights"
  std::string config;  // canonical config echo
  int64_t step = 0;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
  void add(std::string name, const torch::Tensor& t);
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes, const std::string& source = "<memory>");

/// Writes to a temporary sibling then renames over `path`.
void write(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read(const std::filesystem::path& path);

/// Appends every parameter and buffer of `module` as `<prefix><name>`.
void store_module(Checkpoint& ckpt, const torch::nn::Module& module, const std::string& prefix);

/// Copies `<prefix><name>` entries into the module's parameters and buffers.
/// With `strict`, every parameter/buffer must be present; shapes must always match.
void load_module(torch::nn::Module& module, const Checkpoint& ckpt, const std::string& prefix,
                 bool strict = true);

void store_adam(Checkpoint& ckpt, torch::optim::Adam& optimizer, const std::string& prefix);
void load_adam(torch::optim::Adam& optimizer, const Checkpoint& ckpt, const std::string& prefix);

}  // namespace psfr::checkpoint
