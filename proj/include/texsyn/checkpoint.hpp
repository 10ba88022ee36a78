#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "texsyn/tensor.hpp"

// Checkpoint file layout (all integers little-endian):
//
//   8 bytes   magic "TXSYNCK1"
//   u32       format version (1)
//   u64       header length in bytes
//   header    UTF-8 JSON: {"meta": {...}, "tensors": [{"name", "shape",
//             "offset", "count"}, ...]}; offset/count are in doubles
//   payload   IEEE-754 binary64 values, tensors back to back
namespace texsyn::checkpoint {

inline constexpr char kMagic[8] = {'T', 'X', 'S', 'Y', 'N', 'C', 'K', '1'};
inline constexpr std::uint32_t kVersion = 1;

struct Entry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string meta_json = "{}";  // serialized JSON object
  std::vector<Entry> tensors;

  const Entry* find(const std::string& name) const;
};

void write(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws ContractError("corrupt checkpoint ...") on any structural problem.
Checkpoint read(const std::filesystem::path& path);

}  // namespace texsyn::checkpoint
