#pragma once

// Versioned binary container for named arrays plus a JSON metadata block.
//
// Layout (little-endian):
//   magic "DLMCKPT\0" | u32 version | u32 kind length | kind bytes
//   u64 meta length | meta bytes (JSON text)
//   u64 array count | per array: u32 name length | name | u64 rows | u64 cols | rows*cols f64
//   u64 FNV-1a hash of all preceding bytes

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dlm/autodiff.hpp"

namespace dlm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Archive {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> arrays;

  void add(std::string name, Matrix value);
  const Matrix& get(std::string_view name) const;
  bool contains(std::string_view name) const;
};

std::string encode_archive(const Archive& archive);
// Throws FormatError on a bad magic, unsupported version, truncation or
// checksum mismatch.
Archive decode_archive(std::string_view bytes);

// Written to a temporary file and renamed into place.
void save_archive(const Archive& archive, const std::string& path);
Archive load_archive(const std::string& path);

}  // namespace dlm
