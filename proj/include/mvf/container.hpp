#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvf/tensor.hpp"

namespace mvf {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary tensor container shared by checkpoints, datasets and outputs.
///
/// Layout (all integers little-endian):
///   "MVFT" | u32 version | u32 float bits (32 or 64)
///   u32 meta count, then per entry: u32 len, key bytes, u32 len, value bytes
///   u32 tensor count, then per entry: u32 len, name bytes, u32 rank, u64 dims
///   payload: every tensor's values in table order, little-endian IEEE floats
///   u32 CRC-32 of the payload
struct TensorFile {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void set_meta(const std::string& key, std::string value);
  const std::string& meta_value(const std::string& key) const;
  bool has_meta(const std::string& key) const;
  void add(std::string name, Tensor t);
  const Tensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

std::string encode_tensor_file(const TensorFile& file, Precision storage);
TensorFile decode_tensor_file(const std::string& bytes);

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file, Precision storage);
TensorFile read_tensor_file(const std::filesystem::path& path);

std::uint32_t crc32_of(const std::string& bytes);

}  // namespace mvf
