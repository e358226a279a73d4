#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dell {

/// Minimal reader/writer for uint8 C-order .npy arrays (format version 1.0).
struct NpyU8 {
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> data;
};

void write_npy_u8(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
                  const std::uint8_t* data);
NpyU8 read_npy_u8(const std::filesystem::path& path);

}  // namespace dell
