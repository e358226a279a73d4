#include "dell/npy.hpp"

#include "dell/binary_io.hpp"
#include "dell/errors.hpp"

#include <numeric>
#include <regex>
#include <string>

namespace dell {

void write_npy_u8(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
                  const std::uint8_t* data) {
  std::string dims;
  for (auto d : shape) dims += std::to_string(d) + ", ";
  if (shape.size() > 1) dims.resize(dims.size() - 1);  // drop trailing space, keep comma
  std::string header = "{'descr': '|u1', 'fortran_order': False, 'shape': (" + dims + "), }";
  // magic(6) + version(2) + len(2) + header + '\n' padded to a multiple of 64
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');

  std::vector<std::uint8_t> bytes = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  bytes.push_back(static_cast<std::uint8_t>(header.size() & 0xff));
  bytes.push_back(static_cast<std::uint8_t>(header.size() >> 8));
  bytes.insert(bytes.end(), header.begin(), header.end());
  const std::size_t count = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  bytes.insert(bytes.end(), data, data + count);
  write_file(path, bytes);
}

NpyU8 read_npy_u8(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 10 || bytes[0] != 0x93 || std::string(bytes.begin() + 1, bytes.begin() + 6) != "NUMPY")
    throw ParseError("not an npy file: " + path.string());
  if (bytes[6] != 1) throw ParseError("unsupported npy version in " + path.string());
  const std::size_t header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
  if (bytes.size() < 10 + header_len) throw ParseError("truncated npy header in " + path.string());
  const std::string header(bytes.begin() + 10, bytes.begin() + 10 + static_cast<long>(header_len));
  if (header.find("'|u1'") == std::string::npos || header.find("'fortran_order': False") == std::string::npos)
    throw ParseError("expected a C-order uint8 array in " + path.string());

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('shape':\s*\(([^)]*)\))")))
    throw ParseError("npy header without shape in " + path.string());
  NpyU8 out;
  const std::string dims = m[1];
  std::regex num(R"(\d+)");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num); it != std::sregex_iterator(); ++it)
    out.shape.push_back(std::stoull(it->str()));
  const std::size_t count =
      std::accumulate(out.shape.begin(), out.shape.end(), std::size_t{1}, std::multiplies<>());
  if (bytes.size() != 10 + header_len + count) throw ParseError("npy payload size mismatch in " + path.string());
  out.data.assign(bytes.begin() + 10 + static_cast<long>(header_len), bytes.end());
  return out;
}

}  // namespace dell
