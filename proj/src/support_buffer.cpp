#include "dell/support_buffer.hpp"

#include "dell/binary_io.hpp"
#include "dell/errors.hpp"
#include "dell/random.hpp"

#include <limits>
#include <numeric>

namespace dell {

namespace {
constexpr std::uint32_t kBufferVersion = 1;
constexpr std::size_t kBufferHeaderBytes = 4 + 4 * 4;
}  // namespace

SupportBuffer empty_buffer(int k, int dim) {
  if (k < 1 || dim < 1) throw ValidationError("buffer needs k >= 1 and dim >= 1");
  SupportBuffer b;
  b.k = k;
  b.dim = dim;
  b.embeddings.resize(dim, 0);
  return b;
}

void validate(const SupportBuffer& buffer) {
  if (buffer.k < 1) throw ValidationError("buffer k must be positive");
  if (buffer.embeddings.rows() != buffer.dim ||
      buffer.embeddings.cols() != static_cast<Eigen::Index>(buffer.class_ids.size()))
    throw ShapeError("buffer embeddings do not match its entries");
  if (buffer.class_ids.size() % static_cast<std::size_t>(buffer.k) != 0)
    throw ValidationError("buffer size is not a multiple of k");
  for (std::size_t i = 0; i < buffer.class_ids.size(); ++i)
    if (buffer.class_ids[i] != i / static_cast<std::size_t>(buffer.k))
      throw ValidationError("buffer classes must hold exactly k entries each, contiguous from 0");
}

EmbeddingBatch selective_sample(const EmbeddingBatch& collected, int k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("k must be positive");
  const auto n = static_cast<std::size_t>(collected.cols());
  if (n < static_cast<std::size_t>(k))
    throw InsufficientDataError("need at least " + std::to_string(k) + " embeddings, got " + std::to_string(n));
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "selective_sample"));
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  EmbeddingBatch out(collected.rows(), k);
  for (int i = 0; i < k; ++i) out.col(i) = collected.col(idx[static_cast<std::size_t>(i)]);
  return out;
}

SupportBuffer merge(const SupportBuffer& buffer, int class_id, const EmbeddingBatch& sampled) {
  if (class_id != buffer.class_count())
    throw ValidationError("class id " + std::to_string(class_id) + " is not the next contiguous id " +
                          std::to_string(buffer.class_count()));
  if (sampled.cols() != buffer.k) throw ValidationError("merge needs exactly k samples");
  if (sampled.rows() != buffer.dim) throw ShapeError("sample dimension does not match the buffer");
  if (class_id > std::numeric_limits<std::uint16_t>::max()) throw ValidationError("too many classes");
  SupportBuffer out = buffer;
  out.embeddings.conservativeResize(Eigen::NoChange, buffer.embeddings.cols() + buffer.k);
  out.embeddings.rightCols(buffer.k) = sampled;
  out.class_ids.insert(out.class_ids.end(), static_cast<std::size_t>(buffer.k), static_cast<std::uint16_t>(class_id));
  return out;
}

std::size_t buffer_file_size(const SupportBuffer& buffer) {
  return kBufferHeaderBytes + buffer.class_ids.size() * (2 + 4 * static_cast<std::size_t>(buffer.dim));
}

double size_kb(const SupportBuffer& buffer) { return static_cast<double>(buffer_file_size(buffer)) / 1024.0; }

void save_buffer(const SupportBuffer& buffer, const std::filesystem::path& path) {
  validate(buffer);
  ByteWriter w;
  w.magic("DLBF");
  w.u32(kBufferVersion);
  w.u32(static_cast<std::uint32_t>(buffer.class_count()));
  w.u32(static_cast<std::uint32_t>(buffer.k));
  w.u32(static_cast<std::uint32_t>(buffer.dim));
  for (std::size_t i = 0; i < buffer.class_ids.size(); ++i) {
    w.u16(buffer.class_ids[i]);
    w.f32_block(buffer.embeddings.col(static_cast<Eigen::Index>(i)).transpose());
  }
  write_file(path, w.bytes());
}

SupportBuffer load_buffer(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  r.expect_magic("DLBF");
  if (r.u32() != kBufferVersion) throw ParseError("buffer file version mismatch");
  const auto n = r.u32();
  const auto k = static_cast<int>(r.u32());
  const auto dim = static_cast<int>(r.u32());
  SupportBuffer b = empty_buffer(k, dim);
  const std::size_t entries = static_cast<std::size_t>(n) * static_cast<std::size_t>(b.k);
  b.embeddings.resize(b.dim, static_cast<Eigen::Index>(entries));
  for (std::size_t i = 0; i < entries; ++i) {
    b.class_ids.push_back(r.u16());
    for (int d = 0; d < b.dim; ++d) b.embeddings(d, static_cast<Eigen::Index>(i)) = r.f32();
  }
  if (!r.at_end()) throw ParseError("trailing bytes in buffer file");
  validate(b);
  return b;
}

}  // namespace dell
