#pragma once

#include "dell/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dell {

/// Deployment data buffer: exactly K embeddings for each learnt task, classes 0..N-1.
struct SupportBuffer {
  int k = 5;
  int dim = kLatentDim;
  std::vector<std::uint16_t> class_ids;  // one per column, grouped by class in learn order
  EmbeddingBatch embeddings;             // dim x N*K

  int class_count() const { return k > 0 ? static_cast<int>(class_ids.size()) / k : 0; }
  std::size_t entry_count() const { return class_ids.size(); }
};

SupportBuffer empty_buffer(int k, int dim = kLatentDim);

/// Throws ValidationError unless every class 0..N-1 holds exactly K entries.
void validate(const SupportBuffer& buffer);

/// Uniform seeded sampling of K columns without replacement.
EmbeddingBatch selective_sample(const EmbeddingBatch& collected, int k, std::uint64_t seed);

/// Appends K samples of class `class_id`, which must equal the current class count.
SupportBuffer merge(const SupportBuffer& buffer, int class_id, const EmbeddingBatch& sampled);

/// Serialized byte length of the buffer file.
std::size_t buffer_file_size(const SupportBuffer& buffer);
double size_kb(const SupportBuffer& buffer);

void save_buffer(const SupportBuffer& buffer, const std::filesystem::path& path);
SupportBuffer load_buffer(const std::filesystem::path& path);

}  // namespace dell
