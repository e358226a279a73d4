#pragma once

#include "dell/types.hpp"

#include <cstdint>
#include <filesystem>

namespace dell {

enum class EncoderKind : std::uint32_t { random = 0, trained = 1 };

/// Affine map from embeddings back to frames.
struct LinearDecoder {
  Matrix weights;  // kFramePixels x kLatentDim
  Vector bias;     // kFramePixels

  bool empty() const { return weights.size() == 0; }
};

/// Linear observation backbone: embedding = weights * flattened frame. No bias term.
struct EncoderModel {
  EncoderKind kind = EncoderKind::random;
  Matrix weights;  // kLatentDim x kFramePixels
  LinearDecoder decoder;  // only for kind == trained
  std::uint64_t seed = 0;
  bool frozen = false;
  bool trained = false;  // false for random encoders and for autoencoders run with zero epochs

  int latent_dim() const { return static_cast<int>(weights.rows()); }
  bool has_decoder() const { return !decoder.empty(); }
  void freeze() { frozen = true; }
};

/// Gaussian projection with entries N(0, 1 / input_dim), frozen on return.
EncoderModel random_encoder(std::uint64_t seed);

struct AutoencoderOptions {
  int epochs = 20;
  float learning_rate = 1e-2f;
  int batch_size = 64;
  std::uint64_t seed = 0;
};

/// Linear autoencoder trained by minibatch SGD on 0.5 * ||D E (x - m) - (x - m)||^2 with seeded
/// shuffling, m the dataset mean frame (folded into the decoder bias). Starts from the random
/// projection with seed `options.seed` and its transpose as decoder.
EncoderModel train_autoencoder(const FrameBatch& frames, const AutoencoderOptions& options);

Embedding encode(const EncoderModel& model, const Frame& frame);
EmbeddingBatch encode(const EncoderModel& model, const FrameBatch& frames);

/// Least-squares optimal affine decoder for a fixed encoder on the given frames.
LinearDecoder least_squares_decoder(const EncoderModel& model, const FrameBatch& frames, float ridge = 1e-6f);
/// Mean squared error per pixel of decoding the frames' embeddings.
double reconstruction_mse(const EncoderModel& model, const LinearDecoder& decoder, const FrameBatch& frames);

void save_encoder(const EncoderModel& model, const std::filesystem::path& path, bool include_decoder = false);
EncoderModel load_encoder(const std::filesystem::path& path);
/// Byte size save_encoder would produce.
std::size_t encoder_file_size(const EncoderModel& model, bool include_decoder = false);

}  // namespace dell
