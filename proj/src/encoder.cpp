#include "dell/encoder.hpp"

#include "dell/binary_io.hpp"
#include "dell/errors.hpp"
#include "dell/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dell {

namespace {

constexpr std::uint32_t kEncoderVersion = 1;
constexpr std::size_t kEncoderHeaderBytes = 4 + 4 + 4 + 4 + 4 + 8 + 4;

void require_frame_rows(Eigen::Index rows) {
  if (rows != kFramePixels)
    throw ShapeError("frame must have " + std::to_string(kFramePixels) + " pixels, got " + std::to_string(rows));
}

void require_usable(const EncoderModel& model) {
  if (!model.frozen) throw ValidationError("encoder must be frozen before use");
  if (model.weights.cols() != kFramePixels) throw ShapeError("encoder weights have the wrong input dimension");
}

}  // namespace

EncoderModel random_encoder(std::uint64_t seed) {
  EncoderModel m;
  m.kind = EncoderKind::random;
  m.seed = seed;
  Rng rng(derive_seed(seed, "encoder-init"));
  m.weights = normal_matrix<Scalar>(kLatentDim, kFramePixels, rng, 1.0f / std::sqrt(Scalar(kFramePixels)));
  m.freeze();
  return m;
}

EncoderModel train_autoencoder(const FrameBatch& frames, const AutoencoderOptions& options) {
  require_frame_rows(frames.rows());
  if (frames.cols() == 0) throw InsufficientDataError("autoencoder needs a nonempty dataset");
  if (options.epochs < 0 || options.batch_size < 1) throw ValidationError("bad autoencoder options");

  EncoderModel m = random_encoder(options.seed);
  m.kind = EncoderKind::trained;
  m.frozen = false;
  Matrix decoder = m.weights.transpose();
  m.trained = options.epochs > 0;

  const Eigen::Index n = frames.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(options.seed, "autoencoder-shuffle"));

  // Train on centered frames; the mean is folded into the decoder bias afterwards.
  const Frame mean = frames.rowwise().mean();
  Matrix batch, codes, residual, grad_codes;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += options.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(options.batch_size, n - start);
      batch.resize(kFramePixels, b);
      for (Eigen::Index j = 0; j < b; ++j) batch.col(j) = frames.col(order[static_cast<std::size_t>(start + j)]) - mean;

      codes.noalias() = m.weights * batch;
      residual.noalias() = decoder * codes;
      residual -= batch;
      grad_codes.noalias() = decoder.transpose() * residual;

      const Scalar step = options.learning_rate / static_cast<Scalar>(b);
      decoder.noalias() -= step * residual * codes.transpose();
      m.weights.noalias() -= step * grad_codes * batch.transpose();
    }
    if (!m.weights.allFinite() || !decoder.allFinite())
      throw DivergenceError("autoencoder diverged in epoch " + std::to_string(epoch));
  }
  m.decoder.bias = mean - decoder * (m.weights * mean);
  m.decoder.weights = std::move(decoder);
  m.freeze();
  return m;
}

Embedding encode(const EncoderModel& model, const Frame& frame) {
  require_usable(model);
  require_frame_rows(frame.rows());
  return model.weights * frame;
}

EmbeddingBatch encode(const EncoderModel& model, const FrameBatch& frames) {
  require_usable(model);
  require_frame_rows(frames.rows());
  return model.weights * frames;
}

LinearDecoder least_squares_decoder(const EncoderModel& model, const FrameBatch& frames, float ridge) {
  const Matrix codes = encode(model, frames);
  const Vector code_mean = codes.rowwise().mean();
  const Frame frame_mean = frames.rowwise().mean();
  const Eigen::MatrixXd zc = (codes.colwise() - code_mean).cast<double>();
  Eigen::MatrixXd gram = zc * zc.transpose();
  gram.diagonal().array() += ridge * gram.diagonal().mean();
  const Eigen::MatrixXd cross = (frames.colwise() - frame_mean).cast<double>() * zc.transpose();
  // D * gram = cross  ->  gram D^T = cross^T (gram is symmetric)
  LinearDecoder d;
  d.weights = gram.ldlt().solve(cross.transpose()).transpose().cast<Scalar>();
  d.bias = frame_mean - d.weights * code_mean;
  return d;
}

double reconstruction_mse(const EncoderModel& model, const LinearDecoder& decoder, const FrameBatch& frames) {
  const Matrix recon = (decoder.weights * encode(model, frames)).colwise() + decoder.bias;
  return static_cast<double>((recon - frames).squaredNorm()) / static_cast<double>(frames.size());
}

std::size_t encoder_file_size(const EncoderModel& model, bool include_decoder) {
  std::size_t n = kEncoderHeaderBytes + 4 * static_cast<std::size_t>(model.weights.size());
  if (include_decoder && model.has_decoder())
    n += 4 * static_cast<std::size_t>(model.decoder.weights.size() + model.decoder.bias.size());
  return n;
}

void save_encoder(const EncoderModel& model, const std::filesystem::path& path, bool include_decoder) {
  const bool with_decoder = include_decoder && model.has_decoder();
  ByteWriter w;
  w.magic("DLEN");
  w.u32(kEncoderVersion);
  w.u32(static_cast<std::uint32_t>(model.kind));
  w.u32(static_cast<std::uint32_t>(model.weights.rows()));
  w.u32(static_cast<std::uint32_t>(model.weights.cols()));
  w.u64(model.seed);
  w.u32((model.trained ? 1u : 0u) | (with_decoder ? 2u : 0u));
  w.f32_block(model.weights);
  if (with_decoder) {
    w.f32_block(model.decoder.weights);
    w.f32_block(model.decoder.bias);
  }
  write_file(path, w.bytes());
}

EncoderModel load_encoder(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  r.expect_magic("DLEN");
  if (r.u32() != kEncoderVersion) throw ParseError("encoder checkpoint version mismatch");
  EncoderModel m;
  const auto kind = r.u32();
  if (kind > 1) throw ParseError("unknown encoder kind");
  m.kind = static_cast<EncoderKind>(kind);
  const auto latent = r.u32();
  const auto input = r.u32();
  if (latent != kLatentDim || input != kFramePixels) throw ShapeError("encoder checkpoint has unexpected dimensions");
  m.seed = r.u64();
  const auto flags = r.u32();
  m.trained = flags & 1u;
  m.weights = read_f32_block(r, latent, input);
  if (flags & 2u) {
    m.decoder.weights = read_f32_block(r, input, latent);
    m.decoder.bias = read_f32_block(r, input, 1);
  }
  if (!r.at_end()) throw ParseError("trailing bytes in encoder checkpoint");
  m.freeze();
  return m;
}

}  // namespace dell
