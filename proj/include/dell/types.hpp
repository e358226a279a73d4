#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace dell {

inline constexpr int kFrameSide = 84;
inline constexpr int kFramePixels = kFrameSide * kFrameSide;
inline constexpr int kLatentDim = 512;
inline constexpr int kFeatureDim = 64;
inline constexpr int kActionCount = 18;
inline constexpr int kContextDim = 4;
inline constexpr int kDefaultEpisodeLength = 128;

using Scalar = float;

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowMatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = MatrixX<Scalar>;
using Vector = VectorX<Scalar>;

/// A frame is a flattened (row-major) 84x84 image with values in [0, 1].
using Frame = Vector;
/// Frames stacked as columns.
using FrameBatch = Matrix;
/// 512-dimensional encoder output.
using Embedding = Vector;
/// Embeddings stacked as columns.
using EmbeddingBatch = Matrix;

/// Raw 8-bit frames stacked as columns, as stored on disk.
using ByteFrames = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

}  // namespace dell
