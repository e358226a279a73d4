#pragma once

#include "dell/types.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace dell {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over bytes; stable across platforms.
constexpr std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent stream seed from a base seed and a list of tags.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = mix64(base);
  for (auto t : tags) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) {
  return derive_seed(base, {fnv1a(tag), index});
}

template <typename Derived>
void fill_normal(Eigen::DenseBase<Derived>& m, Rng& rng, typename Derived::Scalar stddev = 1) {
  std::normal_distribution<typename Derived::Scalar> dist(0, stddev);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
}

template <typename T = Scalar>
MatrixX<T> normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, T stddev = 1) {
  MatrixX<T> m(rows, cols);
  fill_normal(m, rng, stddev);
  return m;
}

}  // namespace dell
