#pragma once

#include "dell/benchmark_spec.hpp"
#include "dell/task_suite.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dell::test {

inline std::vector<std::string> all_genres() {
  std::vector<std::string> g;
  for (auto s : genre_registry()) g.emplace_back(s);
  return g;
}

inline std::vector<std::string> first_genres(std::size_t n) {
  auto g = all_genres();
  g.resize(n);
  return g;
}

/// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "dell-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Reward weights that pay nothing for any action.
inline SyntheticGame zero_reward(SyntheticGame g) {
  g.reward.weights.setZero();
  return g;
}

}  // namespace dell::test
