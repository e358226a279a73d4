#pragma once

#include "dell/encoder.hpp"
#include "dell/task_suite.hpp"
#include "dell/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dell {

/// One-layer policy over embeddings: action = argmax(W e + b).
struct LinearPolicy {
  Matrix weights;  // action_count x dim
  Vector bias;     // action_count

  int action_count() const { return static_cast<int>(weights.rows()); }
  int dim() const { return static_cast<int>(weights.cols()); }
};

LinearPolicy zero_policy(int action_count = kActionCount, int dim = kLatentDim);
/// Entries i.i.d. N(0, stddev^2), seeded.
LinearPolicy random_policy(std::uint64_t seed, float stddev = 0.1f, int action_count = kActionCount,
                           int dim = kLatentDim);

/// Ties go to the lowest action id.
int act(const LinearPolicy& policy, const Embedding& embedding);
std::vector<int> act(const LinearPolicy& policy, const EmbeddingBatch& embeddings);

/// Frame-batch policy that encodes and acts.
BatchPolicy as_batch_policy(const LinearPolicy& policy, const EncoderModel& encoder);

struct CemOptions {
  int budget = 200;             // iterations
  int population = 64;
  double elite_fraction = 0.125;
  float initial_std = 0.1f;
  float extra_std = 0.05f;      // additive std, decays linearly to zero over the budget
  double plateau_tolerance = 1e-3;  // relative elite-mean improvement
  int plateau_window = 10;
  int scenario_episodes = 8;    // fixed training episodes shared by every candidate
  double variance_floor = 1e-6;  // components below this share of the top variance are never searched
  double noise_multiple = 30.0;  // components must exceed this multiple of the median eigenvalue
  int max_components = 64;
  std::uint64_t seed = 0;
};

struct RlResult {
  LinearPolicy policy;            // best candidate found
  EmbeddingBatch collected;       // every embedding seen in training rollouts
  bool plateaued = false;         // false means the budget ran out first
  int iterations = 0;
  std::vector<double> elite_means;  // per iteration, non-decreasing
  double best_fitness = 0.0;        // mean training return of `policy`
  int components = 0;               // principal components searched over
};

/// Cross-entropy method over (W, b) with elitism. Fitness is the mean return over a fixed set
/// of scenario episodes, so candidates are compared on common random numbers.
RlResult rl_procedure(const SyntheticGame& game, const EncoderModel& encoder, const CemOptions& options);

/// Same, on precomputed scenario embeddings and per-step action values (actions x steps).
RlResult cem_optimize(const EmbeddingBatch& embeddings, const Matrix& action_values, int episodes,
                      const CemOptions& options);

double mean_return(const SyntheticGame& game, const LinearPolicy& policy, const EncoderModel& encoder, int episodes,
                   std::uint64_t seed);

struct PolicyRecord {
  int class_id = 0;
  std::filesystem::path path;
  std::size_t bytes = 0;
};

inline constexpr double kPolicyByteLimit = 1.5 * 1024 * 1024;

/// Byte size of a stored policy file.
std::size_t policy_file_size(int action_count = kActionCount, int dim = kLatentDim);

/// Rounds every weight to half precision. Throws OverflowError beyond the half range.
LinearPolicy quantize(const LinearPolicy& policy);
PolicyRecord quantize_store(const LinearPolicy& policy, int class_id, const std::filesystem::path& path);
LinearPolicy load_policy(const std::filesystem::path& path, int* class_id = nullptr);

/// Append-only store of policies under `<root>/policies/<class_id>.pol`.
class PolicyRegistry {
 public:
  explicit PolicyRegistry(std::filesystem::path root);

  PolicyRecord append(const LinearPolicy& policy);
  LinearPolicy load(int class_id) const;
  int size() const { return static_cast<int>(records_.size()); }
  const std::vector<PolicyRecord>& records() const { return records_; }
  std::size_t total_bytes() const;
  const std::filesystem::path& directory() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<PolicyRecord> records_;
};

}  // namespace dell
