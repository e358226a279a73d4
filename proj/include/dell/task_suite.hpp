#pragma once

#include "dell/benchmark_spec.hpp"
#include "dell/types.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace dell {

enum class SuiteKind { pretrain, eval };

std::string to_string(SuiteKind kind);
SuiteKind suite_kind_from_string(const std::string& s);

/// Appearance knobs shared by every game in a suite. Amplitudes are per-pixel RMS.
struct AppearanceParams {
  float background = 0.3f;
  float template_amplitude = 0.08f;
  float game_amplitude = 0.15f;
  float context_amplitude = 0.01f;
  float noise_std = 0.01f;
  float gain_low = 0.12f;  // per-frame gain is log-uniform on [gain_low, gain_high]
  float gain_high = 2.0f;
  float contrast_low = 1.0f;  // per-game multiplier of pattern and context basis
  float contrast_high = 1.0f;
  float dim_fraction = 1.0f / 12.0f;  // share of games rendered at dim_contrast instead
  float dim_contrast = 0.03f;
};

/// Observation generator of one game: frame = clamp(background + gain * (pattern + basis * context) + noise).
struct ObservationParams {
  Frame pattern;         // genre template plus game-specific texture
  Matrix context_basis;  // kFramePixels x kContextDim
  float background = 0.3f;
  float noise_std = 0.12f;
  float gain_low = 0.12f;
  float gain_high = 2.0f;
  float contrast = 1.0f;  // already applied to pattern and context_basis
};

/// Contextual-bandit reward: increment = scale * max(0, (weights * context)[action]).
struct RewardParams {
  Matrix weights;  // action_count x kContextDim
  double scale = 1.0;
};

struct SyntheticGame {
  std::string id;
  std::string genre;
  std::uint64_t obs_seed = 0;
  ObservationParams obs;
  RewardParams reward;
  int action_count = kActionCount;
  int episode_length = kDefaultEpisodeLength;
};

struct Suite {
  SuiteKind kind = SuiteKind::eval;
  std::uint64_t seed = 0;
  std::vector<std::string> genres;
  AppearanceParams appearance;
  std::vector<SyntheticGame> games;

  const SyntheticGame& find(const std::string& id) const;
  std::vector<std::string> game_ids() const;
};

/// Integer frequencies (u, v) of the genre's grating family. Families of different genres are disjoint.
std::vector<std::pair<int, int>> genre_frequencies(const std::string& genre);

/// Deterministic suite; games are dealt round-robin over genres.
Suite make_suite(SuiteKind kind, int n_games, const std::vector<std::string>& genres, std::uint64_t seed,
                 const AppearanceParams& appearance = {}, int episode_length = kDefaultEpisodeLength);

/// Suite description file: the inputs of make_suite (the genre list is the closed registry in use).
void write_suite_description(const Suite& suite, const std::filesystem::path& path);
Suite read_suite_description(const std::filesystem::path& path);

/// Contexts and rendered frames of one episode. Observations do not depend on actions.
struct EpisodeSample {
  FrameBatch frames;  // kFramePixels x T
  Matrix contexts;    // kContextDim x T
};

std::uint64_t episode_seed(const SyntheticGame& game, std::uint64_t seed, int episode);
EpisodeSample sample_episode(const SyntheticGame& game, std::uint64_t episode_seed, bool render = true);

/// Per-step expected reward of every action, action_count x T.
Matrix action_values(const SyntheticGame& game, const Eigen::Ref<const Matrix>& contexts);
std::vector<double> reward_increments(const SyntheticGame& game, const Eigen::Ref<const Matrix>& contexts,
                                      const std::vector<int>& actions);
/// Best action per step by brute force over the hidden weights (ties to the lowest id).
std::vector<int> optimal_actions(const SyntheticGame& game, const Eigen::Ref<const Matrix>& contexts);

/// Mean episode return of the oracle policy over seeded episodes.
double analytic_optimum_return(const SyntheticGame& game, int episodes, std::uint64_t seed);
/// Mean episode return of the uniformly random action distribution (in expectation per step).
double uniform_policy_return(const SyntheticGame& game, int episodes, std::uint64_t seed);

/// Score normalization: 1 when the score increased, 0 otherwise.
std::uint8_t normalize_reward(double r_t, double r_prev);

struct EpisodeTrace {
  FrameBatch observations;
  std::vector<double> raw_rewards;  // cumulative score after each step
  std::vector<int> actions;
  std::vector<std::uint8_t> normalized_rewards;
};

/// Gym-style environment seam; a real emulator adapter implements this.
class Environment {
 public:
  struct Step {
    Frame observation;
    double score = 0.0;
    bool done = false;
  };
  virtual ~Environment() = default;
  virtual Frame reset(std::uint64_t episode_seed) = 0;
  virtual Step step(int action) = 0;
  virtual int action_count() const = 0;
};

class SyntheticEnvironment final : public Environment {
 public:
  explicit SyntheticEnvironment(const SyntheticGame& game) : game_(&game) {}
  Frame reset(std::uint64_t episode_seed) override;
  Step step(int action) override;
  int action_count() const override { return game_->action_count; }
  const SyntheticGame& game() const { return *game_; }

 private:
  const SyntheticGame* game_;
  EpisodeSample current_;
  int t_ = 0;
  double score_ = 0.0;
};

using FramePolicy = std::function<int(const Frame&)>;
/// Maps a batch of frames (one per column) to one action per column.
using BatchPolicy = std::function<std::vector<int>(const FrameBatch&)>;

std::vector<EpisodeTrace> rollout(Environment& env, const FramePolicy& policy, int episodes,
                                  const std::function<std::uint64_t(int)>& seed_of_episode);
std::vector<EpisodeTrace> rollout(const SyntheticGame& game, const FramePolicy& policy, int episodes,
                                  std::uint64_t seed);

/// Episode returns of a batch policy; equivalent to stepping because observations ignore actions.
std::vector<double> episode_returns(const SyntheticGame& game, const BatchPolicy& policy, int episodes,
                                    std::uint64_t seed);

/// Mean per-pixel frame of a game, used for the genre-separability statistic.
Frame mean_frame(const SyntheticGame& game, int frames, std::uint64_t seed);

struct GameData {
  std::string id;
  std::string genre;
  ByteFrames frames;                  // kFramePixels x n
  std::vector<std::uint8_t> rewards;  // normalized, per step
};

struct PretrainDataset {
  std::vector<GameData> games;
  std::size_t frame_count() const;
  /// All frames as floats in [0, 1], one column per frame.
  FrameBatch all_frames() const;
};

/// Renders expert (oracle-policy) episodes for every game.
PretrainDataset build_pretrain_dataset(const Suite& suite, int episodes_per_game, std::uint64_t seed);

/// One folder per game with chunk_<k>_obs.npy / chunk_<k>_rew.npy and meta.yaml.
void pack_pretrain_dataset(const Suite& suite, const std::filesystem::path& out_dir, int episodes_per_game = 1,
                           std::uint64_t seed = 0, int chunk_size = 64);
PretrainDataset load_pretrain_dataset(const std::filesystem::path& dir);

/// Converts bytes in [0, 255] to frames in [0, 1].
FrameBatch to_frames(const Eigen::Ref<const ByteFrames>& bytes);
ByteFrames to_bytes(const Eigen::Ref<const FrameBatch>& frames);

}  // namespace dell
