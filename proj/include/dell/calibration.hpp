#pragma once

#include "dell/benchmark_spec.hpp"
#include "dell/encoder.hpp"
#include "dell/policy.hpp"
#include "dell/task_suite.hpp"

#include <cstdint>
#include <vector>

namespace dell {

/// Mean episode return of a seeded random linear head on top of a frozen random encoder.
double calibrate_min_reward(const SyntheticGame& game, const EncoderModel& random_encoder, int episodes,
                            std::uint64_t seed);

struct MaxRewardOptions {
  int budget = 200;             // CEM iterations
  int encoder_episodes = 4;     // rendered episodes the game's own autoencoder trains on
  int encoder_epochs = 10;
  int eval_episodes = 100;
  std::uint64_t seed = 0;
};

struct MaxRewardResult {
  double value = 0.0;
  bool plateaued = false;  // false: the budget ran out before the plateau test fired
  int iterations = 0;
};

/// End-to-end reference agent: an encoder fitted to this game's own frames, then the RL
/// procedure on top of it, scored on fresh episodes.
MaxRewardResult calibrate_max_reward(const SyntheticGame& game, const MaxRewardOptions& options);

struct CalibratedGame {
  GameMeta meta;
  bool valid = false;      // max_reward > min_reward
  bool plateaued = false;
};

struct CalibrationOptions {
  int min_episodes = 100;
  MaxRewardOptions max;
  std::uint64_t seed = 0;
};

/// Min and max reward of every game of a suite. Invalid games (min >= max) are reported, not thrown.
std::vector<CalibratedGame> calibrate_suite(const Suite& suite, const CalibrationOptions& options);

}  // namespace dell
