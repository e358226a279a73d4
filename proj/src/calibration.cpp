#include "dell/calibration.hpp"

#include "dell/errors.hpp"
#include "dell/random.hpp"

#include <algorithm>

namespace dell {

namespace {

bool zero_reward_game(const SyntheticGame& game) { return game.reward.scale == 0.0 || game.reward.weights.isZero(0.0); }

}  // namespace

double calibrate_min_reward(const SyntheticGame& game, const EncoderModel& encoder, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ValidationError("calibration needs at least one episode");
  if (zero_reward_game(game)) return 0.0;
  const LinearPolicy head = random_policy(derive_seed(seed, "min-head"), 0.1f, game.action_count, encoder.latent_dim());
  return mean_return(game, head, encoder, episodes, derive_seed(seed, "min-episodes"));
}

MaxRewardResult calibrate_max_reward(const SyntheticGame& game, const MaxRewardOptions& o) {
  if (o.budget < 1) throw ValidationError("budget must be at least 1");
  MaxRewardResult r;
  if (zero_reward_game(game)) {
    r.plateaued = true;
    return r;
  }
  FrameBatch frames(kFramePixels, static_cast<Eigen::Index>(o.encoder_episodes) * game.episode_length);
  for (int e = 0; e < o.encoder_episodes; ++e)
    frames.middleCols(static_cast<Eigen::Index>(e) * game.episode_length, game.episode_length) =
        sample_episode(game, episode_seed(game, derive_seed(o.seed, "e2e-frames"), e)).frames;
  AutoencoderOptions ae;
  ae.epochs = o.encoder_epochs;
  ae.seed = derive_seed(o.seed, "e2e-encoder");
  const EncoderModel encoder = train_autoencoder(frames, ae);

  CemOptions cem;
  cem.budget = o.budget;
  cem.seed = derive_seed(o.seed, "e2e-cem");
  const RlResult rl = rl_procedure(game, encoder, cem);
  r.value = mean_return(game, rl.policy, encoder, o.eval_episodes, derive_seed(o.seed, "e2e-eval"));
  r.plateaued = rl.plateaued;
  r.iterations = rl.iterations;
  return r;
}

std::vector<CalibratedGame> calibrate_suite(const Suite& suite, const CalibrationOptions& o) {
  const EncoderModel encoder = random_encoder(derive_seed(o.seed, "min-encoder"));
  std::vector<CalibratedGame> out;
  for (const auto& game : suite.games) {
    CalibratedGame c;
    c.meta.name = game.id;
    c.meta.genre = game.genre;
    c.meta.input_text = "synthetic " + game.genre + " game";
    c.meta.min_reward = calibrate_min_reward(game, encoder, o.min_episodes, derive_seed(o.seed, game.id));
    MaxRewardOptions mo = o.max;
    mo.seed = derive_seed(o.seed, game.id, 1);
    const auto max = calibrate_max_reward(game, mo);
    c.meta.max_reward = max.value;
    c.plateaued = max.plateaued;
    c.valid = c.meta.max_reward > c.meta.min_reward;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace dell
