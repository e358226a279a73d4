#include "dell/task_suite.hpp"

#include "dell/binary_io.hpp"
#include "dell/errors.hpp"
#include "dell/npy.hpp"
#include "dell/random.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <set>

namespace dell {

namespace {

constexpr int kMaxFrequency = 7;

int genre_index(const std::string& genre) {
  const auto reg = genre_registry();
  const auto it = std::find(reg.begin(), reg.end(), genre);
  if (it == reg.end()) throw ValidationError("unknown genre '" + genre + "'");
  return static_cast<int>(it - reg.begin());
}

/// Random combination of the genre's gratings with the given per-pixel RMS.
Frame grating_texture(const std::vector<std::pair<int, int>>& freqs, Rng& rng, float rms) {
  std::normal_distribution<double> coef(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  Eigen::VectorXd img = Eigen::VectorXd::Zero(kFramePixels);
  for (const auto& [u, v] : freqs) {
    const double a = coef(rng);
    const double p = phase(rng);
    for (int y = 0; y < kFrameSide; ++y)
      for (int x = 0; x < kFrameSide; ++x)
        img(y * kFrameSide + x) += a * std::cos(2.0 * std::numbers::pi * (u * x + v * y) / kFrameSide + p);
  }
  const double norm_rms = std::sqrt(img.squaredNorm() / kFramePixels);
  return (img * (rms / norm_rms)).cast<Scalar>();
}

SyntheticGame make_game(SuiteKind kind, const std::string& genre, int index, std::uint64_t suite_seed,
                        const AppearanceParams& ap, int episode_length) {
  SyntheticGame g;
  g.genre = genre;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%s-%02d", to_string(kind).c_str(), genre.c_str(), index);
  g.id = buf;
  g.obs_seed = derive_seed(suite_seed, {fnv1a(to_string(kind)), fnv1a(genre), static_cast<std::uint64_t>(index)});
  g.episode_length = episode_length;

  const auto freqs = genre_frequencies(genre);
  // Genre template is fixed per genre, independent of any suite seed.
  Rng genre_rng(derive_seed(0x6e7265, "genre-template:" + genre));
  Frame templ = grating_texture(freqs, genre_rng, ap.template_amplitude);

  Rng rng(g.obs_seed);
  g.obs.pattern = templ + grating_texture(freqs, rng, ap.game_amplitude);
  g.obs.context_basis.resize(kFramePixels, kContextDim);
  for (int j = 0; j < kContextDim; ++j) g.obs.context_basis.col(j) = grating_texture(freqs, rng, ap.context_amplitude);
  Rng contrast_rng(derive_seed(g.obs_seed, "contrast"));
  g.obs.contrast = ap.contrast_high > ap.contrast_low
                       ? std::uniform_real_distribution<float>(ap.contrast_low, ap.contrast_high)(contrast_rng)
                       : ap.contrast_low;
  g.obs.pattern *= g.obs.contrast;
  g.obs.context_basis *= g.obs.contrast;
  g.obs.background = ap.background;
  g.obs.noise_std = ap.noise_std;
  g.obs.gain_low = ap.gain_low;
  g.obs.gain_high = ap.gain_high;

  Rng reward_rng(derive_seed(g.obs_seed, "reward"));
  g.reward.weights = normal_matrix<Scalar>(g.action_count, kContextDim, reward_rng);
  g.reward.scale = std::uniform_real_distribution<double>(1.0, 10.0)(reward_rng);
  return g;
}

}  // namespace

std::string to_string(SuiteKind kind) { return kind == SuiteKind::pretrain ? "pretrain" : "eval"; }

SuiteKind suite_kind_from_string(const std::string& s) {
  if (s == "pretrain") return SuiteKind::pretrain;
  if (s == "eval") return SuiteKind::eval;
  throw ParseError("unknown suite kind '" + s + "'");
}

const SyntheticGame& Suite::find(const std::string& id) const {
  for (const auto& g : games)
    if (g.id == id) return g;
  throw ValidationError("game '" + id + "' is not part of the " + to_string(kind) + " suite");
}

std::vector<std::string> Suite::game_ids() const {
  std::vector<std::string> ids;
  for (const auto& g : games) ids.push_back(g.id);
  return ids;
}

std::vector<std::pair<int, int>> genre_frequencies(const std::string& genre) {
  const int sector = genre_index(genre);
  const double width = std::numbers::pi / static_cast<double>(genre_registry().size());
  std::vector<std::pair<int, int>> out;
  for (int v = 0; v <= kMaxFrequency; ++v)
    for (int u = -kMaxFrequency; u <= kMaxFrequency; ++u) {
      if (v == 0 && u <= 0) continue;
      if (u * u + v * v > kMaxFrequency * kMaxFrequency) continue;
      const double angle = std::atan2(static_cast<double>(v), static_cast<double>(u));
      if (static_cast<int>(angle / width) == sector) out.emplace_back(u, v);
    }
  return out;
}

Suite make_suite(SuiteKind kind, int n_games, const std::vector<std::string>& genres, std::uint64_t seed,
                 const AppearanceParams& appearance, int episode_length) {
  if (genres.empty()) throw ValidationError("suite needs at least one genre");
  if (n_games < static_cast<int>(genres.size()))
    throw ValidationError("n_games must be at least the number of genres");
  if (!(appearance.gain_low > 0.0f) || appearance.gain_high < appearance.gain_low)
    throw ValidationError("gain range must satisfy 0 < gain_low <= gain_high");
  if (std::set<std::string>(genres.begin(), genres.end()).size() != genres.size())
    throw ValidationError("duplicate genre in suite");
  for (const auto& genre : genres)
    if (!is_registered_genre(genre)) throw ValidationError("unknown genre '" + genre + "'");

  Suite suite;
  suite.kind = kind;
  suite.seed = seed;
  suite.genres = genres;
  suite.appearance = appearance;
  std::vector<int> per_genre(genres.size(), 0);
  for (int i = 0; i < n_games; ++i) {
    const std::size_t gi = static_cast<std::size_t>(i) % genres.size();
    suite.games.push_back(make_game(kind, genres[gi], per_genre[gi]++, seed, appearance, episode_length));
  }
  // A seeded subset of round(dim_fraction * n) games is rendered at low contrast.
  const auto n_dim = static_cast<std::size_t>(std::lround(appearance.dim_fraction * static_cast<float>(n_games)));
  if (n_dim > 0) {
    std::vector<std::size_t> order(suite.games.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng dim_rng(derive_seed(seed, {fnv1a(to_string(kind)), fnv1a("dim-games")}));
    std::shuffle(order.begin(), order.end(), dim_rng);
    for (std::size_t i = 0; i < std::min(n_dim, order.size()); ++i) {
      auto& obs = suite.games[order[i]].obs;
      // Only the static pattern dims; the reward-relevant context stays visible.
      obs.pattern *= appearance.dim_contrast / obs.contrast;
      obs.contrast = appearance.dim_contrast;
    }
  }
  return suite;
}

void write_suite_description(const Suite& suite, const std::filesystem::path& path) {
  YAML::Emitter out;
  out.SetFloatPrecision(9);
  out << YAML::BeginMap;
  out << YAML::Key << "version" << YAML::Value << kSchemaVersion;
  out << YAML::Key << "kind" << YAML::Value << to_string(suite.kind);
  out << YAML::Key << "n_games" << YAML::Value << suite.games.size();
  out << YAML::Key << "seed" << YAML::Value << suite.seed;
  out << YAML::Key << "episode_length" << YAML::Value
      << (suite.games.empty() ? kDefaultEpisodeLength : suite.games.front().episode_length);
  out << YAML::Key << "genres" << YAML::Value << YAML::Flow << suite.genres;
  const auto& ap = suite.appearance;
  out << YAML::Key << "appearance" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "background" << YAML::Value << ap.background;
  out << YAML::Key << "template_amplitude" << YAML::Value << ap.template_amplitude;
  out << YAML::Key << "game_amplitude" << YAML::Value << ap.game_amplitude;
  out << YAML::Key << "context_amplitude" << YAML::Value << ap.context_amplitude;
  out << YAML::Key << "noise_std" << YAML::Value << ap.noise_std;
  out << YAML::Key << "gain_low" << YAML::Value << ap.gain_low;
  out << YAML::Key << "gain_high" << YAML::Value << ap.gain_high;
  out << YAML::Key << "contrast_low" << YAML::Value << ap.contrast_low;
  out << YAML::Key << "contrast_high" << YAML::Value << ap.contrast_high;
  out << YAML::Key << "dim_fraction" << YAML::Value << ap.dim_fraction;
  out << YAML::Key << "dim_contrast" << YAML::Value << ap.dim_contrast;
  out << YAML::EndMap << YAML::EndMap;
  write_text_file(path, std::string(out.c_str()) + "\n");
}

Suite read_suite_description(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::Load(read_text_file(path));
    if (root["version"].as<int>() != kSchemaVersion) throw ParseError("suite schema version mismatch");
    AppearanceParams ap;
    if (const auto a = root["appearance"]) {
      ap.background = a["background"].as<float>();
      ap.template_amplitude = a["template_amplitude"].as<float>();
      ap.game_amplitude = a["game_amplitude"].as<float>();
      ap.context_amplitude = a["context_amplitude"].as<float>();
      ap.noise_std = a["noise_std"].as<float>();
      ap.gain_low = a["gain_low"].as<float>();
      ap.gain_high = a["gain_high"].as<float>();
      if (a["contrast_low"]) ap.contrast_low = a["contrast_low"].as<float>();
      if (a["contrast_high"]) ap.contrast_high = a["contrast_high"].as<float>();
      if (a["dim_fraction"]) ap.dim_fraction = a["dim_fraction"].as<float>();
      if (a["dim_contrast"]) ap.dim_contrast = a["dim_contrast"].as<float>();
    }
    const int episode_length = root["episode_length"] ? root["episode_length"].as<int>() : kDefaultEpisodeLength;
    return make_suite(suite_kind_from_string(root["kind"].as<std::string>()), root["n_games"].as<int>(),
                      root["genres"].as<std::vector<std::string>>(), root["seed"].as<std::uint64_t>(), ap,
                      episode_length);
  } catch (const YAML::Exception& e) {
    throw ParseError("malformed suite description '" + path.string() + "': " + e.what());
  }
}

std::uint64_t episode_seed(const SyntheticGame& game, std::uint64_t seed, int episode) {
  return derive_seed(seed, {game.obs_seed, static_cast<std::uint64_t>(episode)});
}

EpisodeSample sample_episode(const SyntheticGame& game, std::uint64_t seed, bool render) {
  const int T = game.episode_length;
  EpisodeSample s;
  Rng ctx_rng(derive_seed(seed, "context"));
  s.contexts = normal_matrix<Scalar>(kContextDim, T, ctx_rng);
  if (!render) return s;

  // Log-uniform exposure gain.
  std::uniform_real_distribution<Scalar> log_gain(std::log(game.obs.gain_low), std::log(game.obs.gain_high));
  Vector gain(T);
  for (int t = 0; t < T; ++t)
    gain(t) = game.obs.gain_high > game.obs.gain_low ? std::exp(log_gain(ctx_rng)) : game.obs.gain_low;

  Rng noise_rng(derive_seed(seed, "noise"));
  s.frames = normal_matrix<Scalar>(kFramePixels, T, noise_rng, game.obs.noise_std);
  const Matrix scaled_ctx = s.contexts * gain.asDiagonal();
  s.frames.noalias() += game.obs.context_basis * scaled_ctx;
  s.frames.noalias() += game.obs.pattern * gain.transpose();
  s.frames = (s.frames.array() + game.obs.background).cwiseMax(0.0f).cwiseMin(1.0f);
  return s;
}

Matrix action_values(const SyntheticGame& game, const Eigen::Ref<const Matrix>& contexts) {
  return ((game.reward.weights * contexts).array().cwiseMax(0.0f) * static_cast<Scalar>(game.reward.scale)).matrix();
}

std::vector<double> reward_increments(const SyntheticGame& game, const Eigen::Ref<const Matrix>& contexts,
                                      const std::vector<int>& actions) {
  if (static_cast<Eigen::Index>(actions.size()) != contexts.cols())
    throw ShapeError("one action per step required");
  const Matrix values = action_values(game, contexts);
  std::vector<double> inc(actions.size());
  for (std::size_t t = 0; t < actions.size(); ++t) {
    if (actions[t] < 0 || actions[t] >= game.action_count)
      throw ValidationError("action " + std::to_string(actions[t]) + " out of range");
    inc[t] = values(actions[t], static_cast<Eigen::Index>(t));
  }
  return inc;
}

std::vector<int> optimal_actions(const SyntheticGame& game, const Eigen::Ref<const Matrix>& contexts) {
  const Matrix scores = game.reward.weights * contexts;
  std::vector<int> out(static_cast<std::size_t>(contexts.cols()));
  for (Eigen::Index t = 0; t < contexts.cols(); ++t) {
    Eigen::Index best = 0;
    scores.col(t).maxCoeff(&best);  // first maximum
    out[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return out;
}

double analytic_optimum_return(const SyntheticGame& game, int episodes, std::uint64_t seed) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const auto s = sample_episode(game, episode_seed(game, seed, e), false);
    total += action_values(game, s.contexts).colwise().maxCoeff().cast<double>().sum();
  }
  return total / episodes;
}

double uniform_policy_return(const SyntheticGame& game, int episodes, std::uint64_t seed) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const auto s = sample_episode(game, episode_seed(game, seed, e), false);
    total += action_values(game, s.contexts).colwise().mean().cast<double>().sum();
  }
  return total / episodes;
}

std::uint8_t normalize_reward(double r_t, double r_prev) { return r_t - r_prev > 0.0 ? 1 : 0; }

Frame SyntheticEnvironment::reset(std::uint64_t seed) {
  current_ = sample_episode(*game_, seed);
  t_ = 0;
  score_ = 0.0;
  return current_.frames.col(0);
}

Environment::Step SyntheticEnvironment::step(int action) {
  if (t_ >= game_->episode_length) throw ValidationError("step after episode end");
  if (action < 0 || action >= game_->action_count)
    throw ValidationError("action " + std::to_string(action) + " out of range");
  score_ += action_values(*game_, current_.contexts.col(t_))(action, 0);
  ++t_;
  Step s;
  s.score = score_;
  s.done = t_ == game_->episode_length;
  s.observation = s.done ? current_.frames.col(t_ - 1) : current_.frames.col(t_);
  return s;
}

std::vector<EpisodeTrace> rollout(Environment& env, const FramePolicy& policy, int episodes,
                                  const std::function<std::uint64_t(int)>& seed_of_episode) {
  std::vector<EpisodeTrace> traces;
  for (int e = 0; e < episodes; ++e) {
    EpisodeTrace tr;
    std::vector<Frame> obs;
    Frame frame = env.reset(seed_of_episode(e));
    double prev = 0.0;
    for (bool done = false; !done;) {
      const int a = policy(frame);
      if (a < 0 || a >= env.action_count())
        throw ValidationError("policy returned action " + std::to_string(a) + " out of range");
      obs.push_back(frame);
      auto step = env.step(a);
      tr.actions.push_back(a);
      tr.raw_rewards.push_back(step.score);
      tr.normalized_rewards.push_back(normalize_reward(step.score, prev));
      prev = step.score;
      frame = std::move(step.observation);
      done = step.done;
    }
    tr.observations.resize(kFramePixels, static_cast<Eigen::Index>(obs.size()));
    for (std::size_t t = 0; t < obs.size(); ++t) tr.observations.col(static_cast<Eigen::Index>(t)) = obs[t];
    traces.push_back(std::move(tr));
  }
  return traces;
}

std::vector<EpisodeTrace> rollout(const SyntheticGame& game, const FramePolicy& policy, int episodes,
                                  std::uint64_t seed) {
  SyntheticEnvironment env(game);
  return rollout(env, policy, episodes, [&](int e) { return episode_seed(game, seed, e); });
}

std::vector<double> episode_returns(const SyntheticGame& game, const BatchPolicy& policy, int episodes,
                                    std::uint64_t seed) {
  std::vector<double> returns;
  for (int e = 0; e < episodes; ++e) {
    const auto s = sample_episode(game, episode_seed(game, seed, e));
    const auto actions = policy(s.frames);
    const auto inc = reward_increments(game, s.contexts, actions);
    double total = 0.0;
    for (double r : inc) total += r;
    returns.push_back(total);
  }
  return returns;
}

Frame mean_frame(const SyntheticGame& game, int frames, std::uint64_t seed) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(kFramePixels);
  int n = 0;
  for (int e = 0; n < frames; ++e) {
    const auto s = sample_episode(game, episode_seed(game, seed, e));
    for (Eigen::Index t = 0; t < s.frames.cols() && n < frames; ++t, ++n) acc += s.frames.col(t).cast<double>();
  }
  return (acc / n).cast<Scalar>();
}

std::size_t PretrainDataset::frame_count() const {
  std::size_t n = 0;
  for (const auto& g : games) n += static_cast<std::size_t>(g.frames.cols());
  return n;
}

FrameBatch PretrainDataset::all_frames() const {
  FrameBatch out(kFramePixels, static_cast<Eigen::Index>(frame_count()));
  Eigen::Index c = 0;
  for (const auto& g : games) {
    out.middleCols(c, g.frames.cols()) = to_frames(g.frames);
    c += g.frames.cols();
  }
  return out;
}

FrameBatch to_frames(const Eigen::Ref<const ByteFrames>& bytes) {
  return bytes.cast<Scalar>() * (Scalar{1} / Scalar{255});
}

ByteFrames to_bytes(const Eigen::Ref<const FrameBatch>& frames) {
  return (frames.array().cwiseMax(0.0f).cwiseMin(1.0f) * 255.0f).round().cast<std::uint8_t>().matrix();
}

PretrainDataset build_pretrain_dataset(const Suite& suite, int episodes_per_game, std::uint64_t seed) {
  if (episodes_per_game < 1) throw ValidationError("episodes_per_game must be positive");
  PretrainDataset ds;
  for (const auto& game : suite.games) {
    GameData gd;
    gd.id = game.id;
    gd.genre = game.genre;
    const int T = game.episode_length;
    gd.frames.resize(kFramePixels, static_cast<Eigen::Index>(episodes_per_game) * T);
    for (int e = 0; e < episodes_per_game; ++e) {
      const auto s = sample_episode(game, episode_seed(game, seed, e));
      gd.frames.middleCols(static_cast<Eigen::Index>(e) * T, T) = to_bytes(s.frames);
      // expert play: the oracle action at every step
      const auto inc = reward_increments(game, s.contexts, optimal_actions(game, s.contexts));
      double score = 0.0;
      for (double r : inc) {
        const double prev = score;
        score += r;
        gd.rewards.push_back(normalize_reward(score, prev));
      }
    }
    ds.games.push_back(std::move(gd));
  }
  return ds;
}

void pack_pretrain_dataset(const Suite& suite, const std::filesystem::path& out_dir, int episodes_per_game,
                           std::uint64_t seed, int chunk_size) {
  if (suite.kind != SuiteKind::pretrain) throw ValidationError("only a pretrain suite can be packed");
  if (chunk_size < 1) throw ValidationError("chunk_size must be positive");
  const auto ds = build_pretrain_dataset(suite, episodes_per_game, seed);
  for (std::size_t gi = 0; gi < ds.games.size(); ++gi) {
    const auto& gd = ds.games[gi];
    const auto& game = suite.games[gi];
    const auto dir = out_dir / gd.id;
    std::filesystem::create_directories(dir);
    const Eigen::Index n = gd.frames.cols();
    for (Eigen::Index start = 0, k = 0; start < n; start += chunk_size, ++k) {
      const Eigen::Index len = std::min<Eigen::Index>(chunk_size, n - start);
      char name[64];
      std::snprintf(name, sizeof name, "chunk_%04lld", static_cast<long long>(k));
      // column-major frames: each column is one row-major 84x84 image, contiguous
      write_npy_u8(dir / (std::string(name) + "_obs.npy"),
                   {static_cast<std::size_t>(len), kFrameSide, kFrameSide}, gd.frames.col(start).data());
      write_npy_u8(dir / (std::string(name) + "_rew.npy"), {static_cast<std::size_t>(len)},
                   gd.rewards.data() + start);
    }
    GameMeta meta;
    meta.name = gd.id;
    meta.genre = gd.genre;
    meta.input_text = "synthetic " + gd.genre + " game";
    meta.min_reward = uniform_policy_return(game, 16, seed);
    meta.max_reward = analytic_optimum_return(game, 16, seed);
    write_meta(meta, dir / "meta.yaml");
  }
}

PretrainDataset load_pretrain_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> game_dirs;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_directory()) game_dirs.push_back(entry.path());
  std::sort(game_dirs.begin(), game_dirs.end());

  PretrainDataset ds;
  for (const auto& gdir : game_dirs) {
    const GameMeta meta = read_meta(gdir / "meta.yaml");
    GameData gd;
    gd.id = gdir.filename().string();
    gd.genre = meta.genre;
    std::vector<std::filesystem::path> chunks;
    for (const auto& entry : std::filesystem::directory_iterator(gdir)) {
      const auto name = entry.path().filename().string();
      if (name.starts_with("chunk_") && name.ends_with("_obs.npy")) chunks.push_back(entry.path());
    }
    std::sort(chunks.begin(), chunks.end());
    std::vector<std::uint8_t> pixels;
    for (const auto& obs_path : chunks) {
      const auto obs = read_npy_u8(obs_path);
      auto rew_path = obs_path.string();
      rew_path.replace(rew_path.size() - 8, 8, "_rew.npy");
      const auto rew = read_npy_u8(rew_path);
      if (obs.shape.size() != 3 || obs.shape[1] != kFrameSide || obs.shape[2] != kFrameSide ||
          rew.shape.size() != 1 || rew.shape[0] != obs.shape[0])
        throw ShapeError("bad chunk shape in " + obs_path.string());
      pixels.insert(pixels.end(), obs.data.begin(), obs.data.end());
      gd.rewards.insert(gd.rewards.end(), rew.data.begin(), rew.data.end());
    }
    gd.frames = Eigen::Map<const ByteFrames>(pixels.data(), kFramePixels,
                                             static_cast<Eigen::Index>(pixels.size() / kFramePixels));
    ds.games.push_back(std::move(gd));
  }
  if (ds.games.empty()) throw InsufficientDataError("dataset directory '" + dir.string() + "' holds no games");
  return ds;
}

}  // namespace dell
