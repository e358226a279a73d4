#include "dell/benchmark_spec.hpp"

#include "dell/binary_io.hpp"
#include "dell/errors.hpp"
#include "dell/random.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <set>

namespace dell {

namespace {

constexpr std::array<std::string_view, 6> kGenres = {"shoot-up", "maze", "racing", "sports", "platformer", "puzzle"};

void emit_meta_fields(YAML::Emitter& out, const GameMeta& meta) {
  out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << meta.name;
  out << YAML::Key << "genre" << YAML::Value << YAML::DoubleQuoted << meta.genre;
  out << YAML::Key << "input_text" << YAML::Value << YAML::DoubleQuoted << meta.input_text;
  out << YAML::Key << "min_reward" << YAML::Value << meta.min_reward;
  out << YAML::Key << "max_reward" << YAML::Value << meta.max_reward;
}

void configure(YAML::Emitter& out) { out.SetDoublePrecision(std::numeric_limits<double>::max_digits10); }

template <typename T>
T required(const YAML::Node& node, const char* key) {
  const YAML::Node child = node[key];
  if (!child) throw ParseError(std::string("missing key '") + key + "'");
  try {
    return child.as<T>();
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("bad value for '") + key + "': " + e.what());
  }
}

GameMeta meta_from_node(const YAML::Node& node) {
  if (!node.IsMap()) throw ParseError("game record must be a map");
  GameMeta m;
  m.name = required<std::string>(node, "name");
  m.genre = required<std::string>(node, "genre");
  m.input_text = node["input_text"] ? required<std::string>(node, "input_text") : std::string{};
  m.min_reward = required<double>(node, "min_reward");
  m.max_reward = required<double>(node, "max_reward");
  return m;
}

YAML::Node load_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("malformed YAML: ") + e.what());
  }
}

void check_version(const YAML::Node& root) {
  const int version = required<int>(root, "version");
  if (version != kSchemaVersion)
    throw ParseError("schema version mismatch: file has " + std::to_string(version) + ", expected " +
                     std::to_string(kSchemaVersion));
}

}  // namespace

std::span<const std::string_view> genre_registry() { return kGenres; }

bool is_registered_genre(std::string_view genre) {
  return std::find(kGenres.begin(), kGenres.end(), genre) != kGenres.end();
}

void validate(const GameMeta& meta) {
  if (!is_registered_genre(meta.genre)) throw ValidationError("unknown genre '" + meta.genre + "'");
  if (!(meta.max_reward > meta.min_reward))
    throw ValidationError("max_reward must exceed min_reward for game '" + meta.name + "'");
}

std::vector<std::string> BenchmarkSpec::unique_games() const {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& id : sequence)
    if (seen.insert(id).second) ids.push_back(id);
  return ids;
}

void validate(const BenchmarkSpec& spec) {
  if (spec.alpha <= 0) throw ValidationError("alpha must be positive");
  if (spec.beta <= spec.alpha) throw ValidationError("beta must exceed alpha");
  if (static_cast<int>(spec.sequence.size()) != spec.beta)
    throw ValidationError("sequence length must equal beta");
  if (static_cast<int>(spec.unique_games().size()) != spec.alpha)
    throw ValidationError("unique-game count mismatch: sequence has " + std::to_string(spec.unique_games().size()) +
                          " distinct ids, alpha is " + std::to_string(spec.alpha));
  for (const auto& id : spec.sequence)
    if (!spec.games.contains(id)) throw ValidationError("sequence id '" + id + "' has no game record");
  for (const auto& [id, meta] : spec.games) validate(meta);
}

void validate_against_pretrain(const BenchmarkSpec& spec, std::span<const std::string> pretrain_genres,
                               std::span<const std::string> pretrain_game_ids) {
  for (const auto& id : spec.unique_games()) {
    const auto& meta = spec.games.at(id);
    if (std::find(pretrain_genres.begin(), pretrain_genres.end(), meta.genre) == pretrain_genres.end())
      throw ValidationError("genre '" + meta.genre + "' of game '" + id + "' is absent from the pretrain suite");
    if (std::find(pretrain_game_ids.begin(), pretrain_game_ids.end(), id) != pretrain_game_ids.end())
      throw ValidationError("game '" + id + "' appears in both the pretrain and the benchmark suite");
  }
}

std::string benchmark_to_text(const BenchmarkSpec& spec) {
  YAML::Emitter out;
  configure(out);
  out << YAML::BeginMap;
  out << YAML::Key << "version" << YAML::Value << spec.version;
  out << YAML::Key << "alpha" << YAML::Value << spec.alpha;
  out << YAML::Key << "beta" << YAML::Value << spec.beta;
  out << YAML::Key << "seed" << YAML::Value << spec.seed;
  out << YAML::Key << "sequence" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& id : spec.sequence) out << YAML::DoubleQuoted << id;
  out << YAML::EndSeq;
  out << YAML::Key << "games" << YAML::Value << YAML::BeginMap;
  for (const auto& [id, meta] : spec.games) {
    out << YAML::Key << YAML::DoubleQuoted << id << YAML::Value << YAML::BeginMap;
    emit_meta_fields(out, meta);
    out << YAML::EndMap;
  }
  out << YAML::EndMap << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

BenchmarkSpec parse_benchmark_text(const std::string& text) {
  const YAML::Node root = load_yaml(text);
  if (!root.IsMap()) throw ParseError("benchmark file must be a map");
  check_version(root);
  BenchmarkSpec spec;
  spec.alpha = required<int>(root, "alpha");
  spec.beta = required<int>(root, "beta");
  spec.seed = required<std::uint64_t>(root, "seed");
  spec.sequence = required<std::vector<std::string>>(root, "sequence");
  const YAML::Node games = root["games"];
  if (!games || !games.IsMap()) throw ParseError("missing map 'games'");
  for (const auto& kv : games) spec.games.emplace(kv.first.as<std::string>(), meta_from_node(kv.second));
  validate(spec);
  return spec;
}

BenchmarkSpec parse_benchmark(const std::filesystem::path& path) { return parse_benchmark_text(read_text_file(path)); }

void write_benchmark(const BenchmarkSpec& spec, const std::filesystem::path& path) {
  validate(spec);
  write_text_file(path, benchmark_to_text(spec));
}

BenchmarkSpec generate_benchmark(int alpha, int beta, std::span<const GameMeta> suite, std::uint64_t seed) {
  if (alpha <= 0 || beta <= alpha) throw ValidationError("beta must exceed alpha");
  if (static_cast<int>(suite.size()) < alpha)
    throw InsufficientDataError("suite has " + std::to_string(suite.size()) + " games, need " + std::to_string(alpha));

  Rng rng(derive_seed(seed, "generate_benchmark"));
  std::vector<std::size_t> order(suite.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(static_cast<std::size_t>(alpha));

  BenchmarkSpec spec;
  spec.alpha = alpha;
  spec.beta = beta;
  spec.seed = seed;
  for (auto i : order) {
    validate(suite[i]);
    spec.sequence.push_back(suite[i].name);
    spec.games.emplace(suite[i].name, suite[i]);
  }
  std::uniform_int_distribution<std::size_t> pick(0, order.size() - 1);
  for (int s = alpha; s < beta; ++s) spec.sequence.push_back(suite[order[pick(rng)]].name);
  validate(spec);
  return spec;
}

std::string meta_to_text(const GameMeta& meta) {
  YAML::Emitter out;
  configure(out);
  out << YAML::BeginMap;
  out << YAML::Key << "version" << YAML::Value << kSchemaVersion;
  emit_meta_fields(out, meta);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

GameMeta parse_meta_text(const std::string& text) {
  const YAML::Node root = load_yaml(text);
  if (!root.IsMap()) throw ParseError("meta file must be a map");
  check_version(root);
  GameMeta meta = meta_from_node(root);
  validate(meta);
  return meta;
}

void write_meta(const GameMeta& meta, const std::filesystem::path& path) {
  validate(meta);
  write_text_file(path, meta_to_text(meta));
}

GameMeta read_meta(const std::filesystem::path& path) { return parse_meta_text(read_text_file(path)); }

}  // namespace dell
