#include "dell/task_mapper.hpp"

#include "dell/binary_io.hpp"
#include "dell/errors.hpp"
#include "dell/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dell {

namespace {

constexpr std::uint32_t kMapperVersion = 1;
constexpr std::uint32_t kMetaVersion = 1;
constexpr std::size_t kMapperHeaderBytes = 4 + 4 * 5 + 4;
constexpr std::size_t kMetaHeaderBytes = 4 + 4 * 5;
constexpr std::size_t kHeadHeaderBytes = 4 + 4 * 3;

/// `count` distinct indices from [0, n), seeded partial Fisher-Yates.
std::vector<int> pick_distinct(Rng& rng, int n, int count) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

int min_class_size(const ClassEmbeddings& data) {
  int m = std::numeric_limits<int>::max();
  for (const auto& c : data.per_class) m = std::min(m, static_cast<int>(c.cols()));
  return data.per_class.empty() ? 0 : m;
}

/// Builds an episode over `classes`; class i gets shots[i] support and `queries` query columns.
EpisodeData<Scalar> make_episode(const ClassEmbeddings& data, const std::vector<int>& classes,
                                 const std::vector<int>& shots, int queries, Rng& rng) {
  EpisodeData<Scalar> ep;
  ep.n_classes = static_cast<int>(classes.size());
  const int total_support = std::accumulate(shots.begin(), shots.end(), 0);
  const auto dim = data.per_class.front().rows();
  ep.support.resize(dim, total_support);
  ep.query.resize(dim, queries * ep.n_classes);
  int s = 0, q = 0;
  for (int c = 0; c < ep.n_classes; ++c) {
    const auto& pool = data.per_class[static_cast<std::size_t>(classes[static_cast<std::size_t>(c)])];
    const int k = shots[static_cast<std::size_t>(c)];
    const auto idx = pick_distinct(rng, static_cast<int>(pool.cols()), k + queries);
    for (int i = 0; i < k; ++i, ++s) {
      ep.support.col(s) = pool.col(idx[static_cast<std::size_t>(i)]);
      ep.support_label.push_back(c);
    }
    for (int i = 0; i < queries; ++i, ++q) {
      ep.query.col(q) = pool.col(idx[static_cast<std::size_t>(k + i)]);
      ep.query_label.push_back(c);
    }
  }
  return ep;
}

void require_embeddings(const ClassEmbeddings& data, int min_classes, int per_class) {
  if (data.class_count() < min_classes)
    throw InsufficientDataError("need at least " + std::to_string(min_classes) + " classes, got " +
                                std::to_string(data.class_count()));
  if (min_class_size(data) < per_class)
    throw InsufficientDataError("every class needs at least " + std::to_string(per_class) + " embeddings");
}

TrunkParams<Scalar> init_trunk(const ClassEmbeddings& data, Rng& rng) {
  TrunkParams<Scalar> t;
  const auto dim = data.per_class.front().rows();
  Eigen::Index n = 0;
  t.input_mean = Vector::Zero(dim);
  for (const auto& c : data.per_class) {
    t.input_mean += c.rowwise().sum();
    n += c.cols();
  }
  t.input_mean /= static_cast<Scalar>(n);
  double var = 0.0;
  for (const auto& c : data.per_class) var += (c.colwise() - t.input_mean).cast<double>().squaredNorm();
  var /= static_cast<double>(n) * static_cast<double>(dim);
  t.input_scale = static_cast<Scalar>(1.0 / std::sqrt(std::max(var, 1e-20)));
  t.weight = normal_matrix<Scalar>(kFeatureDim, dim, rng, std::sqrt(2.0f / static_cast<Scalar>(dim)));
  t.bias = Vector::Zero(kFeatureDim);
  return t;
}

void check_finite(const Matrix& m, int episode) {
  if (!m.allFinite()) throw DivergenceError("task-mapper training diverged at episode " + std::to_string(episode));
}

TaskPrediction predict(const Vector& logits) {
  TaskPrediction p;
  Eigen::Index best = 0;
  const Scalar top = logits.maxCoeff(&best);
  p.class_id = static_cast<int>(best);
  p.confidence = 1.0 / (logits.array() - top).exp().sum();
  return p;
}

void write_trunk(ByteWriter& w, const TrunkParams<Scalar>& t) {
  w.f32_block(t.input_mean.transpose());
  w.f32(t.input_scale);
  w.f32_block(t.weight);
  w.f32_block(t.bias.transpose());
}

TrunkParams<Scalar> read_trunk(ByteReader& r, int feature_dim, int embedding_dim) {
  TrunkParams<Scalar> t;
  t.input_mean = read_f32_block(r, 1, embedding_dim).transpose();
  t.input_scale = r.f32();
  t.weight = read_f32_block(r, feature_dim, embedding_dim);
  t.bias = read_f32_block(r, 1, feature_dim).transpose();
  return t;
}

std::size_t trunk_bytes(const TrunkParams<Scalar>& t) {
  return 4 * (static_cast<std::size_t>(t.input_mean.size()) + 1 + static_cast<std::size_t>(t.weight.size()) +
              static_cast<std::size_t>(t.bias.size()));
}

}  // namespace

ClassEmbeddings embed_dataset(const PretrainDataset& dataset, const EncoderModel& encoder) {
  ClassEmbeddings out;
  for (const auto& g : dataset.games) {
    out.ids.push_back(g.id);
    out.per_class.push_back(encode(encoder, to_frames(g.frames)));
  }
  return out;
}

ClassEmbeddings embed_suite(const Suite& suite, const EncoderModel& encoder, int frames_per_game,
                            std::uint64_t seed) {
  if (frames_per_game < 1) throw ValidationError("frames_per_game must be positive");
  ClassEmbeddings out;
  for (const auto& g : suite.games) {
    FrameBatch frames(kFramePixels, frames_per_game);
    int filled = 0;
    for (int ep = 0; filled < frames_per_game; ++ep) {
      const auto sample = sample_episode(g, episode_seed(g, seed, ep));
      const int take = std::min<int>(static_cast<int>(sample.frames.cols()), frames_per_game - filled);
      frames.middleCols(filled, take) = sample.frames.leftCols(take);
      filled += take;
    }
    out.ids.push_back(g.id);
    out.per_class.push_back(encode(encoder, frames));
  }
  return out;
}

TaskMapperModel init_taskmapper(const ClassEmbeddings& data, std::uint64_t seed, float initial_temperature) {
  require_embeddings(data, 1, 1);
  if (!(initial_temperature > 0.0f)) throw ValidationError("temperature must be positive");
  Rng rng(derive_seed(seed, "mapper-init"));
  TaskMapperModel m;
  m.params.trunk = init_trunk(data, rng);
  const Scalar att_std = 1.0f / std::sqrt(static_cast<Scalar>(kFeatureDim));
  m.params.attention.query = normal_matrix<Scalar>(kFeatureDim, kFeatureDim, rng, att_std);
  m.params.attention.key = normal_matrix<Scalar>(kFeatureDim, kFeatureDim, rng, att_std);
  m.params.attention.value = normal_matrix<Scalar>(kFeatureDim, kFeatureDim, rng, 0.1f * att_std);
  m.params.log_temperature = Vector::Constant(1, std::log(initial_temperature));
  m.class_vectors.resize(kFeatureDim, 0);
  return m;
}

TaskMapperModel pretrain_taskmapper(const ClassEmbeddings& data, const MapperTrainOptions& o) {
  if (o.episodes < 0 || o.shots < 1 || o.queries < 1 || o.min_way < 2 || o.max_way < o.min_way ||
      o.new_classes < 1 || o.base_shots < 1)
    throw ValidationError("bad task-mapper training options");
  require_embeddings(data, o.min_way, std::max(o.shots, 1) + o.queries);

  TaskMapperModel m = init_taskmapper(data, o.seed, o.initial_temperature);
  Rng rng(derive_seed(o.seed, "mapper-episodes"));
  Adam<Scalar> adam(o.learning_rate);
  const int max_way = std::min(o.max_way, data.class_count());
  const int base_cap = min_class_size(data) - o.queries;

  for (int e = 0; e < o.episodes; ++e) {
    const int way = std::uniform_int_distribution<int>(o.min_way, max_way)(rng);
    const auto classes = pick_distinct(rng, data.class_count(), way);
    const int n_new = std::min(o.new_classes, way);
    std::vector<int> shots(static_cast<std::size_t>(way), o.shots);
    for (int c = 0; c < way - n_new; ++c) shots[static_cast<std::size_t>(c)] = std::min(o.base_shots, base_cap);
    const auto ep = make_episode(data, classes, shots, o.queries, rng);

    auto grad = zeros_like(m.params);
    cec_episode_loss<Scalar>(m.params, ep, &grad);
    auto& p = m.params;
    adam.update(0, p.trunk.weight, grad.trunk.weight);
    adam.update(1, p.trunk.bias, grad.trunk.bias);
    adam.update(2, p.attention.query, grad.attention.query);
    adam.update(3, p.attention.key, grad.attention.key);
    adam.update(4, p.attention.value, grad.attention.value);
    adam.update(5, p.log_temperature, grad.log_temperature);
    check_finite(p.trunk.weight, e);
    check_finite(p.attention.value, e);
    adam.next_step();
  }
  m.trained = o.episodes > 0;
  m.frozen = true;
  return m;
}

TaskMapperModel pretrain_taskmapper(const PretrainDataset& dataset, const EncoderModel& encoder,
                                    const MapperTrainOptions& options) {
  return pretrain_taskmapper(embed_dataset(dataset, encoder), options);
}

Matrix mapper_features(const TaskMapperModel& model, const EmbeddingBatch& embeddings) {
  if (embeddings.rows() != model.params.trunk.weight.cols()) throw ShapeError("embedding dimension mismatch");
  return trunk_forward<Scalar>(model.params.trunk, embeddings);
}

TaskMapperModel extend_and_adapt(const TaskMapperModel& model, const SupportBuffer& buffer) {
  validate(buffer);
  const int n = buffer.class_count();
  if (n != model.class_count() && n != model.class_count() + 1)
    throw ValidationError("buffer holds " + std::to_string(n) + " classes; model has " +
                          std::to_string(model.class_count()));
  TaskMapperModel out = model;
  if (n == 0) {
    out.class_vectors.resize(model.feature_dim(), 0);
    return out;
  }
  std::vector<int> labels(buffer.class_ids.begin(), buffer.class_ids.end());
  const Matrix feats = mapper_features(model, buffer.embeddings);
  out.class_vectors = adapt_prototypes<Scalar>(model.params.attention, class_means<Scalar>(feats, labels, n));
  return out;
}

TaskPrediction infer_from_feature(const TaskMapperModel& model, const Vector& feature) {
  if (model.class_count() == 0) throw ValidationError("task-mapper has no learnt classes");
  const Vector unit = feature / std::max(feature.norm(), Scalar(1e-12));
  return predict(model.temperature() * (model.class_vectors.transpose() * unit));
}

TaskPrediction infer_task(const TaskMapperModel& model, const EmbeddingBatch& probe) {
  if (probe.cols() == 0) throw ValidationError("probe must hold at least one embedding");
  return infer_from_feature(model, mapper_features(model, probe).rowwise().mean());
}

std::size_t mapper_file_size(const TaskMapperModel& model) {
  const auto d = static_cast<std::size_t>(model.feature_dim());
  return kMapperHeaderBytes + trunk_bytes(model.params.trunk) + 4 * (3 * d * d + 1) +
         4 * d * static_cast<std::size_t>(model.class_count());
}

void save_mapper(const TaskMapperModel& model, const std::filesystem::path& path) {
  ByteWriter w;
  w.magic("DLTM");
  w.u32(kMapperVersion);
  w.u32(static_cast<std::uint32_t>(model.class_count()));
  w.u32(static_cast<std::uint32_t>(model.feature_dim()));
  w.u32(static_cast<std::uint32_t>(model.params.trunk.weight.cols()));
  w.u32((model.trained ? 1u : 0u) | (model.frozen ? 2u : 0u));
  w.f32(model.temperature());
  write_trunk(w, model.params.trunk);
  w.f32_block(model.params.attention.query);
  w.f32_block(model.params.attention.key);
  w.f32_block(model.params.attention.value);
  w.f32(model.params.log_temperature(0));
  w.f32_block(model.class_vectors.transpose());
  write_file(path, w.bytes());
}

TaskMapperModel load_mapper(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  r.expect_magic("DLTM");
  if (r.u32() != kMapperVersion) throw ParseError("task-mapper file version mismatch");
  const int n = static_cast<int>(r.u32());
  const int d = static_cast<int>(r.u32());
  const int e = static_cast<int>(r.u32());
  const auto flags = r.u32();
  (void)r.f32();  // informational copy of exp(log_temperature)
  TaskMapperModel m;
  m.trained = flags & 1u;
  m.frozen = flags & 2u;
  m.params.trunk = read_trunk(r, d, e);
  m.params.attention.query = read_f32_block(r, d, d);
  m.params.attention.key = read_f32_block(r, d, d);
  m.params.attention.value = read_f32_block(r, d, d);
  m.params.log_temperature = Vector::Constant(1, r.f32());
  m.class_vectors = read_f32_block(r, n, d).transpose();
  if (!r.at_end()) throw ParseError("trailing bytes in task-mapper file");
  return m;
}

MetaBaseline meta_baseline(const ClassEmbeddings& data, int way, int shot, const MapperTrainOptions& o) {
  if (way < 1 || shot < 1 || o.episodes < 0 || o.queries < 1) throw ValidationError("bad meta-baseline options");
  // Episodes use every pretrain class when N exceeds their number.
  const int train_way = std::min(way, data.class_count());
  require_embeddings(data, std::min(way, 2), shot + o.queries);
  Rng init_rng(derive_seed(o.seed, "meta-init", static_cast<std::uint64_t>(way)));
  MetaBaseline m;
  m.way = way;
  m.shot = shot;
  m.trunk = init_trunk(data, init_rng);
  Rng rng(derive_seed(o.seed, "meta-episodes", static_cast<std::uint64_t>(way)));
  Adam<Scalar> adam(o.learning_rate);
  const std::vector<int> shots(static_cast<std::size_t>(train_way), shot);
  for (int e = 0; e < o.episodes && train_way > 1; ++e) {
    const auto ep = make_episode(data, pick_distinct(rng, data.class_count(), train_way), shots, o.queries, rng);
    auto grad = zeros_like(m.trunk);
    protonet_episode_loss<Scalar>(m.trunk, ep, &grad);
    adam.update(0, m.trunk.weight, grad.weight);
    adam.update(1, m.trunk.bias, grad.bias);
    check_finite(m.trunk.weight, e);
    adam.next_step();
  }
  m.trained = o.episodes > 0;
  return m;
}

MetaBaseline meta_baseline(const PretrainDataset& dataset, const EncoderModel& encoder, int way, int shot,
                           const MapperTrainOptions& options) {
  return meta_baseline(embed_dataset(dataset, encoder), way, shot, options);
}

PrototypeHead fit_head(const MetaBaseline& model, const EmbeddingBatch& support, const std::vector<int>& labels,
                       int way) {
  if (way != model.way) throw ValidationError("meta baseline supports exactly " + std::to_string(model.way) + "-way");
  if (static_cast<Eigen::Index>(labels.size()) != support.cols()) throw ShapeError("one label per support column");
  std::vector<int> count(static_cast<std::size_t>(way), 0);
  for (int l : labels) {
    if (l < 0 || l >= way) throw ValidationError("support label out of range");
    ++count[static_cast<std::size_t>(l)];
  }
  for (int c : count)
    if (c == 0) throw ValidationError("every class needs support");
  return {class_means<Scalar>(trunk_forward<Scalar>(model.trunk, support), labels, way)};
}

TaskPrediction classify(const MetaBaseline& model, const PrototypeHead& head, const EmbeddingBatch& probe) {
  if (probe.cols() == 0) throw ValidationError("probe must hold at least one embedding");
  if (head.prototypes.cols() == 0) throw ValidationError("head has no classes");
  const Vector f = trunk_forward<Scalar>(model.trunk, probe).rowwise().mean();
  return predict(-(head.prototypes.colwise() - f).colwise().squaredNorm().transpose());
}

std::size_t meta_trunk_file_size(const MetaBaseline& model) { return kMetaHeaderBytes + trunk_bytes(model.trunk); }

std::size_t meta_head_file_size(int way, int feature_dim) {
  return kHeadHeaderBytes + 4 * static_cast<std::size_t>(way) * static_cast<std::size_t>(feature_dim);
}

void save_head(const PrototypeHead& head, const std::filesystem::path& path) {
  ByteWriter w;
  w.magic("DLPH");
  w.u32(kMetaVersion);
  w.u32(static_cast<std::uint32_t>(head.prototypes.cols()));
  w.u32(static_cast<std::uint32_t>(head.prototypes.rows()));
  w.f32_block(head.prototypes.transpose());
  write_file(path, w.bytes());
}

PrototypeHead load_head(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  r.expect_magic("DLPH");
  if (r.u32() != kMetaVersion) throw ParseError("head file version mismatch");
  const auto way = static_cast<Eigen::Index>(r.u32());
  const auto d = static_cast<Eigen::Index>(r.u32());
  PrototypeHead h;
  h.prototypes = read_f32_block(r, way, d).transpose();
  if (!r.at_end()) throw ParseError("trailing bytes in head file");
  return h;
}

void save_meta_baseline(const MetaBaseline& model, const std::filesystem::path& path) {
  ByteWriter w;
  w.magic("DLMB");
  w.u32(kMetaVersion);
  w.u32(static_cast<std::uint32_t>(model.way));
  w.u32(static_cast<std::uint32_t>(model.shot));
  w.u32(static_cast<std::uint32_t>(model.trunk.weight.rows()));
  w.u32(static_cast<std::uint32_t>(model.trunk.weight.cols()) | (model.trained ? 0x80000000u : 0u));
  write_trunk(w, model.trunk);
  write_file(path, w.bytes());
}

MetaBaseline load_meta_baseline(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  r.expect_magic("DLMB");
  if (r.u32() != kMetaVersion) throw ParseError("meta-baseline file version mismatch");
  MetaBaseline m;
  m.way = static_cast<int>(r.u32());
  m.shot = static_cast<int>(r.u32());
  const int d = static_cast<int>(r.u32());
  const auto e = r.u32();
  m.trained = e & 0x80000000u;
  m.trunk = read_trunk(r, d, static_cast<int>(e & 0x7fffffffu));
  if (!r.at_end()) throw ParseError("trailing bytes in meta-baseline file");
  return m;
}

double evaluate_incremental(const TaskMapperModel& model, const ClassEmbeddings& heldout, int way, int shot,
                            int queries_per_class, int episodes, std::uint64_t seed) {
  require_embeddings(heldout, way, shot + queries_per_class);
  Rng rng(derive_seed(seed, "eval-incremental", static_cast<std::uint64_t>(way)));
  const std::vector<int> shots(static_cast<std::size_t>(way), shot);
  long hits = 0, total = 0;
  for (int e = 0; e < episodes; ++e) {
    const auto ep = make_episode(heldout, pick_distinct(rng, heldout.class_count(), way), shots, queries_per_class, rng);
    SupportBuffer buffer = empty_buffer(shot, static_cast<int>(ep.support.rows()));
    TaskMapperModel adapted = model;
    adapted.class_vectors.resize(model.feature_dim(), 0);
    // Classes arrive one at a time, as in deployment.
    for (int c = 0; c < way; ++c) {
      buffer = merge(buffer, c, ep.support.middleCols(c * shot, shot));
      adapted = extend_and_adapt(adapted, buffer);
    }
    const Matrix q = normalize_columns<Scalar>(mapper_features(adapted, ep.query));
    const Matrix logits = adapted.class_vectors.transpose() * q;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      Eigen::Index best = 0;
      logits.col(j).maxCoeff(&best);
      hits += best == ep.query_label[static_cast<std::size_t>(j)];
      ++total;
    }
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

double evaluate_meta(const MetaBaseline& model, const ClassEmbeddings& heldout, int way, int shot,
                     int queries_per_class, int episodes, std::uint64_t seed) {
  require_embeddings(heldout, way, shot + queries_per_class);
  Rng rng(derive_seed(seed, "eval-meta", static_cast<std::uint64_t>(way)));
  const std::vector<int> shots(static_cast<std::size_t>(way), shot);
  long hits = 0, total = 0;
  for (int e = 0; e < episodes; ++e) {
    const auto ep = make_episode(heldout, pick_distinct(rng, heldout.class_count(), way), shots, queries_per_class, rng);
    const auto head = fit_head(model, ep.support, ep.support_label, way);
    const Matrix q = trunk_forward<Scalar>(model.trunk, ep.query);
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      Eigen::Index best = 0;
      (-(head.prototypes.colwise() - q.col(j)).colwise().squaredNorm()).maxCoeff(&best);
      hits += best == ep.query_label[static_cast<std::size_t>(j)];
      ++total;
    }
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

}  // namespace dell
