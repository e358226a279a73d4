#pragma once

#include "dell/encoder.hpp"
#include "dell/mapper_math.hpp"
#include "dell/support_buffer.hpp"
#include "dell/task_suite.hpp"
#include "dell/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dell {

/// Few-shot class-incremental task identifier. The trunk and attention module are frozen
/// after pretraining; only `class_vectors` changes during deployment.
struct TaskMapperModel {
  CecParams<Scalar> params;
  Matrix class_vectors;  // feature_dim x N, unit-norm columns
  bool trained = false;
  bool frozen = false;

  int class_count() const { return static_cast<int>(class_vectors.cols()); }
  int feature_dim() const { return static_cast<int>(params.trunk.weight.rows()); }
  Scalar temperature() const { return params.temperature(); }
};

/// Embeddings grouped by class (game), one matrix per class.
struct ClassEmbeddings {
  std::vector<std::string> ids;
  std::vector<EmbeddingBatch> per_class;

  int class_count() const { return static_cast<int>(per_class.size()); }
};

ClassEmbeddings embed_dataset(const PretrainDataset& dataset, const EncoderModel& encoder);
/// Renders `frames_per_game` fresh frames per game and encodes them.
ClassEmbeddings embed_suite(const Suite& suite, const EncoderModel& encoder, int frames_per_game, std::uint64_t seed);

struct MapperTrainOptions {
  int episodes = 2000;
  int shots = 5;        // support size of pseudo-new classes
  int base_shots = 20;  // support size behind precomputed base prototypes
  int queries = 5;      // per class
  int min_way = 5;
  int max_way = 20;
  int new_classes = 5;
  float learning_rate = 1e-3f;
  float initial_temperature = 10.0f;
  std::uint64_t seed = 0;
};

/// Untrained model with input statistics from the given embeddings and seeded weights.
TaskMapperModel init_taskmapper(const ClassEmbeddings& data, std::uint64_t seed, float initial_temperature = 10.0f);

/// Episodic pseudo-incremental pretraining; returns a frozen model with no class vectors.
TaskMapperModel pretrain_taskmapper(const ClassEmbeddings& data, const MapperTrainOptions& options);
TaskMapperModel pretrain_taskmapper(const PretrainDataset& dataset, const EncoderModel& encoder,
                                    const MapperTrainOptions& options);

/// Trunk features of embeddings (feature_dim x n).
Matrix mapper_features(const TaskMapperModel& model, const EmbeddingBatch& embeddings);

/// Class vectors for every class of the buffer: K-shot prototypes refined by attention over all
/// prototypes, unit-normalized. The buffer must hold N or N + 1 classes for a model with N.
TaskMapperModel extend_and_adapt(const TaskMapperModel& model, const SupportBuffer& buffer);

struct TaskPrediction {
  int class_id = -1;
  double confidence = 0.0;
};

/// Argmax of temperature-scaled cosine between the mean probe feature and the class vectors.
TaskPrediction infer_task(const TaskMapperModel& model, const EmbeddingBatch& probe);
TaskPrediction infer_from_feature(const TaskMapperModel& model, const Vector& feature);

std::size_t mapper_file_size(const TaskMapperModel& model);
void save_mapper(const TaskMapperModel& model, const std::filesystem::path& path);
TaskMapperModel load_mapper(const std::filesystem::path& path);

/// Fixed-N prototypical-network baseline. Has no extend operation: a different N needs a
/// different classifier.
struct MetaBaseline {
  TrunkParams<Scalar> trunk;
  int way = 5;
  int shot = 5;
  bool trained = false;
};

MetaBaseline meta_baseline(const ClassEmbeddings& data, int way, int shot, const MapperTrainOptions& options);
MetaBaseline meta_baseline(const PretrainDataset& dataset, const EncoderModel& encoder, int way, int shot,
                           const MapperTrainOptions& options);

/// The N-way head of a meta baseline: Euclidean class prototypes.
struct PrototypeHead {
  Matrix prototypes;  // feature_dim x way
};

PrototypeHead fit_head(const MetaBaseline& model, const EmbeddingBatch& support, const std::vector<int>& labels,
                       int way);
TaskPrediction classify(const MetaBaseline& model, const PrototypeHead& head, const EmbeddingBatch& probe);

std::size_t meta_trunk_file_size(const MetaBaseline& model);
std::size_t meta_head_file_size(int way, int feature_dim = kFeatureDim);
void save_head(const PrototypeHead& head, const std::filesystem::path& path);
PrototypeHead load_head(const std::filesystem::path& path);
void save_meta_baseline(const MetaBaseline& model, const std::filesystem::path& path);
MetaBaseline load_meta_baseline(const std::filesystem::path& path);

/// Held-out N-way K-shot accuracy on single-embedding queries.
double evaluate_incremental(const TaskMapperModel& model, const ClassEmbeddings& heldout, int way, int shot,
                            int queries_per_class, int episodes, std::uint64_t seed);
double evaluate_meta(const MetaBaseline& model, const ClassEmbeddings& heldout, int way, int shot,
                     int queries_per_class, int episodes, std::uint64_t seed);

}  // namespace dell
