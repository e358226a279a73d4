#pragma once

#include "dell/benchmark_spec.hpp"
#include "dell/encoder.hpp"
#include "dell/event_log.hpp"
#include "dell/metrics.hpp"
#include "dell/policy.hpp"
#include "dell/task_mapper.hpp"
#include "dell/task_suite.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace dell {

/// Frozen artifacts of the pretrain phase.
struct PretrainedSystem {
  EncoderModel encoder;
  TaskMapperModel mapper;
  std::optional<MetaBaseline> meta;  // required by MapperVariant::meta
};

enum class MapperVariant { incremental, meta };

std::string to_string(MapperVariant v);
MapperVariant mapper_variant_from_string(const std::string& s);

struct RunConfig {
  int eval_episodes = 5;  // E
  int probe_frames = 8;   // P
  int k_shot = 5;         // K
  CemOptions cem;
  MapperVariant variant = MapperVariant::incremental;
  std::uint64_t seed = 0;
  std::filesystem::path work_dir;  // mapper, buffer and policy files are written here
  bool strip_timing = false;       // zero wall-clock fields for byte-comparable output
  bool adversarial_evaluation = false;  // evaluation policies earn nothing (forces every switch)
};

/// Learn iff the mean evaluation return is strictly below the game's minimum reward.
bool should_switch(double mean_eval_return, double min_reward);

struct RunResult {
  EventLog log;
  RunReport report;
};

/// Plays the benchmark's sessions in order. Every eval game id must exist in `suite`.
RunResult run(const BenchmarkSpec& spec, const Suite& suite, const PretrainedSystem& system, const RunConfig& config);

/// Provenance block describing the run inputs.
Json run_provenance(const BenchmarkSpec& spec, const PretrainedSystem& system, const RunConfig& config);

}  // namespace dell
