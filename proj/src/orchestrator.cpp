#include "dell/orchestrator.hpp"

#include "dell/binary_io.hpp"
#include "dell/errors.hpp"
#include "dell/random.hpp"
#include "dell/support_buffer.hpp"

#include <chrono>
#include <numeric>

namespace dell {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct Evaluation {
  std::vector<double> returns;
  std::int64_t decisions = 0;
  double total_ms = 0.0;
};

/// Steps each episode frame by frame through encode + act, timing the control path.
Evaluation evaluate(const SyntheticGame& game, const LinearPolicy& policy, const EncoderModel& encoder, int episodes,
                    std::uint64_t seed) {
  Evaluation ev;
  for (int e = 0; e < episodes; ++e) {
    const auto s = sample_episode(game, episode_seed(game, seed, e));
    std::vector<int> actions(static_cast<std::size_t>(s.frames.cols()));
    const auto t0 = Clock::now();
    for (Eigen::Index t = 0; t < s.frames.cols(); ++t)
      actions[static_cast<std::size_t>(t)] = act(policy, encode(encoder, Frame(s.frames.col(t))));
    ev.total_ms += ms_since(t0);
    ev.decisions += s.frames.cols();
    const auto inc = reward_increments(game, s.contexts, actions);
    ev.returns.push_back(std::accumulate(inc.begin(), inc.end(), 0.0));
  }
  return ev;
}

EmbeddingBatch probe_embeddings(const SyntheticGame& game, const EncoderModel& encoder, int frames, std::uint64_t seed) {
  const auto s = sample_episode(game, episode_seed(game, seed, 0));
  if (frames > s.frames.cols()) throw ValidationError("probe longer than an episode");
  return encode(encoder, FrameBatch(s.frames.leftCols(frames)));
}

/// Mutable deployment state of one run.
class Deployment {
 public:
  Deployment(const PretrainedSystem& system, const RunConfig& config)
      : system_(system),
        config_(config),
        mapper_(system.mapper),
        buffer_(empty_buffer(config.k_shot, system.encoder.latent_dim())),
        registry_(config.work_dir),
        encoder_bytes_(encoder_file_size(system.encoder)) {
    mapper_.class_vectors.resize(mapper_.feature_dim(), 0);
    save_state();
  }

  int classes() const { return registry_.size(); }

  TaskPrediction identify(const EmbeddingBatch& probe) const {
    if (config_.variant == MapperVariant::incremental) return infer_task(mapper_, probe);
    return classify(meta_for(classes()), heads_.back(), probe);
  }

  LinearPolicy policy(int class_id) const { return registry_.load(class_id); }

  int learn(const LinearPolicy& policy, const EmbeddingBatch& sampled) {
    const int id = classes();
    buffer_ = merge(buffer_, id, sampled);
    registry_.append(policy);
    if (config_.variant == MapperVariant::incremental) {
      mapper_ = extend_and_adapt(mapper_, buffer_);
    } else {
      std::vector<int> labels(buffer_.class_ids.begin(), buffer_.class_ids.end());
      heads_.push_back(fit_head(meta_for(id + 1), buffer_.embeddings, labels, id + 1));
    }
    save_state();
    return id;
  }

  std::uint64_t model_bytes() const {
    std::uint64_t b = encoder_bytes_ + registry_.total_bytes();
    if (config_.variant == MapperVariant::incremental) return b + fs::file_size(mapper_path());
    b += fs::file_size(config_.work_dir / "meta_trunk.bin");
    for (std::size_t i = 0; i < heads_.size(); ++i) b += fs::file_size(head_path(static_cast<int>(i) + 1));
    return b;
  }

  std::uint64_t buffer_bytes() const { return fs::file_size(config_.work_dir / "buffer.bin"); }

  /// N = |registry| = buffer classes = mapper classes (or stored heads).
  void check(int session) const {
    const int n = classes();
    const int mapper_n = config_.variant == MapperVariant::incremental ? mapper_.class_count()
                                                                      : static_cast<int>(heads_.size());
    if (buffer_.class_count() != n || mapper_n != n ||
        buffer_.entry_count() != static_cast<std::size_t>(n) * static_cast<std::size_t>(config_.k_shot))
      throw ValidationError("session " + std::to_string(session) + ": registry holds " + std::to_string(n) +
                            " policies, buffer " + std::to_string(buffer_.class_count()) + " classes / " +
                            std::to_string(buffer_.entry_count()) + " entries, mapper " + std::to_string(mapper_n) +
                            " classes");
    validate(buffer_);
  }

  std::size_t buffer_entries() const { return buffer_.entry_count(); }

 private:
  MetaBaseline meta_for(int way) const {
    // One shared trunk; every N gets its own head.
    MetaBaseline m = *system_.meta;
    m.way = way;
    return m;
  }
  fs::path mapper_path() const { return config_.work_dir / "mapper.bin"; }
  fs::path head_path(int way) const { return config_.work_dir / "heads" / ("head_" + std::to_string(way) + ".bin"); }

  void save_state() {
    save_buffer(buffer_, config_.work_dir / "buffer.bin");
    if (config_.variant == MapperVariant::incremental) {
      save_mapper(mapper_, mapper_path());
    } else {
      save_meta_baseline(*system_.meta, config_.work_dir / "meta_trunk.bin");
      if (!heads_.empty()) {
        save_head(heads_.back(), head_path(static_cast<int>(heads_.size())));
      }
    }
  }

  const PretrainedSystem& system_;
  const RunConfig& config_;
  TaskMapperModel mapper_;
  std::vector<PrototypeHead> heads_;
  SupportBuffer buffer_;
  PolicyRegistry registry_;
  std::uint64_t encoder_bytes_;
};

}  // namespace

std::string to_string(MapperVariant v) { return v == MapperVariant::incremental ? "incremental" : "meta"; }

MapperVariant mapper_variant_from_string(const std::string& s) {
  if (s == "incremental") return MapperVariant::incremental;
  if (s == "meta") return MapperVariant::meta;
  throw ValidationError("unknown mapper variant '" + s + "'");
}

bool should_switch(double mean_eval_return, double min_reward) { return mean_eval_return < min_reward; }

Json run_provenance(const BenchmarkSpec& spec, const PretrainedSystem& system, const RunConfig& c) {
  Json p;
  p["version"] = kReportVersion;
  p["spec_hash"] = fnv1a(benchmark_to_text(spec));
  p["spec_seed"] = spec.seed;
  p["alpha"] = spec.alpha;
  p["beta"] = spec.beta;
  p["seed"] = c.seed;
  p["encoder"] = system.encoder.kind == EncoderKind::trained ? "trained" : "random";
  p["encoder_seed"] = system.encoder.seed;
  p["mapper"] = to_string(c.variant);
  p["episodes"] = c.eval_episodes;
  p["probe"] = c.probe_frames;
  p["k_shot"] = c.k_shot;
  p["budget"] = c.cem.budget;
  p["population"] = c.cem.population;
  p["elite_fraction"] = c.cem.elite_fraction;
  p["scenario_episodes"] = c.cem.scenario_episodes;
  p["timing_stripped"] = c.strip_timing;
  p["adversarial_evaluation"] = c.adversarial_evaluation;
  return p;
}

RunResult run(const BenchmarkSpec& spec, const Suite& suite, const PretrainedSystem& system, const RunConfig& c) {
  validate(spec);
  if (!system.encoder.frozen || !system.mapper.frozen) throw ValidationError("encoder and task-mapper must be frozen");
  if (c.variant == MapperVariant::meta && !system.meta) throw ValidationError("meta variant needs a meta baseline");
  if (c.eval_episodes < 1 || c.probe_frames < 1 || c.k_shot < 1) throw ValidationError("E, P and K must be positive");
  if (c.work_dir.empty()) throw ValidationError("run needs a work directory");
  for (const auto& id : spec.sequence) suite.find(id);
  // Only the artifacts a run owns are cleared; the directory itself may hold other files.
  fs::create_directories(c.work_dir);
  for (const char* name : {"policies", "heads", "buffer.bin", "mapper.bin", "meta_trunk.bin"})
    fs::remove_all(c.work_dir / name);

  Deployment dep(system, c);
  std::vector<std::string> class_game;  // class id -> game of its learn session
  RunResult result;
  result.log.provenance = run_provenance(spec, system, c);

  for (int i = 0; i < spec.beta; ++i) {
    const auto& game = suite.find(spec.sequence[static_cast<std::size_t>(i)]);
    const auto& meta = spec.games.at(game.id);
    SessionRecord rec;
    rec.index = i;
    rec.game_id = game.id;
    rec.n_before = dep.classes();
    rec.model_bytes_before = dep.model_bytes();
    rec.buffer_bytes_before = dep.buffer_bytes();

    const auto t_probe = Clock::now();
    const auto probe = probe_embeddings(game, system.encoder, c.probe_frames, derive_seed(c.seed, "probe", i));
    bool learn = dep.classes() == 0;
    if (!learn) {
      const auto pred = dep.identify(probe);
      rec.probe_ms = ms_since(t_probe);
      rec.probe = ProbeResult{pred.class_id, pred.confidence, class_game[static_cast<std::size_t>(pred.class_id)]};
      const auto ev = evaluate(game, dep.policy(pred.class_id), system.encoder, c.eval_episodes,
                               derive_seed(c.seed, "evaluate", i));
      rec.eval_returns = c.adversarial_evaluation ? std::vector<double>(ev.returns.size(), 0.0) : ev.returns;
      rec.decisions = ev.decisions;
      rec.decision_ms = ev.total_ms / static_cast<double>(ev.decisions);
      learn = should_switch(mean(rec.eval_returns), meta.min_reward);
    }

    if (learn) {
      rec.mode = SessionMode::learn;
      const auto t_learn = Clock::now();
      CemOptions cem = c.cem;
      cem.seed = derive_seed(c.seed, "learn", i);
      const auto rl = rl_procedure(game, system.encoder, cem);
      const auto sampled = selective_sample(rl.collected, c.k_shot, derive_seed(c.seed, "sample", i));
      rec.learnt_class = dep.learn(rl.policy, sampled);
      class_game.push_back(game.id);
      rec.learn_ms = ms_since(t_learn);
      rec.rl_iterations = rl.iterations;
      rec.rl_plateaued = rl.plateaued;
      // The stored (quantized) policy is what later sessions load.
      rec.relearn_returns = evaluate(game, dep.policy(rec.learnt_class), system.encoder, c.eval_episodes,
                                     derive_seed(c.seed, "re-evaluate", i))
                                .returns;
    }

    rec.n_after = dep.classes();
    rec.model_bytes_after = dep.model_bytes();
    rec.buffer_bytes_after = dep.buffer_bytes();
    rec.buffer_entries = dep.buffer_entries();
    dep.check(i);
    if (learn && (rec.model_bytes_after <= rec.model_bytes_before || rec.buffer_bytes_after <= rec.buffer_bytes_before))
      throw ValidationError("session " + std::to_string(i) + ": learn switch did not grow model and buffer");
    if (rec.n_after != rec.n_before + (learn ? 1 : 0))
      throw ValidationError("session " + std::to_string(i) + ": class count moved by more than one");
    result.log.sessions.push_back(std::move(rec));
  }
  if (c.strip_timing) strip_timing(result.log);
  result.report = compute_report(result.log, spec);
  return result;
}

}  // namespace dell
