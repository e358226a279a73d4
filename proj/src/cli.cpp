#include "dell/cli.hpp"

#include "dell/benchmark_spec.hpp"
#include "dell/calibration.hpp"
#include "dell/encoder.hpp"
#include "dell/errors.hpp"
#include "dell/metrics.hpp"
#include "dell/orchestrator.hpp"
#include "dell/random.hpp"
#include "dell/task_mapper.hpp"
#include "dell/task_suite.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>

namespace dell {

namespace fs = std::filesystem;

fs::path dell_home() {
  const char* env = std::getenv("DELL_HOME");
  return env && *env ? fs::path(env) : fs::path("dell_home");
}

namespace {

std::vector<std::string> registry_genres() {
  std::vector<std::string> g;
  for (auto s : genre_registry()) g.emplace_back(s);
  return g;
}

struct PretrainArgs {
  std::uint64_t seed = 0;
  fs::path suite, out, dataset;
  int games = 24;
  int episodes_per_game = 1;
  std::string encoder = "trained";
  int ae_epochs = 20;
  int mapper_episodes = 2000;
  bool with_meta = false;
  int meta_way = 5;
};

int cmd_pretrain(const PretrainArgs& a) {
  const Suite suite = make_suite(SuiteKind::pretrain, a.games, registry_genres(), derive_seed(a.seed, "pretrain-suite"));
  write_suite_description(suite, a.suite);
  pack_pretrain_dataset(suite, a.dataset, a.episodes_per_game, derive_seed(a.seed, "pretrain-episodes"));
  const PretrainDataset data = load_pretrain_dataset(a.dataset);

  EncoderModel encoder;
  if (a.encoder == "trained") {
    AutoencoderOptions ao;
    ao.epochs = a.ae_epochs;
    ao.seed = derive_seed(a.seed, "encoder");
    encoder = train_autoencoder(data.all_frames(), ao);
  } else if (a.encoder == "random") {
    encoder = random_encoder(derive_seed(a.seed, "encoder"));
  } else {
    throw ValidationError("encoder must be 'trained' or 'random'");
  }
  const ClassEmbeddings emb = embed_dataset(data, encoder);
  MapperTrainOptions mo;
  mo.episodes = a.mapper_episodes;
  mo.seed = derive_seed(a.seed, "mapper");
  const TaskMapperModel mapper = pretrain_taskmapper(emb, mo);

  save_encoder(encoder, a.out / "encoder.bin");
  save_mapper(mapper, a.out / "mapper.bin");
  std::cout << "encoder " << (a.out / "encoder.bin").string() << " (" << encoder_file_size(encoder) << " B)\n";
  std::cout << "task-mapper " << (a.out / "mapper.bin").string() << " (" << mapper_file_size(mapper) << " B)\n";
  if (a.with_meta) {
    const MetaBaseline meta = meta_baseline(emb, a.meta_way, mo.shots, mo);
    save_meta_baseline(meta, a.out / "meta.bin");
    std::cout << "meta baseline " << (a.out / "meta.bin").string() << "\n";
  }
  return 0;
}

struct SuiteArgs {
  std::uint64_t seed = 0;
  int games = 12;
  fs::path out;
};

int cmd_suite(const SuiteArgs& a) {
  const Suite s = make_suite(SuiteKind::eval, a.games, registry_genres(), derive_seed(a.seed, "eval-suite"));
  write_suite_description(s, a.out);
  std::cout << "eval suite " << a.out.string() << " (" << s.games.size() << " games)\n";
  return 0;
}

struct CalibrateArgs {
  std::uint64_t seed = 0;
  fs::path suite, out;
  int min_episodes = 100;
  int budget = 200;
  int encoder_epochs = 10;
  int eval_episodes = 100;
};

int cmd_calibrate(const CalibrateArgs& a) {
  const Suite suite = read_suite_description(a.suite);
  CalibrationOptions o;
  o.seed = a.seed;
  o.min_episodes = a.min_episodes;
  o.max.budget = a.budget;
  o.max.encoder_epochs = a.encoder_epochs;
  o.max.eval_episodes = a.eval_episodes;
  int invalid = 0;
  for (const auto& c : calibrate_suite(suite, o)) {
    std::printf("%-24s min %10.3f  max %10.3f%s%s\n", c.meta.name.c_str(), c.meta.min_reward, c.meta.max_reward,
                c.plateaued ? "" : "  (budget exhausted)", c.valid ? "" : "  INVALID: min >= max");
    if (!c.valid) {
      ++invalid;
      continue;
    }
    write_meta(c.meta, a.out / (c.meta.name + ".yaml"));
  }
  if (invalid) {
    std::cerr << invalid << " game(s) have a degenerate reward range; no meta file written for them\n";
    return 2;
  }
  return 0;
}

struct BenchmarkArgs {
  std::uint64_t seed = 0;
  int alpha = 5, beta = 10;
  fs::path metas, out, pretrain_suite;
};

int cmd_benchmark(const BenchmarkArgs& a) {
  std::vector<GameMeta> metas;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.metas))
    if (e.path().extension() == ".yaml") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) metas.push_back(read_meta(f));
  const BenchmarkSpec spec = generate_benchmark(a.alpha, a.beta, metas, a.seed);
  if (fs::exists(a.pretrain_suite)) {
    const Suite pre = read_suite_description(a.pretrain_suite);
    validate_against_pretrain(spec, pre.genres, pre.game_ids());
  }
  write_benchmark(spec, a.out);
  std::cout << "DeLL(" << spec.alpha << ", " << spec.beta << ") " << a.out.string() << "\n";
  return 0;
}

struct RunArgs {
  std::uint64_t seed = 0;
  fs::path suite, benchmark, checkpoints, out;
  int episodes = 5, probe = 8, k_shot = 5, budget = 200;
  std::string format = "json";
  std::string mapper = "incremental";
  bool strip_timing = false;
};

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw IoError(std::string("missing ") + what + " '" + p.string() + "'");
}

int cmd_run(const RunArgs& a) {
  const auto variant = mapper_variant_from_string(a.mapper);
  const auto format = report_format_from_string(a.format);
  require_file(a.checkpoints / "encoder.bin", "encoder checkpoint");
  require_file(a.checkpoints / "mapper.bin", "task-mapper checkpoint");
  PretrainedSystem sys;
  sys.encoder = load_encoder(a.checkpoints / "encoder.bin");
  sys.mapper = load_mapper(a.checkpoints / "mapper.bin");
  if (variant == MapperVariant::meta) {
    require_file(a.checkpoints / "meta.bin", "meta-baseline checkpoint");
    sys.meta = load_meta_baseline(a.checkpoints / "meta.bin");
  }
  const BenchmarkSpec spec = parse_benchmark(a.benchmark);
  const Suite suite = read_suite_description(a.suite);

  RunConfig c;
  c.seed = a.seed;
  c.eval_episodes = a.episodes;
  c.probe_frames = a.probe;
  c.k_shot = a.k_shot;
  c.cem.budget = a.budget;
  c.variant = variant;
  c.strip_timing = a.strip_timing;
  c.work_dir = a.out / "artifacts";
  const RunResult r = run(spec, suite, sys, c);
  write_event_log(r.log, a.out / "events.jsonl");
  const fs::path report = a.out / (format == ReportFormat::json ? "report.json" : "report.csv");
  emit_report(r.report, report, format);
  std::cout << report_text(r.report, ReportFormat::csv);
  return 0;
}

struct ReportArgs {
  fs::path log, benchmark, out;
  std::string format = "json";
  bool net = false;
  bool strip_timing = false;
  double accuracy = -1.0, reward = 0.0;
};

int cmd_report(const ReportArgs& a) {
  if (a.accuracy >= 0.0) {
    std::printf("%.1f\n", net_mean(a.accuracy, a.reward));
    return 0;
  }
  EventLog log = read_event_log(a.log);
  if (a.strip_timing) strip_timing(log);
  const BenchmarkSpec spec = parse_benchmark(a.benchmark);
  if (a.net) {
    std::printf("%-24s %9s %12s %12s\n", "game", "accuracy", "trained", "net-mean");
    for (const auto& row : net_mean_table(log.sessions, spec))
      std::printf("%-24s %9.3f %12.1f %12.1f\n", row.game.c_str(), row.accuracy, row.trained_reward, row.net);
    return 0;
  }
  const auto format = report_format_from_string(a.format);
  const RunReport report = compute_report(log, spec);
  if (a.out.empty())
    std::cout << report_text(report, format);
  else
    emit_report(report, a.out, format);
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  const fs::path home = dell_home();
  CLI::App app{"Lifelong-learning benchmark harness"};
  app.require_subcommand(1);

  PretrainArgs pa;
  pa.suite = home / "suites" / "pretrain.yaml";
  pa.dataset = home / "dataset";
  pa.out = home / "checkpoints";
  auto* pre = app.add_subcommand("pretrain", "Build the pretrain suite and dataset, train encoder and task-mapper");
  pre->add_option("--seed", pa.seed, "Global seed")->capture_default_str();
  pre->add_option("--suite", pa.suite, "Pretrain suite description to write")->capture_default_str();
  pre->add_option("--dataset", pa.dataset, "Packed dataset directory")->capture_default_str();
  pre->add_option("--out", pa.out, "Checkpoint directory")->capture_default_str();
  pre->add_option("--games", pa.games, "Pretrain games")->capture_default_str();
  pre->add_option("--episodes", pa.episodes_per_game, "Expert episodes per game")->capture_default_str();
  pre->add_option("--encoder", pa.encoder, "trained | random")->capture_default_str();
  pre->add_option("--ae-epochs", pa.ae_epochs, "Autoencoder epochs")->capture_default_str();
  pre->add_option("--mapper-episodes", pa.mapper_episodes, "Pseudo-incremental episodes")->capture_default_str();
  pre->add_flag("--with-meta", pa.with_meta, "Also train the fixed-N meta baseline");
  pre->add_option("--meta-way", pa.meta_way, "Training way of the meta baseline")->capture_default_str();

  SuiteArgs sa;
  sa.out = home / "suites" / "eval.yaml";
  auto* su = app.add_subcommand("suite", "Write an evaluation suite description");
  su->add_option("--seed", sa.seed)->capture_default_str();
  su->add_option("--games", sa.games)->capture_default_str();
  su->add_option("--out", sa.out)->capture_default_str();

  CalibrateArgs ca;
  ca.suite = home / "suites" / "eval.yaml";
  ca.out = home / "metas";
  auto* cal = app.add_subcommand("calibrate", "Compute min/max rewards of an eval suite and write meta files");
  cal->add_option("--seed", ca.seed)->capture_default_str();
  cal->add_option("--suite", ca.suite)->capture_default_str();
  cal->add_option("--out", ca.out, "Meta file directory")->capture_default_str();
  cal->add_option("--episodes", ca.min_episodes, "Episodes of the min-reward calibration")->capture_default_str();
  cal->add_option("--budget", ca.budget, "CEM iterations of the max-reward agent")->capture_default_str();
  cal->add_option("--encoder-epochs", ca.encoder_epochs, "Autoencoder epochs of the max-reward agent")
      ->capture_default_str();
  cal->add_option("--eval-episodes", ca.eval_episodes, "Scoring episodes of the max-reward agent")
      ->capture_default_str();

  BenchmarkArgs ba;
  ba.metas = home / "metas";
  ba.out = home / "benchmark.yaml";
  ba.pretrain_suite = home / "suites" / "pretrain.yaml";
  auto* ben = app.add_subcommand("benchmark", "Generate a DeLL(alpha, beta) benchmark from meta files");
  ben->add_option("--seed", ba.seed)->capture_default_str();
  ben->add_option("--alpha", ba.alpha)->capture_default_str();
  ben->add_option("--beta", ba.beta)->capture_default_str();
  ben->add_option("--metas", ba.metas)->capture_default_str();
  ben->add_option("--suite", ba.pretrain_suite, "Pretrain suite checked for genre overlap")->capture_default_str();
  ben->add_option("--out", ba.out)->capture_default_str();

  RunArgs ra;
  ra.suite = home / "suites" / "eval.yaml";
  ra.benchmark = home / "benchmark.yaml";
  ra.checkpoints = home / "checkpoints";
  ra.out = home / "run";
  auto* run_cmd = app.add_subcommand("run", "Execute a benchmark and write the event log and report");
  run_cmd->add_option("--seed", ra.seed)->capture_default_str();
  run_cmd->add_option("--suite", ra.suite, "Eval suite description")->capture_default_str();
  run_cmd->add_option("--benchmark", ra.benchmark)->capture_default_str();
  run_cmd->add_option("--checkpoints", ra.checkpoints)->capture_default_str();
  run_cmd->add_option("--out", ra.out)->capture_default_str();
  run_cmd->add_option("--episodes", ra.episodes, "Evaluation episodes per session")->capture_default_str();
  run_cmd->add_option("--probe", ra.probe, "Probe frames per session")->capture_default_str();
  run_cmd->add_option("--k-shot", ra.k_shot, "Buffer entries per task")->capture_default_str();
  run_cmd->add_option("--budget", ra.budget, "CEM iterations per learn switch")->capture_default_str();
  run_cmd->add_option("--format", ra.format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  run_cmd->add_option("--mapper", ra.mapper)->check(CLI::IsMember({"incremental", "meta"}))->capture_default_str();
  run_cmd->add_flag("--strip-timing", ra.strip_timing, "Zero wall-clock fields in log and report");

  ReportArgs rpa;
  rpa.log = home / "run" / "events.jsonl";
  rpa.benchmark = home / "benchmark.yaml";
  auto* rep = app.add_subcommand("report", "Recompute metrics from an event log");
  rep->add_option("--log", rpa.log)->capture_default_str();
  rep->add_option("--benchmark", rpa.benchmark)->capture_default_str();
  rep->add_option("--out", rpa.out, "Write here instead of stdout");
  rep->add_option("--format", rpa.format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  rep->add_flag("--net-mean", rpa.net, "Per-game mapper accuracy x trained reward");
  rep->add_option("--accuracy", rpa.accuracy, "With --reward: print one net-mean product");
  rep->add_option("--reward", rpa.reward);
  rep->add_flag("--strip-timing", rpa.strip_timing);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*pre) return cmd_pretrain(pa);
    if (*su) return cmd_suite(sa);
    if (*cal) return cmd_calibrate(ca);
    if (*ben) return cmd_benchmark(ba);
    if (*run_cmd) return cmd_run(ra);
    if (*rep) return cmd_report(rpa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("dell");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace dell
