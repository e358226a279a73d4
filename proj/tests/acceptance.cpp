// Acceptance checks. Each criterion prints one PASS/FAIL line; the exit code is non-zero when
// any selected criterion fails.

#include "hand_log.hpp"

#include "dell/calibration.hpp"
#include "dell/cli.hpp"
#include "dell/encoder.hpp"
#include "dell/metrics.hpp"
#include "dell/orchestrator.hpp"
#include "dell/policy.hpp"
#include "dell/random.hpp"
#include "dell/support_buffer.hpp"
#include "dell/task_mapper.hpp"
#include "dell/task_suite.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

using namespace dell;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::string> genres() {
  std::vector<std::string> g;
  for (auto s : genre_registry()) g.emplace_back(s);
  return g;
}

bool rel_close(double a, double b, double tol = 1e-9) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300});
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

EncoderModel trained_encoder(const PretrainDataset& data, std::uint64_t seed) {
  AutoencoderOptions o;
  o.epochs = 20;
  o.seed = seed;
  return train_autoencoder(data.all_frames(), o);
}

// 1. Score normalization.
Outcome normalize_suite(const fs::path&) {
  struct Case {
    double now, prev;
    int expect;
  };
  const Case cases[] = {{5, 3, 1}, {3, 3, 0}, {2, 3, 0}, {0, 0, 0}, {1e-9, 0, 1}, {-1, -2, 1}, {-2, -1, 0}};
  int ok = 0, total = 0;
  for (const auto& c : cases) ok += normalize_reward(c.now, c.prev) == c.expect, ++total;
  Rng rng(1);
  std::normal_distribution<double> d(0.0, 100.0);
  for (int i = 0; i < 10000; ++i, ++total) {
    const double a = d(rng), b = d(rng);
    const auto r = normalize_reward(a, b);
    ok += (r == 0 || r == 1) && (r == 1) == (a > b);
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " cases"};
}

// 2. Net-mean rows.
Outcome net_mean_rows(const fs::path&) {
  struct Row {
    const char* game;
    double accuracy, reward, net;
  };
  const Row rows[] = {{"AirRaid", 1.0, 750.0, 750.0},         {"Assault", 0.76, 300.3, 228.2},
                      {"BeamRider", 0.74, 440.0, 325.6},      {"Carnival", 0.76, 2639.0, 2005.64},
                      {"DemonAttack", 0.77, 276.0, 212.5},    {"NameThisGame", 0.78, 4052.0, 3160.56},
                      {"Pooyan", 0.79, 1106.5, 874.13},       {"Gopher", 0.76, 746.0, 566.96},
                      {"Riverraid", 0.78, 2886.0, 2251.08},   {"Solaris", 0.77, 1094.0, 842.38},
                      {"SpaceInvaders", 0.74, 427.0, 315.98}};
  int ok = 0;
  double worst = 0.0;
  for (const auto& r : rows) {
    const double err = std::abs(net_mean(r.accuracy, r.reward) - r.net);
    worst = std::max(worst, err);
    ok += err <= 0.05;
  }
  std::ostringstream s;
  s << ok << "/11 rows within 0.05, worst " << worst;
  return {ok == 11, s.str()};
}

/// Random-encoder system with cheap bounds (random head below, oracle above).
struct SmallSystem {
  Suite eval;
  PretrainedSystem system;
  std::vector<GameMeta> metas;
  SmallSystem() {
    const auto pre = make_suite(SuiteKind::pretrain, 24, genres(), 1);
    eval = make_suite(SuiteKind::eval, 12, genres(), 2);
    system.encoder = random_encoder(5);
    MapperTrainOptions o;
    o.seed = 3;
    system.mapper = pretrain_taskmapper(build_pretrain_dataset(pre, 1, 3), system.encoder, o);
    const auto min_encoder = random_encoder(77);
    for (const auto& g : eval.games)
      metas.push_back({g.id, g.genre, "synthetic " + g.genre + " game", calibrate_min_reward(g, min_encoder, 50, 4),
                       analytic_optimum_return(g, 50, 4)});
  }
};

// 3. Buffer invariant over a scripted run.
Outcome buffer_invariant(const fs::path& work) {
  const SmallSystem s;
  const auto spec = generate_benchmark(3, 7, s.metas, 31);
  RunConfig c;
  c.seed = 7;
  c.work_dir = work / "run";
  const auto r = run(spec, s.eval, s.system, c);
  const std::size_t entry = 2 + 4 * kLatentDim;
  const std::size_t header = buffer_file_size(empty_buffer(c.k_shot));
  int bad = 0, learns = 0;
  for (const auto& x : r.log.sessions) {
    bad += x.buffer_entries != static_cast<std::size_t>(x.n_after * c.k_shot);
    bad += x.buffer_bytes_after != header + x.buffer_entries * entry;
    if (x.mode == SessionMode::learn) {
      ++learns;
      bad += x.buffer_bytes_after - x.buffer_bytes_before != c.k_shot * entry;
    } else {
      bad += x.buffer_bytes_after != x.buffer_bytes_before;
    }
  }
  const auto disk = load_buffer(c.work_dir / "buffer.bin");
  bad += disk.entry_count() != r.log.sessions.back().buffer_entries;
  bad += disk.class_count() != r.log.sessions.back().n_after;
  std::ostringstream d;
  d << r.log.sessions.size() << " sessions, " << learns << " learn switches, final N=" << disk.class_count()
    << ", " << bad << " violations";
  return {bad == 0 && learns >= 3, d.str()};
}

// 4. Metrics against a hand-authored log.
Outcome metrics_oracle(const fs::path&) {
  const test::HandLog h;
  const auto r = compute_report(h.log, h.spec);
  const std::vector<double> mar{265.0, 35.0, 17.0};
  bool ok = r.ls == 3 && rel_close(r.mg_pct, test::HandLog::kMgPct) && rel_close(r.bg_pct, test::HandLog::kBgPct) &&
            rel_close(r.tnmr, test::HandLog::kTnmr) && r.mar.size() == 3;
  for (std::size_t i = 0; ok && i < 3; ++i) ok = rel_close(r.mar[i], mar[i]);
  std::ostringstream d;
  d.precision(12);
  d << "LS " << r.ls << " MG " << r.mg_pct << " BG " << r.bg_pct << " TNMR " << r.tnmr;
  return {ok, d.str()};
}

// 5. Mapper quality with the trained encoder.
Outcome mapper_quality(const fs::path&) {
  const auto pre = make_suite(SuiteKind::pretrain, 24, genres(), 1);
  const auto ev = make_suite(SuiteKind::eval, 24, genres(), 2);
  const auto data = build_pretrain_dataset(pre, 1, 3);
  const auto enc = trained_encoder(data, 5);
  const auto train = embed_dataset(data, enc);
  const auto held = embed_suite(ev, enc, 64, 9);
  MapperTrainOptions o;
  o.seed = 3;
  const auto mapper = pretrain_taskmapper(train, o);
  double inc[3], meta[3];
  const int ways[3] = {5, 10, 20};
  for (int i = 0; i < 3; ++i) {
    inc[i] = evaluate_incremental(mapper, held, ways[i], 5, 5, 200, 11);
    meta[i] = evaluate_meta(meta_baseline(train, ways[i], 5, o), held, ways[i], 5, 5, 200, 11);
  }
  const double spread = *std::max_element(inc, inc + 3) - *std::min_element(inc, inc + 3);
  std::ostringstream d;
  d.precision(4);
  d << "incremental " << inc[0] << "/" << inc[1] << "/" << inc[2] << " (spread " << spread << "), meta " << meta[0]
    << "/" << meta[1] << "/" << meta[2] << " (drop " << meta[0] - meta[2] << ")";
  return {inc[0] >= 0.90 && spread <= 0.15 && meta[0] - meta[2] >= 0.1, d.str()};
}

// 6. End-to-end orderings.
Outcome end_to_end(const fs::path& work) {
  const auto pre = make_suite(SuiteKind::pretrain, 24, genres(), 1);
  const auto eval = make_suite(SuiteKind::eval, 12, genres(), 2);
  const auto data = build_pretrain_dataset(pre, 1, 3);
  CalibrationOptions co;
  co.seed = 6;
  std::vector<GameMeta> metas;
  for (const auto& c : calibrate_suite(eval, co))
    if (c.valid) metas.push_back(c.meta);
  const auto spec = generate_benchmark(5, 10, metas, 6);

  MapperTrainOptions o;
  o.seed = 3;
  auto system_for = [&](EncoderModel enc) {
    PretrainedSystem s;
    s.encoder = std::move(enc);
    const auto emb = embed_dataset(data, s.encoder);
    s.mapper = pretrain_taskmapper(emb, o);
    s.meta = meta_baseline(emb, 5, 5, o);
    return s;
  };
  const auto random_sys = system_for(random_encoder(5));
  const auto trained_sys = system_for(trained_encoder(data, 5));

  auto go = [&](const PretrainedSystem& s, MapperVariant v, const char* name) {
    RunConfig c;
    c.seed = 8;
    c.variant = v;
    c.work_dir = work / name;
    return run(spec, eval, s, c).report;
  };
  const auto r_random = go(random_sys, MapperVariant::incremental, "random");
  const auto r_trained = go(trained_sys, MapperVariant::incremental, "trained");
  const auto r_meta = go(trained_sys, MapperVariant::meta, "meta");
  std::ostringstream d;
  d.precision(4);
  d << "TNMR trained " << r_trained.tnmr << " vs random " << r_random.tnmr << "; MG incremental " << r_trained.mg_pct
    << " vs meta " << r_meta.mg_pct << "; LS " << r_random.ls << "/" << r_trained.ls << "/" << r_meta.ls;
  return {r_trained.tnmr > r_random.tnmr && r_trained.mg_pct < r_meta.mg_pct, d.str()};
}

// 7. Policy quantization.
Outcome quantization(const fs::path& work) {
  const auto eval = make_suite(SuiteKind::eval, 6, genres(), 2);
  const auto enc = random_encoder(5);
  CemOptions o;
  o.seed = 2;
  o.budget = 60;
  const auto& g = eval.games[0];
  const std::vector<LinearPolicy> policies{rl_procedure(g, enc, o).policy, random_policy(1), random_policy(2, 1.0f)};

  // Embeddings the trained policy actually sees, plus Gaussian probes.
  EmbeddingBatch probes(kLatentDim, 10000);
  Rng rng(3);
  std::normal_distribution<float> n;
  for (Eigen::Index filled = 0, ep = 0; filled < 5000; ++ep) {
    const auto frames = sample_episode(g, episode_seed(g, 4, static_cast<int>(ep))).frames;
    const auto take = std::min<Eigen::Index>(frames.cols(), 5000 - filled);
    probes.middleCols(filled, take) = encode(enc, FrameBatch(frames.leftCols(take)));
    filled += take;
  }
  probes.rightCols(5000) = EmbeddingBatch::NullaryExpr(kLatentDim, 5000, [&] { return n(rng); });

  bool ok = true;
  std::ostringstream d;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const auto rec = quantize_store(policies[i], static_cast<int>(i), work / ("p" + std::to_string(i) + ".pol"));
    const auto a = act(policies[i], probes), b = act(load_policy(rec.path), probes);
    int agree = 0;
    for (std::size_t j = 0; j < a.size(); ++j) agree += a[j] == b[j];
    const auto bytes = fs::file_size(rec.path);
    ok = ok && agree >= 9900 && static_cast<double>(bytes) < kPolicyByteLimit;
    d << (i ? "; " : "") << "policy " << i << " " << agree << "/10000, " << bytes << " B";
  }
  return {ok, d.str()};
}

// 8. Determinism of the run command.
Outcome determinism(const fs::path& work) {
  auto p = [&](const char* rel) { return (work / rel).string(); };
  auto cli = [&](std::vector<std::string> args) {
    std::cout.flush();
    return cli_main(args);
  };
  int rc = cli({"pretrain", "--seed", "3", "--encoder", "random", "--suite", p("pre.yaml"), "--dataset", p("data"),
                "--out", p("ckpt")});
  rc |= cli({"suite", "--seed", "3", "--games", "6", "--out", p("eval.yaml")});
  const int cal = cli({"calibrate", "--seed", "3", "--suite", p("eval.yaml"), "--out", p("metas")});
  if (cal != 0 && cal != 2) rc |= cal;
  rc |= cli({"benchmark", "--seed", "3", "--alpha", "5", "--beta", "10", "--metas", p("metas"), "--suite",
             p("pre.yaml"), "--out", p("bench.yaml")});
  if (rc != 0) return {false, "pipeline failed before the runs"};
  for (const char* out : {"run-a", "run-b"})
    if (cli({"run", "--seed", "3", "--suite", p("eval.yaml"), "--benchmark", p("bench.yaml"), "--checkpoints",
             p("ckpt"), "--out", p(out), "--strip-timing"}) != 0)
      return {false, std::string("run failed: ") + out};
  const bool log_same = slurp(work / "run-a/events.jsonl") == slurp(work / "run-b/events.jsonl");
  const bool report_same = slurp(work / "run-a/report.json") == slurp(work / "run-b/report.json");
  return {log_same && report_same, std::string("event log ") + (log_same ? "identical" : "differs") + ", report " +
                                       (report_same ? "identical" : "differs")};
}

// 9. CEM against the analytic optimum.
Outcome cem_sanity(const fs::path&) {
  const auto eval = make_suite(SuiteKind::eval, 12, genres(), 2);
  const auto enc = random_encoder(5);
  double worst = 1e9;
  std::string worst_game;
  int ok = 0;
  for (const auto& g : eval.games) {
    CemOptions o;
    o.seed = derive_seed(1, g.id);
    const auto r = rl_procedure(g, enc, o);
    const double ratio = mean_return(g, r.policy, enc, 100, 99) / analytic_optimum_return(g, 100, 99);
    ok += ratio >= 0.9;
    if (ratio < worst) worst = ratio, worst_game = g.id;
  }
  std::ostringstream d;
  d.precision(4);
  d << ok << "/" << eval.games.size() << " games at >= 0.9 of optimum, worst " << worst << " (" << worst_game << ")";
  return {ok == static_cast<int>(eval.games.size()), d.str()};
}

using Check = Outcome (*)(const fs::path&);

const std::pair<const char*, Check> kCriteria[] = {
    {"score normalization", normalize_suite},   {"net-mean rows", net_mean_rows},
    {"buffer invariant", buffer_invariant},     {"metrics oracle", metrics_oracle},
    {"task-mapper quality", mapper_quality},    {"end-to-end ordering", end_to_end},
    {"policy quantization", quantization},      {"run determinism", determinism},
    {"RL procedure sanity", cem_sanity}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> selected;
  fs::path work = fs::temp_directory_path() / "dell-acceptance";
  app.add_option("--criterion", selected, "Criterion numbers 1-9 (default: all)")->check(CLI::Range(1, 9));
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty())
    for (int i = 1; i <= 9; ++i) selected.push_back(i);

  int failures = 0;
  for (int c : selected) {
    const auto& [name, check] = kCriteria[c - 1];
    const auto dir = work / ("criterion_" + std::to_string(c));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check(dir);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d %-22s %s  %s  [%.1f s]\n", c, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), s);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
