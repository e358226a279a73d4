#include "common.hpp"
#include "hand_log.hpp"

#include "dell/errors.hpp"
#include "dell/metrics.hpp"
#include "dell/policy.hpp"

#include <doctest.h>

#include <fstream>

using namespace dell;

namespace {

SessionRecord learn_record(int index, std::uint64_t before, std::uint64_t after) {
  SessionRecord s;
  s.index = index;
  s.game_id = "g";
  s.mode = SessionMode::learn;
  s.model_bytes_before = before;
  s.model_bytes_after = after;
  s.buffer_bytes_before = 20;
  s.buffer_bytes_after = 30;
  return s;
}

SessionRecord eval_record(const std::string& game, std::vector<double> returns) {
  SessionRecord s;
  s.game_id = game;
  s.mode = SessionMode::evaluate;
  s.eval_returns = std::move(returns);
  return s;
}

BenchmarkSpec two_game_spec() {
  BenchmarkSpec spec;
  spec.alpha = 2;
  spec.beta = 3;
  spec.sequence = {"x", "y", "x"};
  spec.games["x"] = {"x", "maze", "", 0.0, 1000.0};
  spec.games["y"] = {"y", "maze", "", 0.0, 1000.0};
  return spec;
}

}  // namespace

TEST_CASE("model growth is the mean relative increase over learn switches") {
  const std::uint64_t mb = 1 << 20;
  CHECK(compute_MG({learn_record(0, 240 * mb, 242 * mb)}).pct == doctest::Approx(0.8333).epsilon(1e-4));
  const auto g = compute_MG({learn_record(0, 240 * mb, 242 * mb), learn_record(1, 242 * mb, 243 * mb)});
  CHECK(g.pct == doctest::Approx(0.6233).epsilon(1e-4));
  CHECK(g.abs == doctest::Approx(1.5));
  CHECK(compute_MG({eval_record("g", {1.0})}).pct == 0.0);
  CHECK(compute_BG({}).pct == 0.0);
  CHECK(compute_LS({learn_record(0, 1, 2), eval_record("g", {}), learn_record(2, 2, 3)}) == 2);
  CHECK_THROWS_AS(compute_MG({learn_record(0, 0, 2)}), ValidationError);
}

TEST_CASE("MAR averages evaluation sessions and skips learn sessions") {
  const auto spec = two_game_spec();
  std::vector<SessionRecord> log{eval_record("x", {700.0}), eval_record("y", {600.0}), eval_record("x", {800.0})};
  auto m = compute_MAR(log, spec);
  CHECK(m.values.size() == 2);
  CHECK(m.values[0] == 750.0);
  CHECK(m.values[1] == 600.0);

  auto learn = learn_record(0, 1, 2);
  learn.game_id = "x";
  learn.eval_returns = {10.0};
  learn.relearn_returns = {900.0};
  log = {learn, eval_record("y", {100.0}), eval_record("x", {750.0})};
  m = compute_MAR(log, spec);
  CHECK(m.values[0] == 750.0);
  CHECK_FALSE(m.fallback[0]);

  log = {learn, eval_record("y", {100.0})};
  m = compute_MAR(log, spec);
  CHECK(m.values[0] == 900.0);
  CHECK(m.fallback[0]);
}

TEST_CASE("TNMR normalizes and clamps per game") {
  const GameMeta air{"AirRaid", "shoot-up", "", 605.0, 750.0};
  CHECK(compute_TNMR({677.5}, {air}) == doctest::Approx(0.5));
  CHECK(compute_TNMR({605.0}, {air}) == 0.0);
  CHECK(compute_TNMR({750.0}, {air}) == 1.0);
  CHECK(compute_TNMR({10.0}, {air}) == 0.0);
  CHECK(compute_TNMR({1e6}, {air}) == 1.0);
  // Invariant under a common positive affine map of rewards and bounds.
  const GameMeta scaled{"AirRaid", "shoot-up", "", 3.0 * 605.0 + 7.0, 3.0 * 750.0 + 7.0};
  CHECK(compute_TNMR({3.0 * 650.0 + 7.0}, {scaled}) == doctest::Approx(compute_TNMR({650.0}, {air})));
  CHECK_THROWS_AS(compute_TNMR({1.0, 2.0}, {air}), ValidationError);
  CHECK_THROWS_AS(compute_TNMR({1.0}, {GameMeta{"z", "maze", "", 5.0, 5.0}}), ValidationError);
}

TEST_CASE("net mean reproduces the published rows") {
  struct Row {
    double accuracy, reward, net;
  };
  const Row rows[] = {{1.0, 750.0, 750.0},   {0.76, 300.3, 228.2},  {0.74, 440.0, 325.6},   {0.76, 2639.0, 2005.64},
                      {0.77, 276.0, 212.5},  {0.78, 4052.0, 3160.56}, {0.79, 1106.5, 874.13}, {0.76, 746.0, 566.96},
                      {0.78, 2886.0, 2251.08}, {0.77, 1094.0, 842.38}, {0.74, 427.0, 315.98}};
  for (const auto& r : rows) CHECK(std::abs(net_mean(r.accuracy, r.reward) - r.net) <= 0.05);
  CHECK(net_mean(0.76, 300.3) == doctest::Approx(228.2));
  CHECK_THROWS_AS(net_mean(1.1, 10.0), ValidationError);
  CHECK_THROWS_AS(net_mean(-0.1, 10.0), ValidationError);
}

TEST_CASE("mean inference time weights sessions by decisions") {
  auto a = eval_record("x", {}), b = eval_record("x", {});
  a.decisions = 1;
  a.decision_ms = 1.0;
  b.decisions = 1;
  b.decision_ms = 3.0;
  CHECK(*mean_inference_ms({a, b}) == 2.0);
  CHECK_FALSE(mean_inference_ms({learn_record(0, 1, 2)}).has_value());
}

TEST_CASE("hand-authored log") {
  const test::HandLog h;
  const auto r = compute_report(h.log, h.spec);
  CHECK(r.ls == 3);
  CHECK(r.mg_pct == doctest::Approx(test::HandLog::kMgPct).epsilon(1e-12));
  CHECK(r.mg_mb_abs == doctest::Approx(test::HandLog::kMgMb).epsilon(1e-12));
  CHECK(r.bg_pct == doctest::Approx(test::HandLog::kBgPct).epsilon(1e-12));
  CHECK(r.bg_kb_abs == doctest::Approx(test::HandLog::kBgKb).epsilon(1e-12));
  CHECK(r.mar == std::vector<double>{265.0, 35.0, 17.0});
  CHECK(r.mar_fallback == std::vector<bool>{false, false, true});
  CHECK(r.tnmr == doctest::Approx(test::HandLog::kTnmr).epsilon(1e-12));
  CHECK(*r.mi_ms == test::HandLog::kMi);
  CHECK(*r.routing_accuracy == 1.0);
  CHECK(r.duplicate_classes == 0);
  CHECK(r.ms_mb == doctest::Approx((1000000.0 + 3 * 18744.0) / 1048576.0));
  CHECK(r.bs_kb == doctest::Approx(30770.0 / 1024.0));

  const auto table = net_mean_table(h.log.sessions, h.spec);
  REQUIRE(table.size() == 3);
  CHECK(table[0].accuracy == 1.0);
  CHECK(table[0].trained_reward == 260.0);
  CHECK(table[1].accuracy == 0.5);  // first B probe landed on A's class
  CHECK(table[1].net == 20.0);
  CHECK(table[2].accuracy == 0.0);
}

TEST_CASE("report serialization") {
  const test::HandLog h;
  const auto r = compute_report(h.log, h.spec);
  CHECK(report_from_json(report_to_json(r)) == r);
  CHECK(report_from_json(Json::parse(report_text(r, ReportFormat::json))) == r);
  const auto csv = report_csv(r);
  CHECK(csv.rfind("MS,MG,BS,BG,TNMR,LS,MI,MAR\n", 0) == 0);
  CHECK(csv.find("\"265;35;17\"") != std::string::npos);
  CHECK_THROWS_AS(report_format_from_string("xml"), ValidationError);
  CHECK_THROWS_AS(report_from_json(Json{{"version", 1}}), ParseError);

  const auto dir = test::scratch_dir("report");
  emit_report(r, dir / "a.json", ReportFormat::json);
  emit_report(r, dir / "b.json", ReportFormat::json);
  std::ifstream a(dir / "a.json"), b(dir / "b.json");
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
}

TEST_CASE("model size counts encoder, mapper and policy files") {
  const auto dir = test::scratch_dir("model-size");
  std::ofstream(dir / "enc.bin") << std::string(1000, 'e');
  std::ofstream(dir / "map.bin") << std::string(500, 'm');
  CHECK(model_size_mb(dir / "enc.bin", dir / "map.bin", dir / "reg") == doctest::Approx(1500.0 / 1048576.0));
  PolicyRegistry reg(dir / "reg");
  reg.append(zero_policy());
  CHECK(model_size_mb(dir / "enc.bin", dir / "map.bin", dir / "reg" / "policies") ==
        doctest::Approx((1500.0 + 18488.0) / 1048576.0));
  CHECK_THROWS_AS(model_size_mb(dir / "none.bin", dir / "map.bin", dir / "reg"), IoError);
}
