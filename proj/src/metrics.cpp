#include "dell/metrics.hpp"

#include "dell/binary_io.hpp"
#include "dell/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace dell {

namespace {

constexpr double kMiB = 1024.0 * 1024.0;

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Growth growth(const std::vector<SessionRecord>& log, bool model, double unit) {
  std::vector<double> pct, abs;
  for (const auto& s : log) {
    if (s.mode != SessionMode::learn) continue;
    const double before = static_cast<double>(model ? s.model_bytes_before : s.buffer_bytes_before);
    const double after = static_cast<double>(model ? s.model_bytes_after : s.buffer_bytes_after);
    if (before <= 0.0) throw ValidationError("session " + std::to_string(s.index) + " has an empty size before learning");
    pct.push_back(100.0 * (after - before) / before);
    abs.push_back((after - before) / unit);
  }
  return {mean(pct), mean(abs)};
}

/// Class id -> game of the learn session that created it.
std::map<int, std::string> class_owners(const std::vector<SessionRecord>& log) {
  std::map<int, std::string> owner;
  for (const auto& s : log)
    if (s.mode == SessionMode::learn) owner[s.learnt_class] = s.game_id;
  return owner;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

double model_size_mb(const std::filesystem::path& encoder_file, const std::filesystem::path& mapper_file,
                     const std::filesystem::path& registry_dir) {
  namespace fs = std::filesystem;
  for (const auto& p : {encoder_file, mapper_file})
    if (!fs::is_regular_file(p)) throw IoError("missing model file " + p.string());
  auto bytes = static_cast<double>(fs::file_size(encoder_file) + fs::file_size(mapper_file));
  if (fs::is_directory(registry_dir))
    for (const auto& e : fs::directory_iterator(registry_dir))
      if (e.is_regular_file() && e.path().extension() == ".pol") bytes += static_cast<double>(e.file_size());
  return bytes / kMiB;
}

int compute_LS(const std::vector<SessionRecord>& log) {
  return static_cast<int>(std::count_if(log.begin(), log.end(), [](const auto& s) { return s.mode == SessionMode::learn; }));
}

Growth compute_MG(const std::vector<SessionRecord>& log) { return growth(log, true, kMiB); }
Growth compute_BG(const std::vector<SessionRecord>& log) { return growth(log, false, 1024.0); }

MarResult compute_MAR(const std::vector<SessionRecord>& log, const BenchmarkSpec& spec) {
  MarResult r;
  r.games = spec.unique_games();
  for (const auto& g : r.games) {
    std::vector<double> evals, relearn;
    for (const auto& s : log) {
      if (s.game_id != g) continue;
      if (s.mode == SessionMode::evaluate)
        evals.push_back(mean(s.eval_returns));
      else if (!s.relearn_returns.empty())
        relearn.push_back(mean(s.relearn_returns));
    }
    r.fallback.push_back(evals.empty());
    r.values.push_back(evals.empty() ? mean(relearn) : mean(evals));
  }
  return r;
}

double compute_TNMR(const std::vector<double>& mar, const std::vector<GameMeta>& metas) {
  if (mar.size() != metas.size()) throw ValidationError("MAR and meta counts differ");
  if (mar.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < mar.size(); ++i) {
    const double range = metas[i].max_reward - metas[i].min_reward;
    if (range == 0.0) throw ValidationError("degenerate reward range for " + metas[i].name);
    total += std::clamp((mar[i] - metas[i].min_reward) / range, 0.0, 1.0);
  }
  return total / static_cast<double>(mar.size());
}

double net_mean(double mapper_accuracy, double trained_reward) {
  if (mapper_accuracy < 0.0 || mapper_accuracy > 1.0) throw ValidationError("accuracy must lie in [0, 1]");
  return std::round(mapper_accuracy * trained_reward * 10.0) / 10.0;
}

std::optional<double> mean_inference_ms(const std::vector<SessionRecord>& log) {
  double total = 0.0;
  std::int64_t n = 0;
  for (const auto& s : log) {
    if (s.mode != SessionMode::evaluate) continue;
    total += s.decision_ms * static_cast<double>(s.decisions);
    n += s.decisions;
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

std::optional<double> routing_accuracy(const std::vector<SessionRecord>& log) {
  std::map<int, std::string> owner;
  int hits = 0, total = 0;
  for (const auto& s : log) {
    if (s.probe && std::any_of(owner.begin(), owner.end(), [&](const auto& kv) { return kv.second == s.game_id; })) {
      ++total;
      hits += owner.count(s.probe->class_id) && owner.at(s.probe->class_id) == s.game_id;
    }
    if (s.mode == SessionMode::learn) owner[s.learnt_class] = s.game_id;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(hits) / total;
}

int duplicate_classes(const std::vector<SessionRecord>& log) {
  std::vector<std::string> seen;
  int dup = 0;
  for (const auto& s : log) {
    if (s.mode != SessionMode::learn) continue;
    if (std::find(seen.begin(), seen.end(), s.game_id) != seen.end())
      ++dup;
    else
      seen.push_back(s.game_id);
  }
  return dup;
}

std::vector<NetMeanRow> net_mean_table(const std::vector<SessionRecord>& log, const BenchmarkSpec& spec) {
  const auto owner = class_owners(log);
  std::vector<NetMeanRow> rows;
  for (const auto& g : spec.unique_games()) {
    NetMeanRow row;
    row.game = g;
    std::vector<double> trained;
    int hits = 0, probes = 0;
    for (const auto& s : log) {
      if (s.game_id != g) continue;
      if (s.mode == SessionMode::learn) trained.push_back(mean(s.relearn_returns));
      if (s.probe) {
        ++probes;
        const auto it = owner.find(s.probe->class_id);
        hits += it != owner.end() && it->second == g;
      }
    }
    // A game that was never probed is always routed by construction (learn-only).
    row.accuracy = probes ? static_cast<double>(hits) / probes : 1.0;
    row.trained_reward = mean(trained);
    row.net = net_mean(row.accuracy, row.trained_reward);
    rows.push_back(row);
  }
  return rows;
}

RunReport compute_report(const EventLog& log, const BenchmarkSpec& spec) {
  const auto& s = log.sessions;
  RunReport r;
  if (!s.empty()) {
    r.ms_mb = static_cast<double>(s.back().model_bytes_after) / kMiB;
    r.bs_kb = static_cast<double>(s.back().buffer_bytes_after) / 1024.0;
  }
  r.mi_ms = mean_inference_ms(s);
  r.ls = compute_LS(s);
  const auto mg = compute_MG(s);
  const auto bg = compute_BG(s);
  r.mg_pct = mg.pct;
  r.mg_mb_abs = mg.abs;
  r.bg_pct = bg.pct;
  r.bg_kb_abs = bg.abs;
  auto mar = compute_MAR(s, spec);
  std::vector<GameMeta> metas;
  for (const auto& g : mar.games) metas.push_back(spec.games.at(g));
  r.tnmr = compute_TNMR(mar.values, metas);
  r.mar = std::move(mar.values);
  r.mar_games = std::move(mar.games);
  r.mar_fallback = std::move(mar.fallback);
  if (!s.empty()) {
    double probe = 0.0;
    int n = 0;
    for (const auto& x : s)
      if (x.probe) probe += x.probe_ms, ++n;
    if (n) r.probe_ms = probe / n;
  }
  r.routing_accuracy = routing_accuracy(s);
  r.duplicate_classes = duplicate_classes(s);
  r.provenance = log.provenance;
  return r;
}

Json report_to_json(const RunReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json j;
  j["version"] = kReportVersion;
  j["ms_mb"] = r.ms_mb;
  j["mi_ms"] = opt(r.mi_ms);
  j["ls"] = r.ls;
  j["mg_pct"] = r.mg_pct;
  j["mg_mb_abs"] = r.mg_mb_abs;
  j["bs_kb"] = r.bs_kb;
  j["bg_pct"] = r.bg_pct;
  j["bg_kb_abs"] = r.bg_kb_abs;
  j["mar"] = r.mar;
  j["tnmr"] = r.tnmr;
  j["mar_games"] = r.mar_games;
  j["mar_fallback"] = r.mar_fallback;
  j["probe_ms"] = opt(r.probe_ms);
  j["routing_accuracy"] = opt(r.routing_accuracy);
  j["duplicate_classes"] = r.duplicate_classes;
  j["provenance"] = r.provenance;
  return j;
}

RunReport report_from_json(const Json& j) {
  auto opt = [&](const char* key) -> std::optional<double> {
    return j.at(key).is_null() ? std::nullopt : std::optional<double>(j.at(key).get<double>());
  };
  try {
    if (j.at("version").get<int>() != kReportVersion) throw ParseError("report version mismatch");
    RunReport r;
    r.ms_mb = j.at("ms_mb").get<double>();
    r.mi_ms = opt("mi_ms");
    r.ls = j.at("ls").get<int>();
    r.mg_pct = j.at("mg_pct").get<double>();
    r.mg_mb_abs = j.at("mg_mb_abs").get<double>();
    r.bs_kb = j.at("bs_kb").get<double>();
    r.bg_pct = j.at("bg_pct").get<double>();
    r.bg_kb_abs = j.at("bg_kb_abs").get<double>();
    r.mar = j.at("mar").get<std::vector<double>>();
    r.tnmr = j.at("tnmr").get<double>();
    r.mar_games = j.at("mar_games").get<std::vector<std::string>>();
    r.mar_fallback = j.at("mar_fallback").get<std::vector<bool>>();
    r.probe_ms = opt("probe_ms");
    r.routing_accuracy = opt("routing_accuracy");
    r.duplicate_classes = j.at("duplicate_classes").get<int>();
    r.provenance = j.at("provenance");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
}

std::string report_csv(const RunReport& r) {
  std::string mar;
  for (std::size_t i = 0; i < r.mar.size(); ++i) mar += (i ? ";" : "") + fmt(r.mar[i]);
  std::string out = "MS,MG,BS,BG,TNMR,LS,MI,MAR\n";
  out += fmt(r.ms_mb) + "," + fmt(r.mg_pct) + "," + fmt(r.bs_kb) + "," + fmt(r.bg_pct) + "," + fmt(r.tnmr) + "," +
         std::to_string(r.ls) + "," + (r.mi_ms ? fmt(*r.mi_ms) : std::string{}) + ",\"" + mar + "\"\n";
  return out;
}

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw ValidationError("unknown report format '" + s + "'");
}

std::string report_text(const RunReport& report, ReportFormat format) {
  return format == ReportFormat::json ? report_to_json(report).dump(2) + "\n" : report_csv(report);
}

void emit_report(const RunReport& report, const std::filesystem::path& path, ReportFormat format) {
  write_text_file(path, report_text(report, format));
}

}  // namespace dell
