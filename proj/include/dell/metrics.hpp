#pragma once

#include "dell/benchmark_spec.hpp"
#include "dell/event_log.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dell {

inline constexpr int kReportVersion = 1;

/// Mean relative growth over learn switches, plus the mean absolute delta.
struct Growth {
  double pct = 0.0;
  double abs = 0.0;  // MB for model growth, KB for buffer growth
};

struct MarResult {
  std::vector<std::string> games;  // first-appearance order
  std::vector<double> values;
  std::vector<bool> fallback;      // no evaluation session; post-learn re-evaluation used
};

struct RunReport {
  double ms_mb = 0.0;
  std::optional<double> mi_ms;  // absent without evaluation sessions
  int ls = 0;
  double mg_pct = 0.0;
  double mg_mb_abs = 0.0;
  double bs_kb = 0.0;
  double bg_pct = 0.0;
  double bg_kb_abs = 0.0;
  std::vector<double> mar;
  double tnmr = 0.0;
  // Extensions.
  std::vector<std::string> mar_games;
  std::vector<bool> mar_fallback;
  std::optional<double> probe_ms;
  std::optional<double> routing_accuracy;
  int duplicate_classes = 0;
  Json provenance = Json::object();

  bool operator==(const RunReport&) const = default;
};

/// Sum of the deployed files in MB (2^20 bytes): encoder, task-mapper, every policy file.
double model_size_mb(const std::filesystem::path& encoder_file, const std::filesystem::path& mapper_file,
                     const std::filesystem::path& registry_dir);

int compute_LS(const std::vector<SessionRecord>& log);
Growth compute_MG(const std::vector<SessionRecord>& log);
Growth compute_BG(const std::vector<SessionRecord>& log);
MarResult compute_MAR(const std::vector<SessionRecord>& log, const BenchmarkSpec& spec);
/// Mean of per-game clamped min/max-normalized MAR. Throws ValidationError on a degenerate range.
double compute_TNMR(const std::vector<double>& mar, const std::vector<GameMeta>& metas);
/// Mapper accuracy times trained-agent reward, rounded to one decimal.
double net_mean(double mapper_accuracy, double trained_reward);
/// Mean wall-clock per encode + act decision over evaluation sessions.
std::optional<double> mean_inference_ms(const std::vector<SessionRecord>& log);
/// Share of probes of already-learnt games that were routed to a class of the same game.
std::optional<double> routing_accuracy(const std::vector<SessionRecord>& log);
/// Learn switches on games that already owned a class.
int duplicate_classes(const std::vector<SessionRecord>& log);

/// Per unique game: routing accuracy, trained reward (mean post-learn return) and their net mean.
struct NetMeanRow {
  std::string game;
  double accuracy = 0.0;
  double trained_reward = 0.0;
  double net = 0.0;
};
std::vector<NetMeanRow> net_mean_table(const std::vector<SessionRecord>& log, const BenchmarkSpec& spec);

RunReport compute_report(const EventLog& log, const BenchmarkSpec& spec);

Json report_to_json(const RunReport& report);
RunReport report_from_json(const Json& j);
std::string report_csv(const RunReport& report);

enum class ReportFormat { json, csv };
ReportFormat report_format_from_string(const std::string& s);
std::string report_text(const RunReport& report, ReportFormat format);
void emit_report(const RunReport& report, const std::filesystem::path& path, ReportFormat format);

}  // namespace dell
