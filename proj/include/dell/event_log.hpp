#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dell {

enum class SessionMode { learn, evaluate };

std::string to_string(SessionMode mode);
SessionMode session_mode_from_string(const std::string& s);

struct ProbeResult {
  int class_id = -1;
  double confidence = 0.0;
  std::string routed_game;  // game whose learn session created `class_id`

  bool operator==(const ProbeResult&) const = default;
};

/// One slot of a run. Wall-clock fields are in milliseconds.
struct SessionRecord {
  int index = 0;
  std::string game_id;
  SessionMode mode = SessionMode::evaluate;
  std::optional<ProbeResult> probe;   // absent while no class exists
  std::vector<double> eval_returns;   // routed policy, before any switch
  std::vector<double> relearn_returns;  // fresh policy after a learn switch (not part of MAR)
  int learnt_class = -1;
  int n_before = 0;
  int n_after = 0;
  std::size_t buffer_entries = 0;
  std::uint64_t model_bytes_before = 0;
  std::uint64_t model_bytes_after = 0;
  std::uint64_t buffer_bytes_before = 0;
  std::uint64_t buffer_bytes_after = 0;
  int rl_iterations = 0;
  bool rl_plateaued = false;
  std::int64_t decisions = 0;  // encode + act steps timed for MI
  double decision_ms = 0.0;    // mean per decision
  double probe_ms = 0.0;
  double learn_ms = 0.0;

  bool operator==(const SessionRecord&) const = default;
};

using Json = nlohmann::ordered_json;

Json to_json(const SessionRecord& record);
SessionRecord session_from_json(const Json& j);

/// Line-delimited log: a header line {"type": "run", "provenance": ...} then one line per session.
struct EventLog {
  Json provenance = Json::object();
  std::vector<SessionRecord> sessions;
};

std::string event_log_text(const EventLog& log);
EventLog parse_event_log(const std::string& text);
void write_event_log(const EventLog& log, const std::filesystem::path& path);
EventLog read_event_log(const std::filesystem::path& path);

/// Zeroes every wall-clock field so logs of identical runs compare byte for byte.
void strip_timing(EventLog& log);

}  // namespace dell
