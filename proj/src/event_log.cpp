#include "dell/event_log.hpp"

#include "dell/binary_io.hpp"
#include "dell/errors.hpp"

#include <sstream>

namespace dell {

std::string to_string(SessionMode mode) { return mode == SessionMode::learn ? "learn" : "evaluate"; }

SessionMode session_mode_from_string(const std::string& s) {
  if (s == "learn") return SessionMode::learn;
  if (s == "evaluate") return SessionMode::evaluate;
  throw ParseError("unknown session mode '" + s + "'");
}

Json to_json(const SessionRecord& r) {
  Json j;
  j["type"] = "session";
  j["index"] = r.index;
  j["game"] = r.game_id;
  j["mode"] = to_string(r.mode);
  if (r.probe)
    j["probe"] = {{"class_id", r.probe->class_id}, {"confidence", r.probe->confidence}, {"routed_game", r.probe->routed_game}};
  else
    j["probe"] = nullptr;
  j["eval_returns"] = r.eval_returns;
  j["relearn_returns"] = r.relearn_returns;
  j["learnt_class"] = r.learnt_class;
  j["n_before"] = r.n_before;
  j["n_after"] = r.n_after;
  j["buffer_entries"] = r.buffer_entries;
  j["model_bytes_before"] = r.model_bytes_before;
  j["model_bytes_after"] = r.model_bytes_after;
  j["buffer_bytes_before"] = r.buffer_bytes_before;
  j["buffer_bytes_after"] = r.buffer_bytes_after;
  j["rl_iterations"] = r.rl_iterations;
  j["rl_plateaued"] = r.rl_plateaued;
  j["decisions"] = r.decisions;
  j["decision_ms"] = r.decision_ms;
  j["probe_ms"] = r.probe_ms;
  j["learn_ms"] = r.learn_ms;
  return j;
}

SessionRecord session_from_json(const Json& j) {
  try {
    SessionRecord r;
    r.index = j.at("index").get<int>();
    r.game_id = j.at("game").get<std::string>();
    r.mode = session_mode_from_string(j.at("mode").get<std::string>());
    if (!j.at("probe").is_null()) {
      const auto& p = j.at("probe");
      r.probe = ProbeResult{p.at("class_id").get<int>(), p.at("confidence").get<double>(),
                            p.at("routed_game").get<std::string>()};
    }
    r.eval_returns = j.at("eval_returns").get<std::vector<double>>();
    r.relearn_returns = j.at("relearn_returns").get<std::vector<double>>();
    r.learnt_class = j.at("learnt_class").get<int>();
    r.n_before = j.at("n_before").get<int>();
    r.n_after = j.at("n_after").get<int>();
    r.buffer_entries = j.at("buffer_entries").get<std::size_t>();
    r.model_bytes_before = j.at("model_bytes_before").get<std::uint64_t>();
    r.model_bytes_after = j.at("model_bytes_after").get<std::uint64_t>();
    r.buffer_bytes_before = j.at("buffer_bytes_before").get<std::uint64_t>();
    r.buffer_bytes_after = j.at("buffer_bytes_after").get<std::uint64_t>();
    r.rl_iterations = j.at("rl_iterations").get<int>();
    r.rl_plateaued = j.at("rl_plateaued").get<bool>();
    r.decisions = j.at("decisions").get<std::int64_t>();
    r.decision_ms = j.at("decision_ms").get<double>();
    r.probe_ms = j.at("probe_ms").get<double>();
    r.learn_ms = j.at("learn_ms").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed session record: ") + e.what());
  }
}

std::string event_log_text(const EventLog& log) {
  std::string out = Json{{"type", "run"}, {"provenance", log.provenance}}.dump() + "\n";
  for (const auto& s : log.sessions) out += to_json(s).dump() + "\n";
  return out;
}

EventLog parse_event_log(const std::string& text) {
  EventLog log;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("event log line " + std::to_string(lineno) + ": " + e.what());
    }
    const auto type = j.value("type", std::string{});
    if (type == "run") {
      if (header) throw ParseError("event log has two run headers");
      header = true;
      log.provenance = j.value("provenance", Json::object());
    } else if (type == "session") {
      log.sessions.push_back(session_from_json(j));
    } else {
      throw ParseError("event log line " + std::to_string(lineno) + " has no known type");
    }
  }
  if (!header) throw ParseError("event log has no run header");
  for (std::size_t i = 0; i < log.sessions.size(); ++i)
    if (log.sessions[i].index != static_cast<int>(i)) throw ParseError("event log sessions out of order");
  return log;
}

void write_event_log(const EventLog& log, const std::filesystem::path& path) { write_text_file(path, event_log_text(log)); }

EventLog read_event_log(const std::filesystem::path& path) { return parse_event_log(read_text_file(path)); }

void strip_timing(EventLog& log) {
  for (auto& s : log.sessions) {
    s.decision_ms = 0.0;
    s.probe_ms = 0.0;
    s.learn_ms = 0.0;
  }
}

}  // namespace dell
