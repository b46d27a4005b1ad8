#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sequer/event_log.hpp"

namespace sequer {

struct Session {
  std::string session_id;  // event_id of the first event
  std::string user_id;
  std::vector<Event> events;

  [[nodiscard]] Timestamp start() const { return events.front().event_time; }
  [[nodiscard]] Timestamp end() const { return events.back().event_time; }

  friend bool operator==(const Session&, const Session&) = default;
};

struct PipelineConfig {
  Millis max_gap{std::chrono::seconds{360}};
  Millis bot_window{std::chrono::seconds{60}};
  std::size_t bot_window_events = 120;
};

using UserStreams = std::map<std::string, std::vector<Event>>;

inline bool chronological(const Event& a, const Event& b) {
  if (a.event_time != b.event_time) return a.event_time < b.event_time;
  return a.event_id < b.event_id;
}

inline UserStreams group_and_sort(std::vector<Event> events) {
  UserStreams users;
  for (auto& e : events) users[e.user_id].push_back(std::move(e));
  for (auto& [_, stream] : users) std::stable_sort(stream.begin(), stream.end(), chronological);
  return users;
}

/// Keeps the first event of every run of consecutive identical URLs.
inline std::vector<Event> collapse_refreshes(const std::vector<Event>& stream) {
  std::vector<Event> out;
  out.reserve(stream.size());
  for (const auto& e : stream) {
    if (!out.empty() && out.back().url == e.url) continue;
    out.push_back(e);
  }
  return out;
}

/// True when some window of length `bot_window` (half-open, starting at an
/// event) holds at least `bot_window_events` events.
inline bool looks_like_bot(const std::vector<Event>& stream, const PipelineConfig& cfg) {
  const std::size_t n = cfg.bot_window_events;
  if (n == 0) return !stream.empty();
  if (stream.size() < n) return false;
  for (std::size_t i = 0; i + n - 1 < stream.size(); ++i) {
    if (stream[i + n - 1].event_time - stream[i].event_time < cfg.bot_window) return true;
  }
  return false;
}

/// Refresh collapse followed by the bot rule; nullopt when the user is dropped.
inline std::optional<std::vector<Event>> filter_noise(const std::vector<Event>& stream,
                                                      const PipelineConfig& cfg = {}) {
  auto collapsed = collapse_refreshes(stream);
  if (looks_like_bot(collapsed, cfg)) return std::nullopt;
  return collapsed;
}

inline UserStreams filter_noise(const UserStreams& users, const PipelineConfig& cfg = {}) {
  UserStreams out;
  for (const auto& [user, stream] : users) {
    if (auto kept = filter_noise(stream, cfg)) out.emplace(user, std::move(*kept));
  }
  return out;
}

/// Splits exactly where the gap between consecutive events exceeds max_gap.
inline std::vector<Session> sessionize(const std::vector<Event>& stream, const PipelineConfig& cfg = {}) {
  std::vector<Session> sessions;
  for (const auto& e : stream) {
    if (sessions.empty() || e.event_time - sessions.back().events.back().event_time > cfg.max_gap) {
      sessions.push_back(Session{e.event_id, e.user_id, {}});
    }
    sessions.back().events.push_back(e);
  }
  return sessions;
}

inline bool is_linear(const Session& s) {
  for (std::size_t i = 1; i < s.events.size(); ++i) {
    const auto& ref = s.events[i].referrer;
    if (!ref || *ref != s.events[i - 1].url) return false;
  }
  return true;
}

inline std::vector<Session> filter_linear(const std::vector<Session>& sessions) {
  std::vector<Session> out;
  std::copy_if(sessions.begin(), sessions.end(), std::back_inserter(out), is_linear);
  return out;
}

/// Result of the full cleaning pipeline, keeping intermediate stages for
/// inspection.
struct PipelineResult {
  std::vector<std::string> dropped_users;
  std::vector<Session> all_sessions;     // after sessionize
  std::vector<Session> linear_sessions;  // after the linear filter
};

/// group/sort, noise filter, sessionize, linear filter, in that order.
inline PipelineResult run_session_pipeline(std::vector<Event> events, const PipelineConfig& cfg = {}) {
  PipelineResult r;
  for (const auto& [user, stream] : group_and_sort(std::move(events))) {
    auto kept = filter_noise(stream, cfg);
    if (!kept) {
      r.dropped_users.push_back(user);
      continue;
    }
    for (auto& s : sessionize(*kept, cfg)) r.all_sessions.push_back(std::move(s));
  }
  r.linear_sessions = filter_linear(r.all_sessions);
  return r;
}

inline nlohmann::json session_to_json(const Session& s) {
  nlohmann::json j;
  j["session_id"] = s.session_id;
  j["user_id"] = s.user_id;
  j["start"] = format_timestamp(s.start());
  j["end"] = format_timestamp(s.end());
  auto events = nlohmann::json::array();
  for (const auto& e : s.events) events.push_back(event_to_json(e));
  j["events"] = std::move(events);
  return j;
}

inline Session session_from_json(const nlohmann::json& j) {
  Session s;
  s.session_id = j.at("session_id").get<std::string>();
  s.user_id = j.at("user_id").get<std::string>();
  for (const auto& ev : j.at("events")) s.events.push_back(event_from_json(ev));
  if (s.events.empty()) throw Error(Errc::MalformedLine, "session " + s.session_id + " has no events");
  return s;
}

inline void write_sessions(std::ostream& out, const std::vector<Session>& sessions) {
  for (const auto& s : sessions) out << session_to_json(s).dump() << '\n';
}

inline std::vector<Session> read_sessions(std::istream& in) {
  std::vector<Session> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(session_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& ex) {
      throw Error(Errc::MalformedLine, "line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace sequer
