#pragma once

#include <array>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sequer/error.hpp"

namespace sequer {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;
using Millis = std::chrono::milliseconds;

enum class EventType { Search, Post, QuestionsList, Home, Tags, PostHistory };

inline constexpr std::array<std::string_view, 6> kEventTypeNames = {
    "Search", "Post", "QuestionsList", "Home", "Tags", "PostHistory"};

constexpr std::string_view to_string(EventType t) noexcept {
  return kEventTypeNames[static_cast<std::size_t>(t)];
}

inline std::optional<EventType> parse_event_type(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kEventTypeNames.size(); ++i) {
    if (kEventTypeNames[i] == s) return static_cast<EventType>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Timestamps: UTC milliseconds, serialized as YYYY-MM-DDTHH:MM:SS.mmmZ

inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  auto rem = t - day;
  const auto h = duration_cast<hours>(rem);
  rem -= h;
  const auto m = duration_cast<minutes>(rem);
  rem -= m;
  const auto s = duration_cast<seconds>(rem);
  rem -= s;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(h.count()), static_cast<int>(m.count()),
                static_cast<int>(s.count()), static_cast<int>(rem.count()));
  return buf;
}

namespace detail {
inline bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}
}  // namespace detail

/// Accepts `YYYY-MM-DDTHH:MM:SS[.f{1,3}]Z`.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  int y, mo, d, h, mi, sec;
  if (s.size() < 20) return std::nullopt;
  if (!detail::read_digits(s, 0, 4, y) || s[4] != '-' || !detail::read_digits(s, 5, 2, mo) ||
      s[7] != '-' || !detail::read_digits(s, 8, 2, d) || s[10] != 'T' ||
      !detail::read_digits(s, 11, 2, h) || s[13] != ':' || !detail::read_digits(s, 14, 2, mi) ||
      s[16] != ':' || !detail::read_digits(s, 17, 2, sec)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  int ms = 0;
  if (s[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (++digits > 3) return std::nullopt;
      ms = ms * 10 + (s[pos] - '0');
      ++pos;
    }
    if (digits == 0) return std::nullopt;
    for (int i = digits; i < 3; ++i) ms *= 10;
  }
  if (pos + 1 != s.size() || s[pos] != 'Z') return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59) return std::nullopt;
  return Timestamp{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{sec} + milliseconds{ms};
}

// ---------------------------------------------------------------------------
// Percent encoding for the `q=` query parameter.

/// Unreserved characters pass through; space becomes %20; everything else %XX.
inline std::string percent_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(s.size() * 3);
  for (unsigned char c : s) {
    if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' ||
        c == '.' || c == '_' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

/// Form-style decoding: `+` is a space, `%XX` a byte. Returns nullopt on a
/// truncated or non-hex escape.
inline std::optional<std::string> percent_decode(std::string_view s) {
  auto hex = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out.push_back(' ');
    } else if (s[i] == '%') {
      if (i + 2 >= s.size()) return std::nullopt;
      const int hi = hex(s[i + 1]);
      const int lo = hex(s[i + 2]);
      if (hi < 0 || lo < 0) return std::nullopt;
      out.push_back(static_cast<char>(hi * 16 + lo));
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// URLs

inline constexpr std::string_view kSiteRoot = "https://stackoverflow.com";

inline std::string search_url(std::string_view query) {
  return std::string(kSiteRoot) + "/search?q=" + percent_encode(query);
}

inline std::string post_url(std::string_view post_id) {
  return std::string(kSiteRoot) + "/questions/" + std::string(post_id);
}

/// Value of the `q` parameter of a URL's query string, decoded.
inline std::optional<std::string> query_param(std::string_view url) {
  const auto qmark = url.find('?');
  if (qmark == std::string_view::npos) return std::nullopt;
  std::string_view rest = url.substr(qmark + 1);
  if (const auto hash = rest.find('#'); hash != std::string_view::npos) rest = rest.substr(0, hash);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const std::string_view kv = rest.substr(0, amp);
    if (kv.substr(0, 2) == "q=") return percent_decode(kv.substr(2));
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
  return std::nullopt;
}

/// Numeric post id from `/questions/<id>[/slug]`.
inline std::optional<std::string> post_id_of(std::string_view url) {
  constexpr std::string_view kMarker = "/questions/";
  const auto pos = url.find(kMarker);
  if (pos == std::string_view::npos) return std::nullopt;
  std::size_t i = pos + kMarker.size();
  const std::size_t start = i;
  while (i < url.size() && url[i] >= '0' && url[i] <= '9') ++i;
  if (i == start) return std::nullopt;
  if (i < url.size() && url[i] != '/' && url[i] != '?' && url[i] != '#') return std::nullopt;
  return std::string(url.substr(start, i - start));
}

// ---------------------------------------------------------------------------

struct Event {
  std::string root_event_id;
  std::string event_id;
  std::string user_id;
  Timestamp event_time{};
  EventType event_type = EventType::Home;
  std::string url;
  std::optional<std::string> referrer;

  /// Decoded query for Search, post id for Post, empty otherwise.
  [[nodiscard]] std::string payload() const {
    if (event_type == EventType::Search) return query_param(url).value_or("");
    if (event_type == EventType::Post) return post_id_of(url).value_or("");
    return {};
  }

  friend bool operator==(const Event&, const Event&) = default;
};

enum class LogFormat { Jsonl, Tsv };

inline std::optional<LogFormat> parse_log_format(std::string_view s) {
  if (s == "jsonl") return LogFormat::Jsonl;
  if (s == "tsv") return LogFormat::Tsv;
  return std::nullopt;
}

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct ParseResult {
  std::vector<Event> events;
  std::vector<LineError> errors;
};

namespace detail {

inline std::optional<std::string> validate_event(const Event& e) {
  if (e.event_id.empty()) return "empty event_id";
  if (e.user_id.empty()) return "empty user_id";
  if (e.event_type == EventType::Search && e.payload().empty()) {
    if (!query_param(e.url)) return "search url without decodable q parameter";
    return "search url with empty query";
  }
  if (e.event_type == EventType::Post && e.payload().empty()) return "post url without post id";
  return std::nullopt;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

inline Event parse_jsonl_line(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  if (!j.is_object()) throw std::invalid_argument("line is not a JSON object");
  auto str = [&](const char* key) -> std::string {
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing field ") + key);
    const auto& v = j.at(key);
    if (!v.is_string()) throw std::invalid_argument(std::string("field ") + key + " is not a string");
    return v.get<std::string>();
  };
  Event e;
  e.root_event_id = str("root_event_id");
  e.event_id = str("event_id");
  e.user_id = str("user_id");
  const auto ts = str("event_time");
  const auto parsed = parse_timestamp(ts);
  if (!parsed) throw std::invalid_argument("bad timestamp '" + ts + "'");
  e.event_time = *parsed;
  const auto type = str("event_type");
  const auto et = parse_event_type(type);
  if (!et) throw std::invalid_argument("unknown event_type '" + type + "'");
  e.event_type = *et;
  e.url = str("url");
  if (!j.contains("referrer")) throw std::invalid_argument("missing field referrer");
  const auto& ref = j.at("referrer");
  if (ref.is_null()) {
    e.referrer = std::nullopt;
  } else if (ref.is_string()) {
    e.referrer = ref.get<std::string>();
  } else {
    throw std::invalid_argument("field referrer is neither string nor null");
  }
  return e;
}

inline Event parse_tsv_line(std::string_view line) {
  const auto cols = split_tabs(line);
  if (cols.size() != 7) {
    throw std::invalid_argument("expected 7 tab-separated columns, got " + std::to_string(cols.size()));
  }
  Event e;
  e.root_event_id = std::string(cols[0]);
  e.event_id = std::string(cols[1]);
  e.user_id = std::string(cols[2]);
  const auto parsed = parse_timestamp(cols[3]);
  if (!parsed) throw std::invalid_argument("bad timestamp '" + std::string(cols[3]) + "'");
  e.event_time = *parsed;
  const auto et = parse_event_type(cols[4]);
  if (!et) throw std::invalid_argument("unknown event_type '" + std::string(cols[4]) + "'");
  e.event_type = *et;
  e.url = std::string(cols[5]);
  if (!cols[6].empty()) e.referrer = std::string(cols[6]);
  return e;
}

}  // namespace detail

/// Reads one event per line. Blank lines are skipped. Malformed lines are
/// collected with their 1-based line number; in strict mode the first one
/// throws Errc::MalformedLine instead.
inline ParseResult parse_log(std::istream& in, LogFormat format, bool strict = false) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string message;
    try {
      Event e = format == LogFormat::Jsonl ? detail::parse_jsonl_line(line) : detail::parse_tsv_line(line);
      if (auto bad = detail::validate_event(e)) {
        message = *bad;
      } else {
        result.events.push_back(std::move(e));
        continue;
      }
    } catch (const nlohmann::json::exception& ex) {
      message = std::string("invalid JSON: ") + ex.what();
    } catch (const std::invalid_argument& ex) {
      message = ex.what();
    }
    if (strict) throw Error(Errc::MalformedLine, "line " + std::to_string(line_no) + ": " + message);
    result.errors.push_back({line_no, std::move(message)});
  }
  return result;
}

inline ParseResult parse_log_string(std::string_view text, LogFormat format, bool strict = false) {
  std::istringstream in{std::string(text)};
  return parse_log(in, format, strict);
}

inline nlohmann::json event_to_json(const Event& e) {
  nlohmann::json j;
  j["root_event_id"] = e.root_event_id;
  j["event_id"] = e.event_id;
  j["user_id"] = e.user_id;
  j["event_time"] = format_timestamp(e.event_time);
  j["event_type"] = std::string(to_string(e.event_type));
  j["url"] = e.url;
  j["referrer"] = e.referrer ? nlohmann::json(*e.referrer) : nlohmann::json(nullptr);
  return j;
}

inline Event event_from_json(const nlohmann::json& j) { return detail::parse_jsonl_line(j.dump()); }

inline void write_log(std::ostream& out, const std::vector<Event>& events, LogFormat format) {
  for (const auto& e : events) {
    if (format == LogFormat::Jsonl) {
      out << event_to_json(e).dump() << '\n';
    } else {
      out << e.root_event_id << '\t' << e.event_id << '\t' << e.user_id << '\t'
          << format_timestamp(e.event_time) << '\t' << to_string(e.event_type) << '\t' << e.url << '\t'
          << e.referrer.value_or("") << '\n';
    }
  }
}

inline std::string write_log_string(const std::vector<Event>& events, LogFormat format) {
  std::ostringstream out;
  write_log(out, events, format);
  return out.str();
}

}  // namespace sequer
