#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sequer/error.hpp"
#include "sequer/random.hpp"
#include "sequer/session.hpp"
#include "sequer/similarity.hpp"

namespace sequer {

struct MinerConfig {
  double adjacent_similarity = 0.7;  // strict: sim(q_i, q_i+1) > this
  double pair_similarity = 0.7;      // inclusive: sim(q_i, q_n) >= this
  Millis max_dwell{std::chrono::seconds{30}};
};

struct PostVisit {
  std::string post_id;
  double dwell_seconds = 0.0;

  friend bool operator==(const PostVisit&, const PostVisit&) = default;
};

struct ReformulationThread {
  std::vector<std::string> queries;          // q_1..q_n, n >= 2
  std::vector<PostVisit> interleaved_posts;  // short visits between q_1 and q_n
  std::string terminal_post;
  std::string session_id;

  friend bool operator==(const ReformulationThread&, const ReformulationThread&) = default;
};

struct ThreadRef {
  std::string session_id;
  std::size_t thread_index = 0;  // ordinal of the thread within its session
  std::size_t query_index = 0;   // position of `original` in the thread

  friend bool operator==(const ThreadRef&, const ThreadRef&) = default;
};

struct QueryPair {
  std::string original;
  std::string reformulated;
  double similarity = 0.0;
  ThreadRef thread_ref;

  friend bool operator==(const QueryPair&, const QueryPair&) = default;
};

struct SplitDataset {
  std::vector<QueryPair> train;
  std::vector<QueryPair> validation;
  std::vector<QueryPair> test;
  std::uint64_t seed = 0;
};

namespace detail {

struct RunItem {
  bool is_query = false;
  std::string text;  // query text or post id
  double dwell_seconds = 0.0;
};

/// Turns a closed run into at most one thread: consecutive duplicate queries
/// collapse, then the run is cut wherever adjacent similarity fails and only
/// the segment that reaches the terminal post is kept.
inline std::optional<ReformulationThread> close_run(const std::vector<RunItem>& run,
                                                    const std::string& terminal_post,
                                                    const std::string& session_id,
                                                    const MinerConfig& cfg) {
  // Distinct query positions in the run after duplicate collapse.
  std::vector<std::size_t> query_pos;
  for (std::size_t i = 0; i < run.size(); ++i) {
    if (!run[i].is_query) continue;
    if (!query_pos.empty() && run[query_pos.back()].text == run[i].text) continue;
    query_pos.push_back(i);
  }
  if (query_pos.size() < 2) return std::nullopt;

  std::size_t start = query_pos.size() - 1;
  while (start > 0 &&
         lcs_similarity(run[query_pos[start - 1]].text, run[query_pos[start]].text) > cfg.adjacent_similarity) {
    --start;
  }
  if (query_pos.size() - start < 2) return std::nullopt;

  ReformulationThread t;
  t.terminal_post = terminal_post;
  t.session_id = session_id;
  for (std::size_t k = start; k < query_pos.size(); ++k) t.queries.push_back(run[query_pos[k]].text);
  for (std::size_t i = query_pos[start]; i < run.size(); ++i) {
    if (!run[i].is_query) t.interleaved_posts.push_back({run[i].text, run[i].dwell_seconds});
  }
  return t;
}

}  // namespace detail

/// Greedy left-to-right scan for q_1..q_n [short posts] ... p_m patterns.
///
/// A run of Search events absorbs Post visits whose dwell (time to the next
/// event) is within `max_dwell`. A longer visit, or the session-final Post,
/// closes the run and may emit a thread. Any other event type resets the
/// run. Sessions without a Search event or not ending on a Post yield
/// nothing.
inline std::vector<ReformulationThread> extract_threads(const Session& session, const MinerConfig& cfg = {}) {
  std::vector<ReformulationThread> threads;
  const auto& ev = session.events;
  if (ev.empty() || ev.back().event_type != EventType::Post) return threads;
  if (std::none_of(ev.begin(), ev.end(), [](const Event& e) { return e.event_type == EventType::Search; })) {
    return threads;
  }

  std::vector<detail::RunItem> run;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const auto& e = ev[i];
    switch (e.event_type) {
      case EventType::Search:
        run.push_back({true, e.payload(), 0.0});
        break;
      case EventType::Post: {
        const bool last = i + 1 == ev.size();
        const Millis dwell = last ? Millis{0} : ev[i + 1].event_time - e.event_time;
        if (!last && dwell <= cfg.max_dwell) {
          if (!run.empty()) run.push_back({false, e.payload(), std::chrono::duration<double>(dwell).count()});
        } else {
          if (auto t = detail::close_run(run, e.payload(), session.session_id, cfg)) {
            threads.push_back(std::move(*t));
          }
          run.clear();
        }
        break;
      }
      default:
        run.clear();
        break;
    }
  }
  return threads;
}

inline std::vector<ReformulationThread> extract_threads(const std::vector<Session>& sessions,
                                                        const MinerConfig& cfg = {}) {
  std::vector<ReformulationThread> out;
  for (const auto& s : sessions) {
    auto ts = extract_threads(s, cfg);
    std::move(ts.begin(), ts.end(), std::back_inserter(out));
  }
  return out;
}

/// Printable ASCII (0x20-0x7E) only.
inline bool is_english(std::string_view q) {
  return std::all_of(q.begin(), q.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u >= 0x20 && u <= 0x7E;
  });
}

inline std::vector<QueryPair> emit_pairs(const std::vector<ReformulationThread>& threads,
                                         const MinerConfig& cfg = {}) {
  std::vector<QueryPair> pairs;
  std::string current_session;
  std::size_t ordinal = 0;
  bool first = true;
  for (const auto& t : threads) {
    if (first || t.session_id != current_session) {
      current_session = t.session_id;
      ordinal = 0;
      first = false;
    }
    const std::size_t thread_index = ordinal++;
    if (t.queries.size() < 2) continue;
    if (!std::all_of(t.queries.begin(), t.queries.end(), [](const std::string& q) { return is_english(q); })) {
      continue;
    }
    const auto& target = t.queries.back();
    for (std::size_t i = 0; i + 1 < t.queries.size(); ++i) {
      const double sim = lcs_similarity(t.queries[i], target);
      if (sim < cfg.pair_similarity) continue;
      pairs.push_back({t.queries[i], target, sim, {t.session_id, thread_index, i}});
    }
  }
  return pairs;
}

/// Seeded Fisher-Yates shuffle, then contiguous 80/10/10 slices; validation
/// and test get floor(n/10) each and train keeps the remainder.
inline SplitDataset split(std::vector<QueryPair> pairs, std::uint64_t seed) {
  if (pairs.size() < 10) {
    throw Error(Errc::TooFewPairs, "need at least 10 pairs, got " + std::to_string(pairs.size()));
  }
  Rng rng(seed);
  shuffle(std::span<QueryPair>(pairs), rng);
  const std::size_t tenth = pairs.size() / 10;
  const std::size_t train_n = pairs.size() - 2 * tenth;
  SplitDataset d;
  d.seed = seed;
  auto first = std::make_move_iterator(pairs.begin());
  d.train.assign(first, first + static_cast<std::ptrdiff_t>(train_n));
  d.validation.assign(first + static_cast<std::ptrdiff_t>(train_n),
                      first + static_cast<std::ptrdiff_t>(train_n + tenth));
  d.test.assign(first + static_cast<std::ptrdiff_t>(train_n + tenth), std::make_move_iterator(pairs.end()));
  return d;
}

// ---------------------------------------------------------------------------
// TSV pair files

/// Full form (mine output): original, reformulated, similarity, session_id,
/// thread_index, query_index.
inline void write_pairs(std::ostream& out, const std::vector<QueryPair>& pairs, bool with_provenance = true) {
  for (const auto& p : pairs) {
    out << p.original << '\t' << p.reformulated;
    if (with_provenance) {
      char sim[32];
      std::snprintf(sim, sizeof sim, "%.6f", p.similarity);
      out << '\t' << sim << '\t' << p.thread_ref.session_id << '\t' << p.thread_ref.thread_index << '\t'
          << p.thread_ref.query_index;
    }
    out << '\n';
  }
}

/// Reads both the two-column split files and the full mine output. The
/// similarity is always recomputed from the strings.
inline std::vector<QueryPair> read_pairs(std::istream& in) {
  std::vector<QueryPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = detail::split_tabs(line);
    if (cols.size() < 2) {
      throw Error(Errc::MalformedLine, "line " + std::to_string(line_no) + ": expected original<TAB>reformulated");
    }
    QueryPair p;
    p.original = std::string(cols[0]);
    p.reformulated = std::string(cols[1]);
    p.similarity = lcs_similarity(p.original, p.reformulated);
    if (cols.size() >= 6) {
      p.thread_ref.session_id = std::string(cols[3]);
      p.thread_ref.thread_index = std::stoul(std::string(cols[4]));
      p.thread_ref.query_index = std::stoul(std::string(cols[5]));
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<QueryPair> read_pairs_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return read_pairs(in);
}

inline void write_split(const SplitDataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, const std::vector<QueryPair>*> parts[] = {
      {"train.tsv", &d.train}, {"valid.tsv", &d.validation}, {"test.tsv", &d.test}};
  for (const auto& [name, pairs] : parts) {
    std::ofstream out(dir / name);
    if (!out) throw Error(Errc::Io, "cannot write " + (dir / name).string());
    write_pairs(out, *pairs, false);
  }
}

}  // namespace sequer
