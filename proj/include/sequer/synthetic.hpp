#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sequer/bm25.hpp"
#include "sequer/error.hpp"
#include "sequer/event_log.hpp"
#include "sequer/miner.hpp"
#include "sequer/random.hpp"
#include "sequer/similarity.hpp"

namespace sequer {

enum class ReformCategory { Add, Modify, Delete, Unrelated };

constexpr std::string_view to_string(ReformCategory c) noexcept {
  switch (c) {
    case ReformCategory::Add: return "add";
    case ReformCategory::Modify: return "modify";
    case ReformCategory::Delete: return "delete";
    case ReformCategory::Unrelated: return "unrelated";
  }
  return "?";
}

/// Weights over reformulation categories. Defaults follow the observed
/// add/modify/delete/other shares.
struct CategoryMix {
  double add = 0.4010;
  double modify = 0.3359;
  double remove = 0.2318;
  double unrelated = 0.0313;
};

struct SyntheticSpec {
  std::size_t user_count = 100;
  std::uint64_t seed = 1;
  CategoryMix reformulation_category_mix{};
  double bot_fraction = 0.05;

  // Shape knobs; defaults keep every pipeline path exercised.
  std::size_t max_sessions_per_user = 4;
  double nonlinear_fraction = 0.15;
  double refresh_probability = 0.08;
  double non_english_probability = 0.03;
  double thread_block_probability = 0.7;
};

inline void validate(const SyntheticSpec& spec) {
  const auto& m = spec.reformulation_category_mix;
  if (spec.user_count < 1) throw Error(Errc::InvalidSpec, "user_count must be >= 1");
  for (double w : {m.add, m.modify, m.remove, m.unrelated}) {
    if (!(w >= 0.0)) throw Error(Errc::InvalidSpec, "category weights must be nonnegative");
  }
  if (std::abs(m.add + m.modify + m.remove + m.unrelated - 1.0) > 1e-9) {
    throw Error(Errc::InvalidSpec, "category weights must sum to 1");
  }
  if (!(m.add + m.modify + m.remove > 0.0)) {
    throw Error(Errc::InvalidSpec, "at least one of add/modify/delete needs positive weight");
  }
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(spec.bot_fraction)) throw Error(Errc::InvalidSpec, "bot_fraction must lie in [0,1]");
  if (!prob(spec.nonlinear_fraction) || !prob(spec.refresh_probability) ||
      !prob(spec.non_english_probability) || !prob(spec.thread_block_probability)) {
    throw Error(Errc::InvalidSpec, "probabilities must lie in [0,1]");
  }
  if (spec.max_sessions_per_user < 1) throw Error(Errc::InvalidSpec, "max_sessions_per_user must be >= 1");
}

struct TruthSession {
  std::string session_id;
  std::string user_id;
  std::vector<std::string> event_ids;  // refresh duplicates excluded
  bool linear = true;
};

struct TruthThread {
  ReformulationThread thread;
  std::vector<ReformCategory> categories;  // one per q_i -> q_i+1 step
  bool english = true;
};

/// What the cleaning and mining stages must recover from a generated log.
/// `sessions` lists every non-bot session; `threads` lists only threads in
/// sessions that survive the linear filter and end on a post visit.
struct GroundTruth {
  std::vector<std::string> bot_users;
  std::vector<TruthSession> sessions;
  std::vector<TruthThread> threads;
};

struct SyntheticLog {
  std::vector<Event> events;  // globally ordered by (time, event_id)
  GroundTruth truth;
};

namespace synth {

inline constexpr std::array<std::string_view, 14> kLanguages = {
    "java", "python", "c#", "c++", "javascript", "android", "swift",
    "kotlin", "php", "ruby", "golang", "rust", "typescript", "sql"};

inline constexpr std::array<std::string_view, 20> kVerbs = {
    "read",   "write",  "create", "parse",   "convert", "sort",     "remove", "find",  "check", "compare",
    "split",  "join",   "format", "download", "upload", "install", "update", "open",  "close", "serialize"};

inline constexpr std::array<std::string_view, 28> kObjects = {
    "file",    "string",    "list",     "array",   "dictionary", "json",   "date",     "image",  "loop",   "class",
    "thread",  "exception", "button",   "table",   "database",   "map",    "object",   "socket", "request", "timestamp",
    "directory", "enum",    "interface", "vector", "matrix",     "column", "cookie",   "session"};

inline constexpr std::array<std::string_view, 16> kDetails = {
    "multiple", "large", "empty", "nested", "async", "static", "local", "remote",
    "unicode",  "binary", "csv",  "hidden", "sorted", "unique", "global", "temporary"};

inline constexpr std::array<std::string_view, 8> kSuffixes = {
    "line by line", "without loop", "from url", "in place", "with regex", "to int", "by key", "by value"};

inline constexpr std::array<std::pair<std::string_view, std::string_view>, 12> kSynonyms = {{
    {"freezes", "hangs"},
    {"remove", "delete"},
    {"create", "make"},
    {"find", "search"},
    {"convert", "transform"},
    {"check", "verify"},
    {"list", "array"},
    {"large", "big"},
    {"read", "load"},
    {"write", "save"},
    {"error", "exception"},
    {"open", "launch"},
}};

inline constexpr std::array<std::string_view, 6> kForeignWords = {"файл", "строка", "ошибка", "文件", "列表", "datei"};

inline std::vector<std::string> words_of(std::string_view q) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < q.size()) {
    while (i < q.size() && q[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < q.size() && q[i] != ' ') ++i;
    if (i > start) out.emplace_back(q.substr(start, i - start));
  }
  return out;
}

inline std::string join_words(const std::vector<std::string>& w) {
  std::string out;
  for (const auto& s : w) {
    if (!out.empty()) out.push_back(' ');
    out += s;
  }
  return out;
}

inline std::string base_query(Rng& rng) {
  const std::string verb(pick(kVerbs, rng));
  const std::string obj(pick(kObjects, rng));
  const std::string obj2(pick(kObjects, rng));
  const std::string lang(pick(kLanguages, rng));
  switch (uniform_index(rng, 8)) {
    case 0: return "how to " + verb + " " + obj + " in " + lang;
    case 1: return verb + " " + obj + " " + lang;
    case 2: return lang + " " + verb + " " + obj + " to " + obj2;
    case 3: return "how to " + verb + " " + obj;
    case 4: return lang + " " + obj + " " + verb + " error";
    case 5: return verb + " " + std::string(pick(kDetails, rng)) + " " + obj + " " + lang;
    case 6: return "what is " + obj + " in " + lang;
    default: return lang + " " + verb + " " + obj + " from " + obj2;
  }
}

/// Swap, drop or double one character of a word of length >= 4.
inline std::optional<std::string> misspell_word(const std::string& w, Rng& rng) {
  if (w.size() < 4) return std::nullopt;
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::string m = w;
    const std::size_t i = 1 + static_cast<std::size_t>(uniform_index(rng, w.size() - 2));
    switch (uniform_index(rng, 3)) {
      case 0: std::swap(m[i], m[i + 1]); break;
      case 1: m.erase(i, 1); break;
      default: m.insert(i, 1, m[i]); break;
    }
    if (m != w) return m;
  }
  return std::nullopt;
}

/// A query plus the one pending misspelling (typo -> correct word), if any.
struct Intent {
  std::string query;
  std::optional<std::pair<std::string, std::string>> typo;
};

inline bool has_language(const std::vector<std::string>& w) {
  return std::any_of(w.begin(), w.end(), [](const std::string& s) {
    return std::find(kLanguages.begin(), kLanguages.end(), s) != kLanguages.end();
  });
}

inline std::optional<Intent> apply_add(const Intent& in, Rng& rng) {
  auto w = words_of(in.query);
  switch (uniform_index(rng, 3)) {
    case 0:
      if (has_language(w)) return std::nullopt;
      w.push_back("in");
      w.emplace_back(pick(kLanguages, rng));
      break;
    case 1: {
      const std::size_t pos = static_cast<std::size_t>(uniform_index(rng, w.size() + 1));
      w.insert(w.begin() + static_cast<std::ptrdiff_t>(pos), std::string(pick(kDetails, rng)));
      break;
    }
    default: w.emplace_back(pick(kSuffixes, rng)); break;
  }
  return Intent{join_words(w), in.typo};
}

inline std::optional<Intent> apply_delete(const Intent& in, Rng& rng) {
  auto w = words_of(in.query);
  if (w.size() < 3) return std::nullopt;
  if (w.size() >= 4 && w[0] == "how" && w[1] == "to" && bernoulli(rng, 0.5)) {
    w.erase(w.begin(), w.begin() + 2);
  } else {
    w.erase(w.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, w.size())));
  }
  Intent out{join_words(w), in.typo};
  if (out.typo && std::find(w.begin(), w.end(), out.typo->first) == w.end()) out.typo.reset();
  return out;
}

inline std::optional<Intent> apply_modify(const Intent& in, Rng& rng) {
  auto w = words_of(in.query);
  if (in.typo) {
    auto it = std::find(w.begin(), w.end(), in.typo->first);
    if (it != w.end()) {
      *it = in.typo->second;
      return Intent{join_words(w), std::nullopt};
    }
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (const auto& [a, b] : kSynonyms) {
      if (w[i] == a || w[i] == b) candidates.push_back(i);
    }
  }
  if (candidates.empty()) return std::nullopt;
  const std::size_t i = pick(candidates, rng);
  for (const auto& [a, b] : kSynonyms) {
    if (w[i] == a) {
      w[i] = std::string(b);
      break;
    }
    if (w[i] == b) {
      w[i] = std::string(a);
      break;
    }
  }
  return Intent{join_words(w), in.typo};
}

inline Intent fresh_intent(Rng& rng, double typo_probability) {
  Intent intent{base_query(rng), std::nullopt};
  if (bernoulli(rng, typo_probability)) {
    auto w = words_of(intent.query);
    for (int attempt = 0; attempt < 4; ++attempt) {
      const std::size_t i = static_cast<std::size_t>(uniform_index(rng, w.size()));
      if (auto typo = misspell_word(w[i], rng)) {
        intent.typo = std::make_pair(*typo, w[i]);
        w[i] = *typo;
        intent.query = join_words(w);
        break;
      }
    }
  }
  return intent;
}

inline ReformCategory draw_category(const CategoryMix& mix, Rng& rng) {
  const double u = uniform01(rng);
  if (u < mix.add) return ReformCategory::Add;
  if (u < mix.add + mix.modify) return ReformCategory::Modify;
  if (u < mix.add + mix.modify + mix.remove) return ReformCategory::Delete;
  return mix.unrelated > 0.0 ? ReformCategory::Unrelated : ReformCategory::Delete;
}

/// One reformulation step. Related steps keep similarity above 0.7,
/// unrelated ones stay at or below 0.5.
inline std::pair<Intent, ReformCategory> reformulate(const Intent& current, const CategoryMix& mix, Rng& rng) {
  for (int round = 0; round < 64; ++round) {
    const ReformCategory cat = draw_category(mix, rng);
    for (int attempt = 0; attempt < 12; ++attempt) {
      std::optional<Intent> next;
      switch (cat) {
        case ReformCategory::Add: next = apply_add(current, rng); break;
        case ReformCategory::Delete: next = apply_delete(current, rng); break;
        case ReformCategory::Modify: next = apply_modify(current, rng); break;
        case ReformCategory::Unrelated: next = fresh_intent(rng, 0.3); break;
      }
      if (!next || next->query == current.query) continue;
      const double sim = lcs_similarity(current.query, next->query);
      const bool ok = cat == ReformCategory::Unrelated ? sim <= 0.5 : sim > 0.7;
      if (ok) return {*next, cat};
    }
  }
  // Pluralizing the last word keeps 2n/(2n+1) similarity.
  return {Intent{current.query + "s", current.typo}, ReformCategory::Modify};
}

enum class Role { Query, ShortPost, LongPost, Browse };

struct PlannedEvent {
  EventType type;
  std::string url;
  Role role;
  // Thread bookkeeping, valid for events inside a thread block.
  int block = -1;
  int segment = -1;
};

/// Gap that follows an event of the given role, in milliseconds.
inline std::int64_t gap_after(Role role, Rng& rng) {
  switch (role) {
    case Role::Query: return 2'000 + static_cast<std::int64_t>(uniform_index(rng, 88'000));
    case Role::ShortPost:
      if (bernoulli(rng, 0.15)) return 30'000;
      return 2'000 + static_cast<std::int64_t>(uniform_index(rng, 28'001));
    case Role::LongPost: {
      const double u = uniform01(rng);
      if (u < 0.1) return 30'001;
      if (u < 0.2) return 360'000;
      return 30'001 + static_cast<std::int64_t>(uniform_index(rng, 330'000));
    }
    case Role::Browse:
      if (bernoulli(rng, 0.1)) return 360'000;
      return 2'000 + static_cast<std::int64_t>(uniform_index(rng, 358'001));
  }
  return 10'000;
}

inline std::int64_t session_gap(Rng& rng) {
  const double u = uniform01(rng);
  if (u < 0.15) return 360'001;
  if (u < 0.3) return 361'000;
  return 361'000 + static_cast<std::int64_t>(uniform_index(rng, 6 * 3'600'000));
}

inline std::string random_post_id(Rng& rng) { return std::to_string(1'000 + uniform_index(rng, 9'000'000)); }

inline std::string browse_url(EventType t, Rng& rng) {
  switch (t) {
    case EventType::QuestionsList: return std::string(kSiteRoot) + "/questions";
    case EventType::Home: return std::string(kSiteRoot) + "/";
    case EventType::Tags: return std::string(kSiteRoot) + "/tags";
    case EventType::PostHistory: return std::string(kSiteRoot) + "/posts/" + random_post_id(rng) + "/revisions";
    default: return std::string(kSiteRoot) + "/";
  }
}

/// Builds the planned (clean) events of one session.
class SessionPlanner {
 public:
  SessionPlanner(const SyntheticSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {}

  struct ThreadPlan {
    std::vector<Intent> intents;               // in emission order, before duplicates
    std::vector<ReformCategory> categories;    // per step
    std::vector<int> segment_of;               // per intent
  };

  std::vector<PlannedEvent> events;
  std::vector<ThreadPlan> threads;

  void add_thread_block() {
    ThreadPlan plan;
    const int block = static_cast<int>(threads.size());
    Intent intent = fresh_intent(rng_, 0.5);
    if (bernoulli(rng_, spec_.non_english_probability)) {
      auto w = words_of(intent.query);
      w.insert(w.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng_, w.size() + 1)),
               std::string(pick(kForeignWords, rng_)));
      intent.query = join_words(w);
    }
    int segment = 0;
    plan.intents.push_back(intent);
    plan.segment_of.push_back(segment);
    const std::size_t steps = 1 + static_cast<std::size_t>(uniform_index(rng_, 3));
    for (std::size_t s = 0; s < steps; ++s) {
      auto [next, cat] = reformulate(plan.intents.back(), spec_.reformulation_category_mix, rng_);
      if (cat == ReformCategory::Unrelated) ++segment;
      plan.intents.push_back(next);
      plan.categories.push_back(cat);
      plan.segment_of.push_back(segment);
    }

    for (std::size_t i = 0; i < plan.intents.size(); ++i) {
      push({EventType::Search, search_url(plan.intents[i].query), Role::Query, block, plan.segment_of[i]});
      if (bernoulli(rng_, 0.1)) {
        // Re-issue of the same query after a quick look at a result.
        push_post(Role::ShortPost, block, plan.segment_of[i]);
        push({EventType::Search, search_url(plan.intents[i].query), Role::Query, block, plan.segment_of[i]});
      }
      if (i + 1 < plan.intents.size()) {
        const std::size_t shorts = bernoulli(rng_, 0.3) ? 1 + uniform_index(rng_, 2) : 0;
        for (std::size_t k = 0; k < shorts; ++k) push_post(Role::ShortPost, block, plan.segment_of[i]);
      }
    }
    push_post(Role::LongPost, block, segment);
    threads.push_back(std::move(plan));
  }

  void add_filler_block() {
    switch (uniform_index(rng_, 3)) {
      case 0: {
        const std::size_t n = 1 + uniform_index(rng_, 3);
        for (std::size_t i = 0; i < n; ++i) push_browse();
        if (bernoulli(rng_, 0.5)) push_post(bernoulli(rng_, 0.5) ? Role::ShortPost : Role::LongPost, -1, -1);
        break;
      }
      case 1:
        push({EventType::Search, search_url(base_query(rng_)), Role::Query, -1, -1});
        push_post(Role::LongPost, -1, -1);
        break;
      default:
        push({EventType::Search, search_url(base_query(rng_)), Role::Query, -1, -1});
        push_browse();
        break;
    }
  }

  void push_browse() {
    static constexpr std::array<EventType, 4> kTypes = {EventType::QuestionsList, EventType::Home, EventType::Tags,
                                                        EventType::PostHistory};
    for (int attempt = 0; attempt < 16; ++attempt) {
      const EventType t = pick(kTypes, rng_);
      std::string url = browse_url(t, rng_);
      if (!events.empty() && events.back().url == url) continue;
      push({t, std::move(url), Role::Browse, -1, -1});
      return;
    }
  }

  void push_post(Role role, int block, int segment) {
    std::string url;
    do {
      url = post_url(random_post_id(rng_));
    } while (!events.empty() && events.back().url == url);
    push({EventType::Post, std::move(url), role, block, segment});
  }

  void push(PlannedEvent e) { events.push_back(std::move(e)); }

 private:
  const SyntheticSpec& spec_;
  Rng& rng_;
};

}  // namespace synth

/// Deterministic synthetic event log with known sessions and threads.
inline SyntheticLog generate_synthetic(const SyntheticSpec& spec) {
  using namespace synth;
  validate(spec);
  Rng rng(spec.seed);
  SyntheticLog log;

  const Timestamp epoch = Timestamp{} + std::chrono::seconds{1'514'764'800};  // 2018-01-01T00:00:00Z
  std::uint64_t next_event = 0;
  auto new_event_id = [&] {
    char buf[24];
    std::snprintf(buf, sizeof buf, "e%010llu", static_cast<unsigned long long>(next_event++));
    return std::string(buf);
  };

  std::vector<bool> is_bot(spec.user_count, false);
  {
    const auto bots = static_cast<std::size_t>(std::floor(spec.bot_fraction * static_cast<double>(spec.user_count) + 0.5));
    std::vector<std::size_t> order(spec.user_count);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(std::span<std::size_t>(order), rng);
    for (std::size_t i = 0; i < std::min(bots, order.size()); ++i) is_bot[order[i]] = true;
  }

  for (std::size_t u = 0; u < spec.user_count; ++u) {
    char ubuf[24];
    std::snprintf(ubuf, sizeof ubuf, "u%06zu", u);
    const std::string user(ubuf);
    Timestamp t = epoch + Millis{static_cast<std::int64_t>(uniform_index(rng, 30ULL * 86'400'000ULL))};

    if (is_bot[u]) {
      log.truth.bot_users.push_back(user);
      const std::size_t n = 150 + uniform_index(rng, 150);
      std::string root;
      std::optional<std::string> prev_url;
      for (std::size_t i = 0; i < n; ++i) {
        Event e;
        e.event_id = new_event_id();
        if (i == 0) root = e.event_id;
        e.root_event_id = root;
        e.user_id = user;
        e.event_time = t;
        if (i % 2 == 0) {
          e.event_type = EventType::Search;
          e.url = search_url(base_query(rng) + " " + std::to_string(i));
        } else {
          e.event_type = EventType::Post;
          e.url = post_url(random_post_id(rng));
        }
        e.referrer = prev_url;
        prev_url = e.url;
        log.events.push_back(std::move(e));
        t += Millis{300 + static_cast<std::int64_t>(uniform_index(rng, 150))};
      }
      continue;
    }

    std::vector<Event> clean;
    const std::size_t n_sessions = 1 + uniform_index(rng, spec.max_sessions_per_user);
    for (std::size_t s = 0; s < n_sessions; ++s) {
      if (s > 0) t += Millis{session_gap(rng)};
      SessionPlanner planner(spec, rng);
      const std::size_t blocks = 1 + uniform_index(rng, 3);
      for (std::size_t b = 0; b < blocks; ++b) {
        if (bernoulli(rng, spec.thread_block_probability)) {
          planner.add_thread_block();
        } else {
          planner.add_filler_block();
        }
      }
      if (bernoulli(rng, 0.15)) planner.push_browse();
      auto& planned = planner.events;
      // Never repeat the URL that closed the previous session.
      if (!clean.empty() && clean.back().url == planned.front().url) {
        for (EventType bt : {EventType::Tags, EventType::QuestionsList}) {
          auto url = browse_url(bt, rng);
          if (url == clean.back().url || url == planned.front().url) continue;
          planned.insert(planned.begin(), PlannedEvent{bt, std::move(url), Role::Browse, -1, -1});
          break;
        }
      }

      const bool linear = planned.size() < 2 || !bernoulli(rng, spec.nonlinear_fraction);
      const std::size_t broken = planned.size() < 2 ? 0 : 1 + uniform_index(rng, planned.size() - 1);

      TruthSession ts;
      ts.user_id = user;
      ts.linear = linear;
      std::vector<std::string> ids;
      std::vector<Timestamp> times;
      for (std::size_t i = 0; i < planned.size(); ++i) {
        Event e;
        e.event_id = new_event_id();
        if (i == 0) ts.session_id = e.event_id;
        e.root_event_id = ts.session_id;
        e.user_id = user;
        e.event_time = t;
        e.event_type = planned[i].type;
        e.url = planned[i].url;
        if (i == 0) {
          e.referrer = bernoulli(rng, 0.5) ? std::optional<std::string>{} : std::optional<std::string>{"https://www.google.com/"};
        } else if (!linear && i == broken) {
          e.referrer = bernoulli(rng, 0.5) || i < 2 ? std::optional<std::string>{}
                                                    : std::optional<std::string>{planned[i - 2].url};
          if (e.referrer && *e.referrer == planned[i - 1].url) e.referrer.reset();
        } else {
          e.referrer = planned[i - 1].url;
        }
        ts.event_ids.push_back(e.event_id);
        times.push_back(t);
        clean.push_back(std::move(e));
        if (i + 1 < planned.size()) t += Millis{gap_after(planned[i].role, rng)};
      }

      // Ground-truth threads: mined only from linear sessions ending on a post.
      const bool mineable = linear && planned.back().type == EventType::Post;
      if (mineable) {
        for (std::size_t b = 0; b < planner.threads.size(); ++b) {
          const auto& plan = planner.threads[b];
          const int final_segment = plan.segment_of.back();
          std::vector<std::size_t> members;  // planned indices of this block
          for (std::size_t i = 0; i < planned.size(); ++i) {
            if (planned[i].block == static_cast<int>(b)) members.push_back(i);
          }
          TruthThread tt;
          tt.thread.session_id = ts.session_id;
          for (std::size_t k = 0; k < plan.intents.size(); ++k) {
            if (plan.segment_of[k] != final_segment) continue;
            tt.thread.queries.push_back(plan.intents[k].query);
            if (k > 0 && plan.segment_of[k - 1] == final_segment) tt.categories.push_back(plan.categories[k - 1]);
          }
          if (tt.thread.queries.size() < 2) continue;
          tt.english = std::all_of(tt.thread.queries.begin(), tt.thread.queries.end(),
                                   [](const std::string& q) { return is_english(q); });
          bool in_segment = false;
          for (std::size_t m = 0; m + 1 < members.size(); ++m) {
            const auto& pe = planned[members[m]];
            if (pe.role == Role::Query && pe.segment == final_segment) in_segment = true;
            if (in_segment && pe.type == EventType::Post) {
              const double dwell = std::chrono::duration<double>(times[members[m] + 1] - times[members[m]]).count();
              tt.thread.interleaved_posts.push_back({*post_id_of(pe.url), dwell});
            }
          }
          tt.thread.terminal_post = *post_id_of(planned[members.back()].url);
          log.truth.threads.push_back(std::move(tt));
        }
      }
      log.truth.sessions.push_back(std::move(ts));
    }

    // Page refreshes: duplicates strictly between an event and its successor.
    std::vector<Event> with_refreshes;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      with_refreshes.push_back(clean[i]);
      if (!bernoulli(rng, spec.refresh_probability)) continue;
      const std::int64_t room =
          i + 1 < clean.size() ? (clean[i + 1].event_time - clean[i].event_time).count() : 5'000;
      const std::size_t copies = 1 + uniform_index(rng, 3);
      std::vector<std::int64_t> offsets;
      for (std::size_t c = 0; c < copies; ++c) offsets.push_back(1 + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(room - 1))));
      std::sort(offsets.begin(), offsets.end());
      for (auto off : offsets) {
        Event r = clean[i];
        r.event_id = new_event_id();
        r.event_time = clean[i].event_time + Millis{off};
        with_refreshes.push_back(std::move(r));
      }
    }
    std::move(with_refreshes.begin(), with_refreshes.end(), std::back_inserter(log.events));
  }

  std::stable_sort(log.events.begin(), log.events.end(), [](const Event& a, const Event& b) {
    if (a.event_time != b.event_time) return a.event_time < b.event_time;
    return a.event_id < b.event_id;
  });
  return log;
}

/// Stand-alone reformulation pairs with distinct originals, drawn with the
/// generator's query grammar and reformulation mix (no unrelated steps).
inline std::vector<QueryPair> generate_pairs(std::size_t count, std::uint64_t seed, const CategoryMix& mix = {}) {
  using namespace synth;
  CategoryMix related = mix;
  related.unrelated = 0.0;
  Rng rng(seed);
  std::vector<QueryPair> out;
  std::set<std::string> seen;
  while (out.size() < count) {
    const Intent start = fresh_intent(rng, 0.3);
    if (seen.count(start.query)) continue;
    const auto [next, cat] = reformulate(start, related, rng);
    seen.insert(start.query);
    out.push_back({start.query, next.query, lcs_similarity(start.query, next.query), {}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Retrieval fixture: posts plus (corrupted original, reformulated, target).

struct RetrievalCase {
  std::string original;
  std::string reformulated;
  std::string target_post;
};

struct RetrievalFixture {
  std::vector<PostDoc> posts;
  std::vector<RetrievalCase> cases;
};

inline RetrievalFixture generate_retrieval_fixture(std::uint64_t seed, std::size_t post_count = 50) {
  using namespace synth;
  Rng rng(seed);
  RetrievalFixture fx;
  std::set<std::string> titles;
  while (fx.posts.size() < post_count) {
    const std::string verb(pick(kVerbs, rng));
    const std::string obj(pick(kObjects, rng));
    const std::string lang(pick(kLanguages, rng));
    const std::string detail(pick(kDetails, rng));
    const std::string title = "how to " + verb + " " + detail + " " + obj + " in " + lang;
    if (!titles.insert(title).second) continue;
    std::string body;
    for (int i = 0; i < 30; ++i) {
      const auto pool = uniform_index(rng, 3);
      body += std::string(pool == 0 ? pick(kVerbs, rng) : pool == 1 ? pick(kObjects, rng) : pick(kLanguages, rng));
      body += ' ';
    }
    body += "i want to " + verb + " a " + obj + " using " + lang;
    PostDoc doc{std::to_string(100'000 + fx.posts.size()), title, body};
    fx.cases.push_back({});
    auto& c = fx.cases.back();
    c.target_post = doc.post_id;
    c.reformulated = verb + " " + detail + " " + obj + " " + lang;
    // Corrupt: misspell the distinctive terms and drop the language.
    std::vector<std::string> w = {verb, detail, obj};
    for (auto& word : w) {
      if (auto typo = misspell_word(word, rng)) word = *typo;
    }
    c.original = join_words(w);
    fx.posts.push_back(std::move(doc));
  }
  return fx;
}

}  // namespace sequer
