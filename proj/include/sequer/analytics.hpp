#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sequer/error.hpp"
#include "sequer/miner.hpp"
#include "sequer/stopwords.hpp"

namespace sequer {

enum class AdvancedSearchKind {
  Tag,
  User,
  Phrase,
  ExcludePhrase,
  Wildcard,
  QuestionOnly,
  AnswerCount,
  MultipleTags,
  Score,
  CreationDate,
};

inline constexpr std::array<AdvancedSearchKind, 10> kAdvancedKinds = {
    AdvancedSearchKind::Tag,          AdvancedSearchKind::User,        AdvancedSearchKind::Phrase,
    AdvancedSearchKind::ExcludePhrase, AdvancedSearchKind::Wildcard,   AdvancedSearchKind::QuestionOnly,
    AdvancedSearchKind::AnswerCount,  AdvancedSearchKind::MultipleTags, AdvancedSearchKind::Score,
    AdvancedSearchKind::CreationDate};

constexpr std::string_view to_string(AdvancedSearchKind k) noexcept {
  switch (k) {
    case AdvancedSearchKind::Tag: return "Tag";
    case AdvancedSearchKind::User: return "User";
    case AdvancedSearchKind::Phrase: return "Phrase";
    case AdvancedSearchKind::ExcludePhrase: return "ExcludePhrase";
    case AdvancedSearchKind::Wildcard: return "Wildcard";
    case AdvancedSearchKind::QuestionOnly: return "QuestionOnly";
    case AdvancedSearchKind::AnswerCount: return "AnswerCount";
    case AdvancedSearchKind::MultipleTags: return "MultipleTags";
    case AdvancedSearchKind::Score: return "Score";
    case AdvancedSearchKind::CreationDate: return "CreationDate";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// n-grams

/// Lowercased whitespace tokens with punctuation removed, except for
/// '#', '+', '_', '.' and '"'. Trailing periods go too, and tokens left
/// without any letter or digit are dropped.
inline std::vector<std::string> analytics_tokens(std::string_view query) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < query.size()) {
    while (i < query.size() && std::isspace(static_cast<unsigned char>(query[i]))) ++i;
    std::string tok;
    bool alnum = false;
    while (i < query.size() && !std::isspace(static_cast<unsigned char>(query[i]))) {
      const auto c = static_cast<unsigned char>(query[i++]);
      if (std::isalnum(c) || c >= 0x80) {
        tok.push_back(static_cast<char>(std::tolower(c)));
        alnum = true;
      } else if (c == '#' || c == '+' || c == '_' || c == '.' || c == '"') {
        tok.push_back(static_cast<char>(c));
      }
    }
    while (!tok.empty() && tok.back() == '.') tok.pop_back();
    if (alnum && !tok.empty()) out.push_back(std::move(tok));
  }
  return out;
}

using NgramCount = std::pair<std::string, std::size_t>;

inline std::unordered_map<std::string, std::size_t> count_ngrams(const std::vector<std::string>& queries, int n) {
  if (n < 1 || n > 4) throw Error(Errc::InvalidArgument, "n must lie in 1..4");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& q : queries) {
    std::vector<std::string> toks;
    for (auto& t : analytics_tokens(q)) {
      if (!is_stop_word(t)) toks.push_back(std::move(t));
    }
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + un <= toks.size(); ++i) {
      std::string gram = toks[i];
      for (std::size_t k = 1; k < un; ++k) gram += ' ' + toks[i + k];
      ++counts[gram];
    }
  }
  return counts;
}

/// Top-k n-grams by count; ties by gram, ascending.
inline std::vector<NgramCount> top_ngrams(const std::vector<std::string>& queries, int n, std::size_t k) {
  const auto counts = count_ngrams(queries, n);
  std::vector<NgramCount> ranked(counts.begin(), counts.end());
  auto better = [](const NgramCount& a, const NgramCount& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  const std::size_t keep = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), better);
  ranked.resize(keep);
  return ranked;
}

// ---------------------------------------------------------------------------
// Query length

struct LengthStats {
  std::size_t p25 = 0;
  std::size_t median = 0;
  double mean = 0.0;
  std::size_t p75 = 0;
  std::map<std::size_t, std::size_t> histogram;  // length -> queries
};

inline std::size_t word_count(std::string_view q) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : q) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

/// Nearest-rank percentile: the value at 1-based rank ceil(p * N).
inline std::size_t nearest_rank(const std::vector<std::size_t>& sorted, double p) {
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

inline LengthStats length_stats(const std::vector<std::string>& queries) {
  if (queries.empty()) throw Error(Errc::EmptyInput, "no queries");
  std::vector<std::size_t> lens;
  lens.reserve(queries.size());
  LengthStats s;
  double total = 0.0;
  for (const auto& q : queries) {
    const auto n = word_count(q);
    lens.push_back(n);
    ++s.histogram[n];
    total += static_cast<double>(n);
  }
  std::sort(lens.begin(), lens.end());
  s.p25 = nearest_rank(lens, 0.25);
  s.median = nearest_rank(lens, 0.5);
  s.p75 = nearest_rank(lens, 0.75);
  s.mean = total / static_cast<double>(lens.size());
  return s;
}

// ---------------------------------------------------------------------------
// Advanced search operators

namespace detail {

inline const std::regex& token_regex(const char* body) {
  // Keyed by address; only the pattern constants below are passed in.
  thread_local std::map<const char*, std::regex> cache;
  auto it = cache.find(body);
  if (it == cache.end()) {
    it = cache.emplace(body, std::regex(std::string("(^|\\s)(") + body + ")(?=\\s|$)")).first;
  }
  return it->second;
}

constexpr const char* kTagRe = R"(\[[^\]\s*]+\])";
constexpr const char* kMultipleTagsRe = R"(\[[^\]\s*]+\] or \[[^\]\s*]+\])";
constexpr const char* kWildcardRe = R"(\[[^\]]*\*\])";
constexpr const char* kUserRe = R"(user:\d+)";
constexpr const char* kPhraseRe = R"("[^"]+")";
constexpr const char* kExcludeRe = R"(-\w+|-"[^"]+")";
constexpr const char* kQuestionRe = R"(is:question)";
constexpr const char* kAnswersRe = R"(answers:\d+)";
constexpr const char* kScoreRe = R"(score:\d+)";
constexpr const char* kCreatedRe = R"(created:\d{2}-\d{2}-\d{4}(\.\.)?)";

/// True when the pattern occurs; matched text is blanked when `consume`.
inline bool find_and_blank(std::string& text, const char* body, bool consume) {
  const auto& re = token_regex(body);
  bool found = false;
  std::smatch m;
  std::string::const_iterator from = text.cbegin();
  auto flags = std::regex_constants::match_default;
  while (std::regex_search(from, text.cend(), m, re, flags)) {
    flags = std::regex_constants::match_prev_avail;
    found = true;
    const auto pos = static_cast<std::size_t>(m.position(2) + (from - text.cbegin()));
    const auto len = static_cast<std::size_t>(m.length(2));
    if (consume) std::fill_n(text.begin() + static_cast<std::ptrdiff_t>(pos), len, ' ');
    if (!consume) return true;
    from = text.cbegin() + static_cast<std::ptrdiff_t>(pos + std::max<std::size_t>(len, 1));
  }
  return found;
}

}  // namespace detail

/// Every operator kind present in the query. Patterns match whole
/// whitespace-delimited tokens. Tag pairs joined by " or " count as
/// MultipleTags only, and a bracket group with '*' counts as Wildcard only.
inline std::set<AdvancedSearchKind> detect_advanced(std::string_view query) {
  using namespace detail;
  std::set<AdvancedSearchKind> kinds;
  std::string text(query);
  if (find_and_blank(text, kMultipleTagsRe, true)) kinds.insert(AdvancedSearchKind::MultipleTags);
  if (find_and_blank(text, kWildcardRe, true)) kinds.insert(AdvancedSearchKind::Wildcard);
  if (find_and_blank(text, kTagRe, false)) kinds.insert(AdvancedSearchKind::Tag);
  const std::pair<const char*, AdvancedSearchKind> rest[] = {
      {kUserRe, AdvancedSearchKind::User},           {kPhraseRe, AdvancedSearchKind::Phrase},
      {kExcludeRe, AdvancedSearchKind::ExcludePhrase}, {kQuestionRe, AdvancedSearchKind::QuestionOnly},
      {kAnswersRe, AdvancedSearchKind::AnswerCount}, {kScoreRe, AdvancedSearchKind::Score},
      {kCreatedRe, AdvancedSearchKind::CreationDate}};
  for (const auto& [re, kind] : rest) {
    if (find_and_blank(text, re, false)) kinds.insert(kind);
  }
  return kinds;
}

struct AdvancedUsage {
  double overall_ratio = 0.0;                           // queries with any operator / all queries
  std::map<AdvancedSearchKind, double> per_kind;        // share of detected kind occurrences
  std::map<AdvancedSearchKind, std::size_t> counts;
};

inline AdvancedUsage advanced_usage(const std::vector<std::string>& queries) {
  AdvancedUsage u;
  std::size_t with_any = 0;
  std::size_t total = 0;
  for (const auto& q : queries) {
    const auto kinds = detect_advanced(q);
    if (!kinds.empty()) ++with_any;
    for (auto k : kinds) {
      ++u.counts[k];
      ++total;
    }
  }
  if (!queries.empty()) u.overall_ratio = static_cast<double>(with_any) / static_cast<double>(queries.size());
  for (const auto& [k, c] : u.counts) u.per_kind[k] = static_cast<double>(c) / static_cast<double>(total);
  return u;
}

// ---------------------------------------------------------------------------
// Similarity histogram

/// Uniform buckets over [0,1]; bucket i holds [i/b, (i+1)/b), the last one
/// also takes 1.0.
inline std::vector<std::size_t> similarity_histogram(const std::vector<double>& sims, std::size_t buckets) {
  if (buckets < 1) throw Error(Errc::InvalidArgument, "buckets must be >= 1");
  std::vector<std::size_t> h(buckets, 0);
  for (double s : sims) {
    const double c = std::clamp(s, 0.0, 1.0);
    auto i = static_cast<std::size_t>(c * static_cast<double>(buckets));
    ++h[std::min(i, buckets - 1)];
  }
  return h;
}

inline std::vector<std::size_t> similarity_histogram(const std::vector<QueryPair>& pairs, std::size_t buckets) {
  std::vector<double> sims;
  sims.reserve(pairs.size());
  for (const auto& p : pairs) sims.push_back(p.similarity);
  return similarity_histogram(sims, buckets);
}

/// Each consecutive step q_i -> q_i+1 of every thread, with no similarity
/// filter. Mine with an adjacency threshold below zero to keep runs whole.
inline std::vector<QueryPair> reformulation_steps(const std::vector<ReformulationThread>& threads) {
  std::vector<QueryPair> out;
  for (const auto& t : threads) {
    for (std::size_t i = 0; i + 1 < t.queries.size(); ++i) {
      out.push_back({t.queries[i], t.queries[i + 1], lcs_similarity(t.queries[i], t.queries[i + 1]),
                     {t.session_id, 0, i}});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct StatsReport {
  std::array<std::vector<NgramCount>, 4> ngram_tables;
  LengthStats lengths;
  AdvancedUsage advanced;
  std::vector<std::size_t> similarity_histogram;
  std::size_t query_count = 0;
};

inline StatsReport build_report(const std::vector<std::string>& queries, const std::vector<double>& sims,
                                std::size_t top_k = 10, std::size_t buckets = 10) {
  StatsReport r;
  r.query_count = queries.size();
  for (int n = 1; n <= 4; ++n) r.ngram_tables[static_cast<std::size_t>(n - 1)] = top_ngrams(queries, n, top_k);
  if (!queries.empty()) r.lengths = length_stats(queries);
  r.advanced = advanced_usage(queries);
  r.similarity_histogram = similarity_histogram(sims, buckets);
  return r;
}

inline nlohmann::json report_to_json(const StatsReport& r) {
  nlohmann::json j;
  j["query_count"] = r.query_count;
  auto& tables = j["ngram_tables"];
  for (std::size_t n = 0; n < 4; ++n) {
    auto rows = nlohmann::json::array();
    for (const auto& [gram, count] : r.ngram_tables[n]) rows.push_back({{"gram", gram}, {"count", count}});
    tables[std::to_string(n + 1)] = rows;
  }
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [len, c] : r.lengths.histogram) hist[std::to_string(len)] = c;
  j["length_quartiles"] = {{"p25", r.lengths.p25}, {"median", r.lengths.median}, {"mean", r.lengths.mean},
                           {"p75", r.lengths.p75}};
  j["length_histogram"] = hist;
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [k, p] : r.advanced.per_kind) per[std::string(to_string(k))] = p;
  j["advanced_usage"] = {{"overall_ratio", r.advanced.overall_ratio}, {"per_kind", per}};
  j["similarity_histogram"] = r.similarity_histogram;
  return j;
}

}  // namespace sequer
