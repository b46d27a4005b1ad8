#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sequer/bpe.hpp"
#include "sequer/error.hpp"

namespace sequer {

using Tokens = std::vector<std::string>;

inline Tokens tokens_of(std::string_view text) {
  Tokens out;
  for (auto w : whitespace_words(text)) out.emplace_back(w);
  return out;
}

// ---------------------------------------------------------------------------
// GLEU

inline constexpr std::size_t kGleuOrder = 4;

/// Clipped counts for one sentence, summable across a corpus.
struct GleuCounts {
  std::array<double, kGleuOrder> numerator{};    // before the max(0, .) clip
  std::array<double, kGleuOrder> denominator{};  // hypothesis n-grams
  double hyp_len = 0;
  double ref_len = 0;

  GleuCounts& operator+=(const GleuCounts& o) {
    for (std::size_t n = 0; n < kGleuOrder; ++n) {
      numerator[n] += o.numerator[n];
      denominator[n] += o.denominator[n];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }
};

namespace detail {

inline std::map<std::vector<std::string_view>, double> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<std::vector<std::string_view>, double> c;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    std::vector<std::string_view> g;
    for (std::size_t k = i; k < i + n; ++k) g.emplace_back(t[k]);
    c[g] += 1;
  }
  return c;
}

inline double count_in(const std::map<std::vector<std::string_view>, double>& m,
                       const std::vector<std::string_view>& g) {
  const auto it = m.find(g);
  return it == m.end() ? 0.0 : it->second;
}

}  // namespace detail

inline GleuCounts gleu_counts(const Tokens& source, const Tokens& hypothesis, const Tokens& reference) {
  GleuCounts c;
  c.hyp_len = static_cast<double>(hypothesis.size());
  c.ref_len = static_cast<double>(reference.size());
  for (std::size_t n = 1; n <= kGleuOrder; ++n) {
    const auto H = detail::ngram_counts(hypothesis, n);
    const auto S = detail::ngram_counts(source, n);
    const auto R = detail::ngram_counts(reference, n);
    double match = 0, penalty = 0, total = 0;
    for (const auto& [g, h] : H) {
      const double hr = std::min(h, detail::count_in(R, g));
      const double hs = std::min(h, detail::count_in(S, g));
      match += hr;
      penalty += std::max(0.0, hs - hr);
      total += h;
    }
    c.numerator[n - 1] = match - penalty;
    c.denominator[n - 1] = total;
  }
  return c;
}

struct GleuResult {
  double value = 0.0;
  bool empty_hypothesis = false;
  std::array<double, kGleuOrder> precision{};  // after clipping and smoothing; 0 for skipped orders
  double brevity_penalty = 0.0;
};

/// BP * exp(mean ln p_n). A zero p_n is smoothed to 1 / (2 * hypothesis
/// n-grams); orders where the hypothesis has no n-grams are left out and the
/// remaining weights renormalized. An empty hypothesis scores 0 and is
/// flagged.
inline GleuResult gleu_from_counts(const GleuCounts& c) {
  GleuResult r;
  if (c.hyp_len == 0) {
    r.empty_hypothesis = true;
    return r;
  }
  double log_sum = 0;
  int orders = 0;
  for (std::size_t n = 0; n < kGleuOrder; ++n) {
    if (c.denominator[n] == 0) continue;
    double p = std::max(0.0, c.numerator[n]) / c.denominator[n];
    if (p == 0) p = 1.0 / (2.0 * c.denominator[n]);
    r.precision[n] = p;
    log_sum += std::log(p);
    ++orders;
  }
  r.brevity_penalty = std::min(1.0, std::exp(1.0 - c.ref_len / c.hyp_len));
  r.value = r.brevity_penalty * std::exp(log_sum / orders);
  return r;
}

inline GleuResult sentence_gleu(const Tokens& source, const Tokens& hypothesis, const Tokens& reference) {
  return gleu_from_counts(gleu_counts(source, hypothesis, reference));
}

inline GleuResult sentence_gleu(std::string_view source, std::string_view hypothesis, std::string_view reference) {
  return sentence_gleu(tokens_of(source), tokens_of(hypothesis), tokens_of(reference));
}

inline GleuResult corpus_gleu(const std::vector<std::string>& sources, const std::vector<std::string>& hypotheses,
                              const std::vector<std::string>& references) {
  if (sources.size() != hypotheses.size() || sources.size() != references.size()) {
    throw Error(Errc::LengthMismatch, "corpus sizes differ");
  }
  GleuCounts total;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    total += gleu_counts(tokens_of(sources[i]), tokens_of(hypotheses[i]), tokens_of(references[i]));
  }
  return gleu_from_counts(total);
}

// ---------------------------------------------------------------------------
// Phrase edits and M2

struct Edit {
  std::size_t begin = 0;  // source span [begin, end)
  std::size_t end = 0;
  Tokens replacement;

  friend bool operator==(const Edit&, const Edit&) = default;
  friend auto operator<=>(const Edit&, const Edit&) = default;
};

enum class EditOp { Match, Substitute, Delete, Insert };

/// Minimal word-level alignment, source to target, in forward order. Ties in
/// the backtrace prefer match, then substitution, deletion, insertion.
inline std::vector<EditOp> align(const Tokens& a, const Tokens& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  std::vector<EditOp> ops;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && a[i - 1] == b[j - 1] && d[i][j] == d[i - 1][j - 1]) {
      ops.push_back(EditOp::Match);
      --i, --j;
    } else if (i > 0 && j > 0 && a[i - 1] != b[j - 1] && d[i][j] == d[i - 1][j - 1] + 1) {
      ops.push_back(EditOp::Substitute);
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ops.push_back(EditOp::Delete);
      --i;
    } else {
      ops.push_back(EditOp::Insert);
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

/// Merges maximal runs of non-match operations into phrase edits.
inline std::vector<Edit> edits_from_ops(const std::vector<EditOp>& ops, const Tokens& target) {
  std::vector<Edit> out;
  std::size_t i = 0, j = 0;
  std::optional<Edit> run;
  for (EditOp op : ops) {
    if (op == EditOp::Match) {
      if (run) out.push_back(std::move(*run)), run.reset();
      ++i, ++j;
      continue;
    }
    if (!run) run = Edit{i, i, {}};
    if (op != EditOp::Insert) ++i;
    if (op != EditOp::Delete) run->replacement.push_back(target[j++]);
    run->end = i;
  }
  if (run) out.push_back(std::move(*run));
  return out;
}

inline std::vector<Edit> extract_edits(const Tokens& source, const Tokens& target) {
  return edits_from_ops(align(source, target), target);
}

inline std::vector<Edit> extract_edits(std::string_view source, std::string_view target) {
  return extract_edits(tokens_of(source), tokens_of(target));
}

inline Tokens apply_edits(const Tokens& source, const std::vector<Edit>& edits) {
  Tokens out;
  std::size_t i = 0;
  for (const auto& e : edits) {
    out.insert(out.end(), source.begin() + static_cast<std::ptrdiff_t>(i),
               source.begin() + static_cast<std::ptrdiff_t>(e.begin));
    out.insert(out.end(), e.replacement.begin(), e.replacement.end());
    i = e.end;
  }
  out.insert(out.end(), source.begin() + static_cast<std::ptrdiff_t>(i), source.end());
  return out;
}

struct M2Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0;
  std::size_t proposed = 0;
  std::size_t gold = 0;
};

/// Corpus P/R/F1 over exact edit matches. No proposed edits gives P = 1,
/// no gold edits gives R = 1.
inline M2Score m2_score(const std::vector<std::string>& sources, const std::vector<std::string>& hypotheses,
                        const std::vector<std::string>& references) {
  if (sources.size() != hypotheses.size() || sources.size() != references.size()) {
    throw Error(Errc::LengthMismatch, "corpus sizes differ");
  }
  M2Score s;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto src = tokens_of(sources[i]);
    auto sys = extract_edits(src, tokens_of(hypotheses[i]));
    auto gold = extract_edits(src, tokens_of(references[i]));
    s.proposed += sys.size();
    s.gold += gold.size();
    std::sort(sys.begin(), sys.end());
    std::sort(gold.begin(), gold.end());
    std::vector<Edit> common;
    std::set_intersection(sys.begin(), sys.end(), gold.begin(), gold.end(), std::back_inserter(common));
    s.matched += common.size();
  }
  s.precision = s.proposed == 0 ? 1.0 : static_cast<double>(s.matched) / static_cast<double>(s.proposed);
  s.recall = s.gold == 0 ? 1.0 : static_cast<double>(s.matched) / static_cast<double>(s.gold);
  s.f1 = s.precision + s.recall == 0 ? 0.0 : 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

// ---------------------------------------------------------------------------
// EM@k

inline const std::vector<std::size_t> kDefaultEmCutoffs{1, 5, 10};

/// Fraction of items whose first k candidates contain the reference after
/// whitespace normalization. Case-sensitive.
inline std::map<std::size_t, double> em_at_k(const std::vector<std::vector<std::string>>& candidates,
                                             const std::vector<std::string>& references,
                                             const std::vector<std::size_t>& ks = kDefaultEmCutoffs) {
  if (candidates.size() != references.size()) throw Error(Errc::LengthMismatch, "candidate and reference counts");
  std::map<std::size_t, double> out;
  for (auto k : ks) out[k] = 0.0;
  if (references.empty()) return out;
  for (std::size_t i = 0; i < references.size(); ++i) {
    const std::string ref = normalize_ws(references[i]);
    std::size_t rank = 0;
    for (std::size_t r = 0; r < candidates[i].size(); ++r) {
      if (normalize_ws(candidates[i][r]) == ref) {
        rank = r + 1;
        break;
      }
    }
    if (rank == 0) continue;
    for (auto k : ks) {
      if (rank <= k) out[k] += 1.0;
    }
  }
  for (auto& [k, v] : out) v /= static_cast<double>(references.size());
  return out;
}

// ---------------------------------------------------------------------------

struct MetricReport {
  double gleu = 0.0;
  double m2_p = 0.0;
  double m2_r = 0.0;
  double m2_f1 = 0.0;
  std::map<std::size_t, double> em_at;
  std::optional<double> mrr;
  std::optional<double> mrr_original;
  std::size_t n = 0;
};

inline nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json em = nlohmann::json::object();
  for (const auto& [k, v] : r.em_at) em[std::to_string(k)] = v;
  nlohmann::json j{{"gleu", r.gleu}, {"m2_p", r.m2_p}, {"m2_r", r.m2_r}, {"m2_f1", r.m2_f1}, {"em_at", em}, {"n", r.n}};
  j["mrr"] = r.mrr ? nlohmann::json(*r.mrr) : nlohmann::json(nullptr);
  if (r.mrr_original) j["mrr_original"] = *r.mrr_original;
  return j;
}

/// Scores ranked candidate lists against references. GLEU and M2 use the
/// top candidate of each item (an empty string when there is none).
inline MetricReport evaluate_candidates(const std::vector<std::string>& sources,
                                        const std::vector<std::vector<std::string>>& candidates,
                                        const std::vector<std::string>& references) {
  if (sources.size() != candidates.size() || sources.size() != references.size()) {
    throw Error(Errc::LengthMismatch, "corpus sizes differ");
  }
  std::vector<std::string> top;
  for (const auto& c : candidates) top.push_back(c.empty() ? std::string() : c.front());
  MetricReport r;
  r.n = sources.size();
  r.gleu = corpus_gleu(sources, top, references).value;
  const auto m2 = m2_score(sources, top, references);
  r.m2_p = m2.precision;
  r.m2_r = m2.recall;
  r.m2_f1 = m2.f1;
  r.em_at = em_at_k(candidates, references);
  return r;
}

}  // namespace sequer
