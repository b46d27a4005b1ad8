#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sequer/error.hpp"

namespace sequer {

struct PostDoc {
  std::string post_id;
  std::string title;
  std::string body;
};

/// Lowercased alphanumeric runs; every other byte separates tokens.
inline std::vector<std::string> retrieval_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct ScoredDoc {
  std::string post_id;
  double score = 0.0;
};

/// Okapi BM25 over title+body, title tokens counted twice. The idf is
/// ln(1 + (N - df + 0.5) / (df + 0.5)), which stays positive for every df.
class Bm25Index {
 public:
  explicit Bm25Index(const std::vector<PostDoc>& posts, Bm25Params params = {}) : params_(params) {
    // Documents are laid out in post_id order, so insertion order never
    // matters.
    std::vector<const PostDoc*> sorted;
    sorted.reserve(posts.size());
    for (const auto& p : posts) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(), [](const PostDoc* a, const PostDoc* b) { return a->post_id < b->post_id; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      if (sorted[i]->post_id == sorted[i - 1]->post_id) {
        throw Error(Errc::InvalidArgument, "duplicate post_id " + sorted[i]->post_id);
      }
    }
    double total_len = 0.0;
    for (std::size_t d = 0; d < sorted.size(); ++d) {
      const PostDoc& p = *sorted[d];
      ids_.push_back(p.post_id);
      std::map<std::string, std::uint32_t> tf;
      std::uint32_t len = 0;
      for (const auto& t : retrieval_tokens(p.title)) {
        tf[t] += 2;
        len += 2;
      }
      for (const auto& t : retrieval_tokens(p.body)) {
        tf[t] += 1;
        len += 1;
      }
      lengths_.push_back(len);
      total_len += len;
      for (const auto& [term, f] : tf) postings_[term].push_back({static_cast<std::uint32_t>(d), f});
    }
    avg_len_ = ids_.empty() ? 0.0 : total_len / static_cast<double>(ids_.size());
    for (std::size_t d = 0; d < ids_.size(); ++d) position_[ids_[d]] = d;
  }

  [[nodiscard]] std::size_t size() const noexcept { return ids_.size(); }
  [[nodiscard]] bool contains(const std::string& post_id) const { return position_.count(post_id) != 0; }
  [[nodiscard]] double average_length() const noexcept { return avg_len_; }
  [[nodiscard]] const Bm25Params& params() const noexcept { return params_; }

  [[nodiscard]] double idf(std::size_t df) const {
    const double n = static_cast<double>(ids_.size());
    const double f = static_cast<double>(df);
    return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
  }

  /// Documents matching at least one query term, best first; equal scores
  /// fall back to post_id order.
  [[nodiscard]] std::vector<ScoredDoc> search(std::string_view query, std::size_t cutoff) const {
    std::vector<double> scores(ids_.size(), 0.0);
    std::vector<bool> hit(ids_.size(), false);
    for (const auto& term : retrieval_tokens(query)) {
      const auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      const double w = idf(it->second.size());
      for (const auto& [doc, f] : it->second) {
        const double tf = static_cast<double>(f);
        const double norm = params_.k1 * (1.0 - params_.b + params_.b * lengths_[doc] / avg_len_);
        scores[doc] += w * tf * (params_.k1 + 1.0) / (tf + norm);
        hit[doc] = true;
      }
    }
    std::vector<std::uint32_t> docs;
    for (std::uint32_t d = 0; d < ids_.size(); ++d) {
      if (hit[d]) docs.push_back(d);
    }
    auto better = [&](std::uint32_t a, std::uint32_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;  // doc order is post_id order
    };
    const std::size_t keep = std::min(cutoff, docs.size());
    std::partial_sort(docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(keep), docs.end(), better);
    std::vector<ScoredDoc> out;
    for (std::size_t i = 0; i < keep; ++i) out.push_back({ids_[docs[i]], scores[docs[i]]});
    return out;
  }

  /// 1-based rank of `post_id` within the top `cutoff`, 0 when absent.
  [[nodiscard]] std::size_t rank_of(std::string_view query, const std::string& post_id, std::size_t cutoff) const {
    if (!contains(post_id)) throw Error(Errc::UnknownTargetPost, post_id);
    const auto hits = search(query, cutoff);
    for (std::size_t i = 0; i < hits.size(); ++i) {
      if (hits[i].post_id == post_id) return i + 1;
    }
    return 0;
  }

 private:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
  };

  Bm25Params params_;
  std::vector<std::string> ids_;
  std::vector<std::uint32_t> lengths_;
  double avg_len_ = 0.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::unordered_map<std::string, std::size_t> position_;
};

inline Bm25Index build_index(const std::vector<PostDoc>& posts, Bm25Params params = {}) {
  return Bm25Index(posts, params);
}

inline double reciprocal_rank(std::size_t rank) { return rank == 0 ? 0.0 : 1.0 / static_cast<double>(rank); }

struct RetrievalQuery {
  std::string query;
  std::string target_post;
};

/// Mean reciprocal rank of each target within the top `cutoff` results.
inline double mrr(const Bm25Index& index, const std::vector<RetrievalQuery>& queries, std::size_t cutoff = 100) {
  if (cutoff < 1) throw Error(Errc::InvalidArgument, "cutoff must be >= 1");
  if (queries.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& q : queries) sum += reciprocal_rank(index.rank_of(q.query, q.target_post, cutoff));
  return sum / static_cast<double>(queries.size());
}

inline std::vector<PostDoc> read_posts(std::istream& in) {
  std::vector<PostDoc> posts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      posts.push_back({j.at("post_id").is_string() ? j.at("post_id").get<std::string>() : j.at("post_id").dump(),
                       j.value("title", ""), j.value("body", "")});
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::MalformedLine, "posts line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return posts;
}

inline void write_posts(std::ostream& out, const std::vector<PostDoc>& posts) {
  for (const auto& p : posts) {
    out << nlohmann::json{{"post_id", p.post_id}, {"title", p.title}, {"body", p.body}}.dump() << '\n';
  }
}

}  // namespace sequer
