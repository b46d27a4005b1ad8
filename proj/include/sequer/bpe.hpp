#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sequer/error.hpp"
#include "sequer/similarity.hpp"

namespace sequer {

inline constexpr std::int32_t kPad = 0;
inline constexpr std::int32_t kBos = 1;
inline constexpr std::int32_t kEos = 2;
inline constexpr std::int32_t kUnk = 3;
inline constexpr std::int32_t kNumSpecials = 4;
inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr std::string_view kSpecialNames[] = {"<pad>", "<s>", "</s>", "<unk>"};

using TokenIds = std::vector<std::int32_t>;

inline std::vector<std::string_view> whitespace_words(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

/// Collapses whitespace runs to one space and trims both ends.
inline std::string normalize_ws(std::string_view text) {
  std::string out;
  for (auto w : whitespace_words(text)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

/// Initial symbols of a word: one per character, marker on the last.
inline std::vector<std::string> word_symbols(std::string_view word) {
  std::vector<std::string> syms;
  for (char32_t c : utf8_decode(word)) {
    std::string s;
    utf8_append(s, c);
    syms.push_back(std::move(s));
  }
  if (!syms.empty()) syms.back() += kEndOfWord;
  return syms;
}

class BpeModel {
 public:
  using Merge = std::pair<std::string, std::string>;

  BpeModel() { reset_specials(); }

  [[nodiscard]] std::size_t vocab_size() const noexcept { return tokens_.size(); }
  [[nodiscard]] std::size_t max_vocab() const noexcept { return max_vocab_; }
  [[nodiscard]] const std::vector<Merge>& merges() const noexcept { return merges_; }
  [[nodiscard]] const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  [[nodiscard]] std::int32_t id_of(std::string_view sym) const {
    const auto it = ids_.find(std::string(sym));
    return it == ids_.end() ? kUnk : it->second;
  }

  /// Applies at most `merge_limit` of the learned merges, in rank order.
  [[nodiscard]] TokenIds encode(std::string_view text,
                                std::size_t merge_limit = std::numeric_limits<std::size_t>::max()) const {
    TokenIds out;
    for (auto word : whitespace_words(text)) {
      for (const auto& sym : segment(word, merge_limit)) out.push_back(id_of(sym));
    }
    return out;
  }

  /// Concatenates subwords; markers become single spaces and specials are
  /// skipped.
  [[nodiscard]] std::string decode(const TokenIds& ids) const {
    std::string out;
    for (auto id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw Error(Errc::UnknownId, "token id " + std::to_string(id));
      }
      if (id < kNumSpecials) continue;
      const auto& t = tokens_[static_cast<std::size_t>(id)];
      if (t.size() >= kEndOfWord.size() && std::string_view(t).substr(t.size() - kEndOfWord.size()) == kEndOfWord) {
        out.append(t, 0, t.size() - kEndOfWord.size());
        out += ' ';
      } else {
        out += t;
      }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
  }

  void save(std::ostream& out) const {
    out << "bpe-v1 " << max_vocab_ << '\n';
    for (const auto& [l, r] : merges_) out << l << '\t' << r << '\n';
    out << '\n';
    for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    save(out);
  }

  static BpeModel load(std::istream& in) {
    auto bad = [](const std::string& why) { return Error(Errc::CorruptModelFile, why); };
    BpeModel m;
    std::string line;
    if (!std::getline(in, line) || line.rfind("bpe-v1 ", 0) != 0) throw bad("missing bpe-v1 header");
    try {
      m.max_vocab_ = std::stoul(line.substr(7));
    } catch (const std::exception&) {
      throw bad("bad max_vocab in header");
    }
    std::vector<Merge> merges;
    while (std::getline(in, line) && !line.empty()) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw bad("merge line without tab: " + line);
      merges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    std::vector<std::string> tokens;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw bad("vocab line without tab: " + line);
      std::size_t id = 0;
      try {
        id = std::stoul(line.substr(tab + 1));
      } catch (const std::exception&) {
        throw bad("bad id: " + line);
      }
      if (id != tokens.size()) throw bad("vocab ids must be dense and ascending");
      tokens.push_back(line.substr(0, tab));
    }
    if (tokens.size() < static_cast<std::size_t>(kNumSpecials)) throw bad("vocabulary lacks specials");
    for (std::int32_t i = 0; i < kNumSpecials; ++i) {
      if (tokens[static_cast<std::size_t>(i)] != kSpecialNames[i]) throw bad("specials out of place");
    }
    m.tokens_ = std::move(tokens);
    m.ids_.clear();
    for (std::size_t i = kNumSpecials; i < m.tokens_.size(); ++i) {
      if (!m.ids_.emplace(m.tokens_[i], static_cast<std::int32_t>(i)).second) throw bad("duplicate subword");
    }
    for (const auto& mg : merges) {
      const auto l = m.ids_.find(mg.first), r = m.ids_.find(mg.second), j = m.ids_.find(mg.first + mg.second);
      if (l == m.ids_.end() || r == m.ids_.end() || j == m.ids_.end()) {
        throw bad("merge refers to unknown subwords: " + mg.first + " " + mg.second);
      }
      m.add_merge(mg.first, mg.second);
    }
    return m;
  }

  static BpeModel load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    return load(in);
  }

  friend bool operator==(const BpeModel& a, const BpeModel& b) {
    return a.max_vocab_ == b.max_vocab_ && a.merges_ == b.merges_ && a.tokens_ == b.tokens_;
  }

 private:
  friend BpeModel train_bpe(const std::vector<std::string>& corpus, std::size_t max_vocab);

  void reset_specials() {
    tokens_.assign(std::begin(kSpecialNames), std::end(kSpecialNames));
    ids_.clear();
  }

  std::int32_t add_token(const std::string& t) {
    const auto [it, inserted] = ids_.emplace(t, static_cast<std::int32_t>(tokens_.size()));
    if (inserted) tokens_.push_back(t);
    return it->second;
  }

  void add_merge(const std::string& l, const std::string& r) {
    ranks_.emplace(Merge{l, r}, merges_.size());
    merges_.emplace_back(l, r);
  }

  [[nodiscard]] std::vector<std::string> segment(std::string_view word, std::size_t merge_limit) const {
    auto syms = word_symbols(word);
    while (syms.size() > 1) {
      std::size_t best_rank = std::numeric_limits<std::size_t>::max();
      std::size_t best_at = 0;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        const auto it = ranks_.find(Merge{syms[i], syms[i + 1]});
        if (it != ranks_.end() && it->second < best_rank) {
          best_rank = it->second;
          best_at = i;
        }
      }
      if (best_rank >= merge_limit || best_rank == std::numeric_limits<std::size_t>::max()) break;
      const auto& [l, r] = merges_[best_rank];
      std::vector<std::string> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i >= best_at && i + 1 < syms.size() && syms[i] == l && syms[i + 1] == r) {
          next.push_back(l + r);
          ++i;
        } else {
          next.push_back(std::move(syms[i]));
        }
      }
      syms = std::move(next);
    }
    return syms;
  }

  std::size_t max_vocab_ = 10'000;
  std::vector<Merge> merges_;
  std::map<Merge, std::size_t> ranks_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

/// Smallest vocabulary a corpus admits: specials plus each character in
/// its plain and word-final form.
inline std::size_t base_vocab_size(const std::vector<std::string>& corpus) {
  std::set<char32_t> alphabet;
  for (const auto& line : corpus) {
    for (auto w : whitespace_words(line)) {
      for (char32_t c : utf8_decode(w)) alphabet.insert(c);
    }
  }
  return kNumSpecials + 2 * alphabet.size();
}

/// Greedy merge learning over the word frequency table. Each round merges
/// the most frequent adjacent pair, ties going to the lexicographically
/// smallest (left, right); training stops once the vocabulary reaches
/// `max_vocab` or no pair occurs more than once.
inline BpeModel train_bpe(const std::vector<std::string>& corpus, std::size_t max_vocab = 10'000) {
  std::map<std::string, std::int64_t> word_freq;
  for (const auto& line : corpus) {
    for (auto w : whitespace_words(line)) ++word_freq[std::string(w)];
  }
  if (word_freq.empty()) throw Error(Errc::EmptyCorpus, "corpus has no words");

  BpeModel m;
  m.max_vocab_ = max_vocab;
  std::set<char32_t> alphabet;
  for (const auto& [w, _] : word_freq) {
    for (char32_t c : utf8_decode(w)) alphabet.insert(c);
  }
  for (char32_t c : alphabet) {
    std::string s;
    utf8_append(s, c);
    m.add_token(s);
    m.add_token(s + std::string(kEndOfWord));
  }
  if (m.vocab_size() > max_vocab) {
    throw Error(Errc::InvalidArgument, "max_vocab " + std::to_string(max_vocab) + " is below the base vocabulary of " +
                                           std::to_string(m.vocab_size()));
  }

  // Words as id sequences; pair counts maintained incrementally.
  struct Word {
    std::vector<std::int32_t> syms;
    std::int64_t freq;
  };
  std::vector<Word> words;
  for (const auto& [w, f] : word_freq) {
    Word word{{}, f};
    for (const auto& s : word_symbols(w)) word.syms.push_back(m.id_of(s));
    words.push_back(std::move(word));
  }

  using Pair = std::pair<std::int32_t, std::int32_t>;
  std::map<Pair, std::int64_t> counts;
  std::map<Pair, std::set<std::size_t>> where;
  // Ordered by (count desc, left text, right text).
  auto order = [&m](const std::tuple<std::int64_t, std::int32_t, std::int32_t>& a,
                    const std::tuple<std::int64_t, std::int32_t, std::int32_t>& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    const auto& al = m.tokens_[static_cast<std::size_t>(std::get<1>(a))];
    const auto& bl = m.tokens_[static_cast<std::size_t>(std::get<1>(b))];
    if (al != bl) return al < bl;
    return m.tokens_[static_cast<std::size_t>(std::get<2>(a))] < m.tokens_[static_cast<std::size_t>(std::get<2>(b))];
  };
  std::set<std::tuple<std::int64_t, std::int32_t, std::int32_t>, decltype(order)> heap(order);

  auto adjust = [&](const Pair& p, std::int64_t delta, std::size_t w) {
    auto& c = counts[p];
    if (c > 0) heap.erase({c, p.first, p.second});
    c += delta;
    if (c > 0) heap.insert({c, p.first, p.second});
    if (delta > 0) where[p].insert(w);
  };
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto& s = words[w].syms;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) adjust({s[i], s[i + 1]}, words[w].freq, w);
  }

  while (m.vocab_size() < max_vocab && !heap.empty()) {
    const auto [count, left, right] = *heap.begin();
    if (count <= 1) break;
    const std::string lt = m.tokens_[static_cast<std::size_t>(left)];
    const std::string rt = m.tokens_[static_cast<std::size_t>(right)];
    const std::int32_t merged = m.add_token(lt + rt);
    m.add_merge(lt, rt);
    const auto affected = where[{left, right}];
    for (std::size_t w : affected) {
      auto& s = words[w].syms;
      const auto f = words[w].freq;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) adjust({s[i], s[i + 1]}, -f, w);
      std::vector<std::int32_t> next;
      next.reserve(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(s[i]);
        }
      }
      s = std::move(next);
      for (std::size_t i = 0; i + 1 < s.size(); ++i) adjust({s[i], s[i + 1]}, f, w);
    }
  }
  return m;
}

}  // namespace sequer
