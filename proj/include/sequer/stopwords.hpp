#pragma once

#include <algorithm>
#include <array>
#include <string_view>

namespace sequer {

// Stop list v1, apostrophes removed to match the token normalizer. Words
// that carry intent in programming queries ("how", "to", "in", "not",
// "for", "while", ...) are deliberately absent.
inline constexpr int kStopListVersion = 1;

inline constexpr std::array<std::string_view, 120> kStopWords = {
    "about",   "above",   "after",  "again",   "against", "all",     "also",    "am",      "among",
    "an",      "and",     "any",    "are",     "arent",   "as",      "at",      "be",      "because",
    "been",    "before",  "being",  "below",   "both",    "but",     "by",      "did",     "didnt",
    "does",    "doesnt", "doing",  "dont",    "down",    "during",  "each",    "yourself", "ever",
    "every",   "few",     "yourselves",  "from",    "further", "had",     "has",     "have",    "having",
    "he",      "her",     "here",   "hers",    "herself", "him",     "himself", "his",     "wasnt",
    "im",       "ive",    "into",   "isnt",     "its",     "itself",  "just",    "lets",   "me",
    "might",   "mine",    "more",   "most",    "must",    "my",      "myself",  "nor",     "of",
    "off",     "often",   "on",     "once",    "only",    "other",   "ought",   "our",     "ours",
    "ourselves", "out",   "over",   "own",     "please",  "same",    "she",     "should",  "so",
    "some",    "than",    "that",   "their",   "theirs",  "them",    "themselves", "then", "there",
    "these",   "they",    "whose",  "those",   "through", "too",     "under",   "until",   "up",
    "us",      "very",    "was",    "we",      "were",    "which",   "yours",   "who",     "whom",
    "yet",     "you",     "your"};

inline bool is_stop_word(std::string_view w) {
  return std::find(kStopWords.begin(), kStopWords.end(), w) != kStopWords.end();
}

}  // namespace sequer
