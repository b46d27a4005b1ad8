#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include "sequer/bpe.hpp"
#include "sequer/error.hpp"
#include "sequer/transducer.hpp"

namespace sequer {

/// Anything that scores the next token for a batch of equal-length,
/// BOS-prefixed prefixes. Row i of the result holds log P(w | prefixes[i])
/// for every id w; -inf marks ids that may not be generated.
template <class M>
concept StepModel = requires(const M& m, const std::vector<std::vector<std::int32_t>>& prefixes) {
  { m.vocab_size() } -> std::convertible_to<std::size_t>;
  { m.next_log_probs(prefixes) } -> std::convertible_to<Eigen::MatrixXd>;
};

struct BeamHypothesis {
  std::vector<std::int32_t> ids;  // no BOS, no EOS
  double log_prob_sum = 0.0;
  bool finished = false;
  double score = 0.0;
};

/// log_prob_sum / max(1, L)^alpha; a zero-token hypothesis uses L = 1.
inline double beam_score(double log_prob_sum, std::size_t length, double alpha) {
  return log_prob_sum / std::pow(static_cast<double>(std::max<std::size_t>(1, length)), alpha);
}

namespace detail {

inline bool better(double sa, const std::vector<std::int32_t>& a, double sb, const std::vector<std::int32_t>& b) {
  if (sa != sb) return sa > sb;
  return a < b;
}

}  // namespace detail

/// Length-normalized beam search for at most max_steps tokens (EOS included).
/// Each step keeps the k best continuations by cumulative log-probability;
/// those ending in EOS move to the finished pool. Unfinished beams left at
/// max_steps join the pool as they are. Ranked by score, ties by id order.
template <StepModel M>
std::vector<BeamHypothesis> beam_search(const M& model, std::size_t k, double alpha, std::size_t max_steps) {
  if (k < 1) throw Error(Errc::InvalidBeamSize, "beam size must be >= 1");
  if (max_steps < 1) throw Error(Errc::InvalidArgument, "max_steps must be >= 1");

  struct Live {
    std::vector<std::int32_t> prefix;  // BOS-prefixed
    double lp;
  };
  struct Cand {
    std::size_t beam;
    std::int32_t token;
    double lp;
  };
  std::vector<Live> live{{{kBos}, 0.0}};
  std::vector<BeamHypothesis> pool;

  for (std::size_t step = 0; step < max_steps && !live.empty(); ++step) {
    std::vector<std::vector<std::int32_t>> prefixes;
    prefixes.reserve(live.size());
    for (const auto& h : live) prefixes.push_back(h.prefix);
    const Eigen::MatrixXd lp = model.next_log_probs(prefixes);
    if (lp.rows() != static_cast<Eigen::Index>(live.size()) ||
        lp.cols() != static_cast<Eigen::Index>(model.vocab_size())) {
      throw Error(Errc::ShapeMismatch, "step model returned the wrong shape");
    }
    std::vector<Cand> cands;
    cands.reserve(live.size() * model.vocab_size());
    for (std::size_t b = 0; b < live.size(); ++b) {
      for (Eigen::Index w = 0; w < lp.cols(); ++w) {
        const double v = lp(static_cast<Eigen::Index>(b), w);
        if (v == -std::numeric_limits<double>::infinity()) continue;
        cands.push_back({b, static_cast<std::int32_t>(w), live[b].lp + v});
      }
    }
    // Live beams stay sorted by id order among equals, so (beam, token)
    // order is the lexicographic order of the extended prefixes.
    const std::size_t keep = std::min(k, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [&](const Cand& a, const Cand& b) {
                        if (a.lp != b.lp) return a.lp > b.lp;
                        if (a.beam != b.beam) return live[a.beam].prefix < live[b.beam].prefix;
                        return a.token < b.token;
                      });
    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      if (c.token == kEos) {
        BeamHypothesis h;
        h.ids.assign(live[c.beam].prefix.begin() + 1, live[c.beam].prefix.end());
        h.log_prob_sum = c.lp;
        h.finished = true;
        h.score = beam_score(c.lp, h.ids.size(), alpha);
        pool.push_back(std::move(h));
      } else {
        auto p = live[c.beam].prefix;
        p.push_back(c.token);
        next.push_back({std::move(p), c.lp});
      }
    }
    live = std::move(next);
  }
  for (auto& h : live) {
    BeamHypothesis b;
    b.ids.assign(h.prefix.begin() + 1, h.prefix.end());
    b.log_prob_sum = h.lp;
    b.score = beam_score(h.lp, b.ids.size(), alpha);
    pool.push_back(std::move(b));
  }
  std::sort(pool.begin(), pool.end(), [](const BeamHypothesis& a, const BeamHypothesis& b) {
    return detail::better(a.score, a.ids, b.score, b.ids);
  });
  if (pool.size() > k) pool.resize(k);
  return pool;
}

/// Argmax decoding with ties to the lower id.
template <StepModel M>
BeamHypothesis greedy_decode(const M& model, double alpha, std::size_t max_steps) {
  std::vector<std::int32_t> prefix{kBos};
  BeamHypothesis h;
  for (std::size_t step = 0; step < max_steps; ++step) {
    const Eigen::MatrixXd lp = model.next_log_probs({prefix});
    Eigen::Index best = 0;
    for (Eigen::Index w = 1; w < lp.cols(); ++w) {
      if (lp(0, w) > lp(0, best)) best = w;
    }
    h.log_prob_sum += lp(0, best);
    if (best == kEos) {
      h.finished = true;
      break;
    }
    prefix.push_back(static_cast<std::int32_t>(best));
  }
  h.ids.assign(prefix.begin() + 1, prefix.end());
  h.score = beam_score(h.log_prob_sum, h.ids.size(), alpha);
  return h;
}

/// Adapts a transducer and one source sentence to StepModel. The encoder runs
/// once; PAD and BOS are never generated.
template <class T>
class TransducerStep {
 public:
  TransducerStep(const Transducer<T>& model, std::vector<std::int32_t> src)
      : model_(&model), src_(std::move(src)), memory_(model.encoder_states(src_)) {}

  [[nodiscard]] std::size_t vocab_size() const { return model_->config().vocab_size; }

  [[nodiscard]] Eigen::MatrixXd next_log_probs(const std::vector<std::vector<std::int32_t>>& prefixes) const {
    Eigen::MatrixXd lp = model_->next_log_probs(memory_, src_, prefixes).template cast<double>();
    lp.col(kPad).setConstant(-std::numeric_limits<double>::infinity());
    lp.col(kBos).setConstant(-std::numeric_limits<double>::infinity());
    return lp;
  }

 private:
  const Transducer<T>* model_;
  std::vector<std::int32_t> src_;
  ad::Mat<T> memory_;
};

struct Suggestion {
  std::string text;
  double score = 0.0;

  friend bool operator==(const Suggestion&, const Suggestion&) = default;
};

inline constexpr std::size_t kDefaultBeam = 10;
inline constexpr double kDefaultAlpha = 0.6;

/// Beam-decodes a query and returns at most k distinct non-empty strings,
/// best first. Queries longer than the model allows are truncated.
template <class T>
std::vector<Suggestion> suggest(const Transducer<T>& model, const BpeModel& bpe, std::string_view query,
                                std::size_t k = kDefaultBeam, double alpha = kDefaultAlpha) {
  if (normalize_ws(query).empty()) throw Error(Errc::EmptyQuery, "query is empty");
  const auto max_len = model.config().max_len;
  TransducerStep<T> step(model, source_sequence(bpe.encode(query), max_len));
  const auto beams = beam_search(step, k, alpha, max_len);
  std::vector<Suggestion> out;
  std::unordered_set<std::string> seen;
  for (const auto& h : beams) {
    std::string text = bpe.decode(h.ids);
    if (text.empty() || !seen.insert(text).second) continue;
    out.push_back({std::move(text), h.score});
  }
  return out;
}

}  // namespace sequer
