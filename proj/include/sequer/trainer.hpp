#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sequer/adam.hpp"
#include "sequer/bpe.hpp"
#include "sequer/miner.hpp"
#include "sequer/random.hpp"
#include "sequer/transducer.hpp"

namespace sequer {

enum class Precision { F32, F64 };

inline Precision parse_precision(std::string_view s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw Error(Errc::InvalidArgument, "precision must be f32 or f64");
}

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  Precision precision = Precision::F32;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error(Errc::InvalidArgument, "learning_rate must be > 0");
    if (batch_size < 1) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");
  }
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> valid_loss;
  double seconds = 0.0;
};

struct EncodedPairs {
  std::vector<TokenIds> src;
  std::vector<TokenIds> tgt;

  [[nodiscard]] std::size_t size() const noexcept { return src.size(); }
};

inline EncodedPairs encode_pairs(const std::vector<QueryPair>& pairs, const BpeModel& bpe) {
  EncodedPairs e;
  for (const auto& p : pairs) {
    e.src.push_back(bpe.encode(p.original));
    e.tgt.push_back(bpe.encode(p.reformulated));
  }
  return e;
}

inline Batch batch_of(const EncodedPairs& data, const std::vector<std::size_t>& order, std::size_t from,
                      std::size_t to, std::size_t max_len) {
  std::vector<const TokenIds*> s, t;
  for (std::size_t i = from; i < to; ++i) {
    s.push_back(&data.src[order[i]]);
    t.push_back(&data.tgt[order[i]]);
  }
  return make_batch(s, t, max_len);
}

/// Token-weighted mean loss over a data set, no dropout and no gradients.
template <class T>
double evaluate_loss(const Transducer<T>& model, const EncodedPairs& data, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  std::size_t tokens = 0;
  auto& m = const_cast<Transducer<T>&>(model);
  for (std::size_t from = 0; from < data.size(); from += batch_size) {
    const auto b = batch_of(data, order, from, std::min(data.size(), from + batch_size), model.config().max_len);
    ad::Tape<T> tape(false);
    const double loss = static_cast<double>(tape.value(m.loss(tape, b, nullptr))(0, 0));
    const auto n = static_cast<std::size_t>(std::count_if(b.gold.begin(), b.gold.end(), [](auto id) { return id != kPad; }));
    total += loss * static_cast<double>(n);
    tokens += n;
  }
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

template <class T>
struct TrainResult {
  Transducer<T> model;  // parameters from the best validation epoch
  std::vector<EpochStats> curve;
  std::size_t best_epoch = 0;
};

/// Called after every epoch with the current parameters; returning false
/// stops training.
template <class T>
using EpochCallback = std::function<bool(const EpochStats&, const Transducer<T>&)>;

/// Teacher-forced training with Adam. Batches follow a seeded shuffle per
/// epoch, so runs with equal seeds are bitwise identical. The model with the
/// lowest validation loss is returned (the last one when there is no
/// validation data).
template <class T>
TrainResult<T> train(const EncodedPairs& train_data, const EncodedPairs& valid_data, ModelConfig mcfg,
                     const TrainConfig& tcfg, const EpochCallback<T>& on_epoch = {}) {
  tcfg.validate();
  if (train_data.size() == 0) throw Error(Errc::EmptyTrainingSet, "no training pairs");
  Transducer<T> model(mcfg, tcfg.seed);
  Adam<T> adam(AdamConfig{tcfg.learning_rate});
  Rng shuffle_rng(tcfg.seed ^ 0x5eedULL);
  Rng dropout_rng(tcfg.seed ^ 0xd209ULL);
  Rng* drop = mcfg.dropout > 0.0 ? &dropout_rng : nullptr;

  TrainResult<T> result{model, {}, 0};
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle(std::span<std::size_t>(order), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t from = 0; from < order.size(); from += tcfg.batch_size) {
      const auto b = batch_of(train_data, order, from, std::min(order.size(), from + tcfg.batch_size), mcfg.max_len);
      model.zero_grad();
      ad::Tape<T> tape(true);
      const ad::Var loss = model.loss(tape, b, drop);
      tape.backward(loss);
      adam.step(model.params());
      const double l = static_cast<double>(tape.value(loss)(0, 0));
      if (!std::isfinite(l)) throw Error(Errc::InvalidArgument, "training loss became non-finite");
      loss_sum += l;
      ++batches;
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(batches);
    if (valid_data.size() > 0) st.valid_loss = evaluate_loss(model, valid_data, tcfg.batch_size);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.curve.push_back(st);

    const double key = st.valid_loss.value_or(-static_cast<double>(epoch));
    if (key < best || !st.valid_loss) {
      best = key;
      result.model = model;
      result.best_epoch = epoch;
    }
    if (on_epoch && !on_epoch(st, model)) break;
  }
  return result;
}

}  // namespace sequer
