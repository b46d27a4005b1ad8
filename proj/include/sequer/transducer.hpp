#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sequer/autodiff.hpp"
#include "sequer/bpe.hpp"
#include "sequer/error.hpp"
#include "sequer/random.hpp"

namespace sequer {

struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t d_model = 64;
  std::size_t ffn_size = 256;
  std::size_t vocab_size = 0;
  std::size_t max_len = 64;
  double dropout = 0.1;
  bool positional_encoding = true;

  void validate() const {
    if (num_layers < 1 || num_heads < 1 || d_model < 1 || ffn_size < 1) {
      throw Error(Errc::InvalidArgument, "layer, head, width and ffn sizes must be positive");
    }
    if (d_model % num_heads != 0) throw Error(Errc::InvalidArgument, "d_model must be divisible by num_heads");
    if (vocab_size <= static_cast<std::size_t>(kNumSpecials)) {
      throw Error(Errc::InvalidArgument, "vocab_size must exceed the special tokens");
    }
    if (max_len < 2) throw Error(Errc::InvalidArgument, "max_len must be >= 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(Errc::InvalidArgument, "dropout must lie in [0,1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"num_layers", c.num_layers}, {"num_heads", c.num_heads}, {"d_model", c.d_model},
          {"ffn_size", c.ffn_size},     {"vocab_size", c.vocab_size}, {"max_len", c.max_len},
          {"dropout", c.dropout},       {"positional_encoding", c.positional_encoding}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.ffn_size = j.at("ffn_size").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.positional_encoding = j.value("positional_encoding", true);
  return c;
}

/// Padded batch of source/target id sequences, row-major B x L.
struct Batch {
  std::size_t size = 0;
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;
  std::vector<std::int32_t> src;     // [BOS] x [EOS] PAD...
  std::vector<std::int32_t> tgt_in;  // [BOS] y PAD...
  std::vector<std::int32_t> gold;    // y [EOS] PAD...
};

inline std::vector<std::int32_t> source_sequence(const TokenIds& ids, std::size_t max_len) {
  std::vector<std::int32_t> s{kBos};
  const std::size_t keep = std::min(ids.size(), max_len - 2);
  s.insert(s.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep));
  s.push_back(kEos);
  return s;
}

/// Pairs longer than max_len are truncated: source to max_len - 2 tokens,
/// target to max_len - 1.
inline Batch make_batch(const std::vector<const TokenIds*>& srcs, const std::vector<const TokenIds*>& tgts,
                        std::size_t max_len) {
  if (srcs.size() != tgts.size() || srcs.empty()) throw Error(Errc::ShapeMismatch, "batch source/target counts");
  Batch b;
  b.size = srcs.size();
  std::vector<std::vector<std::int32_t>> s, ti, g;
  for (std::size_t i = 0; i < b.size; ++i) {
    s.push_back(source_sequence(*srcs[i], max_len));
    const std::size_t keep = std::min(tgts[i]->size(), max_len - 1);
    std::vector<std::int32_t> in{kBos}, out;
    in.insert(in.end(), tgts[i]->begin(), tgts[i]->begin() + static_cast<std::ptrdiff_t>(keep));
    out.assign(tgts[i]->begin(), tgts[i]->begin() + static_cast<std::ptrdiff_t>(keep));
    out.push_back(kEos);
    ti.push_back(std::move(in));
    g.push_back(std::move(out));
    b.src_len = std::max(b.src_len, s.back().size());
    b.tgt_len = std::max(b.tgt_len, ti.back().size());
  }
  b.src.assign(b.size * b.src_len, kPad);
  b.tgt_in.assign(b.size * b.tgt_len, kPad);
  b.gold.assign(b.size * b.tgt_len, kPad);
  for (std::size_t i = 0; i < b.size; ++i) {
    std::copy(s[i].begin(), s[i].end(), b.src.begin() + static_cast<std::ptrdiff_t>(i * b.src_len));
    std::copy(ti[i].begin(), ti[i].end(), b.tgt_in.begin() + static_cast<std::ptrdiff_t>(i * b.tgt_len));
    std::copy(g[i].begin(), g[i].end(), b.gold.begin() + static_cast<std::ptrdiff_t>(i * b.tgt_len));
  }
  return b;
}

/// Encoder-decoder Transformer with post-norm residual blocks, sinusoidal
/// positions and a token embedding shared by both stacks.
template <class T>
class Transducer {
 public:
  using Mat = ad::Mat<T>;
  using Param = ad::Parameter<T>;

  Transducer(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    build();
    Rng rng(seed);
    for (auto& p : params_) {
      const bool is_bias = p.value.rows() == 1;
      if (is_bias) {
        // Layer-norm gains start at one, every other row vector at zero.
        const bool gain = p.name.size() > 2 && p.name.compare(p.name.size() - 2, 2, ".g") == 0;
        p.value.setConstant(gain ? T(1) : T(0));
      } else {
        const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
          p.value.data()[i] = static_cast<T>(uniform_real(rng, -limit, limit));
        }
      }
    }
    init_positions();
  }

  [[nodiscard]] const ModelConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::vector<Param>& params() noexcept { return params_; }
  [[nodiscard]] const std::vector<Param>& params() const noexcept { return params_; }

  [[nodiscard]] Param& param(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw Error(Errc::InvalidArgument, "no parameter named " + name);
    return params_[it->second];
  }
  [[nodiscard]] const Param& param(const std::string& name) const {
    return const_cast<Transducer*>(this)->param(name);
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// Encoder states, B*Ls x d_model.
  ad::Var encode(ad::Tape<T>& tape, const std::vector<std::int32_t>& src, std::size_t batch, std::size_t src_len,
                 Rng* dropout_rng) {
    check_len(src_len);
    ad::AttentionLayout self{batch, src_len, src_len, cfg_.num_heads, false, key_mask(src)};
    ad::Var x = embed(tape, src, batch, src_len, dropout_rng);
    for (const auto& l : enc_) {
      ad::Var a = attention_block(tape, x, x, l.self, self);
      x = add_norm(tape, x, tape.dropout(a, cfg_.dropout, dropout_rng), l.ln1);
      ad::Var f = ffn_block(tape, x, l.ffn, dropout_rng);
      x = add_norm(tape, x, tape.dropout(f, cfg_.dropout, dropout_rng), l.ln2);
    }
    return x;
  }

  /// Output logits, B*Lt x |D|. Row t of each sequence scores token t+1.
  ad::Var decode(ad::Tape<T>& tape, ad::Var memory, const std::vector<std::int32_t>& src,
                 const std::vector<std::int32_t>& tgt, std::size_t batch, std::size_t src_len, std::size_t tgt_len,
                 Rng* dropout_rng) {
    check_len(tgt_len);
    ad::AttentionLayout self{batch, tgt_len, tgt_len, cfg_.num_heads, true, key_mask(tgt)};
    ad::AttentionLayout cross{batch, tgt_len, src_len, cfg_.num_heads, false, key_mask(src)};
    ad::Var x = embed(tape, tgt, batch, tgt_len, dropout_rng);
    for (const auto& l : dec_) {
      ad::Var a = attention_block(tape, x, x, l.self, self);
      x = add_norm(tape, x, tape.dropout(a, cfg_.dropout, dropout_rng), l.ln1);
      ad::Var c = attention_block(tape, x, memory, l.cross, cross);
      x = add_norm(tape, x, tape.dropout(c, cfg_.dropout, dropout_rng), l.ln2);
      ad::Var f = ffn_block(tape, x, l.ffn, dropout_rng);
      x = add_norm(tape, x, tape.dropout(f, cfg_.dropout, dropout_rng), l.ln3);
    }
    return tape.linear(x, tape.param(params_[out_w_]), tape.param(params_[out_b_]));
  }

  ad::Var loss(ad::Tape<T>& tape, const Batch& b, Rng* dropout_rng) {
    ad::Var mem = encode(tape, b.src, b.size, b.src_len, dropout_rng);
    ad::Var logits = decode(tape, mem, b.src, b.tgt_in, b.size, b.src_len, b.tgt_len, dropout_rng);
    return tape.cross_entropy(logits, b.gold, kPad);
  }

  /// Logits for a single source and BOS-prefixed target prefix, no dropout.
  [[nodiscard]] Mat logits(const std::vector<std::int32_t>& src, const std::vector<std::int32_t>& tgt_prefix) const {
    auto& self = const_cast<Transducer&>(*this);
    ad::Tape<T> tape(false);
    ad::Var mem = self.encode(tape, src, 1, src.size(), nullptr);
    return tape.value(self.decode(tape, mem, src, tgt_prefix, 1, src.size(), tgt_prefix.size(), nullptr));
  }

  [[nodiscard]] Mat encoder_states(const std::vector<std::int32_t>& src) const {
    auto& self = const_cast<Transducer&>(*this);
    ad::Tape<T> tape(false);
    return tape.value(self.encode(tape, src, 1, src.size(), nullptr));
  }

  /// Log-probabilities of the next token after each prefix (all the same
  /// length) given precomputed encoder states for one source.
  [[nodiscard]] Mat next_log_probs(const Mat& memory, const std::vector<std::int32_t>& src,
                                   const std::vector<std::vector<std::int32_t>>& prefixes) const {
    auto& self = const_cast<Transducer&>(*this);
    const std::size_t k = prefixes.size();
    const std::size_t len = prefixes.front().size();
    const std::size_t ls = src.size();
    Mat mem(static_cast<Eigen::Index>(k * ls), memory.cols());
    std::vector<std::int32_t> srcs, tgts;
    for (std::size_t i = 0; i < k; ++i) {
      if (prefixes[i].size() != len) throw Error(Errc::ShapeMismatch, "prefixes must share a length");
      mem.middleRows(static_cast<Eigen::Index>(i * ls), static_cast<Eigen::Index>(ls)) = memory;
      srcs.insert(srcs.end(), src.begin(), src.end());
      tgts.insert(tgts.end(), prefixes[i].begin(), prefixes[i].end());
    }
    ad::Tape<T> tape(false);
    ad::Var m = tape.constant(std::move(mem));
    const Mat& all = tape.value(self.decode(tape, m, srcs, tgts, k, ls, len, nullptr));
    Mat out(static_cast<Eigen::Index>(k), all.cols());
    for (std::size_t i = 0; i < k; ++i) {
      const auto row = all.row(static_cast<Eigen::Index>((i + 1) * len - 1));
      const T mx = row.maxCoeff();
      const T lse = mx + std::log((row.array() - mx).exp().sum());
      out.row(static_cast<Eigen::Index>(i)) = row.array() - lse;
    }
    return out;
  }

  [[nodiscard]] const Mat& positional_table() const noexcept { return pe_; }

 private:
  struct AttnIdx {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct NormIdx {
    std::size_t g, b;
  };
  struct FfnIdx {
    std::size_t w1, b1, w2, b2;
  };
  struct EncLayer {
    AttnIdx self;
    NormIdx ln1;
    FfnIdx ffn;
    NormIdx ln2;
  };
  struct DecLayer {
    AttnIdx self;
    NormIdx ln1;
    AttnIdx cross;
    NormIdx ln2;
    FfnIdx ffn;
    NormIdx ln3;
  };

  std::size_t add_param(const std::string& name, std::size_t rows, std::size_t cols) {
    index_[name] = params_.size();
    params_.push_back(Param{name, Mat::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)), {}});
    return params_.size() - 1;
  }

  AttnIdx add_attn(const std::string& p) {
    const auto d = cfg_.d_model;
    AttnIdx a{};
    a.wq = add_param(p + ".wq", d, d);
    a.bq = add_param(p + ".bq", 1, d);
    a.wk = add_param(p + ".wk", d, d);
    a.bk = add_param(p + ".bk", 1, d);
    a.wv = add_param(p + ".wv", d, d);
    a.bv = add_param(p + ".bv", 1, d);
    a.wo = add_param(p + ".wo", d, d);
    a.bo = add_param(p + ".bo", 1, d);
    return a;
  }

  NormIdx add_norm_params(const std::string& p) {
    return {add_param(p + ".g", 1, cfg_.d_model), add_param(p + ".b", 1, cfg_.d_model)};
  }

  FfnIdx add_ffn(const std::string& p) {
    FfnIdx f{};
    f.w1 = add_param(p + ".w1", cfg_.d_model, cfg_.ffn_size);
    f.b1 = add_param(p + ".b1", 1, cfg_.ffn_size);
    f.w2 = add_param(p + ".w2", cfg_.ffn_size, cfg_.d_model);
    f.b2 = add_param(p + ".b2", 1, cfg_.d_model);
    return f;
  }

  void build() {
    embed_ = add_param("embed", cfg_.vocab_size, cfg_.d_model);
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
      const std::string p = "encoder." + std::to_string(l);
      EncLayer e{};
      e.self = add_attn(p + ".self");
      e.ln1 = add_norm_params(p + ".ln1");
      e.ffn = add_ffn(p + ".ffn");
      e.ln2 = add_norm_params(p + ".ln2");
      enc_.push_back(e);
    }
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
      const std::string p = "decoder." + std::to_string(l);
      DecLayer d{};
      d.self = add_attn(p + ".self");
      d.ln1 = add_norm_params(p + ".ln1");
      d.cross = add_attn(p + ".cross");
      d.ln2 = add_norm_params(p + ".ln2");
      d.ffn = add_ffn(p + ".ffn");
      d.ln3 = add_norm_params(p + ".ln3");
      dec_.push_back(d);
    }
    out_w_ = add_param("out.w", cfg_.d_model, cfg_.vocab_size);
    out_b_ = add_param("out.b", 1, cfg_.vocab_size);
  }

  void init_positions() {
    const auto d = cfg_.d_model;
    pe_ = Mat::Zero(static_cast<Eigen::Index>(cfg_.max_len), static_cast<Eigen::Index>(d));
    if (!cfg_.positional_encoding) return;
    for (std::size_t pos = 0; pos < cfg_.max_len; ++pos) {
      for (std::size_t i = 0; i < d; ++i) {
        const double angle =
            static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
        pe_(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(i)) =
            static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
      }
    }
  }

  void check_len(std::size_t len) const {
    if (len > cfg_.max_len) {
      throw Error(Errc::SequenceTooLong,
                  "sequence of " + std::to_string(len) + " exceeds max_len " + std::to_string(cfg_.max_len));
    }
  }

  static std::vector<std::uint8_t> key_mask(const std::vector<std::int32_t>& ids) {
    std::vector<std::uint8_t> m(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != kPad;
    return m;
  }

  ad::Var embed(ad::Tape<T>& tape, const std::vector<std::int32_t>& ids, std::size_t batch, std::size_t len,
                Rng* dropout_rng) {
    const T scale = std::sqrt(static_cast<T>(cfg_.d_model));
    ad::Var e = tape.gather_rows(params_[embed_], ids, scale);
    if (cfg_.positional_encoding) {
      Mat pos(static_cast<Eigen::Index>(batch * len), pe_.cols());
      for (std::size_t b = 0; b < batch; ++b) {
        pos.middleRows(static_cast<Eigen::Index>(b * len), static_cast<Eigen::Index>(len)) =
            pe_.topRows(static_cast<Eigen::Index>(len));
      }
      e = tape.add(e, tape.constant(std::move(pos)));
    }
    return tape.dropout(e, cfg_.dropout, dropout_rng);
  }

  ad::Var attention_block(ad::Tape<T>& tape, ad::Var x, ad::Var kv, const AttnIdx& a,
                          const ad::AttentionLayout& lay) {
    auto P = [&](std::size_t i) { return tape.param(params_[i]); };
    ad::Var q = tape.linear(x, P(a.wq), P(a.bq));
    ad::Var k = tape.linear(kv, P(a.wk), P(a.bk));
    ad::Var v = tape.linear(kv, P(a.wv), P(a.bv));
    ad::Var o = tape.attention(q, k, v, lay);
    return tape.linear(o, P(a.wo), P(a.bo));
  }

  ad::Var ffn_block(ad::Tape<T>& tape, ad::Var x, const FfnIdx& f, Rng* dropout_rng) {
    auto P = [&](std::size_t i) { return tape.param(params_[i]); };
    ad::Var h = tape.relu(tape.linear(x, P(f.w1), P(f.b1)));
    h = tape.dropout(h, cfg_.dropout, dropout_rng);
    return tape.linear(h, P(f.w2), P(f.b2));
  }

  ad::Var add_norm(ad::Tape<T>& tape, ad::Var x, ad::Var y, const NormIdx& n) {
    return tape.layer_norm(tape.add(x, y), tape.param(params_[n.g]), tape.param(params_[n.b]));
  }

  ModelConfig cfg_;
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  std::size_t embed_ = 0, out_w_ = 0, out_b_ = 0;
  Mat pe_;
};

}  // namespace sequer
