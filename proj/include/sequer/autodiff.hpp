#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sequer/error.hpp"
#include "sequer/random.hpp"

namespace sequer::ad {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct Var {
  std::int32_t id = -1;
};

/// Layout of a batched attention call: B sequences, queries stacked as
/// B*Lq rows and keys as B*Lk rows. key_mask has B*Lk entries, nonzero
/// meaning the key may be attended.
struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t q_len = 0;
  std::size_t k_len = 0;
  std::size_t heads = 1;
  bool causal = false;
  std::vector<std::uint8_t> key_mask;
};

namespace detail {

/// Row softmax with masked entries forced to exactly zero.
template <class T, class Allowed>
void masked_softmax_rows(Mat<T>& s, Allowed&& allowed) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (allowed(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) mx = std::max(mx, s(i, j));
    }
    if (mx == -std::numeric_limits<T>::infinity()) throw Error(Errc::AllMaskedRow, "attention row has no key");
    T sum = 0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (allowed(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) {
        s(i, j) = std::exp(s(i, j) - mx);
        sum += s(i, j);
      } else {
        s(i, j) = 0;
      }
    }
    s.row(i) /= sum;
  }
}

}  // namespace detail

/// softmax(Q K^T / sqrt(d_k)) V for a single head. `mask` (n x m, true =
/// attendable) is optional.
template <class T>
Mat<T> scaled_dot_attention(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v,
                            const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>* mask = nullptr,
                            Mat<T>* weights_out = nullptr) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) throw Error(Errc::ShapeMismatch, "attention operand shapes");
  if (mask && (mask->rows() != q.rows() || mask->cols() != k.rows())) {
    throw Error(Errc::ShapeMismatch, "attention mask shape");
  }
  Mat<T> s = (q * k.transpose()) / std::sqrt(static_cast<T>(q.cols()));
  detail::masked_softmax_rows<T>(s, [&](std::size_t i, std::size_t j) {
    return mask == nullptr || (*mask)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  });
  if (weights_out) *weights_out = s;
  return s * v;
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep visits every node after all of its consumers. With recording off
/// the tape only evaluates values.
template <class T>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

  [[nodiscard]] bool recording() const noexcept { return record_; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  [[nodiscard]] const Mat<T>& value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.ref ? *n.ref : n.value;
  }

  [[nodiscard]] const Mat<T>& grad(Var v) { return grad_of(v); }

  Var constant(Mat<T> m) {
    Node n;
    n.value = std::move(m);
    return push(std::move(n));
  }

  Var param(Parameter<T>& p) {
    Node n;
    n.ref = &p.value;
    if (record_) {
      n.param = &p;
      n.requires_grad = true;
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
    }
    return push(std::move(n));
  }

  Var matmul(Var a, Var b) {
    Mat<T> c = value(a) * value(b);
    return push_op(std::move(c), {a, b}, [this, a, b](Var out) {
      const Mat<T>& g = grad_of(out);
      if (needs(a)) grad_of(a).noalias() += g * value(b).transpose();
      if (needs(b)) grad_of(b).noalias() += value(a).transpose() * g;
    });
  }

  /// x + b with b a 1 x d row broadcast over rows.
  Var add_row(Var x, Var b) {
    Mat<T> y = value(x);
    y.rowwise() += value(b).row(0);
    return push_op(std::move(y), {x, b}, [this, x, b](Var out) {
      const Mat<T>& g = grad_of(out);
      if (needs(x)) grad_of(x) += g;
      if (needs(b)) grad_of(b) += g.colwise().sum();
    });
  }

  Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

  Var add(Var a, Var b) {
    Mat<T> c = value(a) + value(b);
    return push_op(std::move(c), {a, b}, [this, a, b](Var out) {
      const Mat<T>& g = grad_of(out);
      if (needs(a)) grad_of(a) += g;
      if (needs(b)) grad_of(b) += g;
    });
  }

  Var relu(Var x) {
    Mat<T> y = value(x).cwiseMax(T(0));
    return push_op(std::move(y), {x}, [this, x](Var out) {
      const Mat<T>& g = grad_of(out);
      grad_of(x) += (value(x).array() > T(0)).select(g, T(0));
    });
  }

  /// Inverted dropout; identity when p == 0 or rng is null.
  Var dropout(Var x, double p, Rng* rng) {
    if (p <= 0.0 || rng == nullptr) return x;
    Mat<T> keep(value(x).rows(), value(x).cols());
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = bernoulli(*rng, p) ? T(0) : scale;
    Mat<T> y = value(x).cwiseProduct(keep);
    return push_op(std::move(y), {x}, [this, x, keep = std::move(keep)](Var out) {
      grad_of(x) += grad_of(out).cwiseProduct(keep);
    });
  }

  /// Rows of an embedding table times `scale`; gradients scatter back into
  /// the referenced rows only.
  Var gather_rows(Parameter<T>& table, const std::vector<std::int32_t>& ids, T scale) {
    const auto d = table.value.cols();
    Mat<T> y(static_cast<Eigen::Index>(ids.size()), d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= table.value.rows()) throw Error(Errc::UnknownId, "token id out of range");
      y.row(static_cast<Eigen::Index>(i)) = table.value.row(ids[i]) * scale;
    }
    if (!record_) return constant(std::move(y));
    if (table.grad.rows() != table.value.rows() || table.grad.cols() != table.value.cols()) table.zero_grad();
    Node n;
    n.value = std::move(y);
    n.requires_grad = true;
    Var out = push(std::move(n));
    nodes_.back().back = [this, out, &table, ids, scale] {
      const Mat<T>& g = grad_of(out);
      for (std::size_t i = 0; i < ids.size(); ++i) table.grad.row(ids[i]) += g.row(static_cast<Eigen::Index>(i)) * scale;
    };
    return out;
  }

  /// Row-wise layer normalization with gain and bias rows.
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
    const Mat<T>& xv = value(x);
    const auto n = xv.rows(), d = xv.cols();
    Mat<T> xhat(n, d);
    std::vector<T> inv_std(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const T mu = xv.row(i).mean();
      const auto centered = (xv.row(i).array() - mu).eval();
      const T var = centered.square().mean();
      inv_std[static_cast<std::size_t>(i)] = T(1) / std::sqrt(var + eps);
      xhat.row(i) = centered * inv_std[static_cast<std::size_t>(i)];
    }
    Mat<T> y = xhat;
    y.array().rowwise() *= value(gain).row(0).array();
    y.rowwise() += value(bias).row(0);
    return push_op(std::move(y), {x, gain, bias},
                   [this, x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Var out) {
                     const Mat<T>& g = grad_of(out);
                     if (needs(gain)) grad_of(gain) += g.cwiseProduct(xhat).colwise().sum();
                     if (needs(bias)) grad_of(bias) += g.colwise().sum();
                     if (!needs(x)) return;
                     Mat<T> gx = g;
                     gx.array().rowwise() *= value(gain).row(0).array();
                     auto& dx = grad_of(x);
                     const T inv_d = T(1) / static_cast<T>(gx.cols());
                     for (Eigen::Index i = 0; i < gx.rows(); ++i) {
                       const T mean_g = gx.row(i).sum() * inv_d;
                       const T mean_gx = gx.row(i).dot(xhat.row(i)) * inv_d;
                       dx.row(i).array() += inv_std[static_cast<std::size_t>(i)] *
                                            (gx.row(i).array() - mean_g - xhat.row(i).array() * mean_gx);
                     }
                   });
  }

  /// Multi-head scaled dot-product attention over already projected Q, K, V.
  /// Each head uses a contiguous d_model/heads column slice.
  Var attention(Var q, Var k, Var v, const AttentionLayout& lay) {
    const Mat<T>& qv = value(q);
    const Mat<T>& kv = value(k);
    const Mat<T>& vv = value(v);
    const auto d = qv.cols();
    if (kv.cols() != d || vv.cols() != d || d % static_cast<Eigen::Index>(lay.heads) != 0 ||
        qv.rows() != static_cast<Eigen::Index>(lay.batch * lay.q_len) ||
        kv.rows() != static_cast<Eigen::Index>(lay.batch * lay.k_len) || vv.rows() != kv.rows() ||
        lay.key_mask.size() != lay.batch * lay.k_len) {
      throw Error(Errc::ShapeMismatch, "attention layout does not match operands");
    }
    const auto dk = d / static_cast<Eigen::Index>(lay.heads);
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dk));
    const auto lq = static_cast<Eigen::Index>(lay.q_len), lk = static_cast<Eigen::Index>(lay.k_len);
    Mat<T> out(qv.rows(), d);
    std::vector<Mat<T>> probs;
    if (record_) probs.reserve(lay.batch * lay.heads);
    for (std::size_t b = 0; b < lay.batch; ++b) {
      const auto r0 = static_cast<Eigen::Index>(b) * lq, k0 = static_cast<Eigen::Index>(b) * lk;
      auto allowed = [&](std::size_t i, std::size_t j) {
        return lay.key_mask[b * lay.k_len + j] != 0 && (!lay.causal || j <= i);
      };
      for (std::size_t h = 0; h < lay.heads; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h) * dk;
        Mat<T> s = (qv.block(r0, c0, lq, dk) * kv.block(k0, c0, lk, dk).transpose()) * inv_sqrt;
        detail::masked_softmax_rows<T>(s, allowed);
        out.block(r0, c0, lq, dk).noalias() = s * vv.block(k0, c0, lk, dk);
        if (record_) probs.push_back(std::move(s));
      }
    }
    return push_op(std::move(out), {q, k, v}, [this, q, k, v, lay, dk, inv_sqrt, probs = std::move(probs)](Var o) {
      const Mat<T>& g = grad_of(o);
      const Mat<T>& qv = value(q);
      const Mat<T>& kv = value(k);
      const Mat<T>& vv = value(v);
      const auto lq = static_cast<Eigen::Index>(lay.q_len), lk = static_cast<Eigen::Index>(lay.k_len);
      Mat<T> dq = Mat<T>::Zero(qv.rows(), qv.cols());
      Mat<T> dkm = Mat<T>::Zero(kv.rows(), kv.cols());
      Mat<T> dv = Mat<T>::Zero(vv.rows(), vv.cols());
      for (std::size_t b = 0; b < lay.batch; ++b) {
        const auto r0 = static_cast<Eigen::Index>(b) * lq, k0 = static_cast<Eigen::Index>(b) * lk;
        for (std::size_t h = 0; h < lay.heads; ++h) {
          const auto c0 = static_cast<Eigen::Index>(h) * dk;
          const Mat<T>& p = probs[b * lay.heads + h];
          const auto go = g.block(r0, c0, lq, dk);
          dv.block(k0, c0, lk, dk).noalias() += p.transpose() * go;
          Mat<T> dp = go * vv.block(k0, c0, lk, dk).transpose();
          const Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = dp.cwiseProduct(p).rowwise().sum();
          Mat<T> ds = p.cwiseProduct(dp.colwise() - rowdot) * inv_sqrt;
          dq.block(r0, c0, lq, dk).noalias() += ds * kv.block(k0, c0, lk, dk);
          dkm.block(k0, c0, lk, dk).noalias() += ds.transpose() * qv.block(r0, c0, lq, dk);
        }
      }
      if (needs(q)) grad_of(q) += dq;
      if (needs(k)) grad_of(k) += dkm;
      if (needs(v)) grad_of(v) += dv;
    });
  }

  /// Mean negative log-likelihood over rows whose gold id differs from
  /// `ignore`. Returns a 1 x 1 node; zero when every row is ignored.
  Var cross_entropy(Var logits, const std::vector<std::int32_t>& gold, std::int32_t ignore) {
    const Mat<T>& z = value(logits);
    if (z.rows() != static_cast<Eigen::Index>(gold.size())) throw Error(Errc::ShapeMismatch, "gold length");
    Mat<T> soft(z.rows(), z.cols());
    T total = 0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const auto gi = gold[static_cast<std::size_t>(i)];
      if (gi == ignore) {
        soft.row(i).setZero();
        continue;
      }
      if (gi < 0 || gi >= z.cols()) throw Error(Errc::UnknownId, "gold id out of range");
      const T mx = z.row(i).maxCoeff();
      soft.row(i) = (z.row(i).array() - mx).exp();
      const T sum = soft.row(i).sum();
      soft.row(i) /= sum;
      total += std::log(sum) + mx - z(i, gi);
      ++count;
    }
    const T norm = count ? T(1) / static_cast<T>(count) : T(0);
    Mat<T> loss(1, 1);
    loss(0, 0) = total * norm;
    return push_op(std::move(loss), {logits}, [this, logits, gold, ignore, norm, soft = std::move(soft)](Var out) {
      const T g = grad_of(out)(0, 0) * norm;
      auto& dz = grad_of(logits);
      for (Eigen::Index i = 0; i < dz.rows(); ++i) {
        const auto gi = gold[static_cast<std::size_t>(i)];
        if (gi == ignore) continue;
        dz.row(i) += soft.row(i) * g;
        dz(i, gi) -= g;
      }
    });
  }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards.
  void backward(Var loss) {
    if (!record_) throw Error(Errc::InvalidArgument, "backward on a non-recording tape");
    grad_of(loss).setOnes();
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.back && n.has_grad) n.back();
    }
  }

 private:
  struct Node {
    Mat<T> value;
    const Mat<T>* ref = nullptr;
    Mat<T> grad;
    bool has_grad = false;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    std::function<void()> back;
  };

  [[nodiscard]] bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  Mat<T>& grad_of(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.param) return n.param->grad;
    if (!n.has_grad) {
      const Mat<T>& val = n.ref ? *n.ref : n.value;
      n.grad.setZero(val.rows(), val.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  template <class F>
  Var push_op(Mat<T> value, std::initializer_list<Var> inputs, F&& back) {
    Node n;
    n.value = std::move(value);
    if (record_) {
      for (Var in : inputs) n.requires_grad = n.requires_grad || needs(in);
    }
    Var out = push(std::move(n));
    if (nodes_.back().requires_grad) {
      nodes_.back().back = [back = std::forward<F>(back), out]() mutable { back(out); };
    }
    return out;
  }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace sequer::ad
