#pragma once

// Single post-LN transformer encoder layer over a window of T reasoning
// embeddings, read out at the last position, followed by a linear + softmax
// decision over n + 1 classes (index 0 = normal).
//
// Only the last output row is ever used, so attention is evaluated for the
// last query alone; keys and values still cover the whole window.

#include <cmath>
#include <string>
#include <vector>

#include "mgnn/core.hpp"
#include "mgnn/nn/ops.hpp"
#include "mgnn/random.hpp"

namespace mgnn::temporal {

/// Sinusoidal table: PE(p, 2i) = sin(p / 10000^(2i/D)), PE(p, 2i+1) = cos(.).
template <typename S>
Matrix<S> positional_encoding(Index T, Index D) {
  Matrix<S> pe(T, D);
  for (Index p = 0; p < T; ++p)
    for (Index i = 0; i < D; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(D));
      pe(p, i) = static_cast<S>(i % 2 == 0 ? std::sin(p * freq) : std::cos(p * freq));
    }
  return pe;
}

template <typename S>
struct TemporalParams {
  int heads = 8;
  bool positional = true;
  S dropout = S(0);
  S eps = S(1e-5);
  Matrix<S> Wq, Wk, Wv, Wo;  // D x D, applied as x W
  Vector<S> bq, bk, bv, bo;
  Vector<S> ln1_gamma, ln1_beta;
  Matrix<S> W1;  // D x ffn
  Vector<S> b1;
  Matrix<S> W2;  // ffn x D
  Vector<S> b2;
  Vector<S> ln2_gamma, ln2_beta;

  Index dim() const { return Wq.rows(); }
  Index ffn_dim() const { return W1.cols(); }

  static TemporalParams init(Index D, int heads, Index ffn, Rng& rng) {
    if (heads <= 0 || D % heads != 0)
      throw ConfigError("model width " + std::to_string(D) + " is not divisible by " + std::to_string(heads) +
                        " heads");
    TemporalParams p;
    p.heads = heads;
    for (auto* w : {&p.Wq, &p.Wk, &p.Wv, &p.Wo}) *w = nn::xavier_uniform<S>(D, D, D, D, rng);
    for (auto* b : {&p.bq, &p.bk, &p.bv, &p.bo, &p.ln1_beta, &p.ln2_beta}) *b = Vector<S>::Zero(D);
    p.ln1_gamma = p.ln2_gamma = Vector<S>::Ones(D);
    p.W1 = nn::xavier_uniform<S>(D, ffn, D, ffn, rng);
    p.b1 = Vector<S>::Zero(ffn);
    p.W2 = nn::xavier_uniform<S>(ffn, D, ffn, D, rng);
    p.b2 = Vector<S>::Zero(D);
    return p;
  }

  TemporalParams zeros_like() const {
    TemporalParams z = *this;
    each_trainable([](const std::string&, auto& t) { t.setZero(); }, "", z);
    return z;
  }

  template <typename T>
  TemporalParams<T> cast() const {
    TemporalParams<T> o;
    o.heads = heads;
    o.positional = positional;
    o.dropout = static_cast<T>(dropout);
    o.eps = static_cast<T>(eps);
    each_trainable([](const std::string&, const auto& src, auto& dst) { dst = src.template cast<T>(); }, "", *this,
                   o);
    return o;
  }

  template <typename F, typename Self, typename... O>
  static void each_trainable(F&& f, const std::string& prefix, Self& s, O&... o) {
    f(prefix + "Wq", s.Wq, o.Wq...);
    f(prefix + "bq", s.bq, o.bq...);
    f(prefix + "Wk", s.Wk, o.Wk...);
    f(prefix + "bk", s.bk, o.bk...);
    f(prefix + "Wv", s.Wv, o.Wv...);
    f(prefix + "bv", s.bv, o.bv...);
    f(prefix + "Wo", s.Wo, o.Wo...);
    f(prefix + "bo", s.bo, o.bo...);
    f(prefix + "ln1_gamma", s.ln1_gamma, o.ln1_gamma...);
    f(prefix + "ln1_beta", s.ln1_beta, o.ln1_beta...);
    f(prefix + "W1", s.W1, o.W1...);
    f(prefix + "b1", s.b1, o.b1...);
    f(prefix + "W2", s.W2, o.W2...);
    f(prefix + "b2", s.b2, o.b2...);
    f(prefix + "ln2_gamma", s.ln2_gamma, o.ln2_gamma...);
    f(prefix + "ln2_beta", s.ln2_beta, o.ln2_beta...);
  }
};

template <typename S>
struct DecisionParams {
  Matrix<S> W;  // (n + 1) x D
  Vector<S> b;

  static DecisionParams init(Index classes, Index D, Rng& rng) {
    return {nn::xavier_uniform<S>(classes, D, D, classes, rng), Vector<S>::Zero(classes)};
  }
  DecisionParams zeros_like() const { return {Matrix<S>::Zero(W.rows(), W.cols()), Vector<S>::Zero(b.size())}; }
  template <typename T>
  DecisionParams<T> cast() const {
    return {W.template cast<T>(), b.template cast<T>()};
  }
  template <typename F, typename Self, typename... O>
  static void each_trainable(F&& f, const std::string& prefix, Self& s, O&... o) {
    f(prefix + "W", s.W, o.W...);
    f(prefix + "b", s.b, o.b...);
  }
};

template <typename S>
struct WindowCache {
  Matrix<S> Xp;         // window + positional encoding
  RowVector<S> q;       // last-row query
  Matrix<S> K, V;
  Matrix<S> attn;       // heads x T
  RowVector<S> concat;  // head outputs, before Wo
  RowVector<S> drop1, drop2;  // inverted-dropout masks (empty when unused)
  nn::LayerNormCache<S> ln1, ln2;
  RowVector<S> h1;      // after the first layer norm
  RowVector<S> u;       // FFN pre-activation
};

/// Transformer output at the last window position. Pass `rng` to enable
/// dropout (training only).
template <typename S>
Vector<S> encode_window(const Matrix<S>& X, const TemporalParams<S>& p, WindowCache<S>* cache = nullptr,
                        Rng* rng = nullptr) {
  const Index T = X.rows(), D = p.dim();
  require_shape(T > 0 && X.cols() == D, "encode_window: window must be T x " + std::to_string(D));
  const Index H = p.heads, dh = D / H;
  WindowCache<S> local;
  WindowCache<S>& c = cache ? *cache : local;

  c.Xp = p.positional ? Matrix<S>(X + positional_encoding<S>(T, D)) : X;
  c.q = c.Xp.row(T - 1) * p.Wq + p.bq.transpose();
  c.K = (c.Xp * p.Wk).rowwise() + p.bk.transpose();
  c.V = (c.Xp * p.Wv).rowwise() + p.bv.transpose();
  c.attn.resize(H, T);
  c.concat.resize(D);
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  for (Index h = 0; h < H; ++h) {
    const RowVector<S> scores = (c.K.middleCols(h * dh, dh) * c.q.segment(h * dh, dh).transpose()).transpose() * scale;
    c.attn.row(h) = nn::softmax_rows(scores);
    c.concat.segment(h * dh, dh) = c.attn.row(h) * c.V.middleCols(h * dh, dh);
  }
  RowVector<S> attn_out = c.concat * p.Wo + p.bo.transpose();

  auto make_mask = [&](RowVector<S>& mask, Index n) {
    if (!rng || p.dropout <= S(0)) {
      mask.resize(0);
      return;
    }
    mask.resize(n);
    const S keep = S(1) - p.dropout;
    for (Index i = 0; i < n; ++i) mask[i] = rng->uniform() < static_cast<double>(keep) ? S(1) / keep : S(0);
  };
  make_mask(c.drop1, D);
  if (c.drop1.size()) attn_out = attn_out.cwiseProduct(c.drop1);

  const Matrix<S> r1 = c.Xp.row(T - 1) + attn_out;
  c.h1 = nn::layer_norm<S>(r1, p.ln1_gamma, p.ln1_beta, p.eps, &c.ln1);
  c.u = c.h1 * p.W1 + p.b1.transpose();
  RowVector<S> ffn = nn::relu(c.u) * p.W2 + p.b2.transpose();
  make_mask(c.drop2, D);
  if (c.drop2.size()) ffn = ffn.cwiseProduct(c.drop2);
  const Matrix<S> r2 = c.h1 + ffn;
  return nn::layer_norm<S>(r2, p.ln2_gamma, p.ln2_beta, p.eps, &c.ln2).row(0).transpose();
}

/// Accumulates parameter gradients and returns dL/dX (T x D).
template <typename S>
Matrix<S> encode_window_backward(const Vector<S>& dout, const TemporalParams<S>& p, const WindowCache<S>& c,
                                 TemporalParams<S>& g) {
  const Index T = c.Xp.rows(), D = p.dim(), H = p.heads, dh = D / H;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  const Matrix<S> dr2 = nn::layer_norm_backward<S>(dout.transpose(), p.ln2_gamma, c.ln2, g.ln2_gamma, g.ln2_beta);
  RowVector<S> dffn = dr2.row(0);
  if (c.drop2.size()) dffn = dffn.cwiseProduct(c.drop2);
  const RowVector<S> a = nn::relu(c.u);
  g.W2.noalias() += a.transpose() * dffn;
  g.b2 += dffn.transpose();
  RowVector<S> du = dffn * p.W2.transpose();
  du = (c.u.array() > S(0)).select(du, S(0));
  g.W1.noalias() += c.h1.transpose() * du;
  g.b1 += du.transpose();
  const RowVector<S> dh1 = dr2.row(0) + du * p.W1.transpose();

  const Matrix<S> dr1 = nn::layer_norm_backward<S>(dh1, p.ln1_gamma, c.ln1, g.ln1_gamma, g.ln1_beta);
  RowVector<S> dattn_out = dr1.row(0);
  if (c.drop1.size()) dattn_out = dattn_out.cwiseProduct(c.drop1);
  g.Wo.noalias() += c.concat.transpose() * dattn_out;
  g.bo += dattn_out.transpose();
  const RowVector<S> dconcat = dattn_out * p.Wo.transpose();

  RowVector<S> dq(D);
  Matrix<S> dK(T, D), dV(T, D);
  for (Index h = 0; h < H; ++h) {
    const auto dconcat_h = dconcat.segment(h * dh, dh);
    const RowVector<S> da = (c.V.middleCols(h * dh, dh) * dconcat_h.transpose()).transpose();
    dV.middleCols(h * dh, dh) = c.attn.row(h).transpose() * dconcat_h;
    const Matrix<S> ds = nn::softmax_rows_backward<S>(c.attn.row(h), da) * scale;
    dq.segment(h * dh, dh) = ds * c.K.middleCols(h * dh, dh);
    dK.middleCols(h * dh, dh) = ds.transpose() * c.q.segment(h * dh, dh);
  }
  const RowVector<S> x_last = c.Xp.row(T - 1);
  g.Wq.noalias() += x_last.transpose() * dq;
  g.bq += dq.transpose();
  g.Wk.noalias() += c.Xp.transpose() * dK;
  g.bk += dK.colwise().sum().transpose();
  g.Wv.noalias() += c.Xp.transpose() * dV;
  g.bv += dV.colwise().sum().transpose();

  Matrix<S> dX = dK * p.Wk.transpose() + dV * p.Wv.transpose();
  dX.row(T - 1) += dq * p.Wq.transpose() + dr1.row(0);
  return dX;
}

template <typename S>
Vector<S> decision_logits(const Vector<S>& f, const DecisionParams<S>& p) {
  require_shape(f.size() == p.W.cols(), "decide: embedding width mismatch");
  return p.W * f + p.b;
}

/// softmax(W f + b).
template <typename S>
Vector<S> decide(const Vector<S>& f, const DecisionParams<S>& p) {
  return nn::softmax_rows(decision_logits(f, p).transpose()).row(0).transpose();
}

/// Normal / abnormal split of a score vector.
struct Decomposition {
  double p_normal = 0;
  double p_abnormal = 0;
  std::vector<double> conditional;  // p(i | abnormal), i = 1..n
  bool conditional_undefined = false;  // p_abnormal == 0: conditional set uniform
};

template <typename Derived>
Decomposition decompose(const Eigen::MatrixBase<Derived>& s) {
  require_shape(s.size() >= 2, "decompose: need at least one anomaly class");
  Decomposition d;
  const Index n = s.size() - 1;
  d.p_normal = static_cast<double>(s[0]);
  double abnormal = 0;
  for (Index i = 1; i <= n; ++i) abnormal += static_cast<double>(s[i]);
  d.p_abnormal = abnormal;
  d.conditional.resize(static_cast<std::size_t>(n));
  if (abnormal <= 0) {
    d.conditional_undefined = true;
    std::fill(d.conditional.begin(), d.conditional.end(), 1.0 / static_cast<double>(n));
  } else {
    for (Index i = 1; i <= n; ++i) d.conditional[static_cast<std::size_t>(i - 1)] = static_cast<double>(s[i]) / abnormal;
  }
  return d;
}

}  // namespace mgnn::temporal
