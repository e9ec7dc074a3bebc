#pragma once

// Hierarchical multimodal GNN over one mission graph.
//
// Node matrices use a node-major stacked layout: with F frames and |V| nodes
// the matrix has |V|*F rows and node v of frame f sits at row v*F + f. F = 1
// gives the plain |V| x D node-embedding matrix. Batch norm always normalizes
// each channel over every row, i.e. over (frames x nodes).

#include <string>
#include <utility>
#include <vector>

#include "mgnn/core.hpp"
#include "mgnn/kg/graph.hpp"
#include "mgnn/nn/ops.hpp"
#include "mgnn/random.hpp"

namespace mgnn::hgnn {

using Edge = std::pair<int, int>;  // (src, dst) node indices

/// Mission graph in topological, layer-major node order.
struct LayeredGraph {
  std::string mission_id;
  std::vector<std::string> node_ids;
  std::vector<std::string> labels;   // node text; empty for sensor and encoding
  std::vector<int> layer;            // assigned layer per node
  std::vector<std::vector<int>> V;   // V[l], l = 0..depth
  std::vector<std::vector<Edge>> E;  // E[l]: edges into V[l]; E[0] is empty
  int sensor = 0;
  int encoding = 0;

  int depth() const { return static_cast<int>(V.size()) - 1; }
  int num_nodes() const { return static_cast<int>(node_ids.size()); }
  int num_edges() const;

  static LayeredGraph from_reasoning_graph(const kg::ReasoningGraph& g);
  /// Throws ShapeMismatch or EmptyFanIn on a broken layering.
  void validate() const;
};

template <typename S>
struct GnnLayerParams {
  Matrix<S> W;  // D_{l-1} x D_l
  Vector<S> b;
  Vector<S> gamma, beta;
  Vector<S> run_mean, run_var;
  S momentum = S(0.1);
  S eps = S(1e-5);

  Index in_dim() const { return W.rows(); }
  Index out_dim() const { return W.cols(); }

  static GnnLayerParams init(Index in, Index out, Rng& rng) {
    GnnLayerParams p;
    p.W = nn::xavier_uniform<S>(in, out, in, out, rng);
    p.b = Vector<S>::Zero(out);
    p.gamma = Vector<S>::Ones(out);
    p.beta = Vector<S>::Zero(out);
    p.run_mean = Vector<S>::Zero(out);
    p.run_var = Vector<S>::Ones(out);
    return p;
  }

  /// Same shapes, all zeros (gradient / moment buffers).
  GnnLayerParams zeros_like() const {
    GnnLayerParams z = *this;
    for (auto* m : {&z.b, &z.gamma, &z.beta, &z.run_mean, &z.run_var}) m->setZero();
    z.W.setZero();
    return z;
  }

  template <typename T>
  GnnLayerParams<T> cast() const {
    GnnLayerParams<T> o;
    o.W = W.template cast<T>();
    o.b = b.template cast<T>();
    o.gamma = gamma.template cast<T>();
    o.beta = beta.template cast<T>();
    o.run_mean = run_mean.template cast<T>();
    o.run_var = run_var.template cast<T>();
    o.momentum = static_cast<T>(momentum);
    o.eps = static_cast<T>(eps);
    return o;
  }

  /// Calls f(name, tensor, others.tensor...) for each trainable tensor.
  template <typename F, typename Self, typename... O>
  static void each_trainable(F&& f, const std::string& prefix, Self& self, O&... o) {
    f(prefix + "W", self.W, o.W...);
    f(prefix + "b", self.b, o.b...);
    f(prefix + "gamma", self.gamma, o.gamma...);
    f(prefix + "beta", self.beta, o.beta...);
  }
  template <typename F, typename Self, typename... O>
  static void each_buffer(F&& f, const std::string& prefix, Self& self, O&... o) {
    f(prefix + "run_mean", self.run_mean, o.run_mean...);
    f(prefix + "run_var", self.run_var, o.run_var...);
  }
};

/// The d_sub + 2 layers of one mission.
template <typename S>
struct MissionGnnParams {
  std::vector<GnnLayerParams<S>> layers;

  static MissionGnnParams init(Index d_emb, Index dim, int depth, Rng& rng) {
    MissionGnnParams p;
    for (int l = 1; l <= depth; ++l) p.layers.push_back(GnnLayerParams<S>::init(l == 1 ? d_emb : dim, dim, rng));
    return p;
  }
  MissionGnnParams zeros_like() const {
    MissionGnnParams z;
    for (const auto& l : layers) z.layers.push_back(l.zeros_like());
    return z;
  }
  template <typename T>
  MissionGnnParams<T> cast() const {
    MissionGnnParams<T> o;
    for (const auto& l : layers) o.layers.push_back(l.template cast<T>());
    return o;
  }
  Index out_dim() const { return layers.back().out_dim(); }
  void validate(Index d_emb) const {
    require_shape(!layers.empty(), "mission has no GNN layers");
    Index in = d_emb;
    for (const auto& l : layers) {
      require_shape(l.in_dim() == in, "GNN layer input width does not chain");
      require_shape(l.b.size() == l.out_dim() && l.gamma.size() == l.out_dim() && l.beta.size() == l.out_dim() &&
                        l.run_mean.size() == l.out_dim() && l.run_var.size() == l.out_dim(),
                    "GNN layer vector length mismatch");
      in = l.out_dim();
    }
  }
};

// --- per-layer operations ---------------------------------------------------

/// X W + b on every row.
template <typename DX, typename DW, typename DB, typename S = typename DX::Scalar>
Matrix<S> dense_transform(const Eigen::MatrixBase<DX>& X, const Eigen::MatrixBase<DW>& W,
                          const Eigen::MatrixBase<DB>& b) {
  require_shape(X.cols() == W.rows(), "dense_transform: input width " + std::to_string(X.cols()) +
                                          " does not match W rows " + std::to_string(W.rows()));
  require_shape(b.size() == W.cols(), "dense_transform: bias length mismatch");
  return (X * W).rowwise() + b.transpose();
}

/// Element-wise product of endpoint rows, one F-row block per edge (edge-major).
template <typename Derived, typename S = typename Derived::Scalar>
Matrix<S> message_pass(const Eigen::MatrixBase<Derived>& X, const std::vector<Edge>& edges, Index frames = 1) {
  const Index nodes = X.rows() / frames;
  Matrix<S> out(static_cast<Index>(edges.size()) * frames, X.cols());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [s, d] = edges[e];
    require_shape(s >= 0 && s < nodes && d >= 0 && d < nodes, "message_pass: edge endpoint out of range");
    out.middleRows(static_cast<Index>(e) * frames, frames) =
        X.middleRows(s * frames, frames).cwiseProduct(X.middleRows(d * frames, frames));
  }
  return out;
}

/// Mean of incoming messages for nodes in `dests`; every other row is copied.
template <typename S>
Matrix<S> aggregate(const Matrix<S>& X, const Matrix<S>& messages, const std::vector<Edge>& edges,
                    const std::vector<int>& dests, Index frames = 1) {
  const Index nodes = X.rows() / frames;
  require_shape(messages.rows() == static_cast<Index>(edges.size()) * frames && messages.cols() == X.cols(),
                "aggregate: message block shape mismatch");
  Matrix<S> out = X;
  std::vector<int> fan_in(static_cast<std::size_t>(nodes), -1);
  for (int d : dests) {
    require_shape(d >= 0 && d < nodes, "aggregate: destination out of range");
    fan_in[d] = 0;
    out.middleRows(d * frames, frames).setZero();
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const int d = edges[e].second;
    require_shape(d >= 0 && d < nodes && fan_in[d] >= 0, "aggregate: edge destination outside the layer");
    ++fan_in[d];
    out.middleRows(d * frames, frames) += messages.middleRows(static_cast<Index>(e) * frames, frames);
  }
  for (int d : dests) {
    if (fan_in[d] == 0) throw EmptyFanIn("aggregate: node " + std::to_string(d) + " has no incoming edge");
    out.middleRows(d * frames, frames) /= S(fan_in[d]);
  }
  return out;
}

template <typename S>
struct BatchNormCache {
  Matrix<S> xhat;
  RowVector<S> mean, var;  // batch statistics (biased variance)
  RowVector<S> inv_std;
  Index n = 0;
};

/// Channel-wise batch norm. Train mode uses batch statistics and leaves the
/// running statistics alone; see update_running_stats.
template <typename S>
Matrix<S> batch_norm(const Matrix<S>& X, const GnnLayerParams<S>& p, Mode mode, BatchNormCache<S>* cache = nullptr) {
  require_shape(X.cols() == p.gamma.size(), "batch_norm: channel count mismatch");
  RowVector<S> mean, var;
  if (mode == Mode::Train) {
    require_shape(X.rows() > 0, "batch_norm: empty batch");
    mean = X.colwise().mean();
    var = (X.rowwise() - mean).array().square().colwise().mean().matrix();
  } else {
    mean = p.run_mean.transpose();
    var = p.run_var.transpose();
  }
  const RowVector<S> inv_std = (var.array() + p.eps).rsqrt().matrix();
  Matrix<S> xhat = (X.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix<S> y = (xhat.array().rowwise() * p.gamma.transpose().array()).matrix().rowwise() + p.beta.transpose();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->mean = mean;
    cache->var = var;
    cache->inv_std = inv_std;
    cache->n = X.rows();
  }
  return y;
}

/// Momentum update of the running statistics; the running variance uses the
/// unbiased batch variance.
template <typename S>
void update_running_stats(GnnLayerParams<S>& p, const BatchNormCache<S>& c) {
  const S unbias = c.n > 1 ? S(c.n) / S(c.n - 1) : S(1);
  p.run_mean = (S(1) - p.momentum) * p.run_mean + p.momentum * c.mean.transpose();
  p.run_var = (S(1) - p.momentum) * p.run_var + p.momentum * unbias * c.var.transpose();
}

/// Returns dX; accumulates dgamma, dbeta.
template <typename S>
Matrix<S> batch_norm_backward(const Matrix<S>& dY, const GnnLayerParams<S>& p, const BatchNormCache<S>& c, Mode mode,
                              Vector<S>& dgamma, Vector<S>& dbeta) {
  dgamma += (dY.array() * c.xhat.array()).colwise().sum().matrix().transpose();
  dbeta += dY.colwise().sum().transpose();
  const Matrix<S> dxhat = dY.array().rowwise() * p.gamma.transpose().array();
  if (mode == Mode::Eval) return dxhat.array().rowwise() * c.inv_std.array();
  const RowVector<S> m1 = dxhat.colwise().mean();
  const RowVector<S> m2 = (dxhat.array() * c.xhat.array()).colwise().mean().matrix();
  Matrix<S> dx = dxhat.rowwise() - m1;
  dx -= (c.xhat.array().rowwise() * m2.array()).matrix();
  return dx.array().rowwise() * c.inv_std.array();
}

/// One layer: ELU(BatchNorm(aggregate(dense(X), message_pass(dense(X))))).
/// Train mode also advances the running statistics.
template <typename S>
Matrix<S> gnn_layer(const Matrix<S>& X, GnnLayerParams<S>& p, const LayeredGraph& g, int l, Mode mode,
                    Index frames = 1) {
  require_shape(l >= 1 && l <= g.depth(), "gnn_layer: layer index out of range");
  require_shape(X.rows() == g.num_nodes() * frames, "gnn_layer: row count is not |V| x frames");
  const Matrix<S> Z = dense_transform(X, p.W, p.b);
  const Matrix<S> A = aggregate(Z, message_pass(Z, g.E[l], frames), g.E[l], g.V[l], frames);
  BatchNormCache<S> cache;
  const Matrix<S> Y = batch_norm(A, p, mode, &cache);
  if (mode == Mode::Train) update_running_stats(p, cache);
  return nn::elu(Y);
}

/// Encoding-node embedding r for one frame. `node_inputs` holds one row per
/// node (the sensor row is replaced by the frame embedding).
template <typename S>
Vector<S> forward_mission(const Vector<S>& frame_embedding, const Matrix<S>& node_inputs, const LayeredGraph& g,
                          MissionGnnParams<S>& params, Mode mode) {
  require_shape(node_inputs.rows() == g.num_nodes(), "forward_mission: one input row per node required");
  require_shape(frame_embedding.size() == node_inputs.cols(), "forward_mission: frame embedding length mismatch");
  require_shape(static_cast<int>(params.layers.size()) == g.depth(), "forward_mission: layer count mismatch");
  Matrix<S> X = node_inputs;
  X.row(g.sensor) = frame_embedding.transpose();
  for (int l = 1; l <= g.depth(); ++l) X = gnn_layer(X, params.layers[l - 1], g, l, mode);
  return X.row(g.encoding).transpose();
}

/// Concatenation of per-mission readouts in the given (pinned) order.
template <typename S>
Vector<S> fuse_missions(const std::vector<Vector<S>>& readouts) {
  Index total = 0;
  for (const auto& r : readouts) total += r.size();
  Vector<S> f(total);
  Index at = 0;
  for (const auto& r : readouts) {
    f.segment(at, r.size()) = r;
    at += r.size();
  }
  return f;
}

// --- batched forward / backward -------------------------------------------

/// Forward over many frames at once with the caches needed for backward.
/// Layer 1 exploits that only the sensor row differs between frames: the
/// dense transform of every other node is computed once and broadcast.
template <typename S>
class MissionForward {
public:
  /// sensor: F x d_emb frame embeddings. node_inputs: |V| x d_emb (sensor
  /// row ignored). Returns the F x D encoding rows.
  Matrix<S> forward(const LayeredGraph& g, const MissionGnnParams<S>& p, const Matrix<S>& sensor,
                    const Matrix<S>& node_inputs, Mode mode) {
    require_shape(static_cast<int>(p.layers.size()) == g.depth(), "MissionForward: layer count mismatch");
    require_shape(node_inputs.rows() == g.num_nodes(), "MissionForward: one input row per node required");
    require_shape(sensor.cols() == node_inputs.cols() && sensor.cols() == p.layers.front().in_dim(),
                  "MissionForward: embedding width mismatch");
    graph_ = &g;
    mode_ = mode;
    frames_ = sensor.rows();
    sensor_ = &sensor;
    node_inputs_ = &node_inputs;
    const Index F = frames_;
    const int depth = g.depth();
    cache_.resize(static_cast<std::size_t>(depth) + 1);

    for (int l = 1; l <= depth; ++l) {
      const auto& lp = p.layers[static_cast<std::size_t>(l - 1)];
      auto& c = cache_[static_cast<std::size_t>(l)];
      if (l == 1) {
        const Matrix<S> per_node = dense_transform(node_inputs, lp.W, lp.b);
        c.Z.resize(g.num_nodes() * F, lp.out_dim());
        for (int v = 0; v < g.num_nodes(); ++v)
          c.Z.middleRows(v * F, F) = per_node.row(v).replicate(F, 1);
        c.Z.middleRows(g.sensor * F, F) = dense_transform(sensor, lp.W, lp.b);
      } else {
        c.Z = dense_transform(cache_[static_cast<std::size_t>(l - 1)].X, lp.W, lp.b);
      }
      const Matrix<S> A = aggregate(c.Z, message_pass(c.Z, g.E[l], F), g.E[l], g.V[l], F);
      c.X = nn::elu(batch_norm(A, lp, mode, &c.bn));
    }
    return cache_.back().X.middleRows(g.encoding * F, F);
  }

  void commit_running_stats(MissionGnnParams<S>& p) const {
    if (mode_ != Mode::Train) return;
    for (int l = 1; l <= graph_->depth(); ++l)
      update_running_stats(p.layers[static_cast<std::size_t>(l - 1)], cache_[static_cast<std::size_t>(l)].bn);
  }

  /// Accumulates parameter gradients for upstream dR (F x D). Writes the
  /// gradient w.r.t. the frame embeddings if d_sensor is given.
  void backward(const Matrix<S>& dR, const MissionGnnParams<S>& p, MissionGnnParams<S>& grads,
                Matrix<S>* d_sensor = nullptr) const {
    const auto& g = *graph_;
    const Index F = frames_;
    require_shape(dR.rows() == F, "MissionForward::backward: dR row count mismatch");
    Matrix<S> dX = Matrix<S>::Zero(g.num_nodes() * F, dR.cols());
    dX.middleRows(g.encoding * F, F) = dR;

    for (int l = g.depth(); l >= 1; --l) {
      const auto& lp = p.layers[static_cast<std::size_t>(l - 1)];
      auto& gp = grads.layers[static_cast<std::size_t>(l - 1)];
      const auto& c = cache_[static_cast<std::size_t>(l)];

      const Matrix<S> dY = dX.cwiseProduct(nn::elu_grad_from_output(c.X));
      const Matrix<S> dA = batch_norm_backward(dY, lp, c.bn, mode_, gp.gamma, gp.beta);

      // aggregate + message backward
      Matrix<S> dZ = dA;
      std::vector<int> fan_in(static_cast<std::size_t>(g.num_nodes()), 0);
      for (const auto& [s, d] : g.E[l]) ++fan_in[static_cast<std::size_t>(d)];
      for (int d : g.V[l]) dZ.middleRows(d * F, F).setZero();
      for (const auto& [s, d] : g.E[l]) {
        const auto dm = dA.middleRows(d * F, F) / S(fan_in[static_cast<std::size_t>(d)]);
        dZ.middleRows(s * F, F) += dm.cwiseProduct(c.Z.middleRows(d * F, F));
        dZ.middleRows(d * F, F) += dm.cwiseProduct(c.Z.middleRows(s * F, F));
      }

      gp.b += dZ.colwise().sum().transpose();
      if (l > 1) {
        gp.W.noalias() += cache_[static_cast<std::size_t>(l - 1)].X.transpose() * dZ;
        dX.noalias() = dZ * lp.W.transpose();
      } else {
        const auto& in = *node_inputs_;
        for (int v = 0; v < g.num_nodes(); ++v) {
          if (v == g.sensor) continue;
          gp.W.noalias() += in.row(v).transpose() * dZ.middleRows(v * F, F).colwise().sum();
        }
        const auto dZs = dZ.middleRows(g.sensor * F, F);
        gp.W.noalias() += sensor_->transpose() * dZs;
        if (d_sensor) *d_sensor = dZs * lp.W.transpose();
      }
    }
  }

  /// Node-major output of layer l (for tests and inspection).
  const Matrix<S>& layer_output(int l) const { return cache_.at(static_cast<std::size_t>(l)).X; }

private:
  struct LayerCache {
    Matrix<S> Z;  // dense output
    BatchNormCache<S> bn;
    Matrix<S> X;  // layer output
  };
  const LayeredGraph* graph_ = nullptr;
  const Matrix<S>* sensor_ = nullptr;
  const Matrix<S>* node_inputs_ = nullptr;
  Mode mode_ = Mode::Eval;
  Index frames_ = 0;
  std::vector<LayerCache> cache_;
};

}  // namespace mgnn::hgnn
