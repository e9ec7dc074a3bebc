#pragma once

// All trainable state of one detector: per-mission GNNs, the temporal encoder
// and the decision layer, plus the fixed graph inputs they run over.

#include <map>
#include <string>
#include <vector>

#include "mgnn/embedding/embedding.hpp"
#include "mgnn/hgnn/hgnn.hpp"
#include "mgnn/kg/graph.hpp"
#include "mgnn/temporal/temporal.hpp"

namespace mgnn {

struct ModelConfig {
  Index d_emb = 64;
  Index gnn_dim = 8;
  int heads = 8;
  Index ffn_dim = 128;
  int T = 30;
  bool positional = true;
  double dropout = 0.0;
};

template <typename S>
struct Model {
  std::vector<std::string> mission_ids;  // pinned order; class i + 1 is mission i
  std::vector<hgnn::MissionGnnParams<S>> gnn;
  temporal::TemporalParams<S> temporal;
  temporal::DecisionParams<S> decision;

  Index fused_dim() const {
    Index d = 0;
    for (const auto& m : gnn) d += m.out_dim();
    return d;
  }
  Index num_classes() const { return static_cast<Index>(mission_ids.size()) + 1; }
  Index d_emb() const { return gnn.front().layers.front().in_dim(); }

  /// depths[i] = d_sub + 2 of mission i.
  static Model init(const std::vector<std::string>& missions, const std::vector<int>& depths, const ModelConfig& cfg,
                    std::uint64_t seed) {
    if (missions.empty()) throw ConfigError("model needs at least one mission");
    if (missions.size() != depths.size()) throw ConfigError("one depth per mission required");
    Rng rng(seed);
    Model m;
    m.mission_ids = missions;
    for (int depth : depths) m.gnn.push_back(hgnn::MissionGnnParams<S>::init(cfg.d_emb, cfg.gnn_dim, depth, rng));
    const Index D = cfg.gnn_dim * static_cast<Index>(missions.size());
    m.temporal = temporal::TemporalParams<S>::init(D, cfg.heads, cfg.ffn_dim, rng);
    m.temporal.positional = cfg.positional;
    m.temporal.dropout = static_cast<S>(cfg.dropout);
    m.decision = temporal::DecisionParams<S>::init(static_cast<Index>(missions.size()) + 1, D, rng);
    return m;
  }

  Model zeros_like() const {
    Model z = *this;
    each_trainable([](const std::string&, auto& t) { t.setZero(); }, z);
    each_buffer([](const std::string&, auto& t) { t.setZero(); }, z);
    return z;
  }

  template <typename T>
  Model<T> cast() const {
    Model<T> o;
    o.mission_ids = mission_ids;
    for (const auto& g : gnn) o.gnn.push_back(g.template cast<T>());
    o.temporal = temporal.template cast<T>();
    o.decision = decision.template cast<T>();
    return o;
  }

  /// f(name, tensor, others.tensor...) over every trainable tensor, in a fixed order.
  template <typename F, typename Self, typename... O>
  static void each_trainable(F&& f, Self& self, O&... o) {
    for (std::size_t i = 0; i < self.gnn.size(); ++i)
      for (std::size_t l = 0; l < self.gnn[i].layers.size(); ++l)
        hgnn::GnnLayerParams<S>::each_trainable(f, layer_prefix(self, i, l), self.gnn[i].layers[l],
                                                o.gnn[i].layers[l]...);
    temporal::TemporalParams<S>::each_trainable(f, "temporal/", self.temporal, o.temporal...);
    temporal::DecisionParams<S>::each_trainable(f, "decision/", self.decision, o.decision...);
  }

  /// Batch-norm running statistics.
  template <typename F, typename Self, typename... O>
  static void each_buffer(F&& f, Self& self, O&... o) {
    for (std::size_t i = 0; i < self.gnn.size(); ++i)
      for (std::size_t l = 0; l < self.gnn[i].layers.size(); ++l)
        hgnn::GnnLayerParams<S>::each_buffer(f, layer_prefix(self, i, l), self.gnn[i].layers[l],
                                             o.gnn[i].layers[l]...);
  }

  /// Trainable scalar counts keyed by module (hgnn, temporal, decision).
  std::map<std::string, std::size_t> parameter_counts() const {
    std::map<std::string, std::size_t> out{{"hgnn", 0}, {"temporal", 0}, {"decision", 0}};
    each_trainable(
        [&](const std::string& name, const auto& t) {
          const auto module = name.rfind("temporal/", 0) == 0   ? "temporal"
                              : name.rfind("decision/", 0) == 0 ? "decision"
                                                                : "hgnn";
          out[module] += static_cast<std::size_t>(t.size());
        },
        *this);
    return out;
  }

private:
  template <typename Self>
  static std::string layer_prefix(Self& self, std::size_t mission, std::size_t layer) {
    return self.mission_ids[mission] + "/layer_" + std::to_string(layer + 1) + "/";
  }
};

/// The graphs a model runs over and their fixed node inputs (label
/// embeddings; sensor row zero, encoding row zero).
template <typename S>
struct GraphInputs {
  std::vector<hgnn::LayeredGraph> graphs;
  std::vector<Matrix<S>> node_inputs;

  std::vector<int> depths() const {
    std::vector<int> d;
    for (const auto& g : graphs) d.push_back(g.depth());
    return d;
  }
  std::vector<std::string> mission_ids() const {
    std::vector<std::string> ids;
    for (const auto& g : graphs) ids.push_back(g.mission_id);
    return ids;
  }

  static GraphInputs build(const std::vector<kg::ReasoningGraph>& graphs, embedding::TextEmbedder& text) {
    GraphInputs in;
    for (const auto& rg : graphs) {
      auto g = hgnn::LayeredGraph::from_reasoning_graph(rg);
      Matrix<S> X = Matrix<S>::Zero(g.num_nodes(), text.dim());
      for (int v = 0; v < g.num_nodes(); ++v) {
        if (v == g.sensor) continue;
        const auto label = v == g.encoding ? std::string(embedding::kEncodingSentinel) : g.labels[v];
        const auto e = text.embed_text(label);
        if (e.size() != text.dim()) throw DimensionMismatch("label embedding has the wrong width");
        X.row(v) = e.template cast<S>().transpose();
      }
      in.graphs.push_back(std::move(g));
      in.node_inputs.push_back(std::move(X));
    }
    return in;
  }

  template <typename T>
  GraphInputs<T> cast() const {
    GraphInputs<T> o;
    o.graphs = graphs;
    for (const auto& m : node_inputs) o.node_inputs.push_back(m.template cast<T>());
    return o;
  }
};

/// Fused reasoning embeddings (F x D) for a block of frame embeddings.
template <typename S>
Matrix<S> reasoning_embeddings(const Model<S>& model, const GraphInputs<S>& in, const Matrix<S>& frames, Mode mode,
                               std::vector<hgnn::MissionForward<S>>* forwards = nullptr) {
  if (frames.cols() != model.d_emb())
    throw DimensionMismatch("frame embeddings have width " + std::to_string(frames.cols()) + ", model expects " +
                            std::to_string(model.d_emb()));
  require_shape(in.graphs.size() == model.gnn.size(), "one graph per mission required");
  std::vector<hgnn::MissionForward<S>> local;
  auto& fw = forwards ? *forwards : local;
  fw.resize(model.gnn.size());
  Matrix<S> out(frames.rows(), model.fused_dim());
  Index at = 0;
  for (std::size_t i = 0; i < model.gnn.size(); ++i) {
    const auto R = fw[i].forward(in.graphs[i], model.gnn[i], frames, in.node_inputs[i], mode);
    out.middleCols(at, R.cols()) = R;
    at += R.cols();
  }
  return out;
}

/// Window of T rows ending at row t of a per-video embedding sequence; rows
/// before the start replicate row 0.
template <typename Derived>
Matrix<typename Derived::Scalar> window_at(const Eigen::MatrixBase<Derived>& seq, Index t, Index T) {
  Matrix<typename Derived::Scalar> w(T, seq.cols());
  for (Index k = 0; k < T; ++k) w.row(k) = seq.row(std::max<Index>(0, t - (T - 1) + k));
  return w;
}

}  // namespace mgnn
