#pragma once

// Shared test helpers: random instances and straight-line reference
// implementations written with plain loops, independent of the library code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mgnn/hgnn/hgnn.hpp"
#include "mgnn/kg/graph.hpp"
#include "mgnn/temporal/temporal.hpp"

namespace testsupport {

using Table = std::vector<std::vector<double>>;

inline Table zeros(std::size_t r, std::size_t c) { return Table(r, std::vector<double>(c, 0.0)); }

template <typename M>
Table to_table(const M& m) {
  Table t = zeros(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t[i][j] = static_cast<double>(m(i, j));
  return t;
}

inline double max_abs_diff(const Table& a, const Table& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - b[i][j]));
  return worst;
}

/// Random mission graph: layer widths in [1, max_width], every non-sensor node
/// gets 1..3 parents from the layer above, childless concept nodes feed the
/// encoding node.
inline mgnn::kg::ReasoningGraph random_reasoning_graph(std::mt19937_64& eng, int sub_depth, int max_width) {
  using namespace mgnn::kg;
  ReasoningGraph g;
  g.mission.mission_id = "m";
  g.mission.sub_depth = sub_depth;
  g.nodes.push_back({"sensor", "", NodeKind::Sensor, 0});
  std::vector<std::vector<std::string>> ids(static_cast<std::size_t>(sub_depth) + 2);
  ids[0] = {"sensor"};
  for (int l = 1; l <= sub_depth + 1; ++l) {
    const int width = 1 + static_cast<int>(eng() % static_cast<unsigned>(max_width));
    for (int i = 0; i < width; ++i) {
      const std::string id = "L" + std::to_string(l) + "_" + std::to_string(i);
      g.nodes.push_back({id, "w" + id, l == 1 ? NodeKind::KeyConcept : NodeKind::SubGraph, l});
      ids[l].push_back(id);
      auto parents = ids[l - 1];
      std::shuffle(parents.begin(), parents.end(), eng);
      const std::size_t k = 1 + eng() % std::min<std::size_t>(3, parents.size());
      for (std::size_t p = 0; p < k; ++p)
        g.edges.push_back({parents[p], id, l == 1 ? EdgeProvenance::SensorFanout : EdgeProvenance::LlmSelected});
    }
  }
  g.nodes.push_back({"encoding", "", NodeKind::Encoding, sub_depth + 2});
  const int first_leaf_layer = sub_depth == 0 ? 1 : 2;
  for (int l = first_leaf_layer; l <= sub_depth + 1; ++l)
    for (const auto& id : ids[l]) {
      const bool has_child = std::any_of(g.edges.begin(), g.edges.end(), [&](const auto& e) { return e.src == id; });
      if (!has_child) g.edges.push_back({id, "encoding", EdgeProvenance::EncodingFanin});
    }
  return g;
}

template <typename S>
mgnn::Matrix<S> random_matrix(std::mt19937_64& eng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  mgnn::Matrix<S> m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = static_cast<S>(u(eng));
  return m;
}

/// Random layer parameters with non-trivial batch-norm state.
template <typename S>
mgnn::hgnn::GnnLayerParams<S> random_layer(std::mt19937_64& eng, Eigen::Index in, Eigen::Index out) {
  mgnn::hgnn::GnnLayerParams<S> p;
  p.W = random_matrix<S>(eng, in, out, 0.8);
  p.b = random_matrix<S>(eng, out, 1, 0.5);
  p.gamma = (random_matrix<S>(eng, out, 1, 0.5).array() + S(1)).matrix();
  p.beta = random_matrix<S>(eng, out, 1, 0.5);
  p.run_mean = random_matrix<S>(eng, out, 1, 0.3);
  p.run_var = (random_matrix<S>(eng, out, 1, 0.4).array() + S(1)).matrix();
  return p;
}

struct RefLayer {
  Table W;
  std::vector<double> b, gamma, beta, run_mean, run_var;
  double eps = 1e-5;
};

template <typename S>
RefLayer to_ref(const mgnn::hgnn::GnnLayerParams<S>& p) {
  RefLayer r;
  r.W = to_table(p.W);
  for (Eigen::Index i = 0; i < p.b.size(); ++i) {
    r.b.push_back(p.b[i]);
    r.gamma.push_back(p.gamma[i]);
    r.beta.push_back(p.beta[i]);
    r.run_mean.push_back(p.run_mean[i]);
    r.run_var.push_back(p.run_var[i]);
  }
  r.eps = static_cast<double>(p.eps);
  return r;
}

/// Reference GNN layer for a stack of per-frame node tables X[f][v][k].
/// Edges are (src, dst) with dst in `dests`. Train mode normalizes each channel
/// over all (frame, node) entries.
inline std::vector<Table> ref_gnn_layer(const std::vector<Table>& X, const RefLayer& p,
                                        const std::vector<std::pair<int, int>>& edges, const std::vector<int>& dests,
                                        bool train) {
  const std::size_t F = X.size(), V = X[0].size(), in = X[0][0].size(), out = p.b.size();
  std::vector<Table> Z(F, zeros(V, out)), A(F, zeros(V, out)), Y(F, zeros(V, out));
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t v = 0; v < V; ++v)
      for (std::size_t j = 0; j < out; ++j) {
        double acc = p.b[j];
        for (std::size_t k = 0; k < in; ++k) acc += X[f][v][k] * p.W[k][j];
        Z[f][v][j] = acc;
      }
  for (std::size_t f = 0; f < F; ++f) {
    A[f] = Z[f];
    for (int d : dests) {
      int count = 0;
      std::vector<double> sum(out, 0.0);
      for (const auto& [s, dd] : edges) {
        if (dd != d) continue;
        ++count;
        for (std::size_t j = 0; j < out; ++j) sum[j] += Z[f][s][j] * Z[f][d][j];
      }
      for (std::size_t j = 0; j < out; ++j) A[f][d][j] = sum[j] / count;
    }
  }
  for (std::size_t j = 0; j < out; ++j) {
    double mean = p.run_mean[j], var = p.run_var[j];
    if (train) {
      mean = 0;
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t v = 0; v < V; ++v) mean += A[f][v][j];
      mean /= static_cast<double>(F * V);
      var = 0;
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t v = 0; v < V; ++v) var += (A[f][v][j] - mean) * (A[f][v][j] - mean);
      var /= static_cast<double>(F * V);
    }
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t v = 0; v < V; ++v) {
        const double y = p.gamma[j] * (A[f][v][j] - mean) / std::sqrt(var + p.eps) + p.beta[j];
        Y[f][v][j] = y > 0 ? y : std::exp(y) - 1.0;
      }
  }
  return Y;
}

/// Full-sequence reference transformer encoder layer (every query position,
/// post-LN, ReLU FFN) returning the last output row. Plain loops in double.
template <typename S>
std::vector<double> ref_encode_window(const mgnn::Matrix<S>& Xin, const mgnn::temporal::TemporalParams<S>& p) {
  const std::size_t T = static_cast<std::size_t>(Xin.rows()), D = static_cast<std::size_t>(Xin.cols());
  const std::size_t H = static_cast<std::size_t>(p.heads), dh = D / H, Fd = static_cast<std::size_t>(p.W1.cols());
  Table X = to_table(Xin);
  if (p.positional)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < D; ++i) {
        const double w = 1.0 / std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(D));
        X[t][i] += (i % 2 == 0) ? std::sin(static_cast<double>(t) * w) : std::cos(static_cast<double>(t) * w);
      }
  auto affine = [&](const Table& in, const auto& W, const auto& b) {
    Table out = zeros(in.size(), static_cast<std::size_t>(W.cols()));
    for (std::size_t r = 0; r < in.size(); ++r)
      for (std::size_t j = 0; j < out[r].size(); ++j) {
        double acc = b[static_cast<Eigen::Index>(j)];
        for (std::size_t k = 0; k < in[r].size(); ++k) acc += in[r][k] * W(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
        out[r][j] = acc;
      }
    return out;
  };
  auto layer_norm = [&](std::vector<double> v, const auto& g, const auto& b) {
    double mean = 0, var = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = (v[i] - mean) / std::sqrt(var + static_cast<double>(p.eps)) * g[static_cast<Eigen::Index>(i)] + b[static_cast<Eigen::Index>(i)];
    return v;
  };
  const Table Q = affine(X, p.Wq, p.bq), K = affine(X, p.Wk, p.bk), V = affine(X, p.Wv, p.bv);
  Table concat = zeros(T, D);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t h = 0; h < H; ++h) {
      std::vector<double> sc(T);
      double mx = -1e300;
      for (std::size_t u = 0; u < T; ++u) {
        double acc = 0;
        for (std::size_t k = 0; k < dh; ++k) acc += Q[t][h * dh + k] * K[u][h * dh + k];
        sc[u] = acc / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, sc[u]);
      }
      double z = 0;
      for (auto& v : sc) z += (v = std::exp(v - mx));
      for (std::size_t u = 0; u < T; ++u)
        for (std::size_t k = 0; k < dh; ++k) concat[t][h * dh + k] += sc[u] / z * V[u][h * dh + k];
    }
  const Table O = affine(concat, p.Wo, p.bo);
  Table out = zeros(T, D);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> r1(D);
    for (std::size_t i = 0; i < D; ++i) r1[i] = X[t][i] + O[t][i];
    const auto h1 = layer_norm(r1, p.ln1_gamma, p.ln1_beta);
    std::vector<double> a(Fd);
    for (std::size_t j = 0; j < Fd; ++j) {
      double acc = p.b1[static_cast<Eigen::Index>(j)];
      for (std::size_t i = 0; i < D; ++i) acc += h1[i] * p.W1(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      a[j] = std::max(acc, 0.0);
    }
    std::vector<double> r2(D);
    for (std::size_t i = 0; i < D; ++i) {
      double acc = p.b2[static_cast<Eigen::Index>(i)];
      for (std::size_t j = 0; j < Fd; ++j) acc += a[j] * p.W2(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
      r2[i] = h1[i] + acc;
    }
    out[t] = layer_norm(r2, p.ln2_gamma, p.ln2_beta);
  }
  return out[T - 1];
}

/// Random temporal parameters with non-trivial norms and biases.
template <typename S>
mgnn::temporal::TemporalParams<S> random_temporal(std::mt19937_64& eng, Eigen::Index D, int heads, Eigen::Index ffn) {
  mgnn::Rng rng(eng());
  auto p = mgnn::temporal::TemporalParams<S>::init(D, heads, ffn, rng);
  mgnn::temporal::TemporalParams<S>::each_trainable(
      [&](const std::string& name, auto& t) {
        if (name.find("gamma") != std::string::npos)
          t = (random_matrix<S>(eng, t.rows(), t.cols(), 0.3).array() + S(1)).matrix();
        else if (t.cols() == 1)
          t = random_matrix<S>(eng, t.rows(), 1, 0.3);
      },
      "", p);
  return p;
}

/// Element-wise relative error with a floor on the denominator.
inline double grad_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Central difference of `loss` w.r.t. every entry of `x`; returns the worst
/// relative error against `analytic`.
template <typename M>
double check_gradient(M& x, const M& analytic, const std::function<double()>& loss, double h = 1e-5) {
  double worst = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = loss();
    x.data()[i] = keep - h;
    const double down = loss();
    x.data()[i] = keep;
    worst = std::max(worst, grad_rel_error(analytic.data()[i], (up - down) / (2 * h)));
  }
  return worst;
}

}  // namespace testsupport
