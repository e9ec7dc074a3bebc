#include <algorithm>
#include <map>
#include <numeric>

#include "mgnn/hgnn/hgnn.hpp"

namespace mgnn::hgnn {

int LayeredGraph::num_edges() const {
  int n = 0;
  for (const auto& e : E) n += static_cast<int>(e.size());
  return n;
}

LayeredGraph LayeredGraph::from_reasoning_graph(const kg::ReasoningGraph& rg) {
  const int depth = rg.depth();
  std::vector<int> order(rg.nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rg.nodes[a].layer < rg.nodes[b].layer; });

  LayeredGraph g;
  g.mission_id = rg.mission.mission_id;
  g.V.resize(static_cast<std::size_t>(depth) + 1);
  g.E.resize(static_cast<std::size_t>(depth) + 1);
  std::map<std::string, int, std::less<>> index;
  for (int src : order) {
    const auto& n = rg.nodes[static_cast<std::size_t>(src)];
    if (n.layer < 0 || n.layer > depth)
      throw ShapeMismatch("node " + n.id + " has layer " + std::to_string(n.layer) + " outside 0.." +
                          std::to_string(depth));
    const int i = g.num_nodes();
    index[n.id] = i;
    g.node_ids.push_back(n.id);
    g.labels.push_back(n.label);
    g.layer.push_back(n.layer);
    g.V[static_cast<std::size_t>(n.layer)].push_back(i);
    if (n.kind == kg::NodeKind::Sensor) g.sensor = i;
    if (n.kind == kg::NodeKind::Encoding) g.encoding = i;
  }
  for (const auto& e : rg.edges) {
    const auto s = index.find(e.src);
    const auto d = index.find(e.dst);
    if (s == index.end() || d == index.end())
      throw ShapeMismatch("edge " + e.src + " -> " + e.dst + " references an unknown node");
    g.E[static_cast<std::size_t>(g.layer[static_cast<std::size_t>(d->second)])].emplace_back(s->second, d->second);
  }
  g.validate();
  return g;
}

void LayeredGraph::validate() const {
  require_shape(depth() >= 2, "layered graph needs at least two layers");
  require_shape(V[0].size() == 1 && V[0][0] == sensor, "layer 0 must hold exactly the sensor node");
  require_shape(V[static_cast<std::size_t>(depth())].size() == 1 && V.back()[0] == encoding,
                "the last layer must hold exactly the encoding node");
  require_shape(E[0].empty(), "no edges may enter layer 0");
  std::vector<int> fan_in(static_cast<std::size_t>(num_nodes()), 0);
  for (int l = 1; l <= depth(); ++l)
    for (const auto& [s, d] : E[static_cast<std::size_t>(l)]) {
      require_shape(layer[static_cast<std::size_t>(d)] == l, "edge filed under the wrong layer");
      const int ls = layer[static_cast<std::size_t>(s)];
      // encoding fan-in may come from any shallower layer
      require_shape(d == encoding ? ls < l : ls == l - 1,
                    "edge " + node_ids[static_cast<std::size_t>(s)] + " -> " +
                        node_ids[static_cast<std::size_t>(d)] + " skips a layer");
      ++fan_in[static_cast<std::size_t>(d)];
    }
  for (int v = 0; v < num_nodes(); ++v)
    if (v != sensor && fan_in[static_cast<std::size_t>(v)] == 0)
      throw EmptyFanIn("node " + node_ids[static_cast<std::size_t>(v)] + " has no parent");
}

}  // namespace mgnn::hgnn
