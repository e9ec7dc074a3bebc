#include "mgnn/kg/builder.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>

#include "mgnn/kg/prompts.hpp"

namespace mgnn::kg {

namespace {

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

std::string Violation::describe() const {
  switch (type) {
    case Type::DuplicateNode:
      return "duplicate node '" + label + "' already in layer " + std::to_string(earlier_layer);
    case Type::InvalidEdge:
      return "edge parent '" + parent + "' of '" + label + "' not in previous layer";
    case Type::ZeroParents:
      return "node '" + label + "' has no valid parent";
  }
  return {};
}

std::vector<Violation> detect_errors(const std::vector<std::string>& layer_candidates,
                                     const ClaimedEdges& claimed_edges,
                                     const std::vector<std::vector<std::string>>& earlier_layers,
                                     const Suggestions* conceptnet) {
  std::vector<Violation> out;
  for (const auto& label : layer_candidates) {
    for (std::size_t k = 0; k < earlier_layers.size(); ++k) {
      if (contains(earlier_layers[k], label)) {
        out.push_back({Violation::Type::DuplicateNode, label, {}, static_cast<int>(k) + 1});
        break;
      }
    }
  }
  static const std::vector<std::string> kNone;
  const auto& prev = earlier_layers.empty() ? kNone : earlier_layers.back();
  for (const auto& label : layer_candidates) {
    const auto it = claimed_edges.find(label);
    if (it == claimed_edges.end()) continue;
    int valid = 0;
    for (const auto& parent : it->second) {
      bool ok = contains(prev, parent);
      if (ok && conceptnet) {
        const auto s = conceptnet->find(parent);
        ok = s != conceptnet->end() && s->second.count(label) > 0;
      }
      if (ok) {
        ++valid;
      } else {
        out.push_back({Violation::Type::InvalidEdge, label, parent, 0});
      }
    }
    if (valid == 0) out.push_back({Violation::Type::ZeroParents, label, {}, 0});
  }
  return out;
}

// ---------------------------------------------------------------------------

ReasoningGraph assemble_graph(const std::vector<std::vector<std::string>>& layers,
                              const std::vector<LabeledEdge>& edges, const MissionSpec& mission) {
  if (layers.empty() || layers.front().empty())
    throw StructuralViolation("assemble_graph: no key-concept layer");
  if (static_cast<int>(layers.size()) != mission.sub_depth + 1)
    throw StructuralViolation("assemble_graph: expected " + std::to_string(mission.sub_depth + 1) +
                              " concept layers, got " + std::to_string(layers.size()));

  ReasoningGraph g;
  g.mission = mission;
  g.nodes.push_back({std::string(kSensorId), "", NodeKind::Sensor, 0});

  std::map<std::string, std::string> id_of;  // label -> node id
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const int layer = static_cast<int>(k) + 1;
    for (std::size_t j = 0; j < layers[k].size(); ++j) {
      const std::string id = concept_node_id(layer, static_cast<int>(j));
      g.nodes.push_back({id, layers[k][j], k == 0 ? NodeKind::KeyConcept : NodeKind::SubGraph,
                         layer});
      if (!id_of.emplace(layers[k][j], id).second)
        throw StructuralViolation("assemble_graph: label '" + layers[k][j] + "' used twice");
    }
  }
  g.nodes.push_back({std::string(kEncodingId), "", NodeKind::Encoding, mission.sub_depth + 2});

  for (const auto& label : layers.front())
    g.edges.push_back({std::string(kSensorId), id_of.at(label), EdgeProvenance::SensorFanout});

  std::set<std::string> has_child;
  for (const auto& e : edges) {
    const auto p = id_of.find(e.parent);
    const auto c = id_of.find(e.child);
    if (p == id_of.end() || c == id_of.end())
      throw StructuralViolation("assemble_graph: edge " + e.parent + " -> " + e.child +
                                " references an unknown label");
    g.edges.push_back({p->second, c->second, e.provenance});
    has_child.insert(e.parent);
  }

  // Leaves of the sub-graph feed the encoding node. With no sub layers the
  // key concepts play that role.
  const std::size_t first = mission.sub_depth == 0 ? 0 : 1;
  if (mission.sub_depth == 0)
    g.trace.push_back({"warning", 0, "assemble", mission.mission_id, {}, {}, 0,
                       "sub_depth = 0: encoding node fed directly by key concepts"});
  for (std::size_t k = first; k < layers.size(); ++k)
    for (const auto& label : layers[k])
      if (!has_child.count(label))
        g.edges.push_back({id_of.at(label), std::string(kEncodingId), EdgeProvenance::EncodingFanin});

  if (auto violations = validate_graph(g); !violations.empty()) {
    std::string msg = "assembled graph is invalid:";
    for (const auto& v : violations) msg += " [" + v.rule + "] " + v.message + ";";
    throw StructuralViolation(msg);
  }
  return g;
}

std::vector<GraphViolation> validate_graph(const ReasoningGraph& g) {
  std::vector<GraphViolation> out;
  auto fail = [&](std::string rule, std::string msg) {
    out.push_back({std::move(rule), std::move(msg)});
  };
  const int depth = g.mission.sub_depth + 2;
  const std::size_t n = g.nodes.size();

  int sensors = 0, encodings = 0;
  std::map<std::string, int> index;
  std::map<std::string, std::string> label_owner;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = g.nodes[i];
    if (!index.emplace(node.id, static_cast<int>(i)).second)
      fail("uniqueness", "duplicate node id '" + node.id + "'");
    switch (node.kind) {
      case NodeKind::Sensor:
        ++sensors;
        if (node.layer != 0) fail("layering", "sensor node must sit in layer 0");
        if (!node.label.empty()) fail("structure", "sensor node must have an empty label");
        break;
      case NodeKind::Encoding:
        ++encodings;
        if (node.layer != depth)
          fail("layering", "encoding node must sit in layer " + std::to_string(depth));
        if (!node.label.empty()) fail("structure", "encoding node must have an empty label");
        break;
      case NodeKind::KeyConcept:
        if (node.layer != 1) fail("layering", "key concept '" + node.id + "' not in layer 1");
        break;
      case NodeKind::SubGraph:
        if (node.layer < 2 || node.layer > depth - 1)
          fail("layering", "sub-graph node '" + node.id + "' outside layers 2.." +
                               std::to_string(depth - 1));
        break;
    }
    if (node.kind == NodeKind::KeyConcept || node.kind == NodeKind::SubGraph) {
      const std::string key = normalize_label(node.label);
      if (key.empty()) fail("structure", "concept node '" + node.id + "' has an empty label");
      auto [it, fresh] = label_owner.emplace(key, node.id);
      if (!fresh)
        fail("uniqueness", "label '" + key + "' on both '" + it->second + "' and '" + node.id + "'");
    }
  }
  if (sensors != 1) fail("structure", "expected exactly one sensor node, found " + std::to_string(sensors));
  if (encodings != 1)
    fail("structure", "expected exactly one encoding node, found " + std::to_string(encodings));

  std::vector<std::vector<int>> children(n), parents(n);
  std::set<std::pair<int, int>> seen_edges;
  for (const auto& e : g.edges) {
    const auto s = index.find(e.src), d = index.find(e.dst);
    if (s == index.end() || d == index.end()) {
      fail("structure", "edge " + e.src + " -> " + e.dst + " references an unknown node");
      continue;
    }
    const auto& src = g.nodes[s->second];
    const auto& dst = g.nodes[d->second];
    if (!seen_edges.emplace(s->second, d->second).second)
      fail("structure", "duplicate edge " + e.src + " -> " + e.dst);
    children[s->second].push_back(d->second);
    parents[d->second].push_back(s->second);
    if (src.layer >= dst.layer)
      fail("layering", "edge " + e.src + " -> " + e.dst + " does not increase the layer index");
    switch (e.provenance) {
      case EdgeProvenance::SensorFanout:
        if (src.kind != NodeKind::Sensor || dst.kind != NodeKind::KeyConcept)
          fail("structure", "sensor_fanout edge " + e.src + " -> " + e.dst + " must go sensor -> key concept");
        break;
      case EdgeProvenance::EncodingFanin:
        if (dst.kind != NodeKind::Encoding ||
            (src.kind != NodeKind::SubGraph && src.kind != NodeKind::KeyConcept))
          fail("structure", "encoding_fanin edge " + e.src + " -> " + e.dst + " must go leaf -> encoding");
        break;
      case EdgeProvenance::ConceptNet:
      case EdgeProvenance::LlmSelected:
        if (dst.kind != NodeKind::SubGraph ||
            (src.kind != NodeKind::KeyConcept && src.kind != NodeKind::SubGraph))
          fail("structure", "concept edge " + e.src + " -> " + e.dst + " must end at a sub-graph node");
        else if (dst.layer != src.layer + 1)
          fail("layering", "concept edge " + e.src + " -> " + e.dst + " skips a layer");
        break;
    }
  }

  // Kahn's algorithm.
  {
    std::vector<int> indeg(n, 0);
    for (std::size_t i = 0; i < n; ++i) indeg[i] = static_cast<int>(parents[i].size());
    std::queue<int> ready;
    for (std::size_t i = 0; i < n; ++i)
      if (indeg[i] == 0) ready.push(static_cast<int>(i));
    std::size_t visited = 0;
    while (!ready.empty()) {
      const int v = ready.front();
      ready.pop();
      ++visited;
      for (int c : children[v])
        if (--indeg[c] == 0) ready.push(c);
    }
    if (visited != n) fail("acyclicity", "graph contains a directed cycle");
  }

  int key_concepts = 0;
  std::set<int> leaves;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = g.nodes[i];
    if (parents[i].empty() && children[i].empty())
      fail("structure", "isolated node '" + node.id + "'");
    if (node.kind == NodeKind::KeyConcept) {
      ++key_concepts;
      const bool from_sensor = parents[i].size() == 1 && g.nodes[parents[i][0]].kind == NodeKind::Sensor;
      if (!from_sensor) fail("fanout", "key concept '" + node.id + "' must have the sensor as its only parent");
    }
    if (node.kind == NodeKind::SubGraph) {
      const bool has_prev = std::any_of(parents[i].begin(), parents[i].end(), [&](int p) {
        return g.nodes[p].layer == node.layer - 1;
      });
      if (!has_prev) fail("layering", "sub-graph node '" + node.id + "' has no parent in the previous layer");
    }
    const bool leaf_kind = g.mission.sub_depth == 0 ? node.kind == NodeKind::KeyConcept
                                                    : node.kind == NodeKind::SubGraph;
    if (leaf_kind) {
      const bool has_concept_child = std::any_of(children[i].begin(), children[i].end(), [&](int c) {
        return g.nodes[c].kind == NodeKind::SubGraph;
      });
      if (!has_concept_child) leaves.insert(static_cast<int>(i));
    }
  }
  if (const int s = g.sensor_index(); s >= 0 && static_cast<int>(children[s].size()) != key_concepts)
    fail("fanout", "sensor out-degree " + std::to_string(children[s].size()) + " != key concepts " +
                       std::to_string(key_concepts));
  if (const int e = g.encoding_index(); e >= 0) {
    const std::set<int> fanin(parents[e].begin(), parents[e].end());
    if (fanin != leaves)
      fail("fanin", "encoding parents (" + std::to_string(fanin.size()) +
                        ") differ from the sub-graph leaves (" + std::to_string(leaves.size()) + ")");
  }
  return out;
}

// ---------------------------------------------------------------------------

KgBuilder::KgBuilder(MissionSpec mission, LlmClient& llm, ConceptNetClient& conceptnet)
    : KgBuilder(std::move(mission), llm, conceptnet, Options{}) {}

KgBuilder::KgBuilder(MissionSpec mission, LlmClient& llm, ConceptNetClient& conceptnet,
                     Options options)
    : mission_(std::move(mission)), llm_(llm), conceptnet_(conceptnet), options_(options) {
  mission_.validate();
}

void KgBuilder::record(TraceEntry entry) { trace_.push_back(std::move(entry)); }

std::string KgBuilder::call(LlmRequest& request, const std::string& step) {
  request.mission_id = mission_.mission_id;
  std::string reply = llm_.complete(request);
  std::string prompt = request.user;
  if (request.correction) prompt += "\n---\n" + *request.correction;
  record({"llm", request.layer, step, request.subject, std::move(prompt), reply, request.attempt, {}});
  return reply;
}

std::vector<std::string> KgBuilder::truncate(std::vector<std::string> labels, std::size_t cap,
                                             int layer, const std::string& what) {
  if (labels.size() <= cap) return labels;
  std::vector<std::string> dropped(labels.begin() + static_cast<std::ptrdiff_t>(cap), labels.end());
  labels.resize(cap);
  record({"truncate", layer, what, {}, {}, {}, 0,
          "kept first " + std::to_string(cap) + ", dropped: " + prompts::join(dropped)});
  return labels;
}

std::vector<std::string> KgBuilder::parse_or_trace(const std::string& reply, int layer,
                                                   const std::string& step) {
  try {
    return prompts::parse_label_list(reply);
  } catch (const MalformedResponse& e) {
    record({"violation", layer, step, {}, {}, {}, 0, std::string("malformed response: ") + e.what()});
    return {};
  }
}

std::vector<std::string> KgBuilder::generate_initial_concepts(int attempt) {
  if (mission_.mission_text.empty()) throw ConfigError("mission_text must be non-empty");
  LlmRequest req;
  req.kind = PromptKind::InitialNodes;
  req.system = prompts::initial_nodes_system(mission_.n_concepts);
  req.user = prompts::initial_nodes_user(mission_.mission_text);
  req.subject = mission_.mission_text;
  req.layer = 1;
  req.attempt = attempt;
  req.requested_count = mission_.n_concepts;
  const std::string reply = call(req, "initial_nodes");
  return truncate(prompts::parse_label_list(reply), static_cast<std::size_t>(mission_.n_concepts),
                  1, "initial_nodes");
}

Suggestions KgBuilder::suggest_related(const std::vector<std::string>& labels) {
  if (labels.empty()) throw ConfigError("suggest_related: no labels");
  Suggestions out;
  for (const auto& label : labels) {
    auto related = conceptnet_.related(label);
    record({"conceptnet", 0, conceptnet_.relation(), label, label,
            prompts::join(std::vector<std::string>(related.begin(), related.end())), 0, {}});
    out[label] = std::move(related);
  }
  return out;
}

std::vector<std::string> KgBuilder::flatten_suggestions(const std::vector<std::string>& prev,
                                                        const Suggestions& suggestions) const {
  // Round-robin over the previous labels so every label contributes.
  std::vector<std::vector<std::string>> lists;
  for (const auto& p : prev)
    if (auto it = suggestions.find(p); it != suggestions.end())
      lists.emplace_back(it->second.begin(), it->second.end());
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t round = 0; out.size() < options_.max_suggestions; ++round) {
    bool any = false;
    for (const auto& l : lists) {
      if (round >= l.size()) continue;
      any = true;
      if (seen.insert(l[round]).second) out.push_back(l[round]);
      if (out.size() >= options_.max_suggestions) break;
    }
    if (!any) break;
  }
  return out;
}

std::vector<std::string> KgBuilder::generate_next_layer(const std::vector<std::string>& prev_labels,
                                                        const Suggestions& suggestions, int layer,
                                                        int attempt) {
  if (prev_labels.empty()) throw ConfigError("generate_next_layer: empty previous layer");
  const auto suggested = flatten_suggestions(prev_labels, suggestions);
  LlmRequest req;
  req.kind = PromptKind::NextNodes;
  req.system = prompts::next_nodes_system(mission_.n_concepts);
  req.user = prompts::next_nodes_user(mission_.mission_text, prev_labels, suggested);
  req.subject = mission_.mission_text;
  req.layer = layer;
  req.attempt = attempt;
  req.requested_count = mission_.n_concepts;
  req.previous_labels = prev_labels;
  req.suggestions = suggested;
  const std::string reply = call(req, "next_nodes");
  return truncate(prompts::parse_label_list(reply), static_cast<std::size_t>(mission_.n_concepts),
                  layer, "next_nodes");
}

std::vector<std::string> KgBuilder::generate_edges(const std::string& new_label,
                                                   const std::vector<std::string>& prev_labels,
                                                   int layer) {
  if (prev_labels.empty()) throw ConfigError("generate_edges: empty previous layer");
  LlmRequest req;
  req.kind = PromptKind::Edges;
  req.system = prompts::edges_system(mission_.max_parents);
  req.user = prompts::edges_user(new_label, prev_labels);
  req.subject = new_label;
  req.layer = layer;
  req.requested_count = mission_.max_parents;
  req.previous_labels = prev_labels;
  const std::string reply = call(req, "edges");
  return truncate(prompts::parse_label_list(reply), static_cast<std::size_t>(mission_.max_parents),
                  layer, "edges:" + new_label);
}

void KgBuilder::repair_or_prune(std::vector<Violation> violations, LayerDraft& draft,
                                const std::vector<std::vector<std::string>>& earlier_layers,
                                const Suggestions& suggestions) {
  const int layer = draft.layer;
  const Suggestions* cn = mission_.edges_require_conceptnet && layer > 1 ? &suggestions : nullptr;
  const auto& prev = earlier_layers.empty() ? std::vector<std::string>{} : earlier_layers.back();
  const auto suggested = layer > 1 ? flatten_suggestions(prev, suggestions) : std::vector<std::string>{};

  for (const auto& v : violations) record({"violation", layer, "detect", v.label, {}, {}, 0, v.describe()});

  for (int attempt = 1; attempt <= mission_.max_repair_attempts && !violations.empty(); ++attempt) {
    std::vector<std::string> duplicates;
    std::map<std::string, std::vector<std::string>> bad_parents;
    std::vector<std::string> edge_children;
    for (const auto& v : violations) {
      if (v.type == Violation::Type::DuplicateNode) duplicates.push_back(v.label);
      if (v.type == Violation::Type::InvalidEdge) bad_parents[v.label].push_back(v.parent);
      if (v.type != Violation::Type::DuplicateNode && !contains(edge_children, v.label))
        edge_children.push_back(v.label);
    }

    if (!duplicates.empty()) {
      LlmRequest req;
      req.kind = layer == 1 ? PromptKind::InitialNodes : PromptKind::NextNodes;
      req.system = layer == 1 ? prompts::initial_nodes_system(mission_.n_concepts)
                              : prompts::next_nodes_system(mission_.n_concepts);
      req.user = draft.node_user_prompt;
      req.previous_response = draft.node_reply;
      req.correction = prompts::duplicate_nodes_correction(duplicates, draft.node_user_prompt);
      req.subject = mission_.mission_text;
      req.layer = layer;
      req.attempt = attempt;
      req.requested_count = mission_.n_concepts;
      req.previous_labels = prev;
      req.suggestions = suggested;
      req.flagged = duplicates;
      const std::string reply = call(req, "node_correction");
      auto parsed = parse_or_trace(reply, layer, "node_correction");
      if (!parsed.empty()) {
        draft.node_reply = reply;
        draft.candidates = truncate(std::move(parsed), static_cast<std::size_t>(mission_.n_concepts),
                                    layer, "node_correction");
        for (auto it = draft.claimed.begin(); it != draft.claimed.end();)
          it = contains(draft.candidates, it->first) ? std::next(it) : draft.claimed.erase(it);
      }
    }

    for (const auto& child : edge_children) {
      if (!contains(draft.candidates, child)) continue;
      LlmRequest req;
      req.kind = PromptKind::Edges;
      req.system = prompts::edges_system(mission_.max_parents);
      req.user = prompts::edges_user(child, prev);
      req.subject = child;
      req.layer = layer;
      req.attempt = attempt;
      req.requested_count = mission_.max_parents;
      req.previous_labels = prev;
      std::string step = "edges_retry";
      if (auto bp = bad_parents.find(child); bp != bad_parents.end()) {
        req.previous_response = draft.edge_replies[child];
        req.correction = prompts::missing_parents_correction(bp->second, req.user);
        req.flagged = bp->second;
        step = "edge_correction";
      }
      const std::string reply = call(req, step);
      draft.edge_replies[child] = reply;
      draft.claimed[child] = truncate(parse_or_trace(reply, layer, step),
                                      static_cast<std::size_t>(mission_.max_parents), layer,
                                      step + ":" + child);
    }

    violations = detect_errors(draft.candidates, draft.claimed, earlier_layers, cn);
    for (const auto& v : violations)
      record({"violation", layer, "detect", v.label, {}, {}, attempt, v.describe()});
  }

  // Whatever survived the correction rounds is pruned.
  for (const auto& v : violations) {
    if (v.type == Violation::Type::DuplicateNode) {
      draft.candidates.erase(std::remove(draft.candidates.begin(), draft.candidates.end(), v.label),
                             draft.candidates.end());
      draft.claimed.erase(v.label);
      record({"prune", layer, "node", v.label, {}, {}, 0, v.describe()});
    } else if (v.type == Violation::Type::InvalidEdge) {
      auto& parents = draft.claimed[v.label];
      parents.erase(std::remove(parents.begin(), parents.end(), v.parent), parents.end());
      record({"prune", layer, "edge", v.label, {}, {}, 0, v.describe()});
    }
  }
  for (const auto& v : violations) {
    if (v.type != Violation::Type::ZeroParents || !contains(draft.candidates, v.label)) continue;
    // Fall back to ConceptNet neighbours in the previous layer before pruning.
    std::vector<std::string> fallback;
    for (const auto& p : prev) {
      const auto s = suggestions.find(p);
      if (s != suggestions.end() && s->second.count(v.label)) fallback.push_back(p);
      if (static_cast<int>(fallback.size()) == mission_.max_parents) break;
    }
    draft.claimed.erase(v.label);
    if (!fallback.empty()) {
      record({"prune", layer, "edge_fallback", v.label, {}, prompts::join(fallback), 0,
              "no valid LLM parent; attached ConceptNet neighbours"});
      draft.conceptnet_parents[v.label] = std::move(fallback);
    } else {
      draft.candidates.erase(std::remove(draft.candidates.begin(), draft.candidates.end(), v.label),
                             draft.candidates.end());
      record({"prune", layer, "node", v.label, {}, {}, 0, v.describe()});
    }
  }
  if (draft.candidates.empty())
    throw EmptyLayer("mission '" + mission_.mission_id + "': every node of layer " +
                     std::to_string(layer) + " was pruned");
}

ReasoningGraph KgBuilder::build() {
  trace_.clear();
  std::vector<std::vector<std::string>> layers;
  std::vector<LabeledEdge> edges;
  const Suggestions no_suggestions;

  // Node lists: first attempt plus up to max_repair_attempts re-asks on
  // malformed replies.
  auto generate_nodes = [&](int layer, const Suggestions& sugg) {
    for (int attempt = 0; attempt <= mission_.max_repair_attempts; ++attempt) {
      try {
        return layer == 1 ? generate_initial_concepts(attempt)
                          : generate_next_layer(layers.back(), sugg, layer, attempt);
      } catch (const MalformedResponse& e) {
        record({"violation", layer, layer == 1 ? "initial_nodes" : "next_nodes", {}, {}, {}, attempt,
                std::string("malformed response: ") + e.what()});
      }
    }
    throw EmptyLayer("mission '" + mission_.mission_id + "': layer " + std::to_string(layer) +
                     " never produced a parseable list");
  };

  {
    LayerDraft draft;
    draft.layer = 1;
    draft.candidates = generate_nodes(1, no_suggestions);
    draft.node_user_prompt = prompts::initial_nodes_user(mission_.mission_text);
    draft.node_reply = trace_.back().kind == "llm" ? trace_.back().response : std::string{};
    layers.push_back(draft.candidates);
  }

  for (int k = 1; k <= mission_.sub_depth; ++k) {
    const int layer = k + 1;
    const auto& prev = layers.back();
    const Suggestions sugg = suggest_related(prev);
    const Suggestions* cn = mission_.edges_require_conceptnet ? &sugg : nullptr;

    LayerDraft draft;
    draft.layer = layer;
    draft.candidates = generate_nodes(layer, sugg);
    draft.node_user_prompt =
        prompts::next_nodes_user(mission_.mission_text, prev, flatten_suggestions(prev, sugg));
    for (auto it = trace_.rbegin(); it != trace_.rend(); ++it)
      if (it->kind == "llm") {
        draft.node_reply = it->response;
        break;
      }

    if (auto v = detect_errors(draft.candidates, {}, layers, nullptr); !v.empty())
      repair_or_prune(std::move(v), draft, layers, sugg);

    for (const auto& child : draft.candidates) {
      try {
        draft.claimed[child] = generate_edges(child, prev, layer);
      } catch (const MalformedResponse& e) {
        record({"violation", layer, "edges", child, {}, {}, 0,
                std::string("malformed response: ") + e.what()});
        draft.claimed[child] = {};
      }
      for (auto it = trace_.rbegin(); it != trace_.rend(); ++it)
        if (it->kind == "llm") {
          draft.edge_replies[child] = it->response;
          break;
        }
    }
    if (auto v = detect_errors(draft.candidates, draft.claimed, layers, cn); !v.empty())
      repair_or_prune(std::move(v), draft, layers, sugg);

    for (const auto& child : draft.candidates) {
      if (auto it = draft.claimed.find(child); it != draft.claimed.end())
        for (const auto& p : it->second) edges.push_back({p, child, EdgeProvenance::LlmSelected});
      if (auto it = draft.conceptnet_parents.find(child); it != draft.conceptnet_parents.end())
        for (const auto& p : it->second) edges.push_back({p, child, EdgeProvenance::ConceptNet});
    }
    layers.push_back(draft.candidates);
  }

  ReasoningGraph g = assemble_graph(layers, edges, mission_);
  for (auto& t : g.trace) trace_.push_back(std::move(t));
  g.trace = trace_;
  return g;
}

}  // namespace mgnn::kg
