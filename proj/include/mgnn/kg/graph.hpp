#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mgnn/core.hpp"

namespace mgnn::kg {

MGNN_DEFINE_ERROR(MalformedResponse);
MGNN_DEFINE_ERROR(ServiceUnavailable);
MGNN_DEFINE_ERROR(EmptyLayer);
MGNN_DEFINE_ERROR(StructuralViolation);

/// One mission (anomaly class) to build a reasoning graph for.
struct MissionSpec {
  std::string mission_id;
  std::string mission_text;
  int n_concepts = 20;
  int sub_depth = 1;
  int max_parents = 5;
  int max_repair_attempts = 3;
  /// Sub-layer edges proposed by the LLM must also exist in ConceptNet.
  bool edges_require_conceptnet = false;

  void validate() const;
};

enum class NodeKind { Sensor, KeyConcept, SubGraph, Encoding };
enum class EdgeProvenance { SensorFanout, ConceptNet, LlmSelected, EncodingFanin };

std::string_view to_string(NodeKind kind);
std::string_view to_string(EdgeProvenance provenance);
NodeKind node_kind_from_string(std::string_view s);
EdgeProvenance provenance_from_string(std::string_view s);

struct GraphNode {
  std::string id;
  std::string label;  // empty for sensor and encoding nodes
  NodeKind kind = NodeKind::KeyConcept;
  int layer = 0;
};

struct GraphEdge {
  std::string src;
  std::string dst;
  EdgeProvenance provenance = EdgeProvenance::LlmSelected;

  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

/// One record of the generation log. `kind` is one of
/// llm, conceptnet, violation, prune, truncate, warning.
struct TraceEntry {
  std::string kind;
  int layer = 0;
  std::string step;      // initial_nodes, next_nodes, edges, ...
  std::string subject;
  std::string prompt;    // user prompt (and correction prompt if any)
  std::string response;
  int attempt = 0;
  std::string detail;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct ReasoningGraph {
  MissionSpec mission;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  std::vector<TraceEntry> trace;

  /// Index into `nodes`, or -1.
  int find(std::string_view id) const;
  int sensor_index() const;
  int encoding_index() const;
  int depth() const { return mission.sub_depth + 2; }
  /// Labels of the nodes with the given layer index, in node order.
  std::vector<std::string> layer_labels(int layer) const;
};

/// Case-fold, trim, and collapse internal whitespace runs to one space.
std::string normalize_label(std::string_view raw);

inline constexpr std::string_view kSensorId = "sensor";
inline constexpr std::string_view kEncodingId = "encoding";

/// Stable node id for the `index`-th node of a concept layer.
std::string concept_node_id(int layer, int index);

}  // namespace mgnn::kg
