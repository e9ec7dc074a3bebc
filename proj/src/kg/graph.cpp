#include "mgnn/kg/graph.hpp"

#include <cctype>

namespace mgnn::kg {

void MissionSpec::validate() const {
  if (mission_id.empty()) throw ConfigError("mission_id must be non-empty");
  if (n_concepts < 1) throw ConfigError("n_concepts must be >= 1");
  if (sub_depth < 0) throw ConfigError("sub_depth must be >= 0");
  if (max_parents < 1) throw ConfigError("max_parents must be >= 1");
  if (max_repair_attempts < 1) throw ConfigError("max_repair_attempts must be >= 1");
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Sensor: return "sensor";
    case NodeKind::KeyConcept: return "key_concept";
    case NodeKind::SubGraph: return "sub_graph";
    case NodeKind::Encoding: return "encoding";
  }
  return "?";
}

std::string_view to_string(EdgeProvenance provenance) {
  switch (provenance) {
    case EdgeProvenance::SensorFanout: return "sensor_fanout";
    case EdgeProvenance::ConceptNet: return "conceptnet";
    case EdgeProvenance::LlmSelected: return "llm_selected";
    case EdgeProvenance::EncodingFanin: return "encoding_fanin";
  }
  return "?";
}

NodeKind node_kind_from_string(std::string_view s) {
  if (s == "sensor") return NodeKind::Sensor;
  if (s == "key_concept") return NodeKind::KeyConcept;
  if (s == "sub_graph") return NodeKind::SubGraph;
  if (s == "encoding") return NodeKind::Encoding;
  throw StructuralViolation("unknown node kind: " + std::string(s));
}

EdgeProvenance provenance_from_string(std::string_view s) {
  if (s == "sensor_fanout") return EdgeProvenance::SensorFanout;
  if (s == "conceptnet") return EdgeProvenance::ConceptNet;
  if (s == "llm_selected") return EdgeProvenance::LlmSelected;
  if (s == "encoding_fanin") return EdgeProvenance::EncodingFanin;
  throw StructuralViolation("unknown edge provenance: " + std::string(s));
}

int ReasoningGraph::find(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

int ReasoningGraph::sensor_index() const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].kind == NodeKind::Sensor) return static_cast<int>(i);
  return -1;
}

int ReasoningGraph::encoding_index() const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].kind == NodeKind::Encoding) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> ReasoningGraph::layer_labels(int layer) const {
  std::vector<std::string> out;
  for (const auto& n : nodes)
    if (n.layer == layer && (n.kind == NodeKind::KeyConcept || n.kind == NodeKind::SubGraph))
      out.push_back(n.label);
  return out;
}

std::string normalize_label(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::string concept_node_id(int layer, int index) {
  return "L" + std::to_string(layer) + "_" + std::to_string(index);
}

}  // namespace mgnn::kg
