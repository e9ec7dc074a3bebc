#pragma once

#include <map>
#include <string>
#include <vector>

#include "mgnn/kg/clients.hpp"
#include "mgnn/kg/graph.hpp"

namespace mgnn::kg {

struct Violation {
  enum class Type { DuplicateNode, InvalidEdge, ZeroParents };

  Type type = Type::DuplicateNode;
  std::string label;        // offending node (child for edge violations)
  std::string parent;       // InvalidEdge only
  int earlier_layer = 0;    // DuplicateNode only: layer already holding the label

  std::string describe() const;
  friend bool operator==(const Violation&, const Violation&) = default;
};

/// child label -> parent labels claimed for it, in reply order.
using ClaimedEdges = std::map<std::string, std::vector<std::string>>;

/// Pure check of one layer against the graph built so far.
///
/// `earlier_layers` holds the labels of layers 1..k (the last entry is the
/// immediately previous layer). Flags (a) candidates already present in an
/// earlier layer, (b) claimed parents absent from the previous layer (or,
/// when `conceptnet` is given, absent from the parent's ConceptNet
/// neighbourhood), and (c) candidates that have a claimed-edge entry but no
/// valid parent.
std::vector<Violation> detect_errors(const std::vector<std::string>& layer_candidates,
                                     const ClaimedEdges& claimed_edges,
                                     const std::vector<std::vector<std::string>>& earlier_layers,
                                     const Suggestions* conceptnet = nullptr);

struct LabeledEdge {
  std::string parent;
  std::string child;
  EdgeProvenance provenance = EdgeProvenance::LlmSelected;
};

/// Attach the sensor and encoding nodes to validated concept layers.
/// `layers[0]` is the key-concept layer. Throws StructuralViolation when the
/// result breaks a graph invariant.
ReasoningGraph assemble_graph(const std::vector<std::vector<std::string>>& layers,
                              const std::vector<LabeledEdge>& edges, const MissionSpec& mission);

struct GraphViolation {
  std::string rule;  // acyclicity, layering, uniqueness, fanin, fanout, structure
  std::string message;
};

std::vector<GraphViolation> validate_graph(const ReasoningGraph& g);

/// Working state of one layer while it is generated and repaired.
struct LayerDraft {
  int layer = 1;
  std::vector<std::string> candidates;
  ClaimedEdges claimed;
  ClaimedEdges conceptnet_parents;  // fallback parents taken from ConceptNet
  std::string node_reply;           // last raw reply for the node list
  std::string node_user_prompt;
  std::map<std::string, std::string> edge_replies;
};

class KgBuilder {
public:
  struct Options {
    std::size_t max_suggestions = 100;
  };

  KgBuilder(MissionSpec mission, LlmClient& llm, ConceptNetClient& conceptnet);
  KgBuilder(MissionSpec mission, LlmClient& llm, ConceptNetClient& conceptnet, Options options);

  std::vector<std::string> generate_initial_concepts(int attempt = 0);
  Suggestions suggest_related(const std::vector<std::string>& labels);
  std::vector<std::string> generate_next_layer(const std::vector<std::string>& prev_labels,
                                               const Suggestions& suggestions, int layer,
                                               int attempt = 0);
  std::vector<std::string> generate_edges(const std::string& new_label,
                                          const std::vector<std::string>& prev_labels, int layer);

  /// Run correction prompts for up to `max_repair_attempts` rounds, then prune
  /// whatever is still wrong. Throws EmptyLayer if nothing survives.
  void repair_or_prune(std::vector<Violation> violations, LayerDraft& draft,
                       const std::vector<std::vector<std::string>>& earlier_layers,
                       const Suggestions& suggestions);

  /// Full generation: key concepts, `sub_depth` expansions, assembly.
  ReasoningGraph build();

  const std::vector<TraceEntry>& trace() const { return trace_; }
  const MissionSpec& mission() const { return mission_; }

private:
  std::string call(LlmRequest& request, const std::string& step);
  std::vector<std::string> truncate(std::vector<std::string> labels, std::size_t cap, int layer,
                                    const std::string& what);
  std::vector<std::string> parse_or_trace(const std::string& reply, int layer,
                                          const std::string& step);
  std::vector<std::string> flatten_suggestions(const std::vector<std::string>& prev,
                                               const Suggestions& suggestions) const;
  void record(TraceEntry entry);

  MissionSpec mission_;
  LlmClient& llm_;
  ConceptNetClient& conceptnet_;
  Options options_;
  std::vector<TraceEntry> trace_;
};

}  // namespace mgnn::kg
