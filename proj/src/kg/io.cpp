#include "mgnn/kg/io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace mgnn::kg {

using nlohmann::ordered_json;

std::string graph_to_json(const ReasoningGraph& g, int indent) {
  ordered_json j;
  j["mission_id"] = g.mission.mission_id;
  j["d_sub"] = g.mission.sub_depth;
  ordered_json nodes = ordered_json::array();
  for (const auto& n : g.nodes)
    nodes.push_back({{"id", n.id}, {"label", n.label}, {"kind", to_string(n.kind)}, {"layer", n.layer}});
  j["nodes"] = std::move(nodes);
  ordered_json edges = ordered_json::array();
  for (const auto& e : g.edges)
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"provenance", to_string(e.provenance)}});
  j["edges"] = std::move(edges);
  ordered_json trace = ordered_json::array();
  for (const auto& t : g.trace)
    trace.push_back({{"kind", t.kind},
                     {"layer", t.layer},
                     {"step", t.step},
                     {"subject", t.subject},
                     {"prompt", t.prompt},
                     {"response", t.response},
                     {"attempt", t.attempt},
                     {"detail", t.detail}});
  j["trace"] = std::move(trace);
  return j.dump(indent);
}

ReasoningGraph graph_from_json(const std::string& text) {
  ReasoningGraph g;
  try {
    const auto j = ordered_json::parse(text);
    g.mission.mission_id = j.at("mission_id").get<std::string>();
    g.mission.sub_depth = j.at("d_sub").get<int>();
    for (const auto& n : j.at("nodes"))
      g.nodes.push_back({n.at("id").get<std::string>(), n.at("label").get<std::string>(),
                         node_kind_from_string(n.at("kind").get<std::string>()), n.at("layer").get<int>()});
    for (const auto& e : j.at("edges"))
      g.edges.push_back({e.at("src").get<std::string>(), e.at("dst").get<std::string>(),
                         provenance_from_string(e.at("provenance").get<std::string>())});
    if (j.contains("trace"))
      for (const auto& t : j.at("trace"))
        g.trace.push_back({t.value("kind", ""), t.value("layer", 0), t.value("step", ""),
                           t.value("subject", ""), t.value("prompt", ""), t.value("response", ""),
                           t.value("attempt", 0), t.value("detail", "")});
  } catch (const nlohmann::json::exception& e) {
    throw StructuralViolation(std::string("malformed KG file: ") + e.what());
  }
  int key_concepts = 0;
  for (const auto& n : g.nodes) key_concepts += n.kind == NodeKind::KeyConcept;
  g.mission.n_concepts = std::max(1, key_concepts);
  return g;
}

void save_graph(const ReasoningGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write KG file: " + path.string());
  out << graph_to_json(g) << '\n';
}

ReasoningGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open KG file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return graph_from_json(ss.str());
}

}  // namespace mgnn::kg
