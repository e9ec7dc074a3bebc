#pragma once

#include <filesystem>
#include <string>

#include "mgnn/kg/graph.hpp"

namespace mgnn::kg {

/// {mission_id, d_sub, nodes:[{id,label,kind,layer}], edges:[{src,dst,provenance}], trace:[...]}
std::string graph_to_json(const ReasoningGraph& g, int indent = 2);
ReasoningGraph graph_from_json(const std::string& text);

void save_graph(const ReasoningGraph& g, const std::filesystem::path& path);
ReasoningGraph load_graph(const std::filesystem::path& path);

}  // namespace mgnn::kg
