#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mgnn/kg/clients.hpp"

namespace mgnn::kg::prompts {

// System prompts are parameterized by the requested list length (nodes) or
// the parent cap (edges); the published templates hard-code 20 and 5.
std::string initial_nodes_system(int count);
std::string next_nodes_system(int count);
std::string edges_system(int max_parents);

std::string initial_nodes_user(std::string_view subject);
std::string next_nodes_user(std::string_view subject, const std::vector<std::string>& previous,
                            const std::vector<std::string>& suggested);
std::string edges_user(std::string_view new_label, const std::vector<std::string>& previous);

std::string duplicate_nodes_correction(const std::vector<std::string>& duplicates,
                                       std::string_view user_prompt);
std::string missing_parents_correction(const std::vector<std::string>& not_appeared,
                                       std::string_view user_prompt);

std::string join(const std::vector<std::string>& items, std::string_view sep = ", ");

/// Parse a comma-separated reply into normalized, order-preserving, unique
/// labels. Throws MalformedResponse on empty replies or single-token prose.
std::vector<std::string> parse_label_list(std::string_view reply);

}  // namespace mgnn::kg::prompts
