#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mgnn::kg {

enum class PromptKind { InitialNodes, NextNodes, Edges };

std::string_view to_string(PromptKind kind);

/// A chat-style request. The rendered text fields are what a real model sees;
/// the structured fields let scripted and procedural backends answer without
/// parsing prose.
struct LlmRequest {
  PromptKind kind = PromptKind::InitialNodes;
  std::string system;
  std::string user;
  /// Set for error-correction turns: the reply being corrected and the
  /// correction prompt sent after it.
  std::optional<std::string> previous_response;
  std::optional<std::string> correction;

  std::string mission_id;
  std::string subject;
  int layer = 1;
  int attempt = 0;
  int requested_count = 0;
  std::vector<std::string> previous_labels;
  std::vector<std::string> suggestions;
  std::vector<std::string> flagged;  // duplicate or not-appearing labels

  bool is_correction() const { return correction.has_value(); }
};

class LlmClient {
public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const LlmRequest& request) = 0;
};

class ConceptNetClient {
public:
  virtual ~ConceptNetClient() = default;
  /// Neighbours of `term` under the configured relation. Lowercase terms.
  virtual std::set<std::string> related(std::string_view term) = 0;
  virtual std::string relation() const { return "/r/RelatedTo"; }
};

using Suggestions = std::map<std::string, std::set<std::string>>;

}  // namespace mgnn::kg
