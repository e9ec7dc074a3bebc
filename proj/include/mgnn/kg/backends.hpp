#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mgnn/kg/clients.hpp"

namespace mgnn::kg {

/// Scripted LLM driven by a JSON fixture:
///
///   {"rules": [{"kind": "edges", "subject": "muzzle", "layer": 2,
///               "correction": true, "responses": ["a, b", "c"]}, ...]}
///
/// Every matcher field is optional. The first rule whose matchers all hold
/// answers the request with its next response; once a rule is exhausted its
/// last response repeats. A top-level {"responses": [...]} is shorthand for a
/// single catch-all rule.
class ReplayLlm final : public LlmClient {
public:
  struct Rule {
    std::optional<PromptKind> kind;
    std::optional<std::string> subject;
    std::optional<std::string> mission_id;
    std::optional<int> layer;
    std::optional<bool> correction;
    std::vector<std::string> responses;
    std::size_t next = 0;
  };

  explicit ReplayLlm(std::vector<Rule> rules) : rules_(std::move(rules)) {}
  ReplayLlm(ReplayLlm&& other) noexcept : rules_(std::move(other.rules_)) {}
  static ReplayLlm from_json_text(const std::string& text);
  static ReplayLlm from_file(const std::filesystem::path& path);

  std::string complete(const LlmRequest& request) override;

private:
  std::mutex mutex_;
  std::vector<Rule> rules_;
};

/// Deterministic stand-in for a language model. Words are pronounceable
/// pseudo-words hashed from (seed, mission, layer, position, attempt), so the
/// same request always yields the same reply. The error knobs inject the
/// mistakes the repair loop exists for.
class ProceduralLlm final : public LlmClient {
public:
  struct Options {
    std::uint64_t seed = 0;
    double duplicate_rate = 0.0;       // per word: reuse a previous-layer label
    double invalid_parent_rate = 0.0;  // per edge reply: add a label not in the previous layer
    double overflow_rate = 0.0;        // per edge reply: select more parents than allowed
    double malformed_rate = 0.0;       // per first attempt: reply with prose
    double persistent_rate = 0.0;      // per request: corrections repeat the mistake
    double suggestion_rate = 0.3;      // per word: take a ConceptNet suggestion
  };

  ProceduralLlm() = default;
  explicit ProceduralLlm(Options options) : options_(options) {}

  std::string complete(const LlmRequest& request) override;

  static std::string pseudo_word(std::uint64_t key);

private:
  Options options_;
};

/// Chat-completion HTTP backend (OpenAI-compatible request/response shape).
class HttpLlm final : public LlmClient {
public:
  struct Options {
    std::string endpoint;  // e.g. https://api.openai.com/v1/chat/completions
    std::string model = "gpt-4";
    std::string api_key;   // sent as a bearer token when non-empty
    double temperature = 0.0;
    int timeout_seconds = 120;
  };

  explicit HttpLlm(Options options) : options_(std::move(options)) {}
  std::string complete(const LlmRequest& request) override;

private:
  Options options_;
};

/// In-memory ConceptNet. Pairs are treated as symmetric, matching the
/// undirected /r/RelatedTo relation.
class MapConceptNet : public ConceptNetClient {
public:
  MapConceptNet() = default;
  explicit MapConceptNet(const std::vector<std::pair<std::string, std::string>>& pairs);

  void add(const std::string& a, const std::string& b);
  std::set<std::string> related(std::string_view term) override;

private:
  std::map<std::string, std::set<std::string>, std::less<>> index_;
};

/// Tab-separated "term<TAB>related_term" file, one pair per line.
class FileConceptNet final : public MapConceptNet {
public:
  explicit FileConceptNet(const std::filesystem::path& path);
};

/// ConceptNet 5 REST API (`/query?node=/c/en/<term>&rel=<relation>`).
class HttpConceptNet final : public ConceptNetClient {
public:
  struct Options {
    std::string base_url = "http://api.conceptnet.io";
    std::string relation_type = "/r/RelatedTo";
    int limit = 50;
    int timeout_seconds = 30;
  };

  explicit HttpConceptNet(Options options) : options_(std::move(options)) {}
  std::set<std::string> related(std::string_view term) override;
  std::string relation() const override { return options_.relation_type; }

private:
  Options options_;
  std::mutex mutex_;
  std::map<std::string, std::set<std::string>, std::less<>> cache_;
};

/// Split "scheme://host[:port]/path" into the client base and the path.
std::pair<std::string, std::string> split_url(const std::string& url);

}  // namespace mgnn::kg
