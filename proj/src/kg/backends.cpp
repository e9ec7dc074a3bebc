#include "mgnn/kg/backends.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mgnn/kg/graph.hpp"
#include "mgnn/kg/prompts.hpp"
#include "mgnn/random.hpp"

// Last: <resolv.h> defines a _res macro that breaks Eigen.
#include <httplib.h>

namespace mgnn::kg {

using nlohmann::json;

namespace {

std::optional<PromptKind> prompt_kind_from_string(const std::string& s) {
  if (s == "initial_nodes") return PromptKind::InitialNodes;
  if (s == "next_nodes") return PromptKind::NextNodes;
  if (s == "edges") return PromptKind::Edges;
  throw ConfigError("unknown prompt kind in fixture: " + s);
}

ReplayLlm::Rule rule_from_json(const json& j) {
  ReplayLlm::Rule rule;
  if (j.contains("kind")) rule.kind = prompt_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("subject")) rule.subject = normalize_label(j.at("subject").get<std::string>());
  if (j.contains("mission_id")) rule.mission_id = j.at("mission_id").get<std::string>();
  if (j.contains("layer")) rule.layer = j.at("layer").get<int>();
  if (j.contains("correction")) rule.correction = j.at("correction").get<bool>();
  rule.responses = j.at("responses").get<std::vector<std::string>>();
  if (rule.responses.empty()) throw ConfigError("fixture rule without responses");
  return rule;
}

}  // namespace

ReplayLlm ReplayLlm::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  std::vector<Rule> rules;
  if (j.contains("rules"))
    for (const auto& r : j.at("rules")) rules.push_back(rule_from_json(r));
  if (j.contains("responses")) rules.push_back(rule_from_json(j));
  return ReplayLlm(std::move(rules));
}

ReplayLlm ReplayLlm::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open LLM fixture: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string ReplayLlm::complete(const LlmRequest& request) {
  std::lock_guard lock(mutex_);
  const std::string subject = normalize_label(request.subject);
  for (auto& rule : rules_) {
    if (rule.kind && *rule.kind != request.kind) continue;
    if (rule.subject && *rule.subject != subject) continue;
    if (rule.mission_id && *rule.mission_id != request.mission_id) continue;
    if (rule.layer && *rule.layer != request.layer) continue;
    if (rule.correction && *rule.correction != request.is_correction()) continue;
    const std::size_t i = std::min(rule.next, rule.responses.size() - 1);
    if (rule.next < rule.responses.size()) ++rule.next;
    return rule.responses[i];
  }
  throw ServiceUnavailable("replay fixture has no response for " +
                           std::string(to_string(request.kind)) + " '" + request.subject + "'");
}

// ---------------------------------------------------------------------------

std::string ProceduralLlm::pseudo_word(std::uint64_t key) {
  static constexpr std::string_view kOnset = "bcdfghklmnprstvz";
  static constexpr std::string_view kVowel = "aeiou";
  std::uint64_t h = splitmix64(key);
  const int syllables = 2 + static_cast<int>(h % 2);
  h = splitmix64(h);
  std::string word;
  for (int i = 0; i < syllables; ++i) {
    word.push_back(kOnset[h % kOnset.size()]);
    h /= kOnset.size();
    word.push_back(kVowel[h % kVowel.size()]);
    h /= kVowel.size();
    if (h % 3 == 0) word.push_back(kOnset[(h / 3) % kOnset.size()]);
    h = splitmix64(h);
  }
  return word;
}

std::string ProceduralLlm::complete(const LlmRequest& r) {
  const std::uint64_t base =
      hash_combine(hash_combine(options_.seed, fnv1a64(r.mission_id)),
                   hash_combine(static_cast<std::uint64_t>(r.kind) * 131 + r.layer,
                                fnv1a64(normalize_label(r.subject))));
  Rng rng(hash_combine(base, static_cast<std::uint64_t>(r.attempt) * 2 + r.is_correction()));
  const bool persistent =
      Rng(hash_combine(base, 0x5045525349535400ULL)).uniform() < options_.persistent_rate;

  if (r.kind == PromptKind::Edges) {
    const auto& prev = r.previous_labels;
    if (prev.empty()) return "";
    if (r.is_correction()) {
      if (persistent) return *r.previous_response;
      std::vector<std::string> kept;
      try {
        for (auto& l : prompts::parse_label_list(*r.previous_response))
          if (std::find(prev.begin(), prev.end(), l) != prev.end()) kept.push_back(l);
      } catch (const MalformedResponse&) {
      }
      if (kept.empty()) kept.push_back(prev[rng.below(prev.size())]);
      return prompts::join(kept);
    }
    const std::size_t cap = std::max(1, r.requested_count);
    std::size_t k = 1 + rng.below(std::min(cap, prev.size()));
    if (rng.uniform() < options_.overflow_rate) k = std::min(cap + 1, prev.size());
    std::vector<std::size_t> order(prev.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
    std::vector<std::string> picked;
    for (std::size_t i = 0; i < k; ++i) picked.push_back(prev[order[i]]);
    if (rng.uniform() < options_.invalid_parent_rate)
      picked.insert(picked.begin() + static_cast<std::ptrdiff_t>(rng.below(picked.size() + 1)),
                    pseudo_word(hash_combine(base, 0x47484F5354ULL)) + " ghost");
    return prompts::join(picked);
  }

  if (!r.is_correction() && r.attempt == 0 && rng.uniform() < options_.malformed_rate)
    return "I am sorry. I cannot produce a list for this subject right now.";

  if (r.is_correction()) {
    if (persistent) return *r.previous_response;
    std::vector<std::string> words;
    try {
      words = prompts::parse_label_list(*r.previous_response);
    } catch (const MalformedResponse&) {
    }
    for (std::size_t i = 0; i < words.size(); ++i)
      if (std::find(r.flagged.begin(), r.flagged.end(), words[i]) != r.flagged.end())
        words[i] = pseudo_word(hash_combine(base, 0xF1C5000000ULL + r.attempt * 4099 + i));
    return prompts::join(words);
  }

  std::vector<std::string> words;
  for (int i = 0; i < r.requested_count; ++i) {
    const bool next = r.kind == PromptKind::NextNodes;
    if (next && !r.previous_labels.empty() && rng.uniform() < options_.duplicate_rate) {
      words.push_back(r.previous_labels[rng.below(r.previous_labels.size())]);
    } else if (next && !r.suggestions.empty() && rng.uniform() < options_.suggestion_rate) {
      words.push_back(r.suggestions[rng.below(r.suggestions.size())]);
    } else {
      words.push_back(pseudo_word(hash_combine(base, 0x30000ULL + static_cast<std::uint64_t>(i))));
    }
  }
  return prompts::join(words);
}

// ---------------------------------------------------------------------------

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("URL without scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

std::string HttpLlm::complete(const LlmRequest& request) {
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", request.system}});
  messages.push_back({{"role", "user"}, {"content", request.user}});
  if (request.is_correction()) {
    messages.push_back({{"role", "assistant"}, {"content", *request.previous_response}});
    messages.push_back({{"role", "user"}, {"content", *request.correction}});
  }
  const json body = {{"model", options_.model},
                     {"messages", messages},
                     {"temperature", options_.temperature}};

  const auto [base, path] = split_url(options_.endpoint);
  httplib::Client client(base);
  client.set_read_timeout(options_.timeout_seconds, 0);
  client.set_connection_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + options_.api_key);
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw ServiceUnavailable("LLM request failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw ServiceUnavailable("LLM service returned HTTP " + std::to_string(res->status));
  try {
    const json reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ServiceUnavailable(std::string("unexpected LLM reply shape: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

MapConceptNet::MapConceptNet(const std::vector<std::pair<std::string, std::string>>& pairs) {
  for (const auto& [a, b] : pairs) add(a, b);
}

void MapConceptNet::add(const std::string& a, const std::string& b) {
  const std::string x = normalize_label(a), y = normalize_label(b);
  if (x.empty() || y.empty() || x == y) return;
  index_[x].insert(y);
  index_[y].insert(x);
}

std::set<std::string> MapConceptNet::related(std::string_view term) {
  const auto it = index_.find(normalize_label(term));
  return it == index_.end() ? std::set<std::string>{} : it->second;
}

FileConceptNet::FileConceptNet(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ConceptNet edge file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected a tab");
    add(line.substr(0, tab), line.substr(tab + 1));
  }
}

namespace {

// "/c/en/fire_arm/n" -> "fire arm"; empty for non-English concepts.
std::string term_from_uri(const std::string& uri) {
  if (uri.rfind("/c/en/", 0) != 0) return {};
  std::string rest = uri.substr(6);
  if (auto slash = rest.find('/'); slash != std::string::npos) rest.resize(slash);
  std::replace(rest.begin(), rest.end(), '_', ' ');
  return normalize_label(rest);
}

}  // namespace

std::set<std::string> HttpConceptNet::related(std::string_view term) {
  const std::string key = normalize_label(term);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  std::string node = key;
  std::replace(node.begin(), node.end(), ' ', '_');
  const auto [base, prefix] = split_url(options_.base_url);
  httplib::Client client(base);
  client.set_read_timeout(options_.timeout_seconds, 0);
  const std::string path = (prefix == "/" ? std::string() : prefix) + "/query?node=/c/en/" +
                           httplib::detail::encode_query_param(node) +
                           "&rel=" + options_.relation_type +
                           "&limit=" + std::to_string(options_.limit);
  auto res = client.Get(path);
  if (!res) throw ServiceUnavailable("ConceptNet request failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw ServiceUnavailable("ConceptNet returned HTTP " + std::to_string(res->status));

  std::set<std::string> out;
  try {
    const json j = json::parse(res->body);
    for (const auto& edge : j.at("edges")) {
      if (edge.at("rel").at("@id").get<std::string>() != options_.relation_type) continue;
      const std::string a = term_from_uri(edge.at("start").at("@id").get<std::string>());
      const std::string b = term_from_uri(edge.at("end").at("@id").get<std::string>());
      if (a == key && !b.empty()) out.insert(b);
      else if (b == key && !a.empty()) out.insert(a);
    }
  } catch (const json::exception& e) {
    throw ServiceUnavailable(std::string("unexpected ConceptNet reply shape: ") + e.what());
  }
  std::lock_guard lock(mutex_);
  cache_[key] = out;
  return out;
}

}  // namespace mgnn::kg
