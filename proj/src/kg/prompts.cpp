#include "mgnn/kg/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "mgnn/kg/graph.hpp"

namespace mgnn::kg {

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::InitialNodes: return "initial_nodes";
    case PromptKind::NextNodes: return "next_nodes";
    case PromptKind::Edges: return "edges";
  }
  return "?";
}

namespace prompts {
namespace {

constexpr std::string_view kReference =
    "Reference:\n"
    "A knowledge graph have hierarchical levels starting from naive observations to final "
    "prediction.\n"
    "Each level has the following inference words directly connected only with the previous "
    "level words.\n"
    "There are NOT the same words in different levels.\n"
    "\n"
    "Persona:\n"
    "You are a knowledge graph engineer who generates knowledge graph that will help to "
    "classify images.\n"
    "\n";

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool has_sentence_punctuation(std::string_view s) {
  return s.find_first_of(".!?;:") != std::string_view::npos;
}

std::string strip_token(std::string_view raw) {
  std::string t = trim(raw);
  auto is_wrap = [](char c) {
    return c == '"' || c == '\'' || c == '`' || c == '[' || c == ']' || c == '(' || c == ')' ||
           c == '*';
  };
  while (!t.empty() && is_wrap(t.front())) t.erase(t.begin());
  while (!t.empty() && (is_wrap(t.back()) || t.back() == '.')) t.pop_back();
  return normalize_label(t);
}

}  // namespace

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string initial_nodes_system(int count) {
  std::ostringstream os;
  os << kReference
     << "Objective:\n"
        "You will be provided a subject.\n"
        "Follow these steps to answer the user queries.\n"
        "\n"
        "Step 1.\n"
        "Observe "
     << count
     << " important words from a image which is related to the provided subject.\n"
        "Do not respond anything for this step.\n"
        "\n"
        "Step 2.\n"
        "Create a comma-separated list of the words that you observed.\n"
        "The comma-separated list you just created is first level of the knowledge graph.\n"
        "Keep in mind.\n"
        "Do not respond anything for this step.\n"
        "\n"
        "Step 3.\n"
        "Print first level of the knowledge graph on the first line.\n"
        "No extraneous text or characters other than the comma-separated list.";
  return os.str();
}

std::string next_nodes_system(int count) {
  std::ostringstream os;
  os << kReference
     << "Objective:\n"
        "You will be provided a subject.\n"
        "And you will be provided comma-separated list which is the previous level of the "
        "knowledge graph.\n"
        "And you will be provided suggested keywords.\n"
        "Follow these steps to answer the user queries.\n"
        "\n"
        "Step 1.\n"
        "Create words related to the provided subject which can be explained from combination "
        "of several words from previous level.\n"
        "Reference suggested keywords for this step. If you have better keywords, suggest "
        "them.\n"
        "Do not respond anything for this step.\n"
        "\n"
        "Step 2.\n"
        "Create a comma-separated list of the words that you just created in step 1.\n"
        "The length of comma-seperated list must be "
     << count
     << ".\n"
        "The comma-separated list you just created is next level of the knowledge graph.\n"
        "Keep in mind.\n"
        "Do not respond anything for this step.\n"
        "\n"
        "Print next level of the knowledge graph on the first line.\n"
        "No extraneous text or characters other than the comma-separated list.";
  return os.str();
}

std::string edges_system(int max_parents) {
  std::ostringstream os;
  os << kReference
     << "Objective:\n"
        "You will be provided a subject and a comma-separated list.\n"
        "Follow these steps to answer the user queries.\n"
        "\n"
        "Step 1.\n"
        "Select maximum "
     << max_parents
     << " words from provided comma-separated list which are related to inferring provided "
        "subject.\n"
        "Do not respond anything for this step.\n"
        "\n"
        "Step 2.\n"
        "Create a comma-separated list of the selected words that you observed.\n"
        "Do not respond anything for this step.\n"
        "\n"
        "Step 3.\n"
        "Print the comma-separated list.\n"
        "No extraneous text or characters other than the comma-separated list.";
  return os.str();
}

std::string initial_nodes_user(std::string_view subject) {
  return "Subject: " + std::string(subject);
}

std::string next_nodes_user(std::string_view subject, const std::vector<std::string>& previous,
                            const std::vector<std::string>& suggested) {
  return "Subject: " + std::string(subject) + "\nComma-separated list: " + join(previous) +
         "\nSuggested keywords: " + join(suggested);
}

std::string edges_user(std::string_view new_label, const std::vector<std::string>& previous) {
  return "Subject: " + std::string(new_label) + "\nComma-separated list: " + join(previous);
}

std::string duplicate_nodes_correction(const std::vector<std::string>& duplicates,
                                       std::string_view user_prompt) {
  return "The following concepts already appear in previous levels: " + join(duplicates) +
         "\nYou must generate new concepts that can be inferred from previous level concepts.\n"
         "Correct this error and give a corrected answer.\n"
         "No extraneous text or characters other than the comma-separated list.\n" +
         std::string(user_prompt);
}

std::string missing_parents_correction(const std::vector<std::string>& not_appeared,
                                       std::string_view user_prompt) {
  return "The following concepts do not appear in the previous level nodes: " +
         join(not_appeared) +
         "\nYou must select concepts from the previous level concepts that can be important "
         "clues to infer the new concept.\n"
         "Correct this error and give a corrected answer.\n"
         "No extraneous text or characters other than the comma-separated list.\n" +
         std::string(user_prompt);
}

std::vector<std::string> parse_label_list(std::string_view reply) {
  std::vector<std::string> lines;
  {
    std::istringstream is{std::string(reply)};
    std::string line;
    while (std::getline(is, line)) {
      std::string t = trim(line);
      if (t.empty() || t.rfind("```", 0) == 0) continue;
      lines.push_back(std::move(t));
    }
  }
  if (lines.empty()) throw MalformedResponse("empty reply");

  auto chosen = std::find_if(lines.begin(), lines.end(),
                             [](const std::string& l) { return l.find(',') != std::string::npos; });
  const std::string& line = chosen != lines.end() ? *chosen : lines.front();

  std::vector<std::string> raw_tokens;
  {
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) comma = line.size();
      raw_tokens.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
  }
  if (raw_tokens.size() == 1 && has_sentence_punctuation(raw_tokens.front()))
    throw MalformedResponse("reply is prose, not a comma-separated list: " + line);

  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& tok : raw_tokens) {
    std::string label = strip_token(tok);
    if (label.empty()) continue;
    if (seen.insert(label).second) out.push_back(std::move(label));
  }
  if (out.empty()) throw MalformedResponse("reply contains no labels");
  return out;
}

}  // namespace prompts
}  // namespace mgnn::kg
