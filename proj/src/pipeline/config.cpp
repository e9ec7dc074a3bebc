#include "mgnn/pipeline/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace mgnn::pipeline {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool boolean(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');)
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

void one_of(const std::string& key, const std::string& v, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (v == a) return;
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
  throw ConfigError(key + ": '" + v + "' is not one of " + list);
}

}  // namespace

std::vector<KeyValue> parse_key_values(const std::string& text) {
  std::vector<KeyValue> out;
  std::istringstream in(text);
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    KeyValue kv{trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)), lineno};
    if (kv.key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

std::string slug(const std::string& name) {
  std::string s;
  for (unsigned char c : name) s.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : '_');
  return s;
}

void PipelineConfig::apply(const std::string& key, const std::string& v) {
  if (train::apply_setting(train, key, v)) return;
  if (key == "classes") classes = split_list(v);
  else if (key.rfind("mission_text.", 0) == 0) mission_text[key.substr(13)] = v;
  else if (key == "n_concepts") n_concepts = number<int>(key, v);
  else if (key == "sub_depth") sub_depth = number<int>(key, v);
  else if (key == "max_parents") max_parents = number<int>(key, v);
  else if (key == "max_repair_attempts") max_repair_attempts = number<int>(key, v);
  else if (key == "edges_require_conceptnet") edges_require_conceptnet = boolean(key, v);
  else if (key == "kg_dir") kg_dir = v;
  else if (key == "llm") one_of(key, llm = v, {"procedural", "replay", "http"});
  else if (key == "llm_seed") llm_seed = number<std::uint64_t>(key, v);
  else if (key == "llm_fixture") llm_fixture = v;
  else if (key == "llm_url") llm_url = v;
  else if (key == "llm_model") llm_model = v;
  else if (key == "conceptnet") one_of(key, conceptnet = v, {"none", "file", "http"});
  else if (key == "conceptnet_file") conceptnet_file = v;
  else if (key == "conceptnet_url") conceptnet_url = v;
  else if (key == "embedding") one_of(key, embedding = v, {"synthetic", "cache", "service"});
  else if (key == "embedding_seed") embedding_seed = number<std::uint64_t>(key, v);
  else if (key == "embedding_cache") embedding_cache = v;
  else if (key == "embedding_url") embedding_url = v;
  else if (key == "synth_train") synth_train = number<int>(key, v);
  else if (key == "synth_test") synth_test = number<int>(key, v);
  else if (key == "synth_frames") synth_frames = number<long>(key, v);
  else if (key == "synth_beta") synth_beta = number<double>(key, v);
  else if (key == "synth_event_fraction") synth_event_fraction = number<double>(key, v);
  else if (key == "synth_seed") synth_seed = number<std::uint64_t>(key, v);
  else if (key == "eval_every") eval_every = number<long>(key, v);
  else if (key == "checkpoint_every") checkpoint_every = number<long>(key, v);
  else if (key == "class_score") one_of(key, class_score = v, {"probability", "conditional"});
  else throw ConfigError("unknown config key '" + key + "'");
}

void PipelineConfig::set_seed(std::uint64_t seed) {
  train.seed = seed;
  llm_seed = embedding_seed = synth_seed = seed;
}

void PipelineConfig::validate() const {
  train.validate();
  if (classes.empty()) throw ConfigError("classes: at least one anomaly class required");
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < classes.size(); ++i) ids.push_back(mission_id(i));
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ConfigError("classes: duplicate class names");
  if (train.model.heads < 1 || (train.model.gnn_dim * static_cast<long>(classes.size())) % train.model.heads != 0)
    throw ConfigError("heads must divide gnn_dim x number of classes");
  if (synth_train < 1 || synth_test < 1 || synth_frames < 2) throw ConfigError("synthetic dataset too small");
  if (!(synth_event_fraction > 0 && synth_event_fraction <= 1)) throw ConfigError("synth_event_fraction must lie in (0, 1]");
  if (llm == "replay" && llm_fixture.empty()) throw ConfigError("llm = replay needs llm_fixture");
  if (llm == "http" && llm_url.empty()) throw ConfigError("llm = http needs llm_url");
  if (conceptnet == "file" && conceptnet_file.empty()) throw ConfigError("conceptnet = file needs conceptnet_file");
  if (embedding == "cache" && embedding_cache.empty()) throw ConfigError("embedding = cache needs embedding_cache");
  if (embedding == "service" && embedding_url.empty()) throw ConfigError("embedding = service needs embedding_url");
}

std::string PipelineConfig::mission_id(std::size_t i) const { return slug(classes.at(i)); }

std::string PipelineConfig::mission_text_for(std::size_t i) const {
  const auto it = mission_text.find(classes.at(i));
  return it != mission_text.end() ? it->second : classes.at(i);
}

PipelineConfig load_config(const std::vector<std::filesystem::path>& files, const std::vector<std::string>& overrides) {
  PipelineConfig cfg;
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& kv : parse_key_values(ss.str())) {
      try {
        cfg.apply(kv.key, kv.value);
      } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ":" + std::to_string(kv.line) + ": " + e.what());
      }
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    cfg.apply(trim(std::string_view(o).substr(0, eq)), trim(std::string_view(o).substr(eq + 1)));
  }
  return cfg;
}

}  // namespace mgnn::pipeline
