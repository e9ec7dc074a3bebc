#pragma once

// Flat key = value configuration shared by every command. Lines starting with
// '#' and trailing "# ..." comments are ignored; later assignments win.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mgnn/train/trainer.hpp"

namespace mgnn::pipeline {

struct KeyValue {
  std::string key, value;
  int line = 0;
};

std::vector<KeyValue> parse_key_values(const std::string& text);

struct PipelineConfig {
  train::TrainConfig train;

  // missions, one per anomaly class; class i + 1 is classes[i]
  std::vector<std::string> classes;
  std::map<std::string, std::string> mission_text;  // by class name; default is the name itself
  int n_concepts = 20;
  int sub_depth = 1;
  int max_parents = 5;
  int max_repair_attempts = 3;
  bool edges_require_conceptnet = false;
  std::filesystem::path kg_dir = "kg";

  // backends
  std::string llm = "procedural";  // procedural | replay | http
  std::uint64_t llm_seed = 0;
  std::string llm_fixture, llm_url, llm_model = "gpt-4";
  std::string conceptnet = "none";  // none | file | http
  std::string conceptnet_file, conceptnet_url = "http://api.conceptnet.io";
  std::string embedding = "synthetic";  // synthetic | cache | service
  std::uint64_t embedding_seed = 0;
  std::string embedding_cache, embedding_url;

  // synthetic dataset
  int synth_train = 60;
  int synth_test = 20;
  long synth_frames = 300;
  double synth_beta = 1.5;
  double synth_event_fraction = 0.2;
  std::uint64_t synth_seed = 42;

  // loop plumbing
  long eval_every = 0;
  long checkpoint_every = 0;
  std::string class_score = "probability";  // probability | conditional

  /// Throws ConfigError for unknown keys or malformed values.
  void apply(const std::string& key, const std::string& value);
  /// Every pipeline key plus the training keys; `--seed` uses this to reseed everything.
  void set_seed(std::uint64_t seed);
  void validate() const;

  std::string mission_id(std::size_t i) const;
  std::string mission_text_for(std::size_t i) const;
};

/// Applies files in order, then "key=value" overrides.
PipelineConfig load_config(const std::vector<std::filesystem::path>& files,
                           const std::vector<std::string>& overrides = {});

/// Lowercase, spaces and punctuation to '_'.
std::string slug(const std::string& name);

}  // namespace mgnn::pipeline
