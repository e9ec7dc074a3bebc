#include "mgnn/pipeline/dataset.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mgnn/kg/backends.hpp"
#include "mgnn/kg/io.hpp"
#include "mgnn/random.hpp"

namespace mgnn::pipeline {

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  long lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.video_id = j.at("video_id").get<std::string>();
      e.split = j.value("split", "train");
      e.label = j.at("label").get<int>();
      e.frame_count = j.at("frame_count").get<long>();
      e.fps = j.value("fps", 30.0);
      e.source = j.value("source", "");
      if (j.contains("anomaly_intervals"))
        for (const auto& iv : j["anomaly_intervals"]) e.anomaly_intervals.emplace_back(iv.at(0).get<long>(), iv.at(1).get<long>());
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : entries) {
    nlohmann::ordered_json j{{"video_id", e.video_id}, {"split", e.split},       {"label", e.label},
                             {"frame_count", e.frame_count}, {"fps", e.fps}};
    if (!e.source.empty()) j["source"] = e.source;
    auto iv = nlohmann::ordered_json::array();
    for (const auto& [s, t] : e.anomaly_intervals) iv.push_back({s, t});
    j["anomaly_intervals"] = iv;
    out << j.dump() << '\n';
  }
}

std::vector<std::string> validate_manifest(const std::vector<ManifestEntry>& entries, int num_classes, int T) {
  std::vector<std::string> warnings;
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (!ids.insert(e.video_id).second) throw ConfigError("manifest: duplicate video_id " + e.video_id);
    if (e.label < 0 || e.label > num_classes)
      throw ConfigError("manifest: " + e.video_id + " has label " + std::to_string(e.label) + " outside 0.." +
                        std::to_string(num_classes));
    if (e.split != "train" && e.split != "test") throw ConfigError("manifest: " + e.video_id + " has split '" + e.split + "'");
    if (e.frame_count < 1) throw ConfigError("manifest: " + e.video_id + " has no frames");
    for (const auto& [s, t] : e.anomaly_intervals)
      if (s < 0 || t > e.frame_count || s >= t)
        throw ConfigError("manifest: " + e.video_id + " has an anomaly interval outside the video");
    if (e.label == 0 && !e.anomaly_intervals.empty())
      throw ConfigError("manifest: normal video " + e.video_id + " lists anomaly intervals");
    if (e.frame_count < T)
      warnings.push_back(e.video_id + " has " + std::to_string(e.frame_count) + " frames, fewer than T = " +
                         std::to_string(T));
  }
  return warnings;
}

std::vector<ManifestEntry> split_of(const std::vector<ManifestEntry>& entries, const std::string& split) {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

std::vector<train::VideoData> load_videos(const std::vector<ManifestEntry>& entries, embedding::FrameSource& frames) {
  std::vector<train::VideoData> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    train::VideoData v;
    v.id = e.video_id;
    v.label = e.label;
    v.anomaly_intervals = e.anomaly_intervals;
    v.frames.resize(e.frame_count, frames.dim());
    for (long t = 0; t < e.frame_count; ++t) v.frames.row(t) = frames.embed_frame(e.key(), t).transpose();
    out.push_back(std::move(v));
  }
  return out;
}

std::unique_ptr<kg::LlmClient> make_llm(const PipelineConfig& cfg) {
  if (cfg.llm == "replay") return std::make_unique<kg::ReplayLlm>(kg::ReplayLlm::from_file(cfg.llm_fixture));
  if (cfg.llm == "http") {
    kg::HttpLlm::Options o;
    o.endpoint = cfg.llm_url;
    o.model = cfg.llm_model;
    if (const char* key = std::getenv("MGNN_LLM_API_KEY")) o.api_key = key;
    return std::make_unique<kg::HttpLlm>(o);
  }
  kg::ProceduralLlm::Options o;
  o.seed = cfg.llm_seed;
  return std::make_unique<kg::ProceduralLlm>(o);
}

std::unique_ptr<kg::ConceptNetClient> make_conceptnet(const PipelineConfig& cfg) {
  if (cfg.conceptnet == "file") return std::make_unique<kg::FileConceptNet>(cfg.conceptnet_file);
  if (cfg.conceptnet == "http") {
    kg::HttpConceptNet::Options o;
    o.base_url = cfg.conceptnet_url;
    return std::make_unique<kg::HttpConceptNet>(o);
  }
  return std::make_unique<kg::MapConceptNet>();
}

std::shared_ptr<embedding::TextEmbedder> make_text_embedder(const PipelineConfig& cfg) {
  const int dim = static_cast<int>(cfg.train.model.d_emb);
  if (cfg.embedding == "cache") {
    auto c = std::make_shared<embedding::CacheBackend>(embedding::CacheBackend::from_file(cfg.embedding_cache));
    if (c->dim() != dim)
      throw DimensionMismatch("embedding cache has width " + std::to_string(c->dim()) + ", d_emb is " + std::to_string(dim));
    return c;
  }
  if (cfg.embedding == "service") return std::make_shared<embedding::ServiceBackend>(cfg.embedding_url, dim);
  return std::make_shared<embedding::SyntheticTextEmbedder>(cfg.embedding_seed, dim);
}

std::vector<kg::ReasoningGraph> load_graphs(const PipelineConfig& cfg) {
  std::vector<kg::ReasoningGraph> out;
  for (std::size_t i = 0; i < cfg.classes.size(); ++i) {
    const auto path = cfg.kg_dir / (cfg.mission_id(i) + ".json");
    if (!std::filesystem::exists(path)) throw ConfigError("missing knowledge graph " + path.string() + " (run kg-build)");
    out.push_back(kg::load_graph(path));
  }
  return out;
}

std::shared_ptr<embedding::FrameSource> make_frame_source(const PipelineConfig& cfg,
                                                          const std::vector<ManifestEntry>& manifest,
                                                          const std::vector<kg::ReasoningGraph>& graphs,
                                                          embedding::TextEmbedder& text) {
  const int dim = static_cast<int>(cfg.train.model.d_emb);
  if (cfg.embedding == "cache") {
    auto c = std::make_shared<embedding::CacheBackend>(embedding::CacheBackend::from_file(cfg.embedding_cache));
    if (c->dim() != dim)
      throw DimensionMismatch("embedding cache has width " + std::to_string(c->dim()) + ", d_emb is " + std::to_string(dim));
    return c;
  }
  if (cfg.embedding == "service") return std::make_shared<embedding::ServiceBackend>(cfg.embedding_url, dim);

  std::map<int, embedding::Embedding> signals;
  for (std::size_t i = 0; i < graphs.size(); ++i)
    signals[static_cast<int>(i) + 1] = embedding::class_signal(text, graphs[i].layer_labels(1));
  auto src = std::make_shared<embedding::SyntheticFrameSource>(cfg.synth_seed, dim, cfg.synth_beta, std::move(signals));
  for (const auto& e : manifest) {
    embedding::SyntheticVideo v;
    v.label = e.label;
    if (!e.anomaly_intervals.empty()) std::tie(v.event_start, v.event_end) = e.anomaly_intervals.front();
    src->add_video(e.key(), v);
  }
  return src;
}

std::vector<ManifestEntry> synthetic_manifest(const PipelineConfig& cfg) {
  const int n = static_cast<int>(cfg.classes.size());
  Rng rng(hash_combine(cfg.synth_seed, fnv1a64("synthetic-manifest")));
  const long len = std::max<long>(1, std::lround(cfg.synth_event_fraction * static_cast<double>(cfg.synth_frames)));
  std::vector<ManifestEntry> out;
  auto add = [&](const std::string& split, int count) {
    for (int i = 0; i < count; ++i) {
      ManifestEntry e;
      e.split = split;
      e.label = i % (n + 1);
      e.video_id = split + "_" + std::to_string(i) + "_c" + std::to_string(e.label);
      e.frame_count = cfg.synth_frames;
      if (e.label != 0) {
        const long start = static_cast<long>(rng.below(static_cast<std::uint64_t>(cfg.synth_frames - len + 1)));
        e.anomaly_intervals = {{start, start + len}};
      }
      out.push_back(std::move(e));
    }
  };
  add("train", cfg.synth_train);
  add("test", cfg.synth_test);
  return out;
}

}  // namespace mgnn::pipeline
