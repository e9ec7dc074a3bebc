#pragma once

// Dataset manifests, backend construction from config, and the synthetic
// separable dataset used for end-to-end checks.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mgnn/embedding/embedding.hpp"
#include "mgnn/kg/clients.hpp"
#include "mgnn/kg/graph.hpp"
#include "mgnn/model.hpp"
#include "mgnn/pipeline/config.hpp"
#include "mgnn/train/trainer.hpp"

namespace mgnn::pipeline {

struct ManifestEntry {
  std::string video_id;
  std::string split = "train";  // train | test
  int label = 0;                // video-level: 0 normal, i anomaly class
  long frame_count = 0;
  double fps = 30.0;
  std::string source;  // embedding key prefix; empty means video_id
  std::vector<std::pair<long, long>> anomaly_intervals;  // [start, end); ground truth for evaluation

  const std::string& key() const { return source.empty() ? video_id : source; }
};

/// JSON-lines, one entry per line.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/// Throws ConfigError on duplicate ids, labels outside 0..num_classes, unknown
/// splits or intervals outside the video. Returns warnings (short videos).
std::vector<std::string> validate_manifest(const std::vector<ManifestEntry>& entries, int num_classes, int T);

std::vector<ManifestEntry> split_of(const std::vector<ManifestEntry>& entries, const std::string& split);

/// Frame embeddings for every listed video.
std::vector<train::VideoData> load_videos(const std::vector<ManifestEntry>& entries,
                                          embedding::FrameSource& frames);

// --- backends ---------------------------------------------------------------

std::unique_ptr<kg::LlmClient> make_llm(const PipelineConfig& cfg);
std::unique_ptr<kg::ConceptNetClient> make_conceptnet(const PipelineConfig& cfg);
std::shared_ptr<embedding::TextEmbedder> make_text_embedder(const PipelineConfig& cfg);

/// Loads <kg_dir>/<mission_id>.json for every class, in class order.
std::vector<kg::ReasoningGraph> load_graphs(const PipelineConfig& cfg);

/// Frame source for the configured backend. The synthetic source needs the
/// manifest (labels, event intervals) and the graphs (class signals).
std::shared_ptr<embedding::FrameSource> make_frame_source(const PipelineConfig& cfg,
                                                          const std::vector<ManifestEntry>& manifest,
                                                          const std::vector<kg::ReasoningGraph>& graphs,
                                                          embedding::TextEmbedder& text);

// --- synthetic dataset --------------------------------------------------------

/// synth_train + synth_test videos of synth_frames frames. Labels cycle through
/// 0..n so every class appears in both splits; each anomaly video carries one
/// event covering synth_event_fraction of its frames at a seeded offset.
std::vector<ManifestEntry> synthetic_manifest(const PipelineConfig& cfg);

}  // namespace mgnn::pipeline
