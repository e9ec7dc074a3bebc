#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mgnn/core.hpp"

namespace mgnn::embedding {

MGNN_DEFINE_ERROR(BackendFailure);
MGNN_DEFINE_ERROR(MissingFrame);
MGNN_DEFINE_ERROR(CorruptCache);

using Embedding = Vector<float>;

/// Stands in for the encoding node's label; always embeds to zeros.
inline constexpr std::string_view kEncodingSentinel = "<encoding>";

/// Cache key for one frame: "video_id/frame_index".
std::string frame_key(std::string_view video_id, long frame_index);

class TextEmbedder {
public:
  virtual ~TextEmbedder() = default;
  virtual int dim() const = 0;
  virtual Embedding embed_text(std::string_view label) = 0;
};

class FrameSource {
public:
  virtual ~FrameSource() = default;
  virtual int dim() const = 0;
  virtual Embedding embed_frame(std::string_view video_id, long frame_index) = 0;
};

/// Unit-norm Gaussian vector drawn from a generator seeded by (seed, label).
Embedding synthetic_text_embedding(std::uint64_t seed, std::string_view label, int dim);

class SyntheticTextEmbedder final : public TextEmbedder {
public:
  SyntheticTextEmbedder(std::uint64_t seed, int dim) : seed_(seed), dim_(dim) {}
  int dim() const override { return dim_; }
  Embedding embed_text(std::string_view label) override;

private:
  std::uint64_t seed_;
  int dim_;
};

/// Per-video parameters of the synthetic frame generator.
struct SyntheticVideo {
  int label = 0;         // 0 normal, i in 1..n anomaly class
  long event_start = 0;  // [start, end) frames carrying the class signal
  long event_end = 0;
};

/// Synthetic frames: unit-norm Gaussian noise, plus beta times the class
/// signal inside the event interval of an anomaly video. The class signal is
/// the mean text embedding of that class's key concepts.
class SyntheticFrameSource final : public FrameSource {
public:
  SyntheticFrameSource(std::uint64_t seed, int dim, double beta,
                       std::map<int, Embedding> class_signals);

  void add_video(std::string video_id, SyntheticVideo video);
  int dim() const override { return dim_; }
  Embedding embed_frame(std::string_view video_id, long frame_index) override;

  /// Noise component alone (what a normal frame is).
  Embedding noise(std::string_view video_id, long frame_index) const;
  const Embedding& class_signal(int label) const { return signals_.at(label); }

private:
  std::uint64_t seed_;
  int dim_;
  double beta_;
  std::map<int, Embedding> signals_;
  std::map<std::string, SyntheticVideo, std::less<>> videos_;
};

/// Mean of the given label embeddings.
Embedding class_signal(TextEmbedder& text, const std::vector<std::string>& key_concepts);

// --- binary cache ----------------------------------------------------------
//
// "MGNNEMB1", u32 d_emb, u32 count, then count x (u16 key length, UTF-8 key,
// d_emb x f32), all little-endian.

using CacheEntries = std::vector<std::pair<std::string, Embedding>>;

void cache_write(const std::filesystem::path& path, const CacheEntries& entries);
CacheEntries cache_read(const std::filesystem::path& path);
std::string cache_encode(const CacheEntries& entries);
CacheEntries cache_decode(std::string_view bytes);

/// Cache lookups by key; serves both label and frame keys.
class CacheBackend final : public TextEmbedder, public FrameSource {
public:
  explicit CacheBackend(const CacheEntries& entries);
  static CacheBackend from_file(const std::filesystem::path& path);

  int dim() const override { return dim_; }
  Embedding embed_text(std::string_view label) override;
  Embedding embed_frame(std::string_view video_id, long frame_index) override;
  bool contains(std::string_view key) const { return rows_.count(std::string(key)) > 0; }

private:
  int dim_ = 0;
  std::map<std::string, Embedding, std::less<>> rows_;
};

/// HTTP embedding service: POST {kind: "text"|"image", payload} -> {vector}.
/// For frames the payload is the frame key.
class ServiceBackend final : public TextEmbedder, public FrameSource {
public:
  ServiceBackend(std::string url, int dim, int timeout_seconds = 60);

  int dim() const override { return dim_; }
  Embedding embed_text(std::string_view label) override;
  Embedding embed_frame(std::string_view video_id, long frame_index) override;
  Embedding request(std::string_view kind, std::string_view payload);

private:
  std::string url_;
  int dim_;
  int timeout_seconds_;
};

/// Memoizing front for a text embedder and a frame source. Frames embedded by
/// the frozen encoder are plain inputs; nothing here is trainable.
class EmbeddingStore {
public:
  EmbeddingStore(std::shared_ptr<TextEmbedder> text, std::shared_ptr<FrameSource> frames);

  int dim() const { return dim_; }
  Embedding embed_text(std::string_view label);
  Embedding embed_frame(std::string_view video_id, long frame_index);
  TextEmbedder& text() { return *text_; }
  FrameSource& frames() { return *frames_; }

private:
  std::shared_ptr<TextEmbedder> text_;
  std::shared_ptr<FrameSource> frames_;
  int dim_;
  std::mutex mutex_;
  std::map<std::string, Embedding, std::less<>> text_cache_;
};

}  // namespace mgnn::embedding
