#include "mgnn/embedding/embedding.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "mgnn/kg/backends.hpp"
#include "mgnn/random.hpp"

#include <httplib.h>

namespace mgnn::embedding {

namespace {

constexpr std::string_view kMagic = "MGNNEMB1";

Embedding unit_gaussian(std::uint64_t key, int dim) {
  Rng rng(key);
  Vector<double> v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  const double n = v.norm();
  if (n > 0) v /= n;
  return v.cast<float>();
}

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw CorruptCache("embedding cache truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<T>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string frame_key(std::string_view video_id, long frame_index) {
  return std::string(video_id) + "/" + std::to_string(frame_index);
}

Embedding synthetic_text_embedding(std::uint64_t seed, std::string_view label, int dim) {
  return unit_gaussian(hash_combine(seed, fnv1a64(label)), dim);
}

Embedding SyntheticTextEmbedder::embed_text(std::string_view label) {
  if (label == kEncodingSentinel) return Embedding::Zero(dim_);
  if (label.empty()) throw BackendFailure("cannot embed an empty label");
  return synthetic_text_embedding(seed_, label, dim_);
}

SyntheticFrameSource::SyntheticFrameSource(std::uint64_t seed, int dim, double beta,
                                           std::map<int, Embedding> class_signals)
    : seed_(seed), dim_(dim), beta_(beta), signals_(std::move(class_signals)) {
  for (const auto& [label, s] : signals_)
    require_shape(s.size() == dim_, "class signal " + std::to_string(label) + " has wrong length");
}

void SyntheticFrameSource::add_video(std::string video_id, SyntheticVideo video) {
  if (video.label != 0 && !signals_.count(video.label))
    throw ConfigError("no class signal for label " + std::to_string(video.label));
  videos_[std::move(video_id)] = video;
}

Embedding SyntheticFrameSource::noise(std::string_view video_id, long frame_index) const {
  return unit_gaussian(
      hash_combine(hash_combine(seed_, fnv1a64(video_id)), static_cast<std::uint64_t>(frame_index)),
      dim_);
}

Embedding SyntheticFrameSource::embed_frame(std::string_view video_id, long frame_index) {
  const auto it = videos_.find(video_id);
  if (it == videos_.end()) throw MissingFrame("unknown synthetic video: " + std::string(video_id));
  if (frame_index < 0) throw MissingFrame("negative frame index");
  Embedding e = noise(video_id, frame_index);
  const auto& v = it->second;
  if (v.label != 0 && frame_index >= v.event_start && frame_index < v.event_end)
    e += static_cast<float>(beta_) * signals_.at(v.label);
  return e;
}

Embedding class_signal(TextEmbedder& text, const std::vector<std::string>& key_concepts) {
  if (key_concepts.empty()) throw ConfigError("class signal needs at least one key concept");
  Vector<double> acc = Vector<double>::Zero(text.dim());
  for (const auto& label : key_concepts) acc += text.embed_text(label).cast<double>();
  return (acc / static_cast<double>(key_concepts.size())).cast<float>();
}

// ---------------------------------------------------------------------------

std::string cache_encode(const CacheEntries& entries) {
  const int dim = entries.empty() ? 0 : static_cast<int>(entries.front().second.size());
  std::set<std::string_view> keys;
  std::string out(kMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [key, row] : entries) {
    if (row.size() != dim) throw ShapeMismatch("embedding cache rows must share one dimension");
    if (key.size() > 0xFFFF) throw ConfigError("embedding cache key too long");
    if (!keys.insert(key).second) throw ConfigError("duplicate embedding cache key: " + key);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(key.size()));
    out += key;
    for (Index i = 0; i < row.size(); ++i) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(row[i]));
  }
  return out;
}

CacheEntries cache_decode(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic)
    throw CorruptCache("bad embedding cache magic");
  std::size_t pos = kMagic.size();
  const auto dim = get_le<std::uint32_t>(bytes, pos);
  const auto count = get_le<std::uint32_t>(bytes, pos);
  CacheEntries out;
  out.reserve(count);
  std::set<std::string> keys;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = get_le<std::uint16_t>(bytes, pos);
    if (pos + len > bytes.size()) throw CorruptCache("embedding cache truncated in key");
    std::string key(bytes.substr(pos, len));
    pos += len;
    if (!keys.insert(key).second) throw CorruptCache("duplicate key in embedding cache: " + key);
    Embedding row(dim);
    for (std::uint32_t i = 0; i < dim; ++i) row[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
    out.emplace_back(std::move(key), std::move(row));
  }
  if (pos != bytes.size()) throw CorruptCache("trailing bytes after embedding cache entries");
  return out;
}

void cache_write(const std::filesystem::path& path, const CacheEntries& entries) {
  const std::string bytes = cache_encode(entries);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write embedding cache: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

CacheEntries cache_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCache("cannot open embedding cache: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return cache_decode(ss.str());
}

CacheBackend::CacheBackend(const CacheEntries& entries) {
  for (const auto& [key, row] : entries) {
    if (dim_ == 0) dim_ = static_cast<int>(row.size());
    rows_[key] = row;
  }
}

CacheBackend CacheBackend::from_file(const std::filesystem::path& path) {
  return CacheBackend(cache_read(path));
}

Embedding CacheBackend::embed_text(std::string_view label) {
  if (label == kEncodingSentinel) return Embedding::Zero(dim_);
  const auto it = rows_.find(label);
  if (it == rows_.end()) throw BackendFailure("label not in embedding cache: " + std::string(label));
  return it->second;
}

Embedding CacheBackend::embed_frame(std::string_view video_id, long frame_index) {
  const auto it = rows_.find(frame_key(video_id, frame_index));
  if (it == rows_.end()) throw MissingFrame("frame not in embedding cache: " + frame_key(video_id, frame_index));
  return it->second;
}

// ---------------------------------------------------------------------------

ServiceBackend::ServiceBackend(std::string url, int dim, int timeout_seconds)
    : url_(std::move(url)), dim_(dim), timeout_seconds_(timeout_seconds) {}

Embedding ServiceBackend::request(std::string_view kind, std::string_view payload) {
  const auto [base, path] = kg::split_url(url_);
  httplib::Client client(base);
  client.set_read_timeout(timeout_seconds_, 0);
  const nlohmann::json body = {{"kind", kind}, {"payload", payload}};
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) throw BackendFailure("embedding service unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw BackendFailure("embedding service returned HTTP " + std::to_string(res->status));
  std::vector<float> values;
  try {
    values = nlohmann::json::parse(res->body).at("vector").get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendFailure(std::string("bad embedding service reply: ") + e.what());
  }
  if (static_cast<int>(values.size()) != dim_)
    throw BackendFailure("embedding service returned " + std::to_string(values.size()) +
                         " values, expected " + std::to_string(dim_));
  Embedding out = Eigen::Map<const Embedding>(values.data(), dim_);
  if (!out.allFinite()) throw BackendFailure("embedding service returned non-finite values");
  return out;
}

Embedding ServiceBackend::embed_text(std::string_view label) {
  if (label == kEncodingSentinel) return Embedding::Zero(dim_);
  return request("text", label);
}

Embedding ServiceBackend::embed_frame(std::string_view video_id, long frame_index) {
  return request("image", frame_key(video_id, frame_index));
}

// ---------------------------------------------------------------------------

EmbeddingStore::EmbeddingStore(std::shared_ptr<TextEmbedder> text, std::shared_ptr<FrameSource> frames)
    : text_(std::move(text)), frames_(std::move(frames)) {
  dim_ = text_ ? text_->dim() : frames_->dim();
  if (text_ && frames_ && text_->dim() != frames_->dim())
    throw DimensionMismatch("text and frame embeddings live in different spaces");
}

Embedding EmbeddingStore::embed_text(std::string_view label) {
  if (label == kEncodingSentinel) return Embedding::Zero(dim_);
  std::lock_guard lock(mutex_);
  if (auto it = text_cache_.find(label); it != text_cache_.end()) return it->second;
  Embedding e = text_->embed_text(label);
  if (e.size() != dim_ || !e.allFinite()) throw BackendFailure("bad text embedding for " + std::string(label));
  text_cache_.emplace(std::string(label), e);
  return e;
}

Embedding EmbeddingStore::embed_frame(std::string_view video_id, long frame_index) {
  Embedding e = frames_->embed_frame(video_id, frame_index);
  if (e.size() != dim_) throw DimensionMismatch("frame embedding has wrong dimension");
  return e;
}

}  // namespace mgnn::embedding
