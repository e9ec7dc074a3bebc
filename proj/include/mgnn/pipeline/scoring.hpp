#pragma once

// Inference: whole-video scoring, the streaming scorer and its two-stage
// ingestion pipeline. Everything here runs the model in double precision.

#include <condition_variable>
#include <deque>
#include <iosfwd>
#include <mutex>
#include <optional>

#include "mgnn/eval/metrics.hpp"
#include "mgnn/model.hpp"
#include "mgnn/train/trainer.hpp"

namespace mgnn::pipeline {

struct InferenceModel {
  Model<double> model;
  GraphInputs<double> inputs;
  int T = 30;

  /// Rejects graph sets that do not line up with the checkpoint.
  static InferenceModel from(const Model<float>& model, const GraphInputs<float>& inputs, int T);
};

/// Per-frame score vectors (frame_count x (n + 1)) for one video, each from
/// the trailing T-frame window ending at that frame.
Matrix<double> score_video(const InferenceModel& m, const Matrix<double>& frames, int T);

std::vector<eval::FrameScoreRecord> score_videos(const InferenceModel& m, const std::vector<train::VideoData>& videos,
                                                 int T);

/// Frame-by-frame scorer: keeps the last T reasoning embeddings and pads by
/// replicating the first frame until T frames have arrived.
class StreamScorer {
public:
  StreamScorer(const InferenceModel& m, int T);

  Vector<double> push(const Vector<double>& frame_embedding);
  long frames_seen() const { return seen_; }
  std::size_t buffered() const { return ring_.size(); }

private:
  const InferenceModel* m_;
  int T_;
  long seen_ = 0;
  std::deque<RowVector<double>> ring_;
};

template <typename T>
class BoundedQueue {
public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T item) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }
  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
  }
  /// Empty once the queue is closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct StreamStats {
  long frames = 0;
  long malformed = 0;
  double mean_latency_ms = 0;
  double max_latency_ms = 0;
};

/// Reads {"frame_index": i, "vector": [...]} lines from `in`, writes one
/// {"frame_index", "scores", "p_abnormal"} line per accepted frame. Parsing
/// runs on its own thread ahead of scoring through a bounded queue.
StreamStats run_stream(std::istream& in, std::ostream& out, StreamScorer& scorer, std::size_t queue_capacity = 64);

}  // namespace mgnn::pipeline
