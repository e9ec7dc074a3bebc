#include "mgnn/pipeline/scoring.hpp"

#include <chrono>
#include <istream>
#include <ostream>
#include <thread>

#include <json.hpp>

namespace mgnn::pipeline {

InferenceModel InferenceModel::from(const Model<float>& model, const GraphInputs<float>& inputs, int T) {
  if (inputs.graphs.size() != model.gnn.size())
    throw DimensionMismatch("checkpoint has " + std::to_string(model.gnn.size()) + " missions, graph set has " +
                            std::to_string(inputs.graphs.size()));
  for (std::size_t i = 0; i < inputs.graphs.size(); ++i) {
    if (inputs.graphs[i].mission_id != model.mission_ids[i])
      throw DimensionMismatch("mission " + std::to_string(i) + " is '" + inputs.graphs[i].mission_id +
                              "' in the graph set but '" + model.mission_ids[i] + "' in the checkpoint");
    if (inputs.graphs[i].depth() != static_cast<int>(model.gnn[i].layers.size()))
      throw DimensionMismatch("graph depth for " + inputs.graphs[i].mission_id + " differs from the checkpoint");
    if (inputs.node_inputs[i].cols() != model.d_emb())
      throw DimensionMismatch("label embeddings have width " + std::to_string(inputs.node_inputs[i].cols()) +
                              ", checkpoint expects " + std::to_string(model.d_emb()));
  }
  if (T < 1) throw ConfigError("T must be >= 1");
  return {model.cast<double>(), inputs.cast<double>(), T};
}

Matrix<double> score_video(const InferenceModel& m, const Matrix<double>& frames, int T) {
  const Matrix<double> R = reasoning_embeddings(m.model, m.inputs, frames, Mode::Eval);
  Matrix<double> out(frames.rows(), m.model.num_classes());
  for (Index t = 0; t < frames.rows(); ++t) {
    const Vector<double> f = temporal::encode_window(window_at(R, t, T), m.model.temporal);
    out.row(t) = temporal::decide(f, m.model.decision).transpose();
  }
  return out;
}

std::vector<eval::FrameScoreRecord> score_videos(const InferenceModel& m, const std::vector<train::VideoData>& videos,
                                                 int T) {
  std::vector<eval::FrameScoreRecord> out;
  for (const auto& v : videos) {
    const Matrix<double> s = score_video(m, v.frames.cast<double>(), T);
    for (Index t = 0; t < s.rows(); ++t) {
      eval::FrameScoreRecord r;
      r.video_id = v.id;
      r.frame_index = t;
      r.scores.resize(static_cast<std::size_t>(s.cols()));
      for (Index c = 0; c < s.cols(); ++c) r.scores[static_cast<std::size_t>(c)] = s(t, c);
      r.label = v.frame_label(t);
      out.push_back(std::move(r));
    }
  }
  return out;
}

StreamScorer::StreamScorer(const InferenceModel& m, int T) : m_(&m), T_(T) {
  if (T < 1) throw ConfigError("T must be >= 1");
}

Vector<double> StreamScorer::push(const Vector<double>& frame_embedding) {
  if (frame_embedding.size() != m_->model.d_emb())
    throw DimensionMismatch("frame embedding has width " + std::to_string(frame_embedding.size()) +
                            ", model expects " + std::to_string(m_->model.d_emb()));
  const Matrix<double> R = reasoning_embeddings(m_->model, m_->inputs, Matrix<double>(frame_embedding.transpose()), Mode::Eval);
  ring_.push_back(R.row(0));
  if (static_cast<int>(ring_.size()) > T_) ring_.pop_front();
  ++seen_;
  // before the buffer fills, ring_.front() is frame 0, which pads the window
  Matrix<double> X(T_, R.cols());
  const Index last = static_cast<Index>(ring_.size()) - 1;
  for (Index k = 0; k < T_; ++k) X.row(k) = ring_[static_cast<std::size_t>(std::max<Index>(0, last - (T_ - 1) + k))];
  return temporal::decide(temporal::encode_window(X, m_->model.temporal), m_->model.decision);
}

StreamStats run_stream(std::istream& in, std::ostream& out, StreamScorer& scorer, std::size_t queue_capacity) {
  struct Item {
    long frame_index;
    Vector<double> v;
  };
  BoundedQueue<Item> queue(queue_capacity);
  StreamStats stats;
  long malformed = 0;
  std::thread reader([&] {
    for (std::string line; std::getline(in, line);) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        const auto vec = j.at("vector").get<std::vector<double>>();
        Item item{j.at("frame_index").get<long>(), Eigen::Map<const Vector<double>>(vec.data(), static_cast<Index>(vec.size()))};
        queue.push(std::move(item));
      } catch (const nlohmann::json::exception&) {
        ++malformed;
      }
    }
    queue.close();
  });

  double total_ms = 0;
  try {
    while (auto item = queue.pop()) {
      const auto t0 = std::chrono::steady_clock::now();
      Vector<double> s;
      try {
        s = scorer.push(item->v);
      } catch (const DimensionMismatch&) {
        ++stats.malformed;
        continue;
      }
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      total_ms += ms;
      stats.max_latency_ms = std::max(stats.max_latency_ms, ms);
      ++stats.frames;
      nlohmann::ordered_json line{{"frame_index", item->frame_index},
                                  {"scores", std::vector<double>(s.data(), s.data() + s.size())},
                                  {"p_abnormal", s.tail(s.size() - 1).sum()}};
      out << line.dump() << '\n';
    }
  } catch (...) {
    // drain so the reader can finish before rethrowing
    while (queue.pop()) {
    }
    reader.join();
    throw;
  }
  reader.join();
  out.flush();
  stats.malformed += malformed;
  stats.mean_latency_ms = stats.frames ? total_ms / static_cast<double>(stats.frames) : 0.0;
  return stats;
}

}  // namespace mgnn::pipeline
