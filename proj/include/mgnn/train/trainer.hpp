#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mgnn/io/archive.hpp"
#include "mgnn/model.hpp"
#include "mgnn/nn/adamw.hpp"

namespace mgnn::train {

MGNN_DEFINE_ERROR(MissingClass);

// --- configuration ---------------------------------------------------------

struct LossToggles {
  bool normal = true;         // L_N
  bool pseudo_normal = true;  // L_A+
  bool anomalous = true;      // L_A-
  bool sparsity = true;       // L_spa
  bool smoothing = true;      // L_smt
};

struct TrainConfig {
  std::uint64_t seed = 42;
  long steps = 3000;
  int batch_size = 128;  // frame windows per step; sampled as batch_size / 2 (t-1, t) pairs
  nn::AdamWConfig optim;
  double theta0 = 1.0;
  double alpha_d = 0.9999;
  double lambda_spa = 0.001;
  double lambda_smt = 0.001;
  std::optional<double> lambda_aplus;  // defaults to lambda_N
  double normal_fraction = 0.25;       // minimum share of normal-video pairs per batch
  LossToggles toggles;
  ModelConfig model;

  void validate() const;
};

/// Sets one key; returns false for keys this struct does not own. Throws
/// ConfigError on a malformed value.
bool apply_setting(TrainConfig& c, const std::string& key, const std::string& value);
/// Every owned key with its current value, round-trippable through apply_setting.
std::vector<std::pair<std::string, std::string>> settings(const TrainConfig& c);

// --- threshold and localization --------------------------------------------

/// theta = theta0 * alpha_d^iter / 2 + 0.5
double decay_threshold(double theta0, double alpha_d, long iter);

enum class Subset : std::uint8_t { Normal, PseudoNormal, Anomalous };  // F^N, F^A+, F^A-

/// Normal-video frames go to F^N; anomaly-video frames go to F^A+ when
/// p_A <= 1 - theta and to F^A- otherwise.
std::vector<Subset> localize(const std::vector<double>& p_abnormal, const std::vector<int>& video_labels,
                             double theta);

// --- losses ------------------------------------------------------------------

struct LossWeights {
  double lambda_n = 1.0;
  std::vector<double> lambda_a;  // index = class label; [0] unused
  std::optional<double> lambda_aplus_override;
  double lambda_spa = 0.001;
  double lambda_smt = 0.001;

  double lambda_aplus() const { return lambda_aplus_override.value_or(lambda_n); }
};

/// Inverse-frequency weights over frame counts, each group normalized to
/// mean 1. `videos` holds (label, frame_count) for the training split.
LossWeights class_weights(const std::vector<std::pair<int, long>>& videos, int num_anomaly_classes);

struct BatchFrame {
  int video = 0;  // index, used to pair consecutive frames
  long frame = 0;
  int label = 0;  // video-level label
};

struct LossBreakdown {
  double L_N = 0, L_Aplus = 0, L_Aminus = 0, L_spa = 0, L_smt = 0, L_total = 0;
  long n_N = 0, n_Aplus = 0, n_Aminus = 0;
  long n_pairs = 0;

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

nlohmann::ordered_json to_json(const LossBreakdown& b);

/// Five loss terms over a scored batch (rows of `scores` are softmax outputs).
/// Writes dL_total/dlogits when `dlogits` is given. Disabled terms are still
/// reported but neither summed nor differentiated.
LossBreakdown loss_terms(const Matrix<double>& scores, const std::vector<Subset>& partition,
                         const std::vector<BatchFrame>& frames, const LossWeights& w, const LossToggles& toggles,
                         Matrix<double>* dlogits = nullptr);

inline constexpr double kLogFloor = 1e-12;

// --- data and sampling -------------------------------------------------------

struct VideoData {
  std::string id;
  int label = 0;
  Matrix<float> frames;  // frame_count x d_emb
  std::vector<std::pair<long, long>> anomaly_intervals;  // [start, end), evaluation only

  long frame_count() const { return frames.rows(); }
  /// Ground-truth frame label: the video label inside an anomaly interval, else 0.
  int frame_label(long t) const;
};

struct PairSample {
  int video = 0;
  long t = 1;  // windows end at t - 1 and t
};

/// `count` pairs drawn uniformly over (video, t) with at least
/// ceil(normal_fraction * count) drawn from normal videos.
std::vector<PairSample> sample_pairs(const std::vector<VideoData>& videos, std::size_t count, double normal_fraction,
                                     Rng& rng);

// --- training state ----------------------------------------------------------

struct TrainState {
  TrainConfig config;
  Model<float> model;
  nn::AdamW<Model<float>> optim;
  LossWeights weights;
  long iter = 0;

  static TrainState init(const TrainConfig& cfg, const std::vector<std::string>& missions,
                         const std::vector<int>& depths, const LossWeights& weights);
};

io::Archive to_archive(const TrainState& s);
TrainState from_archive(const io::Archive& a);
void save_checkpoint(const std::filesystem::path& path, const TrainState& s);
TrainState load_checkpoint(const std::filesystem::path& path);

/// Per-step randomness: a fresh generator keyed by (seed, iter), so a resumed
/// run draws the same batches as an uninterrupted one.
Rng step_rng(std::uint64_t seed, long iter);

class Trainer {
public:
  Trainer(TrainState& state, const GraphInputs<float>& inputs, const std::vector<VideoData>& videos);

  /// Samples a batch for the current iteration and runs one step.
  LossBreakdown step();
  /// forward -> localize -> losses -> backward -> AdamW -> iter + 1.
  /// Throws NonFiniteLoss (state untouched) when the loss is not finite.
  LossBreakdown step(const std::vector<PairSample>& pairs);

  const Model<float>& last_gradients() const { return grads_; }

private:
  TrainState* state_;
  const GraphInputs<float>* inputs_;
  const std::vector<VideoData>* videos_;
  Model<float> grads_;
  std::vector<hgnn::MissionForward<float>> forwards_;
  std::vector<temporal::WindowCache<float>> windows_;
};

struct LoopHooks {
  std::function<void(long iter, const LossBreakdown&)> on_step;
  long eval_every = 0;
  std::function<void(long iter)> on_eval;
  long checkpoint_every = 0;
  std::function<void(long iter)> on_checkpoint;
};

/// Runs steps until state.iter reaches config.steps.
void train_loop(TrainState& state, const GraphInputs<float>& inputs, const std::vector<VideoData>& videos,
                const LoopHooks& hooks = {});

}  // namespace mgnn::train
