#pragma once

// Frame-level detection (VAD) and per-class recognition (VAR) metrics.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgnn/core.hpp"

namespace mgnn::eval {

MGNN_DEFINE_ERROR(DegenerateLabels);
MGNN_DEFINE_ERROR(NoPositives);

struct FrameScoreRecord {
  std::string video_id;
  long frame_index = 0;
  std::vector<double> scores;  // s_t, length n + 1, [0] = normal
  int label = 0;               // ground truth: 0 normal, i anomaly class

  double p_abnormal() const;
};

nlohmann::ordered_json to_json(const FrameScoreRecord& r);
FrameScoreRecord record_from_json(const nlohmann::json& j);

/// Score file: one record per line.
void write_scores(const std::filesystem::path& path, const std::vector<FrameScoreRecord>& records);
std::vector<FrameScoreRecord> read_scores(const std::filesystem::path& path);

/// Area under the ROC curve, ties counted half (trapezoidal over tie groups).
/// Throws DegenerateLabels unless both classes occur.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// sum_k (R_k - R_{k-1}) P_k over a descending sweep, one step per tie group.
/// Throws NoPositives.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

/// What a frame's score for class i is in the per-class protocol.
enum class ClassScore { Probability, Conditional };

struct EvalOptions {
  ClassScore class_score = ClassScore::Probability;
  std::vector<std::string> class_names;  // optional, index i - 1 names class i
};

struct ClassResult {
  int label = 0;
  std::string name;
  long positives = 0;
  std::optional<double> auc, ap;  // empty when the class has no positive frame
};

struct EvalReport {
  double vad_auc = 0;
  double vad_ap = 0;
  std::vector<ClassResult> classes;
  double mauc = 0;  // over classes with positives
  double map = 0;
  long frames = 0, videos = 0, abnormal_frames = 0;
  int classes_evaluated = 0;
};

nlohmann::ordered_json to_json(const EvalReport& r);

/// VAD scores each frame by p_A against label != 0; class i scores by s_{t,i}
/// (or s_{t,i} / p_A) against label == i. Pure and independent of record order.
EvalReport evaluate(const std::vector<FrameScoreRecord>& records, const EvalOptions& opt = {});

struct SweepRow {
  int T = 0;
  double auc = 0;
  double seconds_per_frame = 0;
  long frames = 0;
};

/// Re-scores the data once per window length through `score` and reports VAD
/// AUC with wall-clock per frame.
std::vector<SweepRow> context_sweep(const std::vector<int>& windows,
                                    const std::function<std::vector<FrameScoreRecord>(int T)>& score);

nlohmann::ordered_json to_json(const std::vector<SweepRow>& rows);

}  // namespace mgnn::eval
