#include "mgnn/eval/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace mgnn::eval {

namespace {

// Indices sorted by descending score; ties broken by index only to keep the
// grouping pass simple (grouping makes the result tie-order independent).
std::vector<std::size_t> descending(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

// Calls f(pos, neg) for each tie group in descending score order.
template <typename F>
void for_each_group(const std::vector<double>& scores, const std::vector<int>& labels, F&& f) {
  const auto idx = descending(scores);
  for (std::size_t i = 0; i < idx.size();) {
    long pos = 0, neg = 0;
    std::size_t j = i;
    for (; j < idx.size() && scores[idx[j]] == scores[idx[i]]; ++j) (labels[idx[j]] ? pos : neg) += 1;
    f(pos, neg);
    i = j;
  }
}

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
  require_shape(scores.size() == labels.size(), "one label per score required");
  for (double s : scores)
    if (std::isnan(s)) throw Error("NaN score");
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double FrameScoreRecord::p_abnormal() const {
  double a = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) a += scores[i];
  return a;
}

nlohmann::ordered_json to_json(const FrameScoreRecord& r) {
  return {{"video_id", r.video_id}, {"frame_index", r.frame_index}, {"scores", r.scores}, {"label", r.label}};
}

FrameScoreRecord record_from_json(const nlohmann::json& j) {
  FrameScoreRecord r;
  r.video_id = j.at("video_id").get<std::string>();
  r.frame_index = j.at("frame_index").get<long>();
  r.scores = j.at("scores").get<std::vector<double>>();
  r.label = j.value("label", 0);
  if (r.scores.size() < 2) throw ShapeMismatch("score vector needs a normal and at least one anomaly entry");
  if (r.label < 0 || r.label >= static_cast<int>(r.scores.size()))
    throw ShapeMismatch("label " + std::to_string(r.label) + " outside the score vector");
  return r;
}

void write_scores(const std::filesystem::path& path, const std::vector<FrameScoreRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<FrameScoreRecord> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<FrameScoreRecord> out;
  long lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const long P = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
  const long N = static_cast<long>(labels.size()) - P;
  if (P == 0 || N == 0) throw DegenerateLabels("ROC AUC needs both positive and negative labels");
  // trapezoid area in count units: each group adds neg * (tp_before + pos / 2)
  double area = 0;
  long tp = 0;
  for_each_group(scores, labels, [&](long pos, long neg) {
    area += static_cast<double>(neg) * (static_cast<double>(tp) + static_cast<double>(pos) / 2);
    tp += pos;
  });
  return area / (static_cast<double>(P) * static_cast<double>(N));
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const long P = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
  if (P == 0) throw NoPositives("average precision needs at least one positive");
  double ap = 0;
  long tp = 0, seen = 0;
  for_each_group(scores, labels, [&](long pos, long neg) {
    tp += pos;
    seen += pos + neg;
    if (pos > 0) ap += (static_cast<double>(pos) / static_cast<double>(P)) * (static_cast<double>(tp) / static_cast<double>(seen));
  });
  return ap;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (const auto& c : r.classes) {
    nlohmann::ordered_json j{{"label", c.label}, {"name", c.name}, {"positives", c.positives}};
    j["auc"] = c.auc ? nlohmann::ordered_json(*c.auc) : nlohmann::ordered_json(nullptr);
    j["ap"] = c.ap ? nlohmann::ordered_json(*c.ap) : nlohmann::ordered_json(nullptr);
    classes.push_back(j);
  }
  return {{"vad_auc", r.vad_auc},
          {"vad_ap", r.vad_ap},
          {"mauc", r.mauc},
          {"map", r.map},
          {"classes", classes},
          {"counts",
           {{"frames", r.frames},
            {"videos", r.videos},
            {"abnormal_frames", r.abnormal_frames},
            {"classes_evaluated", r.classes_evaluated}}}};
}

EvalReport evaluate(const std::vector<FrameScoreRecord>& records, const EvalOptions& opt) {
  if (records.empty()) throw Error("evaluate: no records");
  const std::size_t C = records.front().scores.size();
  for (const auto& r : records)
    if (r.scores.size() != C) throw ShapeMismatch("records disagree on the number of classes");

  EvalReport rep;
  rep.frames = static_cast<long>(records.size());
  std::set<std::string> videos;
  std::vector<double> pA;
  std::vector<int> abnormal;
  pA.reserve(records.size());
  abnormal.reserve(records.size());
  for (const auto& r : records) {
    videos.insert(r.video_id);
    pA.push_back(r.p_abnormal());
    abnormal.push_back(r.label != 0);
  }
  rep.videos = static_cast<long>(videos.size());
  rep.abnormal_frames = std::count(abnormal.begin(), abnormal.end(), 1);
  rep.vad_auc = roc_auc(pA, abnormal);
  rep.vad_ap = average_precision(pA, abnormal);

  std::vector<double> aucs, aps;
  for (std::size_t i = 1; i < C; ++i) {
    ClassResult c;
    c.label = static_cast<int>(i);
    c.name = i - 1 < opt.class_names.size() ? opt.class_names[i - 1] : "class_" + std::to_string(i);
    std::vector<double> s;
    std::vector<int> y;
    s.reserve(records.size());
    y.reserve(records.size());
    for (std::size_t k = 0; k < records.size(); ++k) {
      const auto& r = records[k];
      double v = r.scores[i];
      if (opt.class_score == ClassScore::Conditional) v = pA[k] > 0 ? v / pA[k] : 0.0;
      s.push_back(v);
      y.push_back(r.label == static_cast<int>(i));
    }
    c.positives = std::count(y.begin(), y.end(), 1);
    if (c.positives > 0 && c.positives < static_cast<long>(y.size())) {
      c.auc = roc_auc(s, y);
      c.ap = average_precision(s, y);
      aucs.push_back(*c.auc);
      aps.push_back(*c.ap);
    }
    rep.classes.push_back(c);
  }
  rep.classes_evaluated = static_cast<int>(aucs.size());
  rep.mauc = mean(aucs);
  rep.map = mean(aps);
  return rep;
}

std::vector<SweepRow> context_sweep(const std::vector<int>& windows,
                                    const std::function<std::vector<FrameScoreRecord>(int T)>& score) {
  std::vector<SweepRow> rows;
  for (int T : windows) {
    if (T < 1) throw ConfigError("window length must be >= 1");
    const auto t0 = std::chrono::steady_clock::now();
    const auto records = score(T);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    SweepRow row;
    row.T = T;
    row.frames = static_cast<long>(records.size());
    row.seconds_per_frame = records.empty() ? 0.0 : secs / static_cast<double>(records.size());
    std::vector<double> pA;
    std::vector<int> y;
    for (const auto& r : records) {
      pA.push_back(r.p_abnormal());
      y.push_back(r.label != 0);
    }
    row.auc = roc_auc(pA, y);
    rows.push_back(row);
  }
  return rows;
}

nlohmann::ordered_json to_json(const std::vector<SweepRow>& rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : rows)
    out.push_back({{"T", r.T}, {"auc", r.auc}, {"seconds_per_frame", r.seconds_per_frame}, {"frames", r.frames}});
  return out;
}

}  // namespace mgnn::eval
