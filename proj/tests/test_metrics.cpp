#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "mgnn/eval/metrics.hpp"

using namespace mgnn;
using namespace mgnn::eval;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double total = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!y[i] || y[j]) continue;
      pairs += 1;
      total += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  return total / pairs;
}

// Threshold at each distinct score, highest first; precision at the threshold
// weighted by the recall gained there.
double sweep_ap(const std::vector<double>& s, const std::vector<int>& y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double P = 0;
  for (int l : y) P += l;
  double ap = 0, prev_recall = 0;
  for (double thr : thresholds) {
    double tp = 0, kept = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= thr) {
        kept += 1;
        tp += y[i];
      }
    ap += (tp / P - prev_recall) * (tp / kept);
    prev_recall = tp / P;
  }
  return ap;
}

struct Instance {
  std::vector<double> s;
  std::vector<int> y;
};

// Half the instances draw scores from a handful of values to force ties.
Instance random_instance(std::mt19937_64& eng, bool ties) {
  Instance in;
  const std::size_t n = 2 + eng() % 120;
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    in.s.push_back(ties ? static_cast<double>(eng() % 4) / 4 : u(eng));
    in.y.push_back(static_cast<int>(eng() % 3 == 0));
  }
  in.y[0] = 1;
  in.y[1] = 0;
  return in;
}

FrameScoreRecord rec(std::string vid, long t, std::vector<double> s, int label) {
  return {std::move(vid), t, std::move(s), label};
}

}  // namespace

TEST_CASE("roc_auc examples") {
  CHECK(roc_auc({0.9, 0.1}, {1, 0}) == 1.0);
  CHECK(roc_auc({0.2, 0.8}, {1, 0}) == 0.0);
  CHECK(roc_auc({0.5, 0.5}, {1, 0}) == 0.5);
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), DegenerateLabels);
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {0, 0}), DegenerateLabels);
  CHECK_THROWS_AS(roc_auc({0.1}, {1, 0}), ShapeMismatch);
}

TEST_CASE("average_precision examples") {
  CHECK(average_precision({0.9, 0.1}, {1, 0}) == 1.0);
  for (int m = 1; m < 10; ++m) {
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < m; ++i) {
      s.push_back(1.0 + i);
      y.push_back(0);
    }
    s.push_back(0.0);
    y.push_back(1);
    CHECK(average_precision(s, y) == doctest::Approx(1.0 / (m + 1)).epsilon(1e-15));
  }
  CHECK_THROWS_AS(average_precision({0.3, 0.4}, {0, 0}), NoPositives);
  // all tied: precision is the base rate
  CHECK(average_precision({0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 0}) == doctest::Approx(0.25));
}

TEST_CASE("metrics match brute-force oracles, with and without ties") {
  std::mt19937_64 eng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto in = random_instance(eng, trial % 2 == 0);
    CHECK(std::abs(roc_auc(in.s, in.y) - pairwise_auc(in.s, in.y)) < 1e-12);
    CHECK(std::abs(average_precision(in.s, in.y) - sweep_ap(in.s, in.y)) < 1e-12);
  }
}

TEST_CASE("AUC properties") {
  std::mt19937_64 eng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_instance(eng, trial % 3 == 0);
    const double auc = roc_auc(in.s, in.y);
    std::vector<double> ex, aff;
    for (double v : in.s) {
      ex.push_back(std::exp(v));
      aff.push_back(3.0 * v - 7.0);
    }
    CHECK(roc_auc(ex, in.y) == doctest::Approx(auc).epsilon(1e-14));
    CHECK(roc_auc(aff, in.y) == doctest::Approx(auc).epsilon(1e-14));
    std::vector<int> flipped;
    for (int l : in.y) flipped.push_back(1 - l);
    CHECK(std::abs(auc + roc_auc(in.s, flipped) - 1.0) < 1e-12);
    CHECK(auc >= 0);
    CHECK(auc <= 1);
  }
}

TEST_CASE("AP is one when every positive outranks every negative") {
  std::mt19937_64 eng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 30; ++i) {
      const int l = static_cast<int>(eng() % 2);
      y.push_back(l);
      s.push_back(l ? 1.0 + u(eng) : u(eng));
    }
    if (std::count(y.begin(), y.end(), 1) == 0) continue;
    CHECK(average_precision(s, y) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("evaluate: one class collapses to the detection numbers") {
  std::vector<FrameScoreRecord> r;
  std::mt19937_64 eng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 60; ++t) {
    const double a = u(eng);
    r.push_back(rec(t < 30 ? "a" : "b", t, {1 - a, a}, (t % 5 == 0) ? 1 : 0));
  }
  const auto rep = evaluate(r);
  CHECK(rep.classes_evaluated == 1);
  CHECK(rep.mauc == rep.vad_auc);
  CHECK(rep.map == rep.vad_ap);
  CHECK(rep.videos == 2);
  CHECK(rep.frames == 60);
  CHECK(rep.abnormal_frames == 12);
}

TEST_CASE("evaluate: per-class protocol and skipped classes") {
  const std::vector<FrameScoreRecord> r{
      rec("v", 0, {0.7, 0.2, 0.1, 0.0}, 0), rec("v", 1, {0.1, 0.8, 0.1, 0.0}, 1),
      rec("w", 0, {0.2, 0.1, 0.7, 0.0}, 2), rec("w", 1, {0.5, 0.3, 0.2, 0.0}, 0)};
  const auto rep = evaluate(r, {ClassScore::Probability, {"Fighting", "Arson", "Robbery"}});
  REQUIRE(rep.classes.size() == 3);
  CHECK(rep.classes[0].name == "Fighting");
  CHECK(*rep.classes[0].auc == 1.0);
  CHECK(*rep.classes[1].auc == 1.0);
  CHECK_FALSE(rep.classes[2].auc.has_value());
  CHECK(rep.classes_evaluated == 2);
  CHECK(rep.mauc == 1.0);
  const auto j = to_json(rep);
  CHECK(j["classes"][2]["auc"].is_null());
  CHECK(j["counts"]["classes_evaluated"] == 2);

  // conditional scoring divides by p_A
  const auto cond = evaluate(r, {ClassScore::Conditional, {}});
  CHECK(cond.classes[0].name == "class_1");
  CHECK(cond.vad_auc == rep.vad_auc);
}

TEST_CASE("evaluate is independent of record order") {
  std::vector<FrameScoreRecord> r;
  std::mt19937_64 eng(12);
  for (int v = 0; v < 6; ++v)
    for (int t = 0; t < 25; ++t) {
      std::vector<double> s(4);
      double sum = 0;
      for (auto& x : s) sum += x = static_cast<double>(1 + eng() % 5);
      for (auto& x : s) x /= sum;
      r.push_back(rec("v" + std::to_string(v), t, s, v > 2 && t > 10 && t < 18 ? v - 2 : 0));
    }
  const auto base = to_json(evaluate(r)).dump();
  for (int k = 0; k < 5; ++k) {
    std::shuffle(r.begin(), r.end(), eng);
    CHECK(to_json(evaluate(r)).dump() == base);
  }
}

TEST_CASE("evaluate reproduces the fixture score file") {
  const std::string dir = MGNN_FIXTURE_DIR "/eval/";
  const auto records = read_scores(dir + "ucf_scores.jsonl");
  std::ifstream in(dir + "ucf_scores.expected.json");
  const auto expected = nlohmann::json::parse(in);
  const auto rep = evaluate(records);
  CHECK(records.front().scores.size() == 14);
  CHECK(rep.frames == expected["frames"].get<long>());
  CHECK(rep.videos == expected["videos"].get<long>());
  CHECK(std::abs(rep.vad_auc - expected["vad_auc"].get<double>()) < 1e-12);
  CHECK(std::abs(rep.vad_ap - expected["vad_ap"].get<double>()) < 1e-12);
  CHECK(std::abs(rep.mauc - expected["mauc"].get<double>()) < 1e-12);
  CHECK(std::abs(rep.map - expected["map"].get<double>()) < 1e-12);
  CHECK(rep.classes_evaluated == static_cast<int>(expected["classes"].size()));
  for (const auto& c : rep.classes) {
    const auto key = std::to_string(c.label);
    if (!expected["classes"].contains(key)) {
      CHECK_FALSE(c.auc.has_value());
      continue;
    }
    CHECK(std::abs(*c.auc - expected["classes"][key]["auc"].get<double>()) < 1e-12);
    CHECK(std::abs(*c.ap - expected["classes"][key]["ap"].get<double>()) < 1e-12);
  }
}

TEST_CASE("score files round-trip") {
  const std::vector<FrameScoreRecord> r{rec("x", 3, {0.25, 0.75}, 1), rec("y", 0, {0.9, 0.1}, 0)};
  const auto path = std::filesystem::temp_directory_path() / "mgnn_scores_test.jsonl";
  write_scores(path, r);
  const auto back = read_scores(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].video_id == "x");
  CHECK(back[0].frame_index == 3);
  CHECK(back[0].scores == r[0].scores);
  CHECK(back[1].label == 0);
  std::ofstream(path) << "{\"video_id\": \"x\", \"frame_index\": 0, \"scores\": [1.0], \"label\": 0}\n";
  CHECK_THROWS_AS(read_scores(path), ShapeMismatch);
  std::filesystem::remove(path);
}

TEST_CASE("context_sweep reports every window") {
  std::vector<int> seen;
  const auto rows = context_sweep({10, 20, 30}, [&](int T) {
    seen.push_back(T);
    std::vector<FrameScoreRecord> r;
    for (int t = 0; t < 20; ++t) {
      const double a = (t % 4 == 0 ? 0.6 : 0.2) + 0.001 * T;
      r.push_back(rec("v", t, {1 - a, a}, t % 4 == 0));
    }
    return r;
  });
  CHECK(seen == std::vector<int>{10, 20, 30});
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    CHECK(std::isfinite(row.auc));
    CHECK(row.auc == 1.0);
    CHECK(row.frames == 20);
    CHECK(row.seconds_per_frame >= 0);
  }
  CHECK(to_json(rows)[1]["T"] == 20);
  CHECK_THROWS_AS(context_sweep({0}, [](int) { return std::vector<FrameScoreRecord>{}; }), ConfigError);
}
