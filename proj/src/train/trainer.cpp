#include "mgnn/train/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace mgnn::train {

namespace {

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long parse_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

// --- configuration ---------------------------------------------------------

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("batch_size must be an even number >= 2");
  if (optim.lr < 0 || optim.weight_decay < 0) throw ConfigError("lr and weight_decay must be >= 0");
  if (!(optim.beta1 >= 0 && optim.beta1 < 1 && optim.beta2 >= 0 && optim.beta2 < 1))
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  if (!(alpha_d > 0 && alpha_d <= 1)) throw ConfigError("alpha_d must lie in (0, 1]");
  if (!(theta0 > 0 && theta0 <= 1)) throw ConfigError("theta0 must lie in (0, 1]");
  if (lambda_spa < 0 || lambda_smt < 0 || lambda_aplus.value_or(0) < 0)
    throw ConfigError("loss weights must be >= 0");
  if (!(normal_fraction >= 0 && normal_fraction <= 1)) throw ConfigError("normal_fraction must lie in [0, 1]");
  if (model.T < 1) throw ConfigError("T must be >= 1");
  if (model.gnn_dim < 1 || model.ffn_dim < 1 || model.heads < 1 || model.d_emb < 1)
    throw ConfigError("model dimensions must be positive");
  if (!(model.dropout >= 0 && model.dropout < 1)) throw ConfigError("dropout must lie in [0, 1)");
}

bool apply_setting(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_long(key, value));
  else if (key == "steps") c.steps = parse_long(key, value);
  else if (key == "batch_size") c.batch_size = static_cast<int>(parse_long(key, value));
  else if (key == "lr") c.optim.lr = parse_double(key, value);
  else if (key == "weight_decay") c.optim.weight_decay = parse_double(key, value);
  else if (key == "beta1") c.optim.beta1 = parse_double(key, value);
  else if (key == "beta2") c.optim.beta2 = parse_double(key, value);
  else if (key == "eps") c.optim.eps = parse_double(key, value);
  else if (key == "theta0") c.theta0 = parse_double(key, value);
  else if (key == "alpha_d") c.alpha_d = parse_double(key, value);
  else if (key == "lambda_spa") c.lambda_spa = parse_double(key, value);
  else if (key == "lambda_smt") c.lambda_smt = parse_double(key, value);
  else if (key == "lambda_aplus") {
    if (value.empty() || value == "auto") c.lambda_aplus.reset();
    else c.lambda_aplus = parse_double(key, value);
  } else if (key == "normal_fraction") c.normal_fraction = parse_double(key, value);
  else if (key == "loss_n") c.toggles.normal = parse_bool(key, value);
  else if (key == "loss_aplus") c.toggles.pseudo_normal = parse_bool(key, value);
  else if (key == "loss_aminus") c.toggles.anomalous = parse_bool(key, value);
  else if (key == "loss_spa") c.toggles.sparsity = parse_bool(key, value);
  else if (key == "loss_smt") c.toggles.smoothing = parse_bool(key, value);
  else if (key == "d_emb") c.model.d_emb = parse_long(key, value);
  else if (key == "gnn_dim") c.model.gnn_dim = parse_long(key, value);
  else if (key == "heads") c.model.heads = static_cast<int>(parse_long(key, value));
  else if (key == "ffn_dim") c.model.ffn_dim = parse_long(key, value);
  else if (key == "T") c.model.T = static_cast<int>(parse_long(key, value));
  else if (key == "positional") c.model.positional = parse_bool(key, value);
  else if (key == "dropout") c.model.dropout = parse_double(key, value);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> settings(const TrainConfig& c) {
  return {{"seed", std::to_string(c.seed)},
          {"steps", std::to_string(c.steps)},
          {"batch_size", std::to_string(c.batch_size)},
          {"lr", fmt(c.optim.lr)},
          {"weight_decay", fmt(c.optim.weight_decay)},
          {"beta1", fmt(c.optim.beta1)},
          {"beta2", fmt(c.optim.beta2)},
          {"eps", fmt(c.optim.eps)},
          {"theta0", fmt(c.theta0)},
          {"alpha_d", fmt(c.alpha_d)},
          {"lambda_spa", fmt(c.lambda_spa)},
          {"lambda_smt", fmt(c.lambda_smt)},
          {"lambda_aplus", c.lambda_aplus ? fmt(*c.lambda_aplus) : std::string("auto")},
          {"normal_fraction", fmt(c.normal_fraction)},
          {"loss_n", fmt(c.toggles.normal)},
          {"loss_aplus", fmt(c.toggles.pseudo_normal)},
          {"loss_aminus", fmt(c.toggles.anomalous)},
          {"loss_spa", fmt(c.toggles.sparsity)},
          {"loss_smt", fmt(c.toggles.smoothing)},
          {"d_emb", std::to_string(c.model.d_emb)},
          {"gnn_dim", std::to_string(c.model.gnn_dim)},
          {"heads", std::to_string(c.model.heads)},
          {"ffn_dim", std::to_string(c.model.ffn_dim)},
          {"T", std::to_string(c.model.T)},
          {"positional", fmt(c.model.positional)},
          {"dropout", fmt(c.model.dropout)}};
}

// --- threshold and localization --------------------------------------------

double decay_threshold(double theta0, double alpha_d, long iter) {
  if (!(alpha_d > 0 && alpha_d <= 1)) throw ConfigError("alpha_d must lie in (0, 1]");
  return theta0 * std::pow(alpha_d, static_cast<double>(iter)) / 2 + 0.5;
}

std::vector<Subset> localize(const std::vector<double>& p_abnormal, const std::vector<int>& video_labels,
                             double theta) {
  require_shape(p_abnormal.size() == video_labels.size(), "localize: one label per frame required");
  std::vector<Subset> out(p_abnormal.size());
  const double bound = 1.0 - theta;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (video_labels[i] == 0) out[i] = Subset::Normal;
    else out[i] = p_abnormal[i] > bound ? Subset::Anomalous : Subset::PseudoNormal;
  }
  return out;
}

// --- losses ------------------------------------------------------------------

LossWeights class_weights(const std::vector<std::pair<int, long>>& videos, int num_anomaly_classes) {
  if (num_anomaly_classes < 1) throw ConfigError("need at least one anomaly class");
  std::vector<double> frames(static_cast<std::size_t>(num_anomaly_classes) + 1, 0.0);
  for (const auto& [label, count] : videos) {
    if (label < 0 || label > num_anomaly_classes)
      throw ConfigError("video label " + std::to_string(label) + " outside 0.." + std::to_string(num_anomaly_classes));
    frames[static_cast<std::size_t>(label)] += static_cast<double>(count);
  }
  for (int c = 0; c <= num_anomaly_classes; ++c)
    if (frames[static_cast<std::size_t>(c)] <= 0)
      throw MissingClass(c == 0 ? std::string("no normal training frames")
                                : "no training frames for anomaly class " + std::to_string(c));

  LossWeights w;
  w.lambda_a.assign(frames.size(), 0.0);
  double mean_inv = 0;
  for (int c = 1; c <= num_anomaly_classes; ++c) mean_inv += 1.0 / frames[static_cast<std::size_t>(c)];
  mean_inv /= num_anomaly_classes;
  for (int c = 1; c <= num_anomaly_classes; ++c)
    w.lambda_a[static_cast<std::size_t>(c)] = (1.0 / frames[static_cast<std::size_t>(c)]) / mean_inv;

  // normal vs all-anomaly groups, same normalization
  const double anomalous = std::accumulate(frames.begin() + 1, frames.end(), 0.0);
  const double inv_n = 1.0 / frames[0], inv_a = 1.0 / anomalous;
  w.lambda_n = inv_n / ((inv_n + inv_a) / 2);
  return w;
}

nlohmann::ordered_json to_json(const LossBreakdown& b) {
  return {{"L_N", b.L_N},         {"L_Aplus", b.L_Aplus}, {"L_Aminus", b.L_Aminus}, {"L_spa", b.L_spa},
          {"L_smt", b.L_smt},     {"L_total", b.L_total}, {"n_N", b.n_N},           {"n_Aplus", b.n_Aplus},
          {"n_Aminus", b.n_Aminus}, {"n_pairs", b.n_pairs}};
}

LossBreakdown loss_terms(const Matrix<double>& scores, const std::vector<Subset>& partition,
                         const std::vector<BatchFrame>& frames, const LossWeights& w, const LossToggles& toggles,
                         Matrix<double>* dlogits) {
  const Index B = scores.rows(), C = scores.cols();
  require_shape(B > 0, "loss_terms: empty batch");
  require_shape(static_cast<Index>(partition.size()) == B && static_cast<Index>(frames.size()) == B,
                "loss_terms: partition and frame lists must match the batch");
  if (dlogits) *dlogits = Matrix<double>::Zero(B, C);

  auto p_abnormal = [&](Index i) { return scores.row(i).tail(C - 1).sum(); };
  // gradient of -log s_k w.r.t. logits, zero where the floor is active
  auto add_nll_grad = [&](Index i, Index k, double coef) {
    if (!dlogits || scores(i, k) < kLogFloor) return;
    dlogits->row(i) += coef * scores.row(i);
    (*dlogits)(i, k) -= coef;
  };
  auto add_pa_grad = [&](Index i, double coef) {
    if (!dlogits) return;
    // dp_A/dz_j = -s_0 (delta_0j - s_j)
    const double s0 = scores(i, 0);
    dlogits->row(i) += coef * s0 * scores.row(i);
    (*dlogits)(i, 0) -= coef * s0;
  };
  auto nll = [&](Index i, Index k) { return -std::log(std::max(scores(i, k), kLogFloor)); };

  LossBreakdown b;
  for (auto s : partition) {
    if (s == Subset::Normal) ++b.n_N;
    else if (s == Subset::PseudoNormal) ++b.n_Aplus;
    else ++b.n_Aminus;
  }

  for (Index i = 0; i < B; ++i) {
    const int y = frames[static_cast<std::size_t>(i)].label;
    switch (partition[static_cast<std::size_t>(i)]) {
      case Subset::Normal: {
        const double coef = w.lambda_n / static_cast<double>(b.n_N);
        b.L_N += coef * nll(i, 0);
        if (toggles.normal) add_nll_grad(i, 0, coef);
        break;
      }
      case Subset::PseudoNormal: {
        const double coef = w.lambda_aplus() / static_cast<double>(b.n_Aplus);
        b.L_Aplus += coef * nll(i, 0);
        if (toggles.pseudo_normal) add_nll_grad(i, 0, coef);
        break;
      }
      case Subset::Anomalous: {
        require_shape(y >= 1 && y < C, "loss_terms: anomaly label outside the score vector");
        const double lam = static_cast<std::size_t>(y) < w.lambda_a.size() ? w.lambda_a[static_cast<std::size_t>(y)] : 1.0;
        const double coef = lam / static_cast<double>(b.n_Aminus);
        b.L_Aminus += coef * nll(i, y);
        if (toggles.anomalous) add_nll_grad(i, y, coef);
        break;
      }
    }
  }

  // sparsity over every frame of an anomaly-labelled video
  long n_anomaly_video = 0;
  for (const auto& f : frames) n_anomaly_video += f.label != 0;
  if (n_anomaly_video > 0) {
    for (Index i = 0; i < B; ++i) {
      if (frames[static_cast<std::size_t>(i)].label == 0) continue;
      b.L_spa += p_abnormal(i) / static_cast<double>(n_anomaly_video);
      if (toggles.sparsity) add_pa_grad(i, w.lambda_spa / static_cast<double>(n_anomaly_video));
    }
  }

  // smoothing over consecutive same-video frame pairs present in the batch
  std::map<std::pair<int, long>, std::vector<Index>> where;
  for (Index i = 0; i < B; ++i) where[{frames[static_cast<std::size_t>(i)].video, frames[static_cast<std::size_t>(i)].frame}].push_back(i);
  std::vector<std::pair<Index, Index>> pairs;
  for (const auto& [key, prev] : where) {
    const auto next = where.find({key.first, key.second + 1});
    if (next == where.end()) continue;
    for (Index i : prev)
      for (Index j : next->second) pairs.emplace_back(i, j);
  }
  b.n_pairs = static_cast<long>(pairs.size());
  for (const auto& [i, j] : pairs) {
    const double diff = p_abnormal(j) - p_abnormal(i);
    const double n = static_cast<double>(pairs.size());
    b.L_smt += diff * diff / n;
    if (toggles.smoothing) {
      const double coef = w.lambda_smt * 2 * diff / n;
      add_pa_grad(j, coef);
      add_pa_grad(i, -coef);
    }
  }

  b.L_total = 0;
  if (toggles.normal) b.L_total += b.L_N;
  if (toggles.pseudo_normal) b.L_total += b.L_Aplus;
  if (toggles.anomalous) b.L_total += b.L_Aminus;
  if (toggles.sparsity) b.L_total += w.lambda_spa * b.L_spa;
  if (toggles.smoothing) b.L_total += w.lambda_smt * b.L_smt;
  return b;
}

// --- data and sampling -------------------------------------------------------

int VideoData::frame_label(long t) const {
  if (label == 0) return 0;
  for (const auto& [s, e] : anomaly_intervals)
    if (t >= s && t < e) return label;
  return 0;
}

std::vector<PairSample> sample_pairs(const std::vector<VideoData>& videos, std::size_t count, double normal_fraction,
                                     Rng& rng) {
  struct Pool {
    std::vector<int> video;
    std::vector<long> end;  // cumulative number of valid t per video
    long total = 0;
    void add(int v, long n) {
      video.push_back(v);
      total += n;
      end.push_back(total);
    }
    PairSample draw(Rng& rng) const {
      const long g = static_cast<long>(rng.below(static_cast<std::uint64_t>(total)));
      const auto k = static_cast<std::size_t>(std::upper_bound(end.begin(), end.end(), g) - end.begin());
      const long start = k == 0 ? 0 : end[k - 1];
      return {video[k], 1 + (g - start)};
    }
  };
  Pool all, normal;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const long n = videos[v].frame_count() - 1;
    if (n <= 0) continue;
    all.add(static_cast<int>(v), n);
    if (videos[v].label == 0) normal.add(static_cast<int>(v), n);
  }
  if (all.total == 0) throw ConfigError("no training video has two or more frames");
  const auto quota = static_cast<std::size_t>(std::ceil(normal_fraction * static_cast<double>(count)));
  if (quota > 0 && normal.total == 0) throw MissingClass("batch stratification needs normal training videos");
  std::vector<PairSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(i < quota ? normal.draw(rng) : all.draw(rng));
  return out;
}

// --- training state ----------------------------------------------------------

TrainState TrainState::init(const TrainConfig& cfg, const std::vector<std::string>& missions,
                            const std::vector<int>& depths, const LossWeights& weights) {
  cfg.validate();
  TrainState s;
  s.config = cfg;
  s.model = Model<float>::init(missions, depths, cfg.model, cfg.seed);
  s.optim = nn::AdamW<Model<float>>(s.model, cfg.optim);
  s.weights = weights;
  s.weights.lambda_spa = cfg.lambda_spa;
  s.weights.lambda_smt = cfg.lambda_smt;
  s.weights.lambda_aplus_override = cfg.lambda_aplus;
  return s;
}

io::Archive to_archive(const TrainState& s) {
  io::Archive a;
  Model<float>::each_trainable(
      [&](const std::string& name, const auto& p, const auto& m, const auto& v) {
        a[name] = io::Tensor::from(p);
        a["optim/" + name + "/m"] = io::Tensor::from(m);
        a["optim/" + name + "/v"] = io::Tensor::from(v);
      },
      s.model, s.optim.m, s.optim.v);
  Model<float>::each_buffer([&](const std::string& name, const auto& t) { a[name] = io::Tensor::from(t); }, s.model);

  std::string missions, config;
  for (const auto& id : s.model.mission_ids) missions += id + "\n";
  for (const auto& [k, v] : settings(s.config)) config += k + " = " + v + "\n";
  std::vector<std::int64_t> depths;
  for (const auto& g : s.model.gnn) depths.push_back(static_cast<std::int64_t>(g.layers.size()));
  a["meta/missions"] = io::Tensor::utf8(missions);
  a["meta/depths"] = io::Tensor::integers(depths);
  a["meta/config"] = io::Tensor::utf8(config);
  a["state/iter"] = io::Tensor::integers({s.iter});
  a["state/optim_step"] = io::Tensor::integers({s.optim.step});
  a["weights/lambda_n"] = io::Tensor::reals({s.weights.lambda_n});
  a["weights/lambda_a"] = io::Tensor::reals(s.weights.lambda_a);
  a["weights/lambda_aplus"] = io::Tensor::reals(
      s.weights.lambda_aplus_override ? std::vector<double>{*s.weights.lambda_aplus_override} : std::vector<double>{});
  a["weights/lambda_spa"] = io::Tensor::reals({s.weights.lambda_spa});
  a["weights/lambda_smt"] = io::Tensor::reals({s.weights.lambda_smt});
  return a;
}

TrainState from_archive(const io::Archive& a) {
  TrainConfig cfg;
  std::istringstream conf(io::archive_get(a, "meta/config").text);
  for (std::string line; std::getline(conf, line);) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    apply_setting(cfg, line.substr(0, eq), line.substr(eq + 3));
  }
  std::vector<std::string> missions;
  std::istringstream ms(io::archive_get(a, "meta/missions").text);
  for (std::string line; std::getline(ms, line);)
    if (!line.empty()) missions.push_back(line);
  std::vector<int> depths;
  for (auto d : io::archive_get(a, "meta/depths").i64) depths.push_back(static_cast<int>(d));

  auto real = [&](const std::string& key) {
    const auto& t = io::archive_get(a, key);
    if (t.f64.size() != 1) throw io::CorruptArchive(key + ": expected one value");
    return t.f64[0];
  };
  LossWeights w;
  w.lambda_n = real("weights/lambda_n");
  w.lambda_a = io::archive_get(a, "weights/lambda_a").f64;

  TrainState s = TrainState::init(cfg, missions, depths, w);
  const auto& aplus = io::archive_get(a, "weights/lambda_aplus").f64;
  s.weights.lambda_aplus_override = aplus.empty() ? std::nullopt : std::optional<double>(aplus.front());
  s.weights.lambda_spa = real("weights/lambda_spa");
  s.weights.lambda_smt = real("weights/lambda_smt");

  Model<float>::each_trainable(
      [&](const std::string& name, auto& p, auto& m, auto& v) {
        io::archive_get(a, name).to(p, name);
        io::archive_get(a, "optim/" + name + "/m").to(m, name);
        io::archive_get(a, "optim/" + name + "/v").to(v, name);
      },
      s.model, s.optim.m, s.optim.v);
  Model<float>::each_buffer([&](const std::string& name, auto& t) { io::archive_get(a, name).to(t, name); }, s.model);
  s.iter = io::archive_get(a, "state/iter").i64.at(0);
  s.optim.step = io::archive_get(a, "state/optim_step").i64.at(0);
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& s) { io::archive_write(path, to_archive(s)); }

TrainState load_checkpoint(const std::filesystem::path& path) { return from_archive(io::archive_read(path)); }

Rng step_rng(std::uint64_t seed, long iter) { return Rng(hash_combine(seed, static_cast<std::uint64_t>(iter))); }

// --- training step -----------------------------------------------------------

Trainer::Trainer(TrainState& state, const GraphInputs<float>& inputs, const std::vector<VideoData>& videos)
    : state_(&state), inputs_(&inputs), videos_(&videos) {
  if (inputs.graphs.size() != state.model.gnn.size())
    throw DimensionMismatch("model has " + std::to_string(state.model.gnn.size()) + " missions, graph set has " +
                            std::to_string(inputs.graphs.size()));
  for (std::size_t i = 0; i < inputs.graphs.size(); ++i) {
    if (inputs.graphs[i].mission_id != state.model.mission_ids[i])
      throw DimensionMismatch("mission order differs: " + inputs.graphs[i].mission_id + " vs " +
                              state.model.mission_ids[i]);
    if (inputs.graphs[i].depth() != static_cast<int>(state.model.gnn[i].layers.size()))
      throw DimensionMismatch("graph depth differs from the model for mission " + inputs.graphs[i].mission_id);
  }
  for (const auto& v : videos)
    if (v.frames.cols() != state.model.d_emb())
      throw DimensionMismatch("video " + v.id + " has embedding width " + std::to_string(v.frames.cols()));
  grads_ = state.model.zeros_like();
}

LossBreakdown Trainer::step() {
  Rng rng = step_rng(state_->config.seed, state_->iter);
  return step(sample_pairs(*videos_, static_cast<std::size_t>(state_->config.batch_size / 2),
                           state_->config.normal_fraction, rng));
}

LossBreakdown Trainer::step(const std::vector<PairSample>& pairs) {
  auto& st = *state_;
  const auto& cfg = st.config;
  const auto& videos = *videos_;
  auto& model = st.model;
  const Index T = cfg.model.T;
  const Index D = model.fused_dim();

  std::vector<BatchFrame> frames;
  frames.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    const auto& v = videos.at(static_cast<std::size_t>(p.video));
    if (p.t < 1 || p.t >= v.frame_count()) throw ShapeMismatch("pair end frame outside video " + v.id);
    frames.push_back({p.video, p.t - 1, v.label});
    frames.push_back({p.video, p.t, v.label});
  }
  const Index B = static_cast<Index>(frames.size());

  // every distinct frame any window touches is embedded once
  std::map<std::pair<int, long>, Index> unique;
  std::vector<std::pair<int, long>> order;
  std::vector<std::vector<Index>> rows(static_cast<std::size_t>(B), std::vector<Index>(static_cast<std::size_t>(T)));
  for (Index b = 0; b < B; ++b)
    for (Index k = 0; k < T; ++k) {
      const auto& f = frames[static_cast<std::size_t>(b)];
      const std::pair<int, long> key{f.video, std::max<long>(0, f.frame - (T - 1) + k)};
      const auto [it, fresh] = unique.emplace(key, static_cast<Index>(order.size()));
      if (fresh) order.push_back(key);
      rows[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)] = it->second;
    }
  Matrix<float> E(static_cast<Index>(order.size()), model.d_emb());
  for (std::size_t i = 0; i < order.size(); ++i)
    E.row(static_cast<Index>(i)) = videos[static_cast<std::size_t>(order[i].first)].frames.row(order[i].second);

  const Matrix<float> R = reasoning_embeddings(model, *inputs_, E, Mode::Train, &forwards_);

  Rng dropout_rng(hash_combine(hash_combine(cfg.seed, static_cast<std::uint64_t>(st.iter)), 0xD5));
  Rng* drop = cfg.model.dropout > 0 ? &dropout_rng : nullptr;
  windows_.resize(static_cast<std::size_t>(B));
  Matrix<float> feats(B, D);
  Matrix<float> X(T, D);
  for (Index b = 0; b < B; ++b) {
    for (Index k = 0; k < T; ++k) X.row(k) = R.row(rows[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)]);
    feats.row(b) = temporal::encode_window(X, model.temporal, &windows_[static_cast<std::size_t>(b)], drop).transpose();
  }
  const Matrix<double> logits =
      ((feats * model.decision.W.transpose()).rowwise() + model.decision.b.transpose()).cast<double>();
  const Matrix<double> scores = nn::softmax_rows(logits);

  std::vector<double> p_abnormal(static_cast<std::size_t>(B));
  std::vector<int> labels(static_cast<std::size_t>(B));
  for (Index b = 0; b < B; ++b) {
    p_abnormal[static_cast<std::size_t>(b)] = scores.row(b).tail(scores.cols() - 1).sum();
    labels[static_cast<std::size_t>(b)] = frames[static_cast<std::size_t>(b)].label;
  }
  const double theta = decay_threshold(cfg.theta0, cfg.alpha_d, st.iter);
  const auto partition = localize(p_abnormal, labels, theta);
  Matrix<double> dlogits;
  const LossBreakdown loss = loss_terms(scores, partition, frames, st.weights, cfg.toggles, &dlogits);
  if (!std::isfinite(loss.L_total) || !dlogits.allFinite())
    throw NonFiniteLoss("non-finite loss at iter " + std::to_string(st.iter) + ": " + to_json(loss).dump());

  Model<float>::each_trainable([](const std::string&, auto& t) { t.setZero(); }, grads_);
  const Matrix<float> dz = dlogits.cast<float>();
  grads_.decision.W.noalias() += dz.transpose() * feats;
  grads_.decision.b += dz.colwise().sum().transpose();
  const Matrix<float> dfeats = dz * model.decision.W;
  Matrix<float> dR = Matrix<float>::Zero(R.rows(), D);
  for (Index b = 0; b < B; ++b) {
    const Matrix<float> dX = temporal::encode_window_backward<float>(
        dfeats.row(b).transpose(), model.temporal, windows_[static_cast<std::size_t>(b)], grads_.temporal);
    for (Index k = 0; k < T; ++k) dR.row(rows[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)]) += dX.row(k);
  }
  Index at = 0;
  for (std::size_t i = 0; i < model.gnn.size(); ++i) {
    const Index w = model.gnn[i].out_dim();
    const Matrix<float> block = dR.middleCols(at, w);
    forwards_[i].backward(block, model.gnn[i], grads_.gnn[i]);
    at += w;
  }

  for (std::size_t i = 0; i < model.gnn.size(); ++i) forwards_[i].commit_running_stats(model.gnn[i]);
  st.optim.update(model, grads_);
  ++st.iter;
  return loss;
}

void train_loop(TrainState& state, const GraphInputs<float>& inputs, const std::vector<VideoData>& videos,
                const LoopHooks& hooks) {
  Trainer trainer(state, inputs, videos);
  while (state.iter < state.config.steps) {
    const auto loss = trainer.step();
    if (hooks.on_step) hooks.on_step(state.iter, loss);
    if (hooks.eval_every > 0 && hooks.on_eval && state.iter % hooks.eval_every == 0) hooks.on_eval(state.iter);
    if (hooks.checkpoint_every > 0 && hooks.on_checkpoint && state.iter % hooks.checkpoint_every == 0)
      hooks.on_checkpoint(state.iter);
  }
}

}  // namespace mgnn::train
