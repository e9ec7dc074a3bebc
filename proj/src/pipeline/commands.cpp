#include "mgnn/pipeline/commands.hpp"

#include <fstream>
#include <ostream>
#include <set>

#include <json.hpp>

#include "mgnn/eval/metrics.hpp"
#include "mgnn/kg/builder.hpp"
#include "mgnn/kg/io.hpp"
#include "mgnn/pipeline/dataset.hpp"
#include "mgnn/pipeline/scoring.hpp"

namespace mgnn::pipeline {

namespace fs = std::filesystem;

namespace {

// Maps library errors onto exit codes.
template <typename F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const NonFiniteLoss& e) {
    log << "error: " << e.what() << '\n';
    return kNonFiniteLoss;
  } catch (const DimensionMismatch& e) {
    log << "error: dimension mismatch: " << e.what() << '\n';
    return kDimensionMismatch;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kFailure;
  }
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Graphs, label embeddings and the text backend for a given model width.
struct Loaded {
  std::vector<kg::ReasoningGraph> graphs;
  std::shared_ptr<embedding::TextEmbedder> text;
  GraphInputs<float> inputs;
};

Loaded load_inputs(const PipelineConfig& cfg) {
  Loaded l;
  l.graphs = load_graphs(cfg);
  l.text = make_text_embedder(cfg);
  l.inputs = GraphInputs<float>::build(l.graphs, *l.text);
  return l;
}

// The pipeline config with the model section taken from a checkpoint.
PipelineConfig for_checkpoint(const PipelineConfig& cfg, const train::TrainState& st) {
  PipelineConfig run = cfg;
  run.train.model = st.config.model;
  return run;
}

eval::EvalOptions eval_options(const PipelineConfig& cfg) {
  eval::EvalOptions o;
  o.class_score = cfg.class_score == "conditional" ? eval::ClassScore::Conditional : eval::ClassScore::Probability;
  o.class_names = cfg.classes;
  return o;
}

std::vector<train::VideoData> videos_for(const PipelineConfig& cfg, const Loaded& l, const fs::path& manifest_path,
                                         const std::string& split, std::ostream& log) {
  const auto manifest = read_manifest(manifest_path);
  for (const auto& w : validate_manifest(manifest, static_cast<int>(cfg.classes.size()), cfg.train.model.T))
    log << "warning: " << w << '\n';
  const auto frames = make_frame_source(cfg, manifest, l.graphs, *l.text);
  const auto entries = split_of(manifest, split);
  if (entries.empty()) throw ConfigError("manifest has no '" + split + "' videos");
  return load_videos(entries, *frames);
}

}  // namespace

int cmd_kg_build(const PipelineConfig& cfg, std::ostream& log) {
  std::vector<fs::path> written;
  auto fail = [&](int code, const std::string& what) {
    for (const auto& p : written) fs::remove(p);
    log << "error: " << what << " (" << written.size() << " partial outputs removed)\n";
    return code;
  };
  return guarded(log, [&] {
    cfg.validate();
    auto llm = make_llm(cfg);
    auto cn = make_conceptnet(cfg);
    fs::create_directories(cfg.kg_dir);
    for (std::size_t i = 0; i < cfg.classes.size(); ++i) {
      kg::MissionSpec m;
      m.mission_id = cfg.mission_id(i);
      m.mission_text = cfg.mission_text_for(i);
      m.n_concepts = cfg.n_concepts;
      m.sub_depth = cfg.sub_depth;
      m.max_parents = cfg.max_parents;
      m.max_repair_attempts = cfg.max_repair_attempts;
      m.edges_require_conceptnet = cfg.edges_require_conceptnet;
      m.validate();
      kg::ReasoningGraph g;
      try {
        kg::KgBuilder builder(m, *llm, *cn);
        g = builder.build();
      } catch (const kg::StructuralViolation& e) {
        return fail(kInvalidGraph, m.mission_id + ": " + e.what());
      } catch (const Error& e) {
        return fail(kGenerationFailed, m.mission_id + ": " + e.what());
      }
      if (const auto v = kg::validate_graph(g); !v.empty())
        return fail(kInvalidGraph, m.mission_id + ": " + v.front().rule + ": " + v.front().message);
      const auto path = cfg.kg_dir / (m.mission_id + ".json");
      kg::save_graph(g, path);
      written.push_back(path);
      log << "kg " << m.mission_id << ": " << g.nodes.size() << " nodes, " << g.edges.size() << " edges -> "
          << path.string() << '\n';
    }
    return static_cast<int>(kOk);
  });
}

int cmd_synth_manifest(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  return guarded(log, [&] {
    cfg.validate();
    const auto m = synthetic_manifest(cfg);
    write_manifest(out, m);
    log << "manifest: " << m.size() << " videos -> " << out.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_embed_cache(const PipelineConfig& cfg, const fs::path& manifest_path, const fs::path& out, std::ostream& log) {
  return guarded(log, [&] {
    cfg.validate();
    if (cfg.embedding == "cache") throw ConfigError("embed-cache needs a synthetic or service embedding backend");
    const auto graphs = load_graphs(cfg);
    const auto text = make_text_embedder(cfg);
    const auto manifest = read_manifest(manifest_path);
    validate_manifest(manifest, static_cast<int>(cfg.classes.size()), cfg.train.model.T);
    const auto frames = make_frame_source(cfg, manifest, graphs, *text);
    embedding::CacheEntries entries;
    std::set<std::string> labels;
    for (const auto& g : graphs)
      for (const auto& n : g.nodes)
        if (!n.label.empty()) labels.insert(n.label);
    for (const auto& l : labels) entries.emplace_back(l, text->embed_text(l));
    long count = 0;
    for (const auto& e : manifest)
      for (long t = 0; t < e.frame_count; ++t, ++count)
        entries.emplace_back(embedding::frame_key(e.key(), t), frames->embed_frame(e.key(), t));
    embedding::cache_write(out, entries);
    log << "cache: " << labels.size() << " labels, " << count << " frames -> " << out.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_train(const PipelineConfig& cfg, const TrainArgs& args, std::ostream& log) {
  return guarded(log, [&] {
    cfg.validate();
    const int n = static_cast<int>(cfg.classes.size());
    train::TrainState st;
    if (args.resume) {
      st = train::load_checkpoint(*args.resume);
      st.config.steps = cfg.train.steps;
    }
    const PipelineConfig run = args.resume ? for_checkpoint(cfg, st) : cfg;
    const Loaded l = load_inputs(run);
    const auto videos = videos_for(run, l, args.manifest, "train", log);
    if (args.resume) {
      if (st.model.mission_ids != l.inputs.mission_ids() || st.model.gnn.size() != l.inputs.graphs.size())
        throw DimensionMismatch("checkpoint missions do not match the configured classes");
    } else {
      std::vector<std::pair<int, long>> counts;
      for (const auto& v : videos) counts.emplace_back(v.label, v.frame_count());
      st = train::TrainState::init(cfg.train, l.inputs.mission_ids(), l.inputs.depths(), train::class_weights(counts, n));
    }

    const auto params = st.model.parameter_counts();
    std::size_t total = 0;
    for (const auto& [k, c] : params) total += c;
    nlohmann::ordered_json pc(params);
    pc["total"] = total;
    log << "trainable parameters: " << pc.dump() << '\n';

    std::vector<train::VideoData> test;
    if (cfg.eval_every > 0 && args.report_dir) {
      const auto manifest = read_manifest(args.manifest);
      if (!split_of(manifest, "test").empty()) test = videos_for(run, l, args.manifest, "test", log);
    }

    if (args.loss_log.has_parent_path()) fs::create_directories(args.loss_log.parent_path());
    std::ofstream loss_log(args.loss_log, args.resume ? std::ios::app : std::ios::trunc);
    if (!loss_log) throw Error("cannot write " + args.loss_log.string());

    train::LoopHooks hooks;
    hooks.on_step = [&](long iter, const train::LossBreakdown& b) {
      nlohmann::ordered_json j{{"iter", iter}};
      const auto terms = train::to_json(b);
      for (const auto& [k, v] : terms.items()) j[k] = v;
      j["theta"] = train::decay_threshold(st.config.theta0, st.config.alpha_d, iter - 1);
      loss_log << j.dump() << '\n';
    };
    if (!test.empty()) {
      hooks.eval_every = cfg.eval_every;
      hooks.on_eval = [&](long iter) {
        const auto m = InferenceModel::from(st.model, l.inputs, st.config.model.T);
        const auto rep = eval::evaluate(score_videos(m, test, m.T), eval_options(cfg));
        auto j = eval::to_json(rep);
        j["iter"] = iter;
        write_json(*args.report_dir / ("report_" + std::to_string(iter) + ".json"), j);
        log << "iter " << iter << ": test AUC " << rep.vad_auc << ", mAUC " << rep.mauc << '\n';
      };
    }
    hooks.checkpoint_every = cfg.checkpoint_every;
    hooks.on_checkpoint = [&](long) { train::save_checkpoint(args.checkpoint, st); };

    train::train_loop(st, l.inputs, videos, hooks);
    train::save_checkpoint(args.checkpoint, st);
    log << "checkpoint at iter " << st.iter << " -> " << args.checkpoint.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_eval(const PipelineConfig& cfg, const EvalArgs& args, std::ostream& log) {
  return guarded(log, [&] {
    cfg.validate();
    const auto st = train::load_checkpoint(args.checkpoint);
    const PipelineConfig run = for_checkpoint(cfg, st);
    const Loaded l = load_inputs(run);
    const auto m = InferenceModel::from(st.model, l.inputs, args.T.value_or(st.config.model.T));
    const auto videos = videos_for(run, l, args.manifest, args.split, log);
    const auto records = score_videos(m, videos, m.T);
    if (args.scores) eval::write_scores(*args.scores, records);
    const auto rep = eval::evaluate(records, eval_options(cfg));
    auto j = eval::to_json(rep);
    j["checkpoint_iter"] = st.iter;
    j["T"] = m.T;
    write_json(args.report, j);
    log << "AUC " << rep.vad_auc << ", AP " << rep.vad_ap << ", mAUC " << rep.mauc << ", mAP " << rep.map << " -> "
        << args.report.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_stream(const PipelineConfig& cfg, const StreamArgs& args, std::istream& in, std::ostream& out,
               std::ostream& log) {
  return guarded(log, [&] {
    cfg.validate();
    const auto st = train::load_checkpoint(args.checkpoint);
    const Loaded l = load_inputs(for_checkpoint(cfg, st));
    const auto m = InferenceModel::from(st.model, l.inputs, args.T.value_or(st.config.model.T));
    StreamScorer scorer(m, m.T);
    const auto stats = run_stream(in, out, scorer, args.queue_capacity);
    log << nlohmann::ordered_json{{"frames", stats.frames},
                                  {"malformed_skipped", stats.malformed},
                                  {"mean_latency_ms", stats.mean_latency_ms},
                                  {"max_latency_ms", stats.max_latency_ms}}
               .dump()
        << '\n';
    if (stats.malformed > 0) log << "warning: skipped " << stats.malformed << " malformed feed lines\n";
    return static_cast<int>(kOk);
  });
}

int cmd_context_sweep(const PipelineConfig& cfg, const SweepArgs& args, std::ostream& log) {
  return guarded(log, [&] {
    cfg.validate();
    const auto st = train::load_checkpoint(args.checkpoint);
    const PipelineConfig run = for_checkpoint(cfg, st);
    const Loaded l = load_inputs(run);
    const auto m = InferenceModel::from(st.model, l.inputs, st.config.model.T);
    const auto videos = videos_for(run, l, args.manifest, args.split, log);
    for (int T : args.windows)
      if (T > st.config.model.T) log << "warning: T = " << T << " exceeds the training window " << st.config.model.T << '\n';
    const auto rows = eval::context_sweep(args.windows, [&](int T) { return score_videos(m, videos, T); });
    nlohmann::ordered_json j{{"trained_T", st.config.model.T}, {"checkpoint_iter", st.iter}, {"rows", eval::to_json(rows)}};
    write_json(args.out, j);
    for (const auto& r : rows) log << "T " << r.T << ": AUC " << r.auc << ", " << r.seconds_per_frame * 1e3 << " ms/frame\n";
    return static_cast<int>(kOk);
  });
}

}  // namespace mgnn::pipeline
