// mgnn: knowledge-graph construction, training, evaluation and streaming.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mgnn/pipeline/commands.hpp"

namespace fs = std::filesystem;
using namespace mgnn::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Mission-specific knowledge-graph reasoning for video anomaly detection"};
  app.require_subcommand(1);

  std::vector<fs::path> configs;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  app.add_option("-c,--config", configs, "key = value config file (repeatable, later wins)")->check(CLI::ExistingFile);
  app.add_option("-s,--set", overrides, "override one config key, key=value (repeatable)");
  app.add_option("--seed", seed, "seed for every random choice (training, generators, backends)");

  auto* kg = app.add_subcommand("kg-build", "generate one knowledge graph per anomaly class into kg_dir");

  fs::path synth_out = "manifest.jsonl";
  auto* synth = app.add_subcommand("synth-manifest", "write the synthetic dataset manifest");
  synth->add_option("-o,--out", synth_out);

  fs::path cache_manifest, cache_out = "embeddings.bin";
  auto* cache = app.add_subcommand("embed-cache", "embed all graph labels and manifest frames into a binary cache");
  cache->add_option("-m,--manifest", cache_manifest)->required()->check(CLI::ExistingFile);
  cache->add_option("-o,--out", cache_out);

  TrainArgs targs;
  std::string resume, report_dir;
  auto* train = app.add_subcommand("train", "train from a manifest, writing a checkpoint and a loss log");
  train->add_option("-m,--manifest", targs.manifest)->required()->check(CLI::ExistingFile);
  train->add_option("-o,--checkpoint", targs.checkpoint);
  train->add_option("--resume", resume, "continue from this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--loss-log", targs.loss_log);
  train->add_option("--report-dir", report_dir, "EvalReports every eval_every steps");

  EvalArgs eargs;
  std::string scores;
  std::optional<int> eval_T;
  auto* ev = app.add_subcommand("eval", "score a split and write an EvalReport");
  ev->add_option("-k,--checkpoint", eargs.checkpoint)->required()->check(CLI::ExistingFile);
  ev->add_option("-m,--manifest", eargs.manifest)->required()->check(CLI::ExistingFile);
  ev->add_option("-o,--report", eargs.report);
  ev->add_option("--scores", scores, "also write per-frame scores (JSON lines)");
  ev->add_option("--split", eargs.split)->check(CLI::IsMember({"train", "test"}));
  ev->add_option("-T,--window", eval_T);

  StreamArgs sargs;
  std::string input = "-", output = "-";
  std::optional<int> stream_T;
  auto* stream = app.add_subcommand("stream", "score a frame-embedding feed, one JSON line per frame");
  stream->add_option("-k,--checkpoint", sargs.checkpoint)->required()->check(CLI::ExistingFile);
  stream->add_option("-i,--input", input, "feed file, or - for stdin");
  stream->add_option("-o,--output", output, "score file, or - for stdout");
  stream->add_option("-T,--window", stream_T);
  stream->add_option("--queue", sargs.queue_capacity, "ingestion queue capacity");

  SweepArgs wargs;
  auto* sweep = app.add_subcommand("context-sweep", "re-score with shorter trailing windows");
  sweep->add_option("-k,--checkpoint", wargs.checkpoint)->required()->check(CLI::ExistingFile);
  sweep->add_option("-m,--manifest", wargs.manifest)->required()->check(CLI::ExistingFile);
  sweep->add_option("-w,--windows", wargs.windows)->delimiter(',');
  sweep->add_option("-o,--out", wargs.out);
  sweep->add_option("--split", wargs.split)->check(CLI::IsMember({"train", "test"}));

  CLI11_PARSE(app, argc, argv);

  PipelineConfig cfg;
  try {
    cfg = load_config(configs, overrides);
    if (seed) cfg.set_seed(*seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }

  if (kg->parsed()) return cmd_kg_build(cfg, std::cerr);
  if (synth->parsed()) return cmd_synth_manifest(cfg, synth_out, std::cerr);
  if (cache->parsed()) return cmd_embed_cache(cfg, cache_manifest, cache_out, std::cerr);
  if (train->parsed()) {
    if (!resume.empty()) targs.resume = resume;
    if (!report_dir.empty()) targs.report_dir = report_dir;
    return cmd_train(cfg, targs, std::cerr);
  }
  if (ev->parsed()) {
    if (!scores.empty()) eargs.scores = scores;
    eargs.T = eval_T;
    return cmd_eval(cfg, eargs, std::cerr);
  }
  if (stream->parsed()) {
    sargs.T = stream_T;
    std::ifstream fin;
    std::ofstream fout;
    if (input != "-") {
      fin.open(input);
      if (!fin) {
        std::cerr << "error: cannot open " << input << '\n';
        return kFailure;
      }
    }
    if (output != "-") {
      fout.open(output);
      if (!fout) {
        std::cerr << "error: cannot write " << output << '\n';
        return kFailure;
      }
    }
    std::istream& in = input == "-" ? std::cin : fin;
    std::ostream& out = output == "-" ? std::cout : fout;
    return cmd_stream(cfg, sargs, in, out, std::cerr);
  }
  if (sweep->parsed()) return cmd_context_sweep(cfg, wargs, std::cerr);
  return kFailure;
}
