#pragma once

// Command implementations behind the CLI. Each returns a process exit code
// and writes human-readable progress to `log`.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mgnn/pipeline/config.hpp"

namespace mgnn::pipeline {

enum Exit : int {
  kOk = 0,
  kFailure = 1,          // usage, configuration, I/O
  kGenerationFailed = 2,  // knowledge-graph generation
  kInvalidGraph = 3,
  kNonFiniteLoss = 4,
  kDimensionMismatch = 5,
};

int cmd_kg_build(const PipelineConfig& cfg, std::ostream& log);

/// Writes the synthetic dataset manifest described by the synth_* keys.
int cmd_synth_manifest(const PipelineConfig& cfg, const std::filesystem::path& out, std::ostream& log);

/// Embeds every graph label and every manifest frame into one binary cache.
int cmd_embed_cache(const PipelineConfig& cfg, const std::filesystem::path& manifest, const std::filesystem::path& out,
                    std::ostream& log);

struct TrainArgs {
  std::filesystem::path manifest;
  std::filesystem::path checkpoint = "checkpoint.bin";
  std::optional<std::filesystem::path> resume;
  std::filesystem::path loss_log = "loss.jsonl";
  std::optional<std::filesystem::path> report_dir;  // periodic EvalReports when eval_every > 0
};

int cmd_train(const PipelineConfig& cfg, const TrainArgs& args, std::ostream& log);

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;
  std::filesystem::path report = "report.json";
  std::optional<std::filesystem::path> scores;  // per-frame score file
  std::string split = "test";
  std::optional<int> T;  // defaults to the checkpoint's window
};

int cmd_eval(const PipelineConfig& cfg, const EvalArgs& args, std::ostream& log);

struct StreamArgs {
  std::filesystem::path checkpoint;
  std::optional<int> T;
  std::size_t queue_capacity = 64;
};

int cmd_stream(const PipelineConfig& cfg, const StreamArgs& args, std::istream& in, std::ostream& out,
               std::ostream& log);

struct SweepArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;
  std::vector<int> windows{10, 20, 30};
  std::filesystem::path out = "context_sweep.json";
  std::string split = "test";
};

int cmd_context_sweep(const PipelineConfig& cfg, const SweepArgs& args, std::ostream& log);

}  // namespace mgnn::pipeline
