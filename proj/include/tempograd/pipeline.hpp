#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tempograd/baselines.hpp"
#include "tempograd/embedder.hpp"
#include "tempograd/synth.hpp"
#include "tempograd/training.hpp"

namespace tempograd {

// Flat key=value configuration. The sorted map makes every serialization of
// the same settings byte-identical.
using FlatConfig = std::map<std::string, std::string>;

// Full resolved configuration of one run. The synth block is ignored when
// dataset_dir points at an on-disk dataset.
struct RunSettings {
  SynthConfig synth;
  EmbedConfig embed;
  PretrainConfig pretrain;
  DownstreamConfig downstream;
  std::uint64_t seed = 42;
  std::string dataset_dir;  // empty: generate the synthetic dataset

  void validate() const;
};

// `key = value` lines; '#' starts a comment, blank lines are skipped,
// duplicate keys are rejected. context labels error messages.
FlatConfig parse_flat_text(const std::string& text, const std::string& context);

// Loads a config file. A leading '{' marks a JSON manifest, whose "config"
// object is read instead, so any manifest.json replays its run.
FlatConfig load_config_file(const std::filesystem::path& path);

// Applies entries onto settings; unknown keys are rejected.
void apply_flat(RunSettings& settings, const FlatConfig& config);
FlatConfig to_flat(const RunSettings& settings);

// Loads dataset_dir, or generates the synthetic dataset with a seed derived
// from the run seed.
Dataset obtain_dataset(const RunSettings& settings);

// Per-phase sub-seed streams of one run seed. Split-phase commands must draw
// from the same streams as a single full run to stay bit-identical with it.
enum class SeedStream { synth = 1, encoder = 2, pretrain = 3, decoder = 4, downstream = 5 };

std::uint64_t stream_seed(std::uint64_t run_seed, SeedStream stream);

struct SplitAuc {
  double valid = 0.0;
  double test = 0.0;
};

// AUC over the labeled nodes of each evaluation split.
SplitAuc score_aucs(const std::vector<double>& scores, const TemporalGraph& graph);

struct PipelineResult {
  std::vector<TrainRecord> records;
  SplitAuc auc;
};

std::string tgn_model_name(EmbedKind kind);

// Pretrains the encoder, trains the decoder on frozen final-time embeddings,
// and evaluates both splits. A non-empty out_dir receives metrics.jsonl,
// encoder.ckpt, decoder.ckpt, report.json and report.tsv.
PipelineResult run_tgn_pipeline(const Dataset& dataset, const RunSettings& settings,
                                const std::filesystem::path& out_dir);

// Same artifact layout for one static baseline (no checkpoints).
PipelineResult run_baseline_pipeline(BaselineKind kind, const Dataset& dataset,
                                     const RunSettings& settings,
                                     const std::filesystem::path& out_dir);

struct CompareRow {
  std::string model;
  SplitAuc auc;
};

struct CompareResult {
  std::vector<CompareRow> rows;  // sorted by descending test AUC
  double improv = 0.0;  // (best temporal - best static) / best static, on test AUC
};

// All four temporal kinds plus the three static baselines on one shared
// dataset; per-model artifacts land in out_dir/<model>/.
CompareResult run_compare(const Dataset& dataset, const RunSettings& settings,
                          const std::filesystem::path& out_dir);

void write_metrics(const std::filesystem::path& file, const std::vector<TrainRecord>& records);
void append_metrics(const std::filesystem::path& file, const std::vector<TrainRecord>& records);
void write_manifest(const std::filesystem::path& file, const std::string& command,
                    const RunSettings& settings);
void write_report(const std::filesystem::path& dir, const std::string& model,
                  const SplitAuc& auc);
void write_table(const std::filesystem::path& file, const CompareResult& result);

// Checkpoint bridges. The config line carries what is needed to rebuild the
// model shell before restoring weights.
void save_encoder_checkpoint(const std::filesystem::path& file, const TemporalEmbedder& embedder);
TemporalEmbedder load_encoder_checkpoint(const std::filesystem::path& file,
                                         const TemporalGraph& graph);
void save_decoder_checkpoint(const std::filesystem::path& file, const Decoder& decoder,
                             const std::vector<int>& hidden_dims);
Decoder load_decoder_checkpoint(const std::filesystem::path& file);

}  // namespace tempograd
