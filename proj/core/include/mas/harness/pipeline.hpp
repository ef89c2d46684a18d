#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <iosfwd>
#include <string>
#include <vector>

#include "mas/harness/config.hpp"
#include "mas/harness/synth.hpp"
#include "mas/sampler/sampler.hpp"
#include "mas/text/bpe.hpp"

namespace mas::harness {

using Metrics = std::map<std::string, double>;

/// Config hash, seed, per-stage metrics and checkpoint files of one run.
/// Stored as JSON lines: a "run" header, one line per stage, then the
/// transformer loss curve.
struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, Metrics> metrics;
  std::map<std::string, std::string> checkpoints;
  std::vector<double> sbt_loss_curve;

  void write(const std::filesystem::path& path) const;
  static RunManifest read(const std::filesystem::path& path);
  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

struct Corpus {
  std::vector<Sample> train;
  std::vector<Sample> validation;
};

/// Training and validation draw from disjoint seed streams of the run seed.
Corpus build_corpus(const PipelineConfig& config);

struct SegResult {
  double final_loss = 0.0;
  double face_part_recall = 0.0;
  double label_accuracy = 0.0;
  double codebook_usage = 0.0;
};

struct ImgResult {
  double final_loss = 0.0;
  double reconstruction_l1 = 0.0;
  double face_crop_l1 = 0.0;
  double codebook_usage = 0.0;
};

/// Stage trainers; validation metrics are measured on `corpus.validation`.
SegResult train_vqseg(const PipelineConfig& config, const Corpus& corpus, vqseg::VqSegModel& model,
                      std::ostream* log = nullptr);
ImgResult train_vqimg(const PipelineConfig& config, const Corpus& corpus, vqimg::VqImgModel& model,
                      std::ostream* log = nullptr);

vqseg::VqSegConfig seg_model_config(const PipelineConfig& config);
vqimg::VqImgConfig img_model_config(const PipelineConfig& config);

/// State shared by the pipeline stages. Each stage reads the artifacts it
/// needs from `run_dir`, writes its own, and records metrics in `manifest`.
struct StageContext {
  const PipelineConfig& config;
  const Corpus& corpus;
  std::filesystem::path run_dir;
  RunManifest& manifest;
  std::ostream* log = nullptr;
};

/// Writes config.ini and, when absent, the manifest header.
RunManifest open_run(const PipelineConfig& config, const std::filesystem::path& run_dir);
void stage_vqseg(StageContext& ctx);
void stage_vqimg(StageContext& ctx);
void stage_bpe(StageContext& ctx);
/// Transformer schedule; the last cf_fraction of steps run with CF
/// replacement unless `with_cf` is false.
void stage_sbt(StageContext& ctx, bool with_cf = true);
/// Extra CF steps on top of sbt.ckpt (fresh optimizer state, post-switch rate).
void stage_finetune_cf(StageContext& ctx, std::size_t steps);

/// Loads a checkpoint written by a stage, checking its kind and config hash.
void load_stage_checkpoint(const std::filesystem::path& run_dir, const std::string& file, const std::string& kind,
                           const PipelineConfig& config, nn::ParamStore& params);

/// Trains every stage in order (tokenizers, BPE, transformer with its CF tail),
/// writes config.ini, checkpoints and manifest.jsonl into `out_dir`. A stage
/// failure is rethrown as mas::Error prefixed with the stage name.
RunManifest pipeline_train(const PipelineConfig& config, const std::filesystem::path& out_dir,
                           std::ostream* log = nullptr);

/// Trained models restored from a run directory.
struct LoadedModels {
  PipelineConfig config;
  text::BpeVocab vocab;
  std::unique_ptr<vqseg::VqSegModel> vqseg;
  std::unique_ptr<vqimg::VqImgModel> vqimg;
  std::unique_ptr<sbt::SbtModel> sbt;

  sampler::ModelBundle bundle() const;
};

/// Throws "checkpoint/config mismatch" when a checkpoint was written under a
/// different configuration, or Error when a file is missing.
LoadedModels load_models(const std::filesystem::path& run_dir);

struct EvalReport {
  std::map<double, double> accuracy_by_alpha;
  double fixed_scene_fidelity = 0.0;
  double edit_change_rate = 0.0;
  double scene_label_accuracy = 0.0;
  double face_part_recall = 0.0;
  double image_reconstruction_l1 = 0.0;
  double face_crop_l1 = 0.0;
};

/// Oracle alignment per guidance scale over `generations` validation
/// captions (generation i uses the same seed for every scale), fixed-scene
/// fidelity, edit sensitivity, and tokenizer reconstruction metrics.
EvalReport eval_suite(const std::filesystem::path& run_dir, std::span<const double> alphas,
                      std::ostream* log = nullptr);

}  // namespace mas::harness
