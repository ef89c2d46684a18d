#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>

#include "mas/harness/pipeline.hpp"

namespace mas::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

void add_scene_commands(CLI::App& app);
void add_vqseg_commands(CLI::App& app);
void add_vqimg_commands(CLI::App& app);
void add_bpe_commands(CLI::App& app);
void add_sbt_commands(CLI::App& app);
void add_generate_command(CLI::App& app);
void add_pipeline_command(CLI::App& app);
void add_eval_command(CLI::App& app);
void add_config_command(CLI::App& app);

/// --config when given, else <run_dir>/config.ini, else defaults; MAS_SEED applies last.
harness::PipelineConfig resolve_config(const std::optional<std::string>& config_path, const fs::path& run_dir);

/// Runs one training stage against `run_dir`, rebuilding the corpus from the config.
template <typename F>
void with_stage(const harness::PipelineConfig& config, const fs::path& run_dir, F&& body) {
  auto manifest = harness::open_run(config, run_dir);
  const auto corpus = harness::build_corpus(config);
  harness::StageContext ctx{config, corpus, run_dir, manifest, &std::cerr};
  body(ctx);
}

void save_tokens(const fs::path& path, int height, int width, const std::vector<int>& tokens);
vqseg::TokenGrid load_tokens(const fs::path& path);

}  // namespace mas::cli
