#include "common.hpp"

namespace mas::cli {

void add_sbt_commands(CLI::App& app) {
  auto* cmd = app.add_subcommand("sbt", "Scene-based transformer");
  cmd->require_subcommand(1);

  static std::optional<std::string> config;
  static std::string run_dir;
  static bool no_cf = false;
  auto* train = cmd->add_subcommand("train", "Train the transformer on tokenised corpus captions, scenes and images");
  train->add_option("--config", config, "pipeline config file");
  train->add_option("--run-dir", run_dir, "run directory holding the tokenizers")->required();
  train->add_flag("--no-cf", no_cf, "skip the text-dropping tail of the schedule");
  train->callback([] {
    const auto cfg = resolve_config(config, run_dir);
    with_stage(cfg, run_dir, [](auto& ctx) { harness::stage_sbt(ctx, !no_cf); });
  });

  static std::size_t steps = 0;
  auto* ft = cmd->add_subcommand("finetune-cf", "Continue training sbt.ckpt with text dropped at p_cf");
  ft->add_option("--config", config, "pipeline config file");
  ft->add_option("--run-dir", run_dir, "run directory")->required();
  ft->add_option("--steps", steps, "fine-tune steps (default: the schedule's CF share)");
  ft->callback([] {
    const auto cfg = resolve_config(config, run_dir);
    const std::size_t n =
        steps ? steps : static_cast<std::size_t>(static_cast<double>(cfg.sbt.steps) * cfg.sbt.cf_fraction + 0.5);
    with_stage(cfg, run_dir, [n](auto& ctx) { harness::stage_finetune_cf(ctx, n); });
  });
}

}  // namespace mas::cli
