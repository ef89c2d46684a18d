#include <iostream>

#include "common.hpp"
#include "mas/error.hpp"
#include "mas/scene/scene_io.hpp"

namespace mas::cli {

namespace {

struct TrainArgs {
  std::optional<std::string> config;
  std::string run_dir;
};

CLI::App* add_train(CLI::App* parent, const char* stage, TrainArgs& args) {
  auto* t = parent->add_subcommand("train", std::string("Train the ") + stage + " stage into a run directory");
  t->add_option("--config", args.config, "pipeline config file");
  t->add_option("--run-dir", args.run_dir, "run directory")->required();
  return t;
}

harness::PipelineConfig run_config(const std::string& run_dir) {
  if (!fs::exists(fs::path(run_dir) / "config.ini")) throw Error("no config.ini in " + run_dir);
  return harness::load_config(fs::path(run_dir) / "config.ini");
}

}  // namespace

void add_vqseg_commands(CLI::App& app) {
  auto* cmd = app.add_subcommand("vqseg", "Scene tokenizer");
  cmd->require_subcommand(1);
  static TrainArgs train;
  add_train(cmd, "vqseg", train)->callback([] {
    const auto config = resolve_config(train.config, train.run_dir);
    with_stage(config, train.run_dir, [](auto& ctx) { harness::stage_vqseg(ctx); });
  });

  static std::string run_dir, in, out;
  auto* enc = cmd->add_subcommand("encode", "Scene file to token grid (JSON)");
  enc->add_option("--run-dir", run_dir)->required();
  enc->add_option("input", in, "scene file")->required()->check(CLI::ExistingFile);
  enc->add_option("output", out, "token file")->required();
  enc->callback([] {
    const auto config = run_config(run_dir);
    vqseg::VqSegModel model(scene::SceneSchema::desk(), harness::seg_model_config(config));
    harness::load_stage_checkpoint(run_dir, "vqseg.ckpt", "vqseg", config, model.params());
    const auto s = scene::load_scene(in);
    const auto g = vqseg::seg_encode(scene::encode_channels(s, model.schema()), model);
    save_tokens(out, g.height, g.width, g.tokens);
  });

  auto* dec = cmd->add_subcommand("decode", "Token grid to hard-reconstructed scene file");
  dec->add_option("--run-dir", run_dir)->required();
  dec->add_option("input", in, "token file")->required()->check(CLI::ExistingFile);
  dec->add_option("output", out, "scene file")->required();
  dec->callback([] {
    const auto config = run_config(run_dir);
    vqseg::VqSegModel model(scene::SceneSchema::desk(), harness::seg_model_config(config));
    harness::load_stage_checkpoint(run_dir, "vqseg.ckpt", "vqseg", config, model.params());
    const auto logits = vqseg::seg_decode(load_tokens(in), model);
    scene::save_scene(out, vqseg::hard_reconstruction(logits, model.schema()));
  });
}

void add_vqimg_commands(CLI::App& app) {
  auto* cmd = app.add_subcommand("vqimg", "Image tokenizer");
  cmd->require_subcommand(1);
  static TrainArgs train;
  add_train(cmd, "vqimg", train)->callback([] {
    const auto config = resolve_config(train.config, train.run_dir);
    with_stage(config, train.run_dir, [](auto& ctx) { harness::stage_vqimg(ctx); });
  });

  static std::string run_dir, in, out;
  auto* enc = cmd->add_subcommand("encode", "Image file to token grid (JSON)");
  enc->add_option("--run-dir", run_dir)->required();
  enc->add_option("input", in, "image file")->required()->check(CLI::ExistingFile);
  enc->add_option("output", out, "token file")->required();
  enc->callback([] {
    const auto config = run_config(run_dir);
    vqimg::VqImgModel model(harness::img_model_config(config));
    harness::load_stage_checkpoint(run_dir, "vqimg.ckpt", "vqimg", config, model.params());
    const auto g = vqimg::img_encode(io::to_tensor(io::load_image(in)), model);
    save_tokens(out, g.height, g.width, g.tokens);
  });

  auto* dec = cmd->add_subcommand("decode", "Token grid to image file");
  dec->add_option("--run-dir", run_dir)->required();
  dec->add_option("input", in, "token file")->required()->check(CLI::ExistingFile);
  dec->add_option("output", out, "image file")->required();
  dec->callback([] {
    const auto config = run_config(run_dir);
    vqimg::VqImgModel model(harness::img_model_config(config));
    harness::load_stage_checkpoint(run_dir, "vqimg.ckpt", "vqimg", config, model.params());
    io::save_image(out, vqimg::img_decode_image(load_tokens(in), model));
  });
}

void add_bpe_commands(CLI::App& app) {
  auto* cmd = app.add_subcommand("bpe", "Caption tokenizer");
  cmd->require_subcommand(1);
  static TrainArgs train;
  add_train(cmd, "bpe", train)->callback([] {
    const auto config = resolve_config(train.config, train.run_dir);
    with_stage(config, train.run_dir, [](auto& ctx) { harness::stage_bpe(ctx); });
  });

  static std::string run_dir, text;
  static bool padded = false;
  auto* enc = cmd->add_subcommand("encode", "Print the token ids of a caption");
  enc->add_option("--run-dir", run_dir)->required();
  enc->add_option("--text", text)->required();
  enc->add_flag("--padded", padded, "pad or truncate to the transformer text length");
  enc->callback([] {
    const auto vocab = text::load_vocab(fs::path(run_dir) / "bpe.vocab");
    std::vector<int> ids;
    if (padded) {
      ids = text::bpe_encode(text, vocab, run_config(run_dir).sbt.model.text_len);
    } else {
      ids = text::bpe_tokenize(text, vocab);
    }
    std::cout << json(ids).dump() << "\n";
  });
}

}  // namespace mas::cli
