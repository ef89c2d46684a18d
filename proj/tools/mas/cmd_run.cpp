#include <fstream>
#include <iomanip>
#include <iostream>

#include "common.hpp"
#include "mas/error.hpp"
#include "mas/harness/oracle.hpp"
#include "mas/scene/scene_io.hpp"

namespace mas::cli {

void add_generate_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("generate", "Sample a scene and image for a caption");
  static std::string run_dir, text, out_dir;
  static std::optional<std::string> scene_path;
  static double alpha_c = 5.0;
  static std::uint64_t seed = 0;
  static double top_fraction = 0.5;
  cmd->add_option("--run-dir", run_dir, "trained run directory")->required();
  cmd->add_option("--text", text, "caption")->required();
  cmd->add_option("--scene", scene_path, "scene file; switches to fixed-scene mode")->check(CLI::ExistingFile);
  cmd->add_option("--alpha-c", alpha_c, "guidance scale");
  cmd->add_option("--seed", seed, "sampling seed");
  cmd->add_option("--top-fraction", top_fraction, "fraction of logits kept");
  cmd->add_option("--out-dir", out_dir, "output directory")->required();
  cmd->callback([] {
    const auto models = harness::load_models(run_dir);
    const auto bundle = models.bundle();
    sampler::SampleConfig sc;
    sc.alpha_c = alpha_c;
    sc.seed = seed;
    sc.top_fraction = top_fraction;
    std::optional<scene::SceneMap> input;
    if (scene_path) {
      input = scene::load_scene(*scene_path);
      sc.mode = sampler::SceneMode::fixed_scene;
    }
    const auto g = sampler::generate(text, input ? &*input : nullptr, bundle, sc);

    const fs::path out(out_dir);
    fs::create_directories(out);
    scene::save_scene(out / "scene.scnm", g.scene);
    io::save_image(out / "image.imgb", g.image);
    std::ofstream os(out / "manifest.jsonl");
    if (!os) throw Error("cannot write " + (out / "manifest.jsonl").string());
    os << json{{"kind", "run"},
               {"config_hash", harness::config_hash(models.config)},
               {"config", harness::to_ini(models.config)},
               {"seed", seed}}
              .dump()
       << '\n';
    os << json{{"kind", "generation"},
               {"text", text},
               {"alpha_c", alpha_c},
               {"top_fraction", top_fraction},
               {"mode", input ? "fixed_scene" : "free_scene"},
               {"scene_tokens", g.tokens.scene_tokens},
               {"image_tokens", g.tokens.image_tokens},
               {"cond_stream", g.tokens.cond_stream},
               {"uncond_stream", g.tokens.uncond_stream},
               {"files", {"scene.scnm", "image.imgb"}}}
              .dump()
       << '\n';
    const auto check = harness::oracle_check(g.image, text, models.config.synth);
    std::cout << "oracle: " << (check.aligned ? "aligned" : "not aligned") << " (" << check.detail << ")\n";
  });
}

void add_pipeline_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("pipeline", "Train every stage into a run directory");
  static std::optional<std::string> config;
  static std::string out_dir;
  cmd->add_option("--config", config, "pipeline config file (defaults when omitted)")->check(CLI::ExistingFile);
  cmd->add_option("--out-dir", out_dir, "run directory")->required();
  cmd->callback([] {
    const auto cfg = resolve_config(config, fs::path());
    const auto m = harness::pipeline_train(cfg, out_dir, &std::cerr);
    for (const auto& [stage, metrics] : m.metrics) {
      std::cout << stage;
      for (const auto& [k, v] : metrics) std::cout << " " << k << "=" << v;
      std::cout << "\n";
    }
  });
}

void add_config_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("config", "Print the canonical config (defaults, or --config) and its hash");
  static std::optional<std::string> config;
  cmd->add_option("--config", config, "pipeline config file")->check(CLI::ExistingFile);
  cmd->callback([] {
    const auto cfg = resolve_config(config, fs::path());
    std::cout << "; hash " << harness::config_hash(cfg) << "\n" << harness::to_ini(cfg);
  });
}

void add_eval_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("eval", "Alignment, controllability and reconstruction metrics of a run");
  static std::string run_dir;
  static std::vector<double> alphas;
  cmd->add_option("--run-dir", run_dir, "trained run directory")->required();
  cmd->add_option("--alphas", alphas, "guidance scales (default: config eval.alphas)")->delimiter(',');
  cmd->callback([] {
    const auto cfg = harness::load_config(fs::path(run_dir) / "config.ini");
    const auto& a = alphas.empty() ? cfg.eval.alphas : alphas;
    const auto r = harness::eval_suite(run_dir, a, &std::cerr);
    std::cout << std::fixed << std::setprecision(4);
    for (const auto& [alpha, acc] : r.accuracy_by_alpha) std::cout << "alignment alpha_c=" << alpha << " " << acc << "\n";
    std::cout << "fixed_scene_fidelity " << r.fixed_scene_fidelity << "\n"
              << "edit_change_rate " << r.edit_change_rate << "\n"
              << "scene_label_accuracy " << r.scene_label_accuracy << "\n"
              << "face_part_recall " << r.face_part_recall << "\n"
              << "image_reconstruction_l1 " << r.image_reconstruction_l1 << "\n"
              << "face_crop_l1 " << r.face_crop_l1 << "\n";
  });
}

}  // namespace mas::cli
