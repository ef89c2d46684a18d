#include <ostream>

#include "mas/error.hpp"
#include "mas/harness/oracle.hpp"
#include "mas/harness/pipeline.hpp"
#include "mas/io/checkpoint.hpp"

namespace mas::harness {

sampler::ModelBundle LoadedModels::bundle() const {
  return {vocab, *vqseg, *vqimg, *sbt, config.scene_grid(), config.scene_grid(), config.image_grid(),
          config.image_grid()};
}

LoadedModels load_models(const std::filesystem::path& run_dir) {
  LoadedModels m;
  m.config = load_config(run_dir / "config.ini");
  auto load = [&](const std::string& file, const std::string& kind, nn::ParamStore& params) {
    load_stage_checkpoint(run_dir, file, kind, m.config, params);
  };
  if (!std::filesystem::exists(run_dir / "bpe.vocab")) throw Error("missing vocabulary " + (run_dir / "bpe.vocab").string());
  m.vocab = text::load_vocab(run_dir / "bpe.vocab");
  m.vqseg = std::make_unique<vqseg::VqSegModel>(scene::SceneSchema::desk(), seg_model_config(m.config));
  load("vqseg.ckpt", "vqseg", m.vqseg->params());
  m.vqimg = std::make_unique<vqimg::VqImgModel>(img_model_config(m.config));
  load("vqimg.ckpt", "vqimg", m.vqimg->params());
  m.sbt = std::make_unique<sbt::SbtModel>(m.config.transformer());
  load("sbt.ckpt", "sbt", m.sbt->params());
  m.bundle().validate();
  return m;
}

EvalReport eval_suite(const std::filesystem::path& run_dir, std::span<const double> alphas, std::ostream* log) {
  const LoadedModels m = load_models(run_dir);
  const auto& cfg = m.config;
  const auto bundle = m.bundle();
  const Corpus corpus = build_corpus(cfg);
  const auto& val = corpus.validation;
  const std::uint64_t eval_seed = mix64(cfg.seed ^ 0xE7A15EEDULL);
  EvalReport r;

  for (double alpha : alphas) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < cfg.eval.generations; ++i) {
      const auto& caption = val[i % val.size()].caption;
      sampler::SampleConfig sc;
      sc.alpha_c = alpha;
      sc.seed = eval_seed + i;
      sc.top_fraction = cfg.eval.top_fraction;
      const auto g = sampler::generate(caption, nullptr, bundle, sc);
      ok += oracle_check(g.image, caption, cfg.synth).aligned;
    }
    r.accuracy_by_alpha[alpha] = static_cast<double>(ok) / static_cast<double>(cfg.eval.generations);
    if (log) *log << "  alpha " << alpha << " accuracy " << r.accuracy_by_alpha[alpha] << "\n" << std::flush;
  }

  std::size_t faithful = 0, changed = 0;
  for (std::size_t i = 0; i < cfg.eval.edit_trials; ++i) {
    const auto& s = val[i % val.size()];
    const std::uint16_t from = s.layout.backdrop == Backdrop::ground ? kGround : kSea;
    const std::uint16_t to = from == kGround ? kSea : kGround;
    const scene::SceneEdit edit = scene::ReplaceClass{scene::Group::panoptic, from, to};
    const auto edited = scene::edit_scene(s.scene, std::span(&edit, 1), m.vqseg->schema());
    sampler::SampleConfig sc;
    sc.alpha_c = 5.0;
    sc.seed = eval_seed + 100000 + i;
    sc.mode = sampler::SceneMode::fixed_scene;
    sc.top_fraction = cfg.eval.top_fraction;
    const auto base = sampler::generate(s.caption, &s.scene, bundle, sc);
    const auto alt = sampler::generate(s.caption, &edited, bundle, sc);
    const auto want = vqseg::seg_encode(scene::encode_channels(s.scene, m.vqseg->schema()), *m.vqseg);
    faithful += base.tokens.scene_tokens == want.tokens;
    changed += base.tokens.image_tokens != alt.tokens.image_tokens;
  }
  if (cfg.eval.edit_trials > 0) {
    r.fixed_scene_fidelity = static_cast<double>(faithful) / static_cast<double>(cfg.eval.edit_trials);
    r.edit_change_rate = static_cast<double>(changed) / static_cast<double>(cfg.eval.edit_trials);
  }

  std::vector<scene::SceneMap> scenes;
  std::vector<io::Image> images;
  std::vector<vqimg::ImgSample> samples;
  for (const auto& s : val) {
    scenes.push_back(s.scene);
    images.push_back(s.image);
    samples.push_back({&s.image, &s.scene});
  }
  r.scene_label_accuracy = vqseg::label_accuracy(scenes, *m.vqseg);
  r.face_part_recall = vqseg::face_part_recall(scenes, *m.vqseg);
  r.image_reconstruction_l1 = vqimg::reconstruction_l1(images, *m.vqimg);
  r.face_crop_l1 = vqimg::face_crop_l1(samples, *m.vqimg, cfg.vqimg.k_f);
  return r;
}

}  // namespace mas::harness
