#include "mas/harness/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <ostream>

#include "mas/error.hpp"
#include "mas/io/checkpoint.hpp"

namespace mas::harness {

using json = nlohmann::json;

namespace {

constexpr std::uint64_t kFaceExtractorSeed = 0xFACE5EED, kObjectExtractorSeed = 0x0B7EC75EED;

ndgrad::AdamConfig adam_with_lr(double lr) {
  ndgrad::AdamConfig a;
  a.lr = lr;
  return a;
}

double tail_mean(const std::vector<double>& v, std::size_t start, std::size_t len) {
  if (v.empty()) return 0.0;
  start = std::min(start, v.size() - 1);
  const std::size_t end = std::min(v.size(), start + len);
  double s = 0.0;
  for (std::size_t i = start; i < end; ++i) s += v[i];
  return s / static_cast<double>(end - start);
}

double last_mean(const std::vector<double>& v, std::size_t len) {
  return tail_mean(v, v.size() > len ? v.size() - len : 0, len);
}

std::vector<scene::SceneMap> scenes_of(const std::vector<Sample>& s) {
  std::vector<scene::SceneMap> out;
  out.reserve(s.size());
  for (const auto& x : s) out.push_back(x.scene);
  return out;
}

std::vector<io::Image> images_of(const std::vector<Sample>& s) {
  std::vector<io::Image> out;
  out.reserve(s.size());
  for (const auto& x : s) out.push_back(x.image);
  return out;
}

std::vector<vqimg::ImgSample> img_samples(const std::vector<Sample>& s) {
  std::vector<vqimg::ImgSample> out;
  out.reserve(s.size());
  for (const auto& x : s) out.push_back({&x.image, &x.scene});
  return out;
}

std::vector<int> flat_tokens(const std::vector<vqseg::TokenGrid>& grids) {
  std::vector<int> out;
  for (const auto& g : grids) out.insert(out.end(), g.tokens.begin(), g.tokens.end());
  return out;
}

void run_stage(const std::string& name, std::ostream* log, const std::function<void()>& body) {
  if (log) *log << "[" << name << "] start\n" << std::flush;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const std::exception& e) {
    throw Error("stage " + name + " failed: " + e.what());
  }
  if (log) {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    *log << "[" << name << "] done in " << dt.count() << " s\n" << std::flush;
  }
}

}  // namespace

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot write manifest " + path.string());
  os << json{{"kind", "run"}, {"version", 1}, {"config_hash", config_hash}, {"seed", seed}}.dump() << '\n';
  for (const auto& [stage, m] : metrics) {
    json line{{"kind", "stage"}, {"stage", stage}, {"metrics", m}};
    if (auto it = checkpoints.find(stage); it != checkpoints.end()) line["checkpoint"] = it->second;
    os << line.dump() << '\n';
  }
  os << json{{"kind", "loss_curve"}, {"stage", "sbt"}, {"values", sbt_loss_curve}}.dump() << '\n';
}

RunManifest RunManifest::read(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read manifest " + path.string());
  RunManifest m;
  bool header = false;
  for (std::string line; std::getline(is, line);) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      const std::string kind = j.at("kind");
      if (kind == "run") {
        if (j.at("version") != 1) throw FormatError("manifest: unsupported version");
        m.config_hash = j.at("config_hash");
        m.seed = j.at("seed");
        header = true;
      } else if (kind == "stage") {
        const std::string stage = j.at("stage");
        m.metrics[stage] = j.at("metrics").get<Metrics>();
        if (j.contains("checkpoint")) m.checkpoints[stage] = j.at("checkpoint");
      } else if (kind == "loss_curve") {
        m.sbt_loss_curve = j.at("values").get<std::vector<double>>();
      }
    } catch (const json::exception& e) {
      throw FormatError(std::string("manifest: ") + e.what());
    }
  }
  if (!header) throw FormatError("manifest: missing run header");
  return m;
}

Corpus build_corpus(const PipelineConfig& config) {
  config.validate();
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                 static_cast<double>(config.corpus) * config.validation_fraction + 0.5));
  const CounterRng root(config.seed);
  Corpus c;
  c.train = synth_generate(config.synth, config.corpus - n_val, root.fork(0x7261).key());
  c.validation = synth_generate(config.synth, n_val, root.fork(0x7661).key());
  return c;
}

vqseg::VqSegConfig seg_model_config(const PipelineConfig& config) {
  auto c = config.vqseg.model;
  c.seed = mix64(config.seed + 1);
  return c;
}

vqimg::VqImgConfig img_model_config(const PipelineConfig& config) {
  auto c = config.vqimg.model;
  c.seed = mix64(config.seed + 2);
  return c;
}

SegResult train_vqseg(const PipelineConfig& config, const Corpus& corpus, vqseg::VqSegModel& model, std::ostream* log) {
  const auto& st = config.vqseg;
  vqseg::SegTrainer trainer(model, adam_with_lr(st.lr), st.face_boost);
  CounterRng rng(mix64(config.seed + 11));
  const auto train = scenes_of(corpus.train);
  {
    const std::size_t pool = std::min<std::size_t>(64, train.size());
    trainer.seed_codebook(std::span(train).first(pool), rng);
  }
  std::vector<double> losses;
  std::vector<scene::SceneMap> batch(st.batch);
  for (std::size_t s = 0; s < st.steps; ++s) {
    for (auto& b : batch) b = train[rng.below(train.size())];
    const auto r = trainer.step(batch);
    losses.push_back(r.total);
    if (log && (s + 1) % 50 == 0) {
      *log << "  vqseg step " << s + 1 << " loss " << r.total << " (wbce " << r.wbce << ")\n" << std::flush;
    }
  }
  const auto val = scenes_of(corpus.validation);
  SegResult out;
  out.final_loss = last_mean(losses, 10);
  out.face_part_recall = vqseg::face_part_recall(val, model);
  out.label_accuracy = vqseg::label_accuracy(val, model);
  out.codebook_usage = vq::usage(flat_tokens(vqseg::seg_encode(val, model)), model.codebook().size());
  return out;
}

ImgResult train_vqimg(const PipelineConfig& config, const Corpus& corpus, vqimg::VqImgModel& model, std::ostream* log) {
  const auto& st = config.vqimg;
  const vqimg::FeatureExtractor face_fe(vqimg::CropRole::face, kFaceExtractorSeed);
  const vqimg::FeatureExtractor object_fe(vqimg::CropRole::object, kObjectExtractorSeed);
  vqimg::RegionLossConfig regions;
  regions.face_weight = st.face_weight;
  regions.object_weight = st.object_weight;
  regions.k_f = st.k_f;
  regions.k_o = st.k_o;
  vqimg::ImgTrainer trainer(model, face_fe, object_fe, adam_with_lr(st.lr), regions);
  CounterRng rng(mix64(config.seed + 12));
  const auto train = img_samples(corpus.train);
  {
    const std::size_t pool = std::min<std::size_t>(64, corpus.train.size());
    std::vector<io::Image> seed_images;
    for (std::size_t i = 0; i < pool; ++i) seed_images.push_back(corpus.train[i].image);
    trainer.seed_codebook(seed_images, rng);
  }
  std::vector<double> losses;
  std::vector<vqimg::ImgSample> batch(st.batch);
  for (std::size_t s = 0; s < st.steps; ++s) {
    for (auto& b : batch) b = train[rng.below(train.size())];
    const auto r = trainer.step(batch);
    losses.push_back(r.total);
    if (log && (s + 1) % 50 == 0) {
      *log << "  vqimg step " << s + 1 << " loss " << r.total << " (l1 " << r.l1 << ", face " << r.face
           << ", object " << r.object << ")\n"
           << std::flush;
    }
  }
  const auto val_images = images_of(corpus.validation);
  const auto val = img_samples(corpus.validation);
  ImgResult out;
  out.final_loss = last_mean(losses, 10);
  out.reconstruction_l1 = vqimg::reconstruction_l1(val_images, model);
  out.face_crop_l1 = vqimg::face_crop_l1(val, model, st.k_f);
  out.codebook_usage = vq::usage(flat_tokens(vqimg::img_encode(val_images, model)), model.codebook().size());
  return out;
}

RunManifest open_run(const PipelineConfig& config, const std::filesystem::path& run_dir) {
  config.validate();
  std::filesystem::create_directories(run_dir);
  {
    std::ofstream os(run_dir / "config.ini");
    if (!os) throw Error("cannot write " + (run_dir / "config.ini").string());
    os << to_ini(config);
  }
  const auto path = run_dir / "manifest.jsonl";
  if (std::filesystem::exists(path)) {
    RunManifest m = RunManifest::read(path);
    if (m.config_hash == config_hash(config)) return m;
  }
  RunManifest m;
  m.config_hash = config_hash(config);
  m.seed = config.seed;
  m.write(path);
  return m;
}

void load_stage_checkpoint(const std::filesystem::path& run_dir, const std::string& file, const std::string& kind,
                           const PipelineConfig& config, nn::ParamStore& params) {
  const auto path = run_dir / file;
  if (!std::filesystem::exists(path)) throw Error("missing checkpoint " + path.string());
  const auto meta = io::read_checkpoint_metadata(path);
  auto get = [&](const char* k) {
    auto it = meta.find(k);
    return it == meta.end() ? std::string() : it->second;
  };
  const std::string hash = config_hash(config);
  if (get("kind") != kind || get("config_hash") != hash) {
    throw FormatError("checkpoint/config mismatch: " + path.string() + " was not written as " + kind +
                      " under config " + hash);
  }
  io::load_checkpoint(path, params);
}

namespace {

io::Metadata stage_meta(const StageContext& ctx, const std::string& kind) {
  return {{"kind", kind}, {"config_hash", ctx.manifest.config_hash}};
}

void finish_stage(StageContext& ctx) { ctx.manifest.write(ctx.run_dir / "manifest.jsonl"); }

}  // namespace

void stage_vqseg(StageContext& ctx) {
  run_stage("vqseg", ctx.log, [&] {
    vqseg::VqSegModel seg(scene::SceneSchema::desk(), seg_model_config(ctx.config));
    const auto r = train_vqseg(ctx.config, ctx.corpus, seg, ctx.log);
    ctx.manifest.metrics["vqseg"] = {{"final_loss", r.final_loss},
                                     {"face_part_recall", r.face_part_recall},
                                     {"label_accuracy", r.label_accuracy},
                                     {"codebook_usage", r.codebook_usage}};
    io::save_checkpoint(ctx.run_dir / "vqseg.ckpt", stage_meta(ctx, "vqseg"), seg.params());
    ctx.manifest.checkpoints["vqseg"] = "vqseg.ckpt";
    finish_stage(ctx);
  });
}

void stage_vqimg(StageContext& ctx) {
  run_stage("vqimg", ctx.log, [&] {
    vqimg::VqImgModel img(img_model_config(ctx.config));
    const auto r = train_vqimg(ctx.config, ctx.corpus, img, ctx.log);
    ctx.manifest.metrics["vqimg"] = {{"final_loss", r.final_loss},
                                     {"reconstruction_l1", r.reconstruction_l1},
                                     {"face_crop_l1", r.face_crop_l1},
                                     {"codebook_usage", r.codebook_usage}};
    io::save_checkpoint(ctx.run_dir / "vqimg.ckpt", stage_meta(ctx, "vqimg"), img.params());
    ctx.manifest.checkpoints["vqimg"] = "vqimg.ckpt";
    finish_stage(ctx);
  });
}

void stage_bpe(StageContext& ctx) {
  run_stage("bpe", ctx.log, [&] {
    std::vector<std::string> captions;
    for (const auto& s : ctx.corpus.train) captions.push_back(s.caption);
    const auto vocab = text::bpe_train(captions, ctx.config.bpe_vocab);
    std::size_t longest = 0;
    for (const auto& c : captions) longest = std::max(longest, text::bpe_tokenize(c, vocab).size());
    if (longest > ctx.config.sbt.model.text_len) {
      throw Error("captions need " + std::to_string(longest) + " tokens, text segment holds " +
                  std::to_string(ctx.config.sbt.model.text_len));
    }
    text::save_vocab(ctx.run_dir / "bpe.vocab", vocab);
    ctx.manifest.metrics["bpe"] = {{"vocab_size", static_cast<double>(vocab.size())},
                                   {"longest_caption_tokens", static_cast<double>(longest)}};
    ctx.manifest.checkpoints["bpe"] = "bpe.vocab";
    finish_stage(ctx);
  });
}

namespace {

std::vector<sbt::TokenSequence> training_sequences(const StageContext& ctx) {
  const auto& config = ctx.config;
  vqseg::VqSegModel seg(scene::SceneSchema::desk(), seg_model_config(config));
  load_stage_checkpoint(ctx.run_dir, "vqseg.ckpt", "vqseg", config, seg.params());
  vqimg::VqImgModel img(img_model_config(config));
  load_stage_checkpoint(ctx.run_dir, "vqimg.ckpt", "vqimg", config, img.params());
  if (!std::filesystem::exists(ctx.run_dir / "bpe.vocab")) throw Error("missing vocabulary; run the bpe stage first");
  const auto vocab = text::load_vocab(ctx.run_dir / "bpe.vocab");
  const sbt::SbtConfig tcfg = config.transformer();
  const auto scenes = vqseg::seg_encode(scenes_of(ctx.corpus.train), seg);
  const auto images = vqimg::img_encode(images_of(ctx.corpus.train), img);
  std::vector<sbt::TokenSequence> seqs;
  seqs.reserve(ctx.corpus.train.size());
  for (std::size_t i = 0; i < ctx.corpus.train.size(); ++i) {
    const auto text_tokens = text::bpe_encode(ctx.corpus.train[i].caption, vocab, tcfg.text_len);
    seqs.push_back(sbt::pack(text_tokens, scenes[i].tokens, images[i].tokens, tcfg));
  }
  return seqs;
}

sbt::TrainConfig train_config(const PipelineConfig& config) {
  const auto& st = config.sbt;
  sbt::TrainConfig tc;
  tc.adam = adam_with_lr(st.lr);
  tc.lr_after_switch = st.lr_after_switch;
  tc.switch_step = static_cast<long>(static_cast<double>(st.steps) * st.switch_fraction + 0.5);
  tc.image_weight = st.image_weight;
  tc.p_cf = st.p_cf;
  return tc;
}

std::vector<double> run_sbt_steps(const StageContext& ctx, sbt::SbtModel& model, sbt::SbtTrainer& trainer,
                                  const std::vector<sbt::TokenSequence>& seqs, std::size_t steps,
                                  std::size_t cf_from, std::uint64_t batch_seed) {
  CounterRng rng(batch_seed);
  std::vector<sbt::TokenSequence> batch(ctx.config.sbt.batch);
  std::vector<double> curve;
  (void)model;
  for (std::size_t s = 0; s < steps; ++s) {
    for (auto& b : batch) b = seqs[rng.below(seqs.size())];
    const auto mode = s >= cf_from ? sbt::CfMode::on : sbt::CfMode::off;
    const auto r = trainer.step(batch, mode);
    curve.push_back(r.total);
    if (ctx.log && (s + 1) % 50 == 0) {
      *ctx.log << "  sbt step " << s + 1 << " loss " << r.total << " (text " << r.text << ", scene " << r.scene
               << ", image " << r.image << (mode == sbt::CfMode::on ? ", cf" : "") << ")\n"
               << std::flush;
    }
  }
  return curve;
}

}  // namespace

void stage_sbt(StageContext& ctx, bool with_cf) {
  run_stage("sbt", ctx.log, [&] {
    const auto seqs = training_sequences(ctx);
    const auto& st = ctx.config.sbt;
    sbt::SbtModel model(ctx.config.transformer());
    sbt::SbtTrainer trainer(model, train_config(ctx.config), mix64(ctx.config.seed + 13));
    const auto cf_steps =
        with_cf ? static_cast<std::size_t>(static_cast<double>(st.steps) * st.cf_fraction + 0.5) : std::size_t{0};
    auto& curve = ctx.manifest.sbt_loss_curve;
    curve = run_sbt_steps(ctx, model, trainer, seqs, st.steps, st.steps - cf_steps, mix64(ctx.config.seed + 14));
    const std::size_t start = std::min<std::size_t>(100, curve.size() > 10 ? curve.size() - 10 : 0);
    const double at100 = tail_mean(curve, start, 10), final_loss = last_mean(curve, 10);
    ctx.manifest.metrics["sbt"] = {{"loss_at_step_100", at100},
                                   {"final_loss", final_loss},
                                   {"loss_decrease", at100 > 0.0 ? 1.0 - final_loss / at100 : 0.0},
                                   {"steps", static_cast<double>(st.steps)},
                                   {"cf_steps", static_cast<double>(cf_steps)}};
    io::save_checkpoint(ctx.run_dir / "sbt.ckpt", stage_meta(ctx, "sbt"), model.params());
    ctx.manifest.checkpoints["sbt"] = "sbt.ckpt";
    finish_stage(ctx);
  });
}

void stage_finetune_cf(StageContext& ctx, std::size_t steps) {
  run_stage("finetune-cf", ctx.log, [&] {
    if (steps == 0) throw RangeError("finetune-cf: zero steps");
    const auto seqs = training_sequences(ctx);
    sbt::SbtModel model(ctx.config.transformer());
    load_stage_checkpoint(ctx.run_dir, "sbt.ckpt", "sbt", ctx.config, model.params());
    auto tc = train_config(ctx.config);
    tc.adam.lr = tc.lr_after_switch;
    tc.switch_step = 0;
    sbt::SbtTrainer trainer(model, tc, mix64(ctx.config.seed + 15));
    const auto curve = run_sbt_steps(ctx, model, trainer, seqs, steps, 0, mix64(ctx.config.seed + 16));
    ctx.manifest.metrics["finetune-cf"] = {{"steps", static_cast<double>(steps)},
                                           {"final_loss", last_mean(curve, 10)}};
    io::save_checkpoint(ctx.run_dir / "sbt.ckpt", stage_meta(ctx, "sbt"), model.params());
    finish_stage(ctx);
  });
}

RunManifest pipeline_train(const PipelineConfig& config, const std::filesystem::path& out_dir, std::ostream* log) {
  std::filesystem::remove(out_dir / "manifest.jsonl");
  RunManifest manifest = open_run(config, out_dir);
  Corpus corpus;
  run_stage("synth", log, [&] { corpus = build_corpus(config); });
  StageContext ctx{config, corpus, out_dir, manifest, log};
  stage_vqseg(ctx);
  stage_vqimg(ctx);
  stage_bpe(ctx);
  stage_sbt(ctx);
  return manifest;
}

}  // namespace mas::harness
