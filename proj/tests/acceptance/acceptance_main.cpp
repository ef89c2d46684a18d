// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "mas/harness/config.hpp"
#include "mas/harness/pipeline.hpp"
#include "mas/ndgrad/ops.hpp"
#include "mas/sampler/sampler.hpp"
#include "mas/sbt/sbt.hpp"
#include "mas/text/bpe.hpp"
#include "mas/vq/codebook.hpp"
#include "mas/vqimg/vqimg.hpp"
#include "mas/vqseg/vqseg.hpp"

namespace {

namespace fs = std::filesystem;
namespace nd = mas::ndgrad;
namespace sc = mas::scene;
namespace hs = mas::harness;
using mas::CounterRng;
using nd::Tensor;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// ---------------------------------------------------------------------------
// 1. Gradient integrity

constexpr double kGradTolerance = 1e-4;
constexpr int kGradPoints = 20;

mas::testing::GradCheckOptions grad_options(std::size_t max_elements = 0, double step = 1e-5) {
  mas::testing::GradCheckOptions o;
  o.step = step;
  o.five_point = true;
  o.floor = 1e-6;
  o.max_elements_per_input = max_elements;
  o.kink_tolerance = 1e-3;
  return o;
}

struct GradSummary {
  double worst = 0.0;
  std::size_t checked = 0;
  int redrawn = 0;
};

// Draws points until kGradPoints of them are free of kinks (ReLU or |.|
// switching inside the stencil). A point is only redrawn for a kink; any
// analytic/numeric mismatch at a smooth point counts.
GradSummary run_points(const std::function<mas::testing::GradCheck(CounterRng&)>& point, std::uint64_t seed) {
  GradSummary s;
  CounterRng rng(seed);
  int accepted = 0;
  while (accepted < kGradPoints && s.redrawn < 5 * kGradPoints) {
    const auto g = point(rng);
    if (g.kinks > 0) {
      ++s.redrawn;
      continue;
    }
    ++accepted;
    s.worst = std::max(s.worst, g.max_rel_error);
    s.checked += g.checked;
  }
  if (accepted < kGradPoints) s.worst = std::numeric_limits<double>::infinity();
  return s;
}

GradSummary grad_wbce() {
  const auto schema = sc::SceneSchema::desk();
  const sc::CategoryWeights w(schema, 20.0);
  return run_points(
      [&](CounterRng& rng) {
        auto logits = Tensor::uniform({17, 4, 4}, rng, -4.0, 4.0, true);
        std::vector<double> t(logits.numel());
        for (auto& v : t) v = static_cast<double>(rng.below(2));
        const auto target = Tensor::from_values(logits.shape(), t);
        return mas::testing::check_gradients([&] { return mas::vqseg::wbce_loss(target, logits, w); }, {logits},
                                             grad_options());
      },
      101);
}

GradSummary grad_region(mas::vqimg::CropRole role) {
  using namespace mas::vqimg;
  const auto alphas = role == CropRole::face ? face_layer_weights() : object_layer_weights();
  std::uint64_t extractor_seed = 500;
  return run_points(
      [&](CounterRng& rng) {
        const FeatureExtractor fe(role, extractor_seed++);
        const auto image = Tensor::uniform({1, 3, 16, 16}, rng, -1.0, 1.0);
        auto recon = Tensor::uniform({1, 3, 16, 16}, rng, -1.0, 1.0, true);
        CropSet crops;
        for (int c = 0; c < 2; ++c) {
          const std::size_t h = 3 + rng.below(10), w = 3 + rng.below(10);
          crops.push_back({{rng.below(17 - h), rng.below(17 - w), h, w}, role, 0});
        }
        return mas::testing::check_gradients([&] { return region_loss(crops, image, recon, fe, alphas); }, {recon},
                                             grad_options());
      },
      role == CropRole::face ? 102 : 103);
}

GradSummary grad_transformer() {
  std::uint64_t model_seed = 700;
  return run_points(
      [&](CounterRng& rng) {
        mas::sbt::SbtConfig c;
        c.text_len = 4;
        c.scene_len = 3;
        c.image_len = 3;
        c.text_vocab = 262;
        c.scene_vocab = 5;
        c.image_vocab = 6;
        c.layers = 2;
        c.heads = 2;
        c.dim = 8;
        c.mlp_ratio = 2;
        c.seed = model_seed++;
        mas::sbt::SbtModel model(c);
        std::vector<mas::sbt::TokenSequence> batch;
        for (int b = 0; b < 2; ++b) {
          std::vector<int> t{mas::text::BpeVocab::kBosText, static_cast<int>(rng.below(256)),
                             static_cast<int>(rng.below(256)), mas::text::BpeVocab::kPad};
          std::vector<int> y(3), z(3);
          for (auto& v : y) v = static_cast<int>(rng.below(5));
          for (auto& v : z) v = static_cast<int>(rng.below(6));
          batch.push_back(mas::sbt::pack(t, y, z, c));
        }
        std::vector<Tensor> inputs;
        for (auto& prm : model.params().params()) inputs.push_back(prm.tensor);
        const mas::sbt::TrainConfig cfg;
        // The loss is O(20) here, so roundoff at step 1e-5 swamps the
        // smallest parameter gradients; the fourth-order stencil tolerates 1e-4.
        return mas::testing::check_gradients([&] { return mas::sbt::sbt_loss(model, batch, cfg).total; }, inputs,
                                             grad_options(12, 1e-4));
      },
      104);
}

// The codebook term carries gradient only to the entries and the commitment
// term only to the latents (the other side is stop-gradient), so each is
// checked against the input it differentiates.
GradSummary grad_codebook(bool commitment) {
  std::uint64_t init_seed = 900;
  return run_points(
      [&](CounterRng& rng) {
        mas::nn::ParamStore store;
        CounterRng init(init_seed++);
        mas::vq::Codebook book(store, "book", 6, 3, init);
        auto x = Tensor::randn({8, 3}, rng, 1.0, true);
        auto entries = book.entries();
        return mas::testing::check_gradients(
            [&] {
              auto q = mas::vq::quantize(x, book, 0.25);
              return commitment ? q.commitment_loss : q.codebook_loss;
            },
            {commitment ? x : entries}, grad_options());
      },
      commitment ? 106 : 105);
}

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, GradSummary>> parts{
      {"wbce", grad_wbce()},
      {"face", grad_region(mas::vqimg::CropRole::face)},
      {"object", grad_region(mas::vqimg::CropRole::object)},
      {"transformer_ce", grad_transformer()},
      {"codebook", grad_codebook(false)},
      {"commitment", grad_codebook(true)},
  };
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = secs < 120.0;
  std::ostringstream d;
  for (const auto& [name, g] : parts) {
    o.pass = o.pass && g.worst < kGradTolerance;
    d << name << " max_rel=" << fmt(g.worst, 3) << " (" << g.checked << " elems";
    if (g.redrawn) d << ", " << g.redrawn << " kinked points redrawn";
    d << ") ";
  }
  d << "runtime " << fmt(secs, 3) << " s";
  o.detail = d.str();
  return o;
}

// ---------------------------------------------------------------------------
// 2. Quantizer

Outcome criterion_quantizer() {
  CounterRng rng(201);
  std::size_t mismatches = 0;
  for (int pair = 0; pair < 10000; ++pair) {
    mas::nn::ParamStore store;
    const std::size_t size = 2 + rng.below(15), dim = 1 + rng.below(6);
    CounterRng init(rng.next_u64());
    mas::vq::Codebook book(store, "book", size, dim, init);
    auto handle = book.entries();
    auto e = handle.mutable_values();
    // Coarse grid values make equal distances (ties) frequent.
    for (auto& v : e) v = static_cast<double>(rng.below(4)) * 0.5;
    if (pair % 2 == 0) {
      const auto dup = rng.below(size - 1);
      std::copy_n(e.begin() + static_cast<long>(dup * dim), dim, e.begin() + static_cast<long>((size - 1) * dim));
    }
    const std::size_t rows = 1 + rng.below(4);
    std::vector<double> x(rows * dim);
    for (auto& v : x) v = pair % 3 == 0 ? rng.normal() : static_cast<double>(rng.below(7)) * 0.25;
    const auto r = mas::vq::quantize(Tensor::from_values({rows, dim}, x), book);
    for (std::size_t i = 0; i < rows; ++i) {
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < size; ++k) {
        double d = 0.0;
        for (std::size_t j = 0; j < dim; ++j) d += (x[i * dim + j] - e[k * dim + j]) * (x[i * dim + j] - e[k * dim + j]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
      bool same = r.indices[i] == best;
      for (std::size_t j = 0; j < dim && same; ++j) {
        same = r.quantized.values()[i * dim + j] == e[static_cast<std::size_t>(best) * dim + j];
      }
      mismatches += !same;
    }
  }

  // Straight-through: d/dx of L(quantize(x)) equals dL/dq evaluated at q.
  std::size_t st_mismatch = 0, st_checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    mas::nn::ParamStore store;
    CounterRng init(3000 + static_cast<std::uint64_t>(trial));
    mas::vq::Codebook book(store, "book", 16, 4, init);
    auto x = Tensor::randn({12, 4}, rng, 1.0, true);
    const auto w = Tensor::randn({12, 4}, rng, 1.0);
    const auto q = mas::vq::quantize(x, book).quantized;
    nd::sum(nd::mul(w, nd::tanh(q))).backward();
    auto leaf = Tensor::from_values(q.shape(), std::vector<double>(q.values().begin(), q.values().end()), true);
    nd::sum(nd::mul(w, nd::tanh(leaf))).backward();
    for (std::size_t i = 0; i < x.numel(); ++i) {
      st_mismatch += x.grad()[i] != leaf.grad()[i];
      ++st_checked;
    }
  }
  return {mismatches == 0 && st_mismatch == 0, "nearest-neighbour mismatches " + std::to_string(mismatches) +
                                                   " over 10^4 pairs; straight-through mismatches " +
                                                   std::to_string(st_mismatch) + "/" + std::to_string(st_checked)};
}

// ---------------------------------------------------------------------------
// 3. Guidance algebra

struct DeskModels {
  hs::PipelineConfig config;
  mas::text::BpeVocab vocab;
  std::unique_ptr<mas::vqseg::VqSegModel> seg;
  std::unique_ptr<mas::vqimg::VqImgModel> img;
  std::unique_ptr<mas::sbt::SbtModel> sbt;
  std::vector<std::string> captions;
};

// Untrained desk-sized models with a BPE vocabulary fitted to the corpus.
DeskModels desk_models() {
  DeskModels m;
  m.config.corpus = 400;
  const auto corpus = hs::build_corpus(m.config);
  for (const auto& s : corpus.train) m.captions.push_back(s.caption);
  m.vocab = mas::text::bpe_train(m.captions, m.config.bpe_vocab);
  m.seg = std::make_unique<mas::vqseg::VqSegModel>(sc::SceneSchema::desk(), hs::seg_model_config(m.config));
  m.img = std::make_unique<mas::vqimg::VqImgModel>(hs::img_model_config(m.config));
  m.sbt = std::make_unique<mas::sbt::SbtModel>(m.config.transformer());
  return m;
}

Outcome criterion_guidance() {
  CounterRng rng(301);
  std::size_t algebra_mismatch = 0;
  for (double alpha : {0.0, 0.5, 1.0, 3.0, 5.0}) {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> c(64), u(64);
      for (auto& v : c) v = 4.0 * rng.normal();
      for (auto& v : u) v = 4.0 * rng.normal();
      const auto g = mas::sampler::guide({c, u, alpha});
      for (std::size_t i = 0; i < 64; ++i) algebra_mismatch += g[i] != u[i] + alpha * (c[i] - u[i]);
    }
  }

  const auto m = desk_models();
  const mas::sampler::ModelBundle bundle{m.vocab, *m.seg, *m.img, *m.sbt};
  std::size_t identical = 0;
  const std::size_t trials = 20;
  for (std::size_t i = 0; i < trials; ++i) {
    mas::sampler::SampleConfig cfg;
    cfg.alpha_c = 1.0;
    cfg.seed = 77 + i;
    const auto& caption = m.captions[i];
    const auto g = mas::sampler::generate(caption, nullptr, bundle, cfg);
    const auto text = mas::text::bpe_encode(caption, m.vocab, m.sbt->config().text_len);
    const auto s = mas::sampler::sample_conditional(*m.sbt, text, std::nullopt, cfg);
    identical += g.tokens.scene_tokens == s.scene_tokens && g.tokens.image_tokens == s.image_tokens;
  }
  return {algebra_mismatch == 0 && identical == trials,
          "guide() mismatches " + std::to_string(algebra_mismatch) + " over 5 scales; alpha=1 token-identical " +
              std::to_string(identical) + "/" + std::to_string(trials) + " end-to-end generations"};
}

// ---------------------------------------------------------------------------
// 4. Sampling rule

Outcome criterion_sampling() {
  CounterRng rng(401);
  const std::size_t v = 8;
  std::vector<double> logits(v);
  for (auto& l : logits) l = rng.normal();

  std::vector<std::size_t> order(v);
  for (std::size_t i = 0; i < v; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return logits[a] > logits[b]; });
  std::set<int> kept;
  for (std::size_t i = 0; i < v / 2; ++i) kept.insert(static_cast<int>(order[i]));
  std::size_t discarded = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) discarded += kept.count(mas::sampler::sample_token(logits, rng, 0.5)) == 0;

  std::vector<double> counts(v, 0.0);
  for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(mas::sampler::sample_token(logits, rng, 1.0))] += 1.0;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  double chi2 = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    const double expected = n * std::exp(logits[i] - mx) / z;
    chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  }
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(static_cast<double>(v - 1)), chi2));
  return {discarded == 0 && p > 0.01, "discarded draws " + std::to_string(discarded) + "/10^5 at fraction 1/2; chi2 " +
                                          fmt(chi2) + " p=" + fmt(p) + " at fraction 1 (V=8, N=10^5)"};
}

// ---------------------------------------------------------------------------
// 5. Causality

Outcome criterion_causality() {
  const auto t0 = std::chrono::steady_clock::now();
  const hs::PipelineConfig config;
  const auto c = config.transformer();
  const mas::sbt::SbtModel model(c);
  CounterRng rng(501);
  std::vector<int> text(c.text_len, mas::text::BpeVocab::kPad), scene(c.scene_len), image(c.image_len);
  for (std::size_t i = 0; i < 6; ++i) text[i] = static_cast<int>(rng.below(c.text_vocab - 4));
  for (auto& t : scene) t = static_cast<int>(rng.below(c.scene_vocab));
  for (auto& t : image) t = static_cast<int>(rng.below(c.image_vocab));
  const auto seq = mas::sbt::pack(text, scene, image, c);
  const auto base = mas::sbt::position_logits(model, seq);
  std::size_t violations = 0, compared = 0;
  for (std::size_t t = 1; t < c.length(); ++t) {
    auto changed = seq;
    const auto vocab = static_cast<int>(c.vocab(c.segment_of(t)));
    changed.tokens[t] = (changed.tokens[t] + 1 + static_cast<int>(rng.below(static_cast<std::size_t>(vocab - 1)))) % vocab;
    if (mas::text::BpeVocab::is_special(changed.tokens[t]) && c.segment_of(t) == mas::sbt::Segment::text) {
      changed.tokens[t] = 'x';
    }
    const auto after = mas::sbt::position_logits(model, changed);
    for (std::size_t p = 0; p < t; ++p) {
      ++compared;
      violations += after[p] != base[p];
    }
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 60.0, std::to_string(c.length()) + "-position sequence, " +
                                              std::to_string(c.length() - 1) + " perturbations, " +
                                              std::to_string(violations) + "/" + std::to_string(compared) +
                                              " earlier logit rows changed; runtime " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 6-10. Pipeline runs

struct Run {
  hs::PipelineConfig config;
  fs::path dir;
  hs::RunManifest manifest;
  double cpu_seconds = 0.0;
  std::optional<hs::EvalReport> eval;
};

class Runs {
 public:
  explicit Runs(fs::path root) : root_(std::move(root)) {}

  Run& get(std::uint64_t seed) {
    auto it = runs_.find(seed);
    if (it != runs_.end()) return it->second;
    return runs_.emplace(seed, train(seed, "seed" + std::to_string(seed))).first->second;
  }

  Run train(std::uint64_t seed, const std::string& name) {
    Run r;
    r.config.seed = seed;
    r.dir = root_ / name;
    fs::remove_all(r.dir);
    std::cout << "  training " << name << " (seed " << seed << ")\n" << std::flush;
    const double c0 = cpu_seconds();
    r.manifest = hs::pipeline_train(r.config, r.dir, &std::cout);
    r.cpu_seconds = cpu_seconds() - c0;
    return r;
  }

  const hs::EvalReport& eval(std::uint64_t seed) {
    Run& r = get(seed);
    if (!r.eval) {
      const std::vector<double> alphas{0.0, 3.0};
      std::cout << "  evaluating seed " << seed << "\n" << std::flush;
      r.eval = hs::eval_suite(r.dir, alphas, &std::cout);
    }
    return *r.eval;
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  std::map<std::uint64_t, Run> runs_;
};

double metric(const hs::RunManifest& m, const std::string& stage, const std::string& key) {
  return m.metrics.at(stage).at(key);
}

Outcome criterion_pipeline(Runs& runs) {
  const Run& r = runs.get(1);
  const double decrease = metric(r.manifest, "sbt", "loss_decrease");
  const double seg_usage = metric(r.manifest, "vqseg", "codebook_usage");
  const double img_usage = metric(r.manifest, "vqimg", "codebook_usage");
  const double cpu_min = r.cpu_seconds / 60.0;
  return {cpu_min < 30.0 && decrease >= 0.5 && seg_usage >= 0.3 && img_usage >= 0.3,
          "cpu " + fmt(cpu_min, 3) + " min; transformer loss step100 " + fmt(metric(r.manifest, "sbt", "loss_at_step_100")) +
              " -> final " + fmt(metric(r.manifest, "sbt", "final_loss")) + " (decrease " + fmt(decrease, 3) +
              "); codebook usage vqseg " + fmt(seg_usage, 3) + " vqimg " + fmt(img_usage, 3)};
}

Outcome criterion_guidance_efficacy(Runs& runs) {
  int wins = 0;
  std::ostringstream d;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto& e = runs.eval(seed);
    const double a0 = e.accuracy_by_alpha.at(0.0), a3 = e.accuracy_by_alpha.at(3.0);
    wins += a3 > a0;
    d << "seed " << seed << ": acc(0)=" << fmt(a0, 3) << " acc(3)=" << fmt(a3, 3) << "; ";
  }
  d << wins << "/3 seeds improve";
  return {wins >= 2, d.str()};
}

Outcome criterion_region_aware(Runs& runs) {
  bool ok = true;
  std::ostringstream d;
  for (std::uint64_t seed : {1, 2, 3}) {
    const Run& r = runs.get(seed);
    const auto corpus = hs::build_corpus(r.config);

    hs::PipelineConfig no_boost = r.config;
    no_boost.vqseg.face_boost = 1.0;
    mas::vqseg::VqSegModel seg(sc::SceneSchema::desk(), hs::seg_model_config(no_boost));
    std::cout << "  seed " << seed << ": vqseg without face boost\n" << std::flush;
    const auto seg_plain = hs::train_vqseg(no_boost, corpus, seg, nullptr);

    hs::PipelineConfig no_face = r.config;
    no_face.vqimg.face_weight = 0.0;
    mas::vqimg::VqImgModel img(hs::img_model_config(no_face));
    std::cout << "  seed " << seed << ": vqimg without face loss\n" << std::flush;
    const auto img_plain = hs::train_vqimg(no_face, corpus, img, nullptr);

    const double recall = metric(r.manifest, "vqseg", "face_part_recall");
    const double crop = metric(r.manifest, "vqimg", "face_crop_l1");
    ok = ok && recall >= seg_plain.face_part_recall && crop <= img_plain.face_crop_l1;
    d << "seed " << seed << ": recall " << fmt(recall) << " vs " << fmt(seg_plain.face_part_recall) << ", face L1 "
      << fmt(crop) << " vs " << fmt(img_plain.face_crop_l1) << "; ";
  }
  return {ok, d.str()};
}

Outcome criterion_controllability(Runs& runs) {
  const auto& e = runs.eval(1);
  return {e.fixed_scene_fidelity == 1.0 && e.edit_change_rate >= 0.95,
          "fixed-scene fidelity " + fmt(e.fixed_scene_fidelity) + "; edits changing the image stream " +
              fmt(e.edit_change_rate * 100.0, 4) + "% of " + std::to_string(runs.get(1).config.eval.edit_trials)};
}

Outcome criterion_reproducibility(Runs& runs) {
  const Run& first = runs.get(1);
  const Run again = runs.train(1, "seed1_repeat");
  std::size_t differing = 0, total = 0;
  for (const auto& [stage, metrics] : first.manifest.metrics) {
    for (const auto& [key, value] : metrics) {
      ++total;
      const auto s = again.manifest.metrics.find(stage);
      if (s == again.manifest.metrics.end() || !s->second.count(key) || s->second.at(key) != value) ++differing;
    }
  }
  const bool curve = first.manifest.sbt_loss_curve == again.manifest.sbt_loss_curve;
  return {differing == 0 && curve && first.manifest == again.manifest,
          std::to_string(total - differing) + "/" + std::to_string(total) + " metrics bit-identical; loss curve (" +
              std::to_string(first.manifest.sbt_loss_curve.size()) + " steps) " + (curve ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = (fs::temp_directory_path() / "mas_acceptance").string();
  std::vector<int> only;
  app.add_option("--work-dir", work, "Directory for pipeline runs");
  app.add_option("--only", only, "Criteria to run (default all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);
  Runs runs(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", criterion_gradients},
      {"quantizer correctness", criterion_quantizer},
      {"guidance algebra", criterion_guidance},
      {"sampling rule", criterion_sampling},
      {"causality", criterion_causality},
      {"end-to-end pipeline", [&] { return criterion_pipeline(runs); }},
      {"guidance efficacy", [&] { return criterion_guidance_efficacy(runs); }},
      {"region-aware efficacy", [&] { return criterion_region_aware(runs); }},
      {"controllability", [&] { return criterion_controllability(runs); }},
      {"reproducibility", [&] { return criterion_reproducibility(runs); }},
  };

  std::vector<std::string> lines;
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    failed += !o.pass;
    std::ostringstream line;
    line << "criterion " << std::setw(2) << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
         << o.detail << " [" << fmt(seconds_since(t0), 3) << " s]";
    lines.push_back(line.str());
    std::cout << lines.back() << "\n" << std::flush;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << "\n";
  std::cout << (ran - failed) << "/" << ran << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
