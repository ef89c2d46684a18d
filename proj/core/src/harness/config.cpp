#include "mas/harness/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "mas/error.hpp"
#include "mas/rng.hpp"
#include "mas/text/bpe.hpp"

namespace mas::harness {

namespace pt = boost::property_tree;

void PipelineConfig::validate() const {
  synth.validate();
  if (corpus < 20) throw RangeError("config: corpus must hold at least 20 samples");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) throw RangeError("config: validation_fraction in (0,1)");
  if (bpe_vocab < static_cast<std::size_t>(text::BpeVocab::kAlphabetSize)) throw RangeError("config: bpe vocab too small");
  if (vqseg.steps == 0 || vqimg.steps == 0 || sbt.steps == 0) throw RangeError("config: stage step counts must be positive");
  if (vqseg.batch == 0 || vqimg.batch == 0 || sbt.batch == 0) throw RangeError("config: batch sizes must be positive");
  if (!(vqseg.face_boost >= 1.0)) throw RangeError("config: vqseg.face_boost must be >= 1");
  if (!(sbt.switch_fraction >= 0.0 && sbt.switch_fraction <= 1.0 && sbt.cf_fraction >= 0.0 && sbt.cf_fraction <= 1.0)) {
    throw RangeError("config: sbt fractions must lie in [0,1]");
  }
  if (!(sbt.p_cf >= 0.0 && sbt.p_cf <= 1.0)) throw RangeError("config: sbt.p_cf must lie in [0,1]");
  if (!(vqseg.lr > 0.0 && vqimg.lr > 0.0 && sbt.lr > 0.0 && sbt.lr_after_switch > 0.0)) {
    throw RangeError("config: learning rates must be positive");
  }
  if (!(sbt.image_weight > 0.0)) throw RangeError("config: sbt.image_weight must be positive");
  if (!(eval.top_fraction > 0.0 && eval.top_fraction <= 1.0)) throw RangeError("config: eval.top_fraction in (0,1]");
  const auto expect = vqimg.model.mode == vqimg::ResolutionMode::doubled ? 2 : 1;
  if (synth.image_scale != expect) throw RangeError("config: synth.image_scale must be 2 exactly in doubled mode");
  if (synth.canvas % 4 != 0 || (synth.canvas * synth.image_scale) % static_cast<int>(vqimg.model.stride()) != 0) {
    throw RangeError("config: canvas not divisible by tokenizer strides");
  }
  if (scene_grid() != image_grid()) throw RangeError("config: scene and image token grids must match in size");
  transformer().validate();
  if (eval.alphas.empty() || eval.generations == 0) throw RangeError("config: eval needs alphas and generations");
}

int PipelineConfig::scene_grid() const { return synth.canvas / vqseg::VqSegModel::kDownsample; }

int PipelineConfig::image_grid() const {
  return synth.canvas * synth.image_scale / static_cast<int>(vqimg.model.stride());
}

sbt::SbtConfig PipelineConfig::transformer() const {
  sbt::SbtConfig c = sbt.model;
  c.scene_len = static_cast<std::size_t>(scene_grid() * scene_grid());
  c.image_len = static_cast<std::size_t>(image_grid() * image_grid());
  c.text_vocab = bpe_vocab;
  c.scene_vocab = vqseg.model.codebook_size;
  c.image_vocab = vqimg.model.codebook_size;
  c.seed = mix64(seed + 3);
  return c;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>) {
      s += fmt(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

template <typename T>
std::vector<T> split(const std::string& s, const std::string& key) {
  std::vector<T> out;
  std::istringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v)) throw FormatError("config: bad list entry '" + item + "' in " + key);
    out.push_back(v);
  }
  return out;
}

const char* color_list_word(Color c) { return color_word(c); }

std::string colors_string(const std::vector<Color>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::string(color_list_word(v[i]));
  return s;
}

std::string shapes_string(const std::vector<Shape>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::string(shape_word(v[i]));
  return s;
}

// Ordered (section.key, value) pairs; the single source of truth for both directions.
std::vector<std::pair<std::string, std::string>> entries(const PipelineConfig& c) {
  return {
      {"run.seed", std::to_string(c.seed)},
      {"run.corpus", std::to_string(c.corpus)},
      {"run.validation_fraction", fmt(c.validation_fraction)},
      {"synth.canvas", std::to_string(c.synth.canvas)},
      {"synth.image_scale", std::to_string(c.synth.image_scale)},
      {"synth.person_probability", fmt(c.synth.person_probability)},
      {"synth.colors", colors_string(c.synth.colors)},
      {"synth.shapes", shapes_string(c.synth.shapes)},
      {"synth.color_jitter", std::to_string(c.synth.color_jitter)},
      {"synth.pixel_noise", std::to_string(c.synth.pixel_noise)},
      {"vqseg.hidden", std::to_string(c.vqseg.model.hidden)},
      {"vqseg.hidden_deep", std::to_string(c.vqseg.model.hidden_deep)},
      {"vqseg.latent_dim", std::to_string(c.vqseg.model.latent_dim)},
      {"vqseg.codebook_size", std::to_string(c.vqseg.model.codebook_size)},
      {"vqseg.beta_commit", fmt(c.vqseg.model.beta_commit)},
      {"vqseg.steps", std::to_string(c.vqseg.steps)},
      {"vqseg.batch", std::to_string(c.vqseg.batch)},
      {"vqseg.lr", fmt(c.vqseg.lr)},
      {"vqseg.face_boost", fmt(c.vqseg.face_boost)},
      {"vqimg.mode", c.vqimg.model.mode == vqimg::ResolutionMode::doubled ? "doubled" : "base"},
      {"vqimg.base_channels", std::to_string(c.vqimg.model.base_channels)},
      {"vqimg.multipliers", join(c.vqimg.model.multipliers)},
      {"vqimg.latent_dim", std::to_string(c.vqimg.model.latent_dim)},
      {"vqimg.codebook_size", std::to_string(c.vqimg.model.codebook_size)},
      {"vqimg.beta_commit", fmt(c.vqimg.model.beta_commit)},
      {"vqimg.steps", std::to_string(c.vqimg.steps)},
      {"vqimg.batch", std::to_string(c.vqimg.batch)},
      {"vqimg.lr", fmt(c.vqimg.lr)},
      {"vqimg.face_weight", fmt(c.vqimg.face_weight)},
      {"vqimg.object_weight", fmt(c.vqimg.object_weight)},
      {"vqimg.k_f", std::to_string(c.vqimg.k_f)},
      {"vqimg.k_o", std::to_string(c.vqimg.k_o)},
      {"bpe.vocab", std::to_string(c.bpe_vocab)},
      {"bpe.text_len", std::to_string(c.sbt.model.text_len)},
      {"sbt.layers", std::to_string(c.sbt.model.layers)},
      {"sbt.heads", std::to_string(c.sbt.model.heads)},
      {"sbt.dim", std::to_string(c.sbt.model.dim)},
      {"sbt.mlp_ratio", std::to_string(c.sbt.model.mlp_ratio)},
      {"sbt.steps", std::to_string(c.sbt.steps)},
      {"sbt.batch", std::to_string(c.sbt.batch)},
      {"sbt.lr", fmt(c.sbt.lr)},
      {"sbt.lr_after_switch", fmt(c.sbt.lr_after_switch)},
      {"sbt.switch_fraction", fmt(c.sbt.switch_fraction)},
      {"sbt.cf_fraction", fmt(c.sbt.cf_fraction)},
      {"sbt.p_cf", fmt(c.sbt.p_cf)},
      {"sbt.image_weight", fmt(c.sbt.image_weight)},
      {"eval.alphas", join(c.eval.alphas)},
      {"eval.generations", std::to_string(c.eval.generations)},
      {"eval.edit_trials", std::to_string(c.eval.edit_trials)},
      {"eval.top_fraction", fmt(c.eval.top_fraction)},
  };
}

template <typename T>
T get(const pt::ptree& tree, const std::string& key, T fallback) {
  auto v = tree.get_optional<std::string>(key);
  if (!v) return fallback;
  std::istringstream is(*v);
  T out{};
  if (!(is >> out)) throw FormatError("config: cannot parse " + key + " = '" + *v + "'");
  std::string rest;
  if (is >> rest) throw FormatError("config: trailing text in " + key + " = '" + *v + "'");
  return out;
}

std::string get_string(const pt::ptree& tree, const std::string& key, std::string fallback) {
  auto v = tree.get_optional<std::string>(key);
  return v ? *v : fallback;
}

}  // namespace

PipelineConfig parse_config(const std::string& ini_text) {
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  PipelineConfig c;
  std::set<std::string> known;
  for (const auto& [k, v] : entries(c)) known.insert(k);
  for (const auto& [section, body] : tree) {
    for (const auto& [key, value] : body) {
      if (!known.count(section + "." + key)) throw FormatError("config: unknown key " + section + "." + key);
    }
  }
  c.seed = get(tree, "run.seed", c.seed);
  c.corpus = get(tree, "run.corpus", c.corpus);
  c.validation_fraction = get(tree, "run.validation_fraction", c.validation_fraction);
  c.synth.canvas = get(tree, "synth.canvas", c.synth.canvas);
  c.synth.image_scale = get(tree, "synth.image_scale", c.synth.image_scale);
  c.synth.person_probability = get(tree, "synth.person_probability", c.synth.person_probability);
  if (auto s = tree.get_optional<std::string>("synth.colors")) {
    c.synth.colors.clear();
    std::istringstream in2(*s);
    for (std::string w; std::getline(in2, w, ',');) {
      bool found = false;
      for (Color col : {Color::red, Color::green, Color::blue, Color::yellow}) {
        if (w == color_word(col)) {
          c.synth.colors.push_back(col);
          found = true;
        }
      }
      if (!found) throw FormatError("config: unknown colour '" + w + "'");
    }
  }
  if (auto s = tree.get_optional<std::string>("synth.shapes")) {
    c.synth.shapes.clear();
    std::istringstream in2(*s);
    for (std::string w; std::getline(in2, w, ',');) {
      bool found = false;
      for (Shape sh : {Shape::circle, Shape::square, Shape::bar}) {
        if (w == shape_word(sh)) {
          c.synth.shapes.push_back(sh);
          found = true;
        }
      }
      if (!found) throw FormatError("config: unknown shape '" + w + "'");
    }
  }
  c.synth.color_jitter = get(tree, "synth.color_jitter", c.synth.color_jitter);
  c.synth.pixel_noise = get(tree, "synth.pixel_noise", c.synth.pixel_noise);

  auto& sg = c.vqseg;
  sg.model.hidden = get(tree, "vqseg.hidden", sg.model.hidden);
  sg.model.hidden_deep = get(tree, "vqseg.hidden_deep", sg.model.hidden_deep);
  sg.model.latent_dim = get(tree, "vqseg.latent_dim", sg.model.latent_dim);
  sg.model.codebook_size = get(tree, "vqseg.codebook_size", sg.model.codebook_size);
  sg.model.beta_commit = get(tree, "vqseg.beta_commit", sg.model.beta_commit);
  sg.steps = get(tree, "vqseg.steps", sg.steps);
  sg.batch = get(tree, "vqseg.batch", sg.batch);
  sg.lr = get(tree, "vqseg.lr", sg.lr);
  sg.face_boost = get(tree, "vqseg.face_boost", sg.face_boost);

  auto& im = c.vqimg;
  const std::string mode = get_string(tree, "vqimg.mode", "base");
  if (mode != "base" && mode != "doubled") throw FormatError("config: vqimg.mode must be base or doubled");
  im.model.mode = mode == "doubled" ? vqimg::ResolutionMode::doubled : vqimg::ResolutionMode::base;
  if (im.model.mode == vqimg::ResolutionMode::doubled) im.model.multipliers = {1, 1, 2, 2};
  im.model.base_channels = get(tree, "vqimg.base_channels", im.model.base_channels);
  if (auto s = tree.get_optional<std::string>("vqimg.multipliers")) {
    im.model.multipliers = split<std::size_t>(*s, "vqimg.multipliers");
  }
  im.model.latent_dim = get(tree, "vqimg.latent_dim", im.model.latent_dim);
  im.model.codebook_size = get(tree, "vqimg.codebook_size", im.model.codebook_size);
  im.model.beta_commit = get(tree, "vqimg.beta_commit", im.model.beta_commit);
  im.steps = get(tree, "vqimg.steps", im.steps);
  im.batch = get(tree, "vqimg.batch", im.batch);
  im.lr = get(tree, "vqimg.lr", im.lr);
  im.face_weight = get(tree, "vqimg.face_weight", im.face_weight);
  im.object_weight = get(tree, "vqimg.object_weight", im.object_weight);
  im.k_f = get(tree, "vqimg.k_f", im.k_f);
  im.k_o = get(tree, "vqimg.k_o", im.k_o);

  c.bpe_vocab = get(tree, "bpe.vocab", c.bpe_vocab);
  auto& sb = c.sbt;
  sb.model.text_len = get(tree, "bpe.text_len", sb.model.text_len);
  sb.model.layers = get(tree, "sbt.layers", sb.model.layers);
  sb.model.heads = get(tree, "sbt.heads", sb.model.heads);
  sb.model.dim = get(tree, "sbt.dim", sb.model.dim);
  sb.model.mlp_ratio = get(tree, "sbt.mlp_ratio", sb.model.mlp_ratio);
  sb.steps = get(tree, "sbt.steps", sb.steps);
  sb.batch = get(tree, "sbt.batch", sb.batch);
  sb.lr = get(tree, "sbt.lr", sb.lr);
  sb.lr_after_switch = get(tree, "sbt.lr_after_switch", sb.lr_after_switch);
  sb.switch_fraction = get(tree, "sbt.switch_fraction", sb.switch_fraction);
  sb.cf_fraction = get(tree, "sbt.cf_fraction", sb.cf_fraction);
  sb.p_cf = get(tree, "sbt.p_cf", sb.p_cf);
  sb.image_weight = get(tree, "sbt.image_weight", sb.image_weight);

  if (auto s = tree.get_optional<std::string>("eval.alphas")) c.eval.alphas = split<double>(*s, "eval.alphas");
  c.eval.generations = get(tree, "eval.generations", c.eval.generations);
  c.eval.edit_trials = get(tree, "eval.edit_trials", c.eval.edit_trials);
  c.eval.top_fraction = get(tree, "eval.top_fraction", c.eval.top_fraction);
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string to_ini(const PipelineConfig& config) {
  std::string out, section;
  for (const auto& [key, value] : entries(config)) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + ("[" + sec + "]\n");
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

void apply_env_overrides(PipelineConfig& config) {
  if (const char* s = std::getenv("MAS_SEED"); s != nullptr && *s != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') throw FormatError(std::string("MAS_SEED is not an unsigned integer: ") + s);
    config.seed = v;
  }
}

std::string config_hash(const PipelineConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_ini(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace mas::harness
