#include <fstream>
#include <iostream>
#include <map>

#include "common.hpp"
#include "mas/error.hpp"
#include "mas/scene/scene_io.hpp"

namespace mas::cli {

namespace {

scene::Group parse_group(const std::string& s) {
  if (s == "panoptic") return scene::Group::panoptic;
  if (s == "human") return scene::Group::human;
  if (s == "face") return scene::Group::face;
  throw RangeError("unknown group '" + s + "' (panoptic, human, face)");
}

std::vector<int> split_ints(const std::string& s, std::size_t n, const char* what) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(',', start), s.size());
    try {
      out.push_back(std::stoi(s.substr(start, end - start)));
    } catch (const std::exception&) {
      throw RangeError(std::string("bad ") + what + " '" + s + "'");
    }
    start = end + 1;
  }
  if (out.size() != n) throw RangeError(std::string("bad ") + what + " '" + s + "'");
  return out;
}

// "group:from,to" and "group:cls,y,x,h,w"
std::pair<scene::Group, std::vector<int>> group_args(const std::string& s, std::size_t n, const char* what) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw RangeError(std::string("bad ") + what + " '" + s + "'");
  return {parse_group(s.substr(0, colon)), split_ints(s.substr(colon + 1), n, what)};
}

void print_info(const fs::path& path) {
  const auto s = scene::load_scene(path);
  const auto schema = scene::SceneSchema::desk();
  std::cout << path.string() << ": " << s.height << "x" << s.width << "\n";
  for (auto g : {scene::Group::panoptic, scene::Group::human, scene::Group::face}) {
    std::map<std::uint16_t, std::size_t> hist;
    for (auto v : s.grid(g)) ++hist[v];
    std::cout << "  " << scene::group_name(g) << ":";
    for (const auto& [cls, n] : hist) {
      if (cls == scene::kNullClass) std::cout << " null=" << n;
      else std::cout << " " << cls << "=" << n;
    }
    std::cout << "\n";
  }
  std::size_t edges = 0;
  for (auto e : scene::extract_edges(s, schema)) edges += e;
  std::cout << "  edge pixels: " << edges << "\n";
  scene::validate(s, schema);
  std::cout << "  valid for the desk schema\n";
}

}  // namespace

void add_scene_commands(CLI::App& app) {
  auto* cmd = app.add_subcommand("scene", "Inspect, edit and synthesise scene maps");
  cmd->require_subcommand(1);

  auto* info = cmd->add_subcommand("info", "Print class histograms of a scene file");
  static std::string info_path;
  info->add_option("file", info_path, "scene file")->required()->check(CLI::ExistingFile);
  info->callback([] { print_info(info_path); });

  auto* edit = cmd->add_subcommand("edit", "Apply class replacements and rectangle pastes");
  static std::string in, out;
  static std::vector<std::string> replaces, pastes;
  edit->add_option("input", in, "scene file")->required()->check(CLI::ExistingFile);
  edit->add_option("output", out, "edited scene file")->required();
  edit->add_option("--replace", replaces, "group:from,to");
  edit->add_option("--paste", pastes, "group:class,y,x,h,w");
  edit->callback([] {
    std::vector<scene::SceneEdit> edits;
    for (const auto& r : replaces) {
      auto [g, v] = group_args(r, 2, "replacement");
      edits.push_back(scene::ReplaceClass{g, static_cast<std::uint16_t>(v[0]), static_cast<std::uint16_t>(v[1])});
    }
    for (const auto& p : pastes) {
      auto [g, v] = group_args(p, 5, "paste");
      edits.push_back(scene::PasteSketch{g, static_cast<std::uint16_t>(v[0]), v[1], v[2], v[3], v[4]});
    }
    const auto s = scene::load_scene(in);
    scene::save_scene(out, scene::edit_scene(s, edits, scene::SceneSchema::desk()));
  });

  auto* synth = cmd->add_subcommand("synth", "Render synthetic (image, scene, caption) triplets");
  static std::optional<std::string> config_path;
  static std::string out_dir;
  static std::size_t n = 8;
  static std::uint64_t seed = 0;
  synth->add_option("--config", config_path, "pipeline config (synth section)");
  synth->add_option("-n,--count", n, "number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "corpus seed");
  synth->add_option("--out-dir", out_dir, "output directory")->required();
  synth->callback([] {
    const auto config = resolve_config(config_path, out_dir);
    fs::create_directories(out_dir);
    const auto samples = harness::synth_generate(config.synth, n, seed);
    std::ofstream captions(fs::path(out_dir) / "captions.txt");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::string stem = "sample_" + std::to_string(i);
      scene::save_scene(fs::path(out_dir) / (stem + ".scnm"), samples[i].scene);
      io::save_image(fs::path(out_dir) / (stem + ".imgb"), samples[i].image);
      captions << stem << '\t' << samples[i].caption << '\n';
    }
    std::cout << "wrote " << samples.size() << " samples to " << out_dir << "\n";
  });
}

}  // namespace mas::cli
