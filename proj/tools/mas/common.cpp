#include "common.hpp"

#include <fstream>

#include "mas/error.hpp"

namespace mas::cli {

harness::PipelineConfig resolve_config(const std::optional<std::string>& config_path, const fs::path& run_dir) {
  harness::PipelineConfig config;
  if (config_path) {
    config = harness::load_config(*config_path);
  } else if (fs::exists(run_dir / "config.ini")) {
    config = harness::load_config(run_dir / "config.ini");
  }
  harness::apply_env_overrides(config);
  config.validate();
  return config;
}

void save_tokens(const fs::path& path, int height, int width, const std::vector<int>& tokens) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << json{{"height", height}, {"width", width}, {"tokens", tokens}}.dump() << '\n';
}

vqseg::TokenGrid load_tokens(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  try {
    const json j = json::parse(is);
    vqseg::TokenGrid g{j.at("height"), j.at("width"), j.at("tokens").get<std::vector<int>>()};
    if (g.tokens.size() != static_cast<std::size_t>(g.height) * static_cast<std::size_t>(g.width)) {
      throw FormatError("token count does not match grid size");
    }
    return g;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace mas::cli
