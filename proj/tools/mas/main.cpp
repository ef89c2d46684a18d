#include <iostream>

#include "common.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Scene-conditioned text-to-image toolkit (desk scale)"};
  app.require_subcommand(1);
  mas::cli::add_scene_commands(app);
  mas::cli::add_vqseg_commands(app);
  mas::cli::add_vqimg_commands(app);
  mas::cli::add_bpe_commands(app);
  mas::cli::add_sbt_commands(app);
  mas::cli::add_generate_command(app);
  mas::cli::add_pipeline_command(app);
  mas::cli::add_eval_command(app);
  mas::cli::add_config_command(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "mas: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
