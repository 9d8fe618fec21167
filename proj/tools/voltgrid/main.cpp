#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "commands.hpp"
#include "voltgrid/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"voltgrid: voltage-control reinforcement learning workbench"};
  app.require_subcommand(1);
  voltgrid::cli::register_commands(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : voltgrid::cli::kExitUsage;
  }
  try {
    return voltgrid::cli::run_selected(app);
  } catch (const voltgrid::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return voltgrid::cli::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return voltgrid::cli::kExitRuntime;
  }
}
