#pragma once

#include <CLI11.hpp>

#include <functional>
#include <map>

namespace voltgrid::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

void register_commands(CLI::App& app);
/// scenario-gen, train, eval, compare and table1.
void register_experiment_commands(CLI::App& app);

/// Subcommand to handler; filled in by the register functions.
std::map<const CLI::App*, std::function<int()>>& handlers();

/// Dispatches to whichever subcommand was parsed; returns the exit code.
int run_selected(CLI::App& app);

}  // namespace voltgrid::cli
