#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>

#include "voltgrid/case_io.hpp"
#include "voltgrid/powerflow.hpp"

namespace voltgrid::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  // shared
  std::string case_path;
  std::string format = "auto";
  std::string output;
  bool json_output = false;
  // convert
  bool switched_shunts = false;
  // powerflow
  double tolerance = SolverConfig{}.tolerance;
  int max_iter = SolverConfig{}.max_iterations;
  bool no_q_limits = false;
};

Options& opts() {
  static Options o;
  return o;
}

CaseFormat pick_format(const std::string& flag, const fs::path& path) {
  if (flag == "native") return CaseFormat::kNative;
  if (flag == "matpower") return CaseFormat::kMatpower;
  return detect_format(path);
}

NetworkCase open_case(const std::string& path) {
  MatpowerOptions mp;
  mp.switched_shunts = opts().switched_shunts;
  return load_case(path, pick_format(opts().format, path), mp);
}

int cmd_convert() {
  const auto net = open_case(opts().case_path);
  if (opts().output.empty()) {
    std::cout << to_native(net);
  } else {
    write_native(net, opts().output);
    std::cerr << "wrote " << opts().output << " (" << net.buses.size()
              << " buses, " << net.branches.size() << " branches, "
              << net.generators.size() << " generators, " << net.loads.size()
              << " loads, " << net.shunts.size() << " shunts)\n";
  }
  return kExitOk;
}

int cmd_powerflow() {
  const auto net = open_case(opts().case_path);
  SolverConfig cfg;
  cfg.tolerance = opts().tolerance;
  cfg.max_iterations = opts().max_iter;
  cfg.enforce_q_limits = !opts().no_q_limits;
  if (cfg.tolerance <= 0.0 || cfg.max_iterations < 1) {
    std::cerr << "tolerance must be positive and max-iter at least 1\n";
    return kExitUsage;
  }
  const auto sol = solve(net, cfg);
  if (opts().json_output) {
    json doc;
    doc["case"] = net.name;
    doc["status"] = to_string(sol.status);
    doc["iterations"] = sol.iterations;
    doc["q_rounds"] = sol.q_rounds;
    doc["gen_p_slack_mw"] = sol.gen_p_slack;
    json buses = json::array();
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
      buses.push_back({{"id", net.buses[i].id},
                       {"type", to_string(net.buses[i].type)},
                       {"v_pu", sol.v[i]},
                       {"theta_rad", sol.theta[i]}});
    }
    doc["buses"] = std::move(buses);
    json gens = json::array();
    for (std::size_t g = 0; g < net.generators.size(); ++g) {
      gens.push_back({{"bus", net.generators[g].bus},
                      {"in_service", net.generators[g].in_service},
                      {"q_mvar", sol.gen_q[g]},
                      {"at_limit", static_cast<bool>(sol.gen_at_limit[g])}});
    }
    doc["generators"] = std::move(gens);
    std::cout << doc.dump(2) << '\n';
  } else {
    std::printf("case %s: %s after %d iterations (%d Q-limit rounds)\n",
                net.name.c_str(), to_string(sol.status), sol.iterations,
                sol.q_rounds);
    std::printf("%6s %6s %10s %12s\n", "bus", "type", "v (pu)", "theta (deg)");
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
      std::printf("%6d %6s %10.5f %12.4f\n", net.buses[i].id,
                  to_string(net.buses[i].type), sol.v[i],
                  sol.theta[i] * 180.0 / 3.14159265358979323846);
    }
    std::printf("slack generation: %.3f MW\n", sol.gen_p_slack);
  }
  return sol.converged() ? kExitOk : kExitRuntime;
}

void add_format_option(CLI::App* cmd) {
  cmd->add_option("--format", opts().format, "Case format")
      ->check(CLI::IsMember({"auto", "native", "matpower"}));
  cmd->add_flag("--switched-shunts", opts().switched_shunts,
                "Import MATPOWER bus susceptances as switchable shunts");
}

}  // namespace

std::map<const CLI::App*, std::function<int()>>& handlers() {
  static std::map<const CLI::App*, std::function<int()>> h;
  return h;
}

void register_commands(CLI::App& app) {
  auto& o = opts();

  auto* convert = app.add_subcommand("convert", "Convert a case to the native format");
  convert->add_option("case", o.case_path, "Input case file")->required();
  convert->add_option("-o,--output", o.output, "Output path (stdout if omitted)");
  add_format_option(convert);
  handlers()[convert] = cmd_convert;

  auto* pf = app.add_subcommand("powerflow", "Solve the AC power flow of a case");
  pf->add_option("case", o.case_path, "Case file")->required();
  pf->add_option("--tolerance", o.tolerance, "Mismatch tolerance (p.u.)");
  pf->add_option("--max-iter", o.max_iter, "Newton iteration cap");
  pf->add_flag("--no-q-limits", o.no_q_limits, "Ignore generator reactive limits");
  pf->add_flag("--json", o.json_output, "Machine-readable output");
  add_format_option(pf);
  handlers()[pf] = cmd_powerflow;

  register_experiment_commands(app);
}

int run_selected(CLI::App& app) {
  for (const auto* sub : app.get_subcommands()) {
    auto it = handlers().find(sub);
    if (it != handlers().end()) return it->second();
  }
  return kExitUsage;
}

}  // namespace voltgrid::cli
