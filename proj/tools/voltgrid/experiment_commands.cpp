#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "voltgrid/agents.hpp"
#include "voltgrid/case_io.hpp"
#include "voltgrid/dqn.hpp"
#include "voltgrid/error.hpp"
#include "voltgrid/experiment.hpp"
#include "voltgrid/scenario.hpp"

namespace voltgrid::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct ExperimentOptions {
  std::string config;
  std::string case_path;
  std::string output;
  bool json_output = false;
  // scenario-gen
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
  std::uint64_t first_index = 0;
  bool contingencies = false;
  bool materialize = false;
  // train
  std::string out_dir;
  bool resume = false;
  std::int64_t stop_after = 0;
  std::optional<std::int64_t> checkpoint_every;
  // eval and compare
  std::string manifest;
  std::string checkpoint;
  std::string agent;
  std::optional<std::uint64_t> eval_seed;
  std::optional<unsigned> threads;
  std::vector<std::string> agents;
  std::vector<std::string> checkpoints;
  std::vector<std::string> reports;
  std::string csv;
  // table1
  std::string observations = "voltage";
  std::string uae = "yes";
  std::string mmv = "yes";
  int rs = 1;
  double scale = 1.0;
  std::vector<std::uint64_t> seeds;
};

ExperimentOptions& xopts() {
  static ExperimentOptions o;
  return o;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorruptFileError(path.string() + ": " + e.what());
  }
}

void write_json(const json& doc, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

ExperimentConfig open_config() {
  ExperimentConfig c = load_experiment(xopts().config);
  if (xopts().threads) c.eval_threads = std::max(1u, *xopts().threads);
  return c;
}

// Accepts either a training output directory or the checkpoint inside it.
fs::path checkpoint_dir(const fs::path& given) {
  if (fs::is_regular_file(given / "state.json")) return given;
  if (fs::is_regular_file(given / "checkpoint" / "state.json")) return given / "checkpoint";
  throw ConfigError("checkpoint", "no checkpoint found at '" + given.string() + "'");
}

std::uint64_t checkpoint_seed(const fs::path& dir) {
  return read_json(dir / "state.json").at("seed").get<std::uint64_t>();
}

ScenarioManifest pick_manifest(const ExperimentConfig& c, const NetworkCase& net) {
  if (xopts().manifest.empty()) return test_manifest(c, net);
  ScenarioManifest m = read_manifest(xopts().manifest);
  check_case(m, net);
  return m;
}

EvalReport eval_checkpoint(const ExperimentConfig& c, const NetworkCase& net,
                           const ScenarioManifest& manifest, const fs::path& given) {
  const fs::path dir = checkpoint_dir(given);
  const std::uint64_t seed = checkpoint_seed(dir);
  require_disjoint(c, net, manifest, seed);
  const fs::path summary = dir.parent_path() / "summary.json";
  if (fs::is_regular_file(summary)) {
    const std::string trained = read_json(summary).value("config_fingerprint", "");
    if (!trained.empty() && trained != fingerprint(c, net)) {
      std::cerr << "warning: " << given.string()
                << " was trained under a different configuration\n";
    }
  }
  const DqnPolicy policy(load_params(dir / "online.vgnn"), c.unique_actions);
  return run_evaluation(c, net, policy, manifest, seed);
}

void print_header() {
  std::printf("%-12s %8s %8s %5s %5s %7s %7s %11s %9s\n", "agent", "seed", "episodes", "doa",
              "oob", "PS", "PSOOBV", "mean_reward", "act/succ");
}

void print_row(const EvalReport& r) {
  std::printf("%-12s %8llu %8zu %5zu %5zu %7.1f %7.1f %11.3f %9.2f\n", r.agent.c_str(),
              static_cast<unsigned long long>(r.seed), r.episodes, r.dead_on_arrival,
              r.oob_episodes, r.ps, r.psoobv, r.mean_reward, r.mean_actions_per_success);
}

void write_csv(const std::vector<EvalReport>& reports, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "agent,seed,episodes,dead_on_arrival,oob_episodes,ps,psoobv,mean_reward,"
         "mean_actions_per_success,manifest_id\n";
  char line[256];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%s,%llu,%zu,%zu,%zu,%.10g,%.10g,%.10g,%.10g,%s\n",
                  r.agent.c_str(), static_cast<unsigned long long>(r.seed), r.episodes,
                  r.dead_on_arrival, r.oob_episodes, r.ps, r.psoobv, r.mean_reward,
                  r.mean_actions_per_success, r.manifest_id.c_str());
    out << line;
  }
  if (!out) throw Error("failed writing " + path.string());
}

int cmd_scenario_gen() {
  const auto& o = xopts();
  const NetworkCase net = load_case(o.case_path, detect_format(o.case_path));
  ScenarioManifest m;
  if (!o.config.empty()) {
    const ExperimentConfig c = load_experiment(o.config);
    m.config = c.scenario;
    if (o.contingencies) m.config.contingencies_enabled = true;
  } else {
    m.config.contingencies_enabled = o.contingencies;
  }
  check(m.config);
  m.seed = o.seed;
  m.first_index = o.first_index;
  m.count = o.count;
  m.case_name = net.name;
  m.case_fingerprint = case_fingerprint(net);
  if (o.materialize) m.records = m.generate(net);
  write_manifest(m, o.output);
  std::cerr << "wrote manifest " << m.id() << " (" << m.count << " scenarios) to " << o.output
            << '\n';
  return kExitOk;
}

int cmd_train() {
  const auto& o = xopts();
  ExperimentConfig c = open_config();
  if (o.checkpoint_every) c.checkpoint_every = *o.checkpoint_every;
  if (c.agent != AgentKind::kDqn) {
    throw ConfigError("agent", std::string("only the dqn agent is trained (got ") +
                                   to_string(c.agent) + ")");
  }
  if (o.stop_after < 0) throw ConfigError("stop-after", "must be non-negative");
  const NetworkCase net = load_experiment_case(c);
  require_disjoint(c, net, test_manifest(c, net), o.seed);

  const fs::path out(o.out_dir);
  const fs::path ckpt = out / "checkpoint";
  VoltageEnv env = make_env(c, net, training_scenario_seed(o.seed));
  std::optional<DqnTrainer> trainer;
  if (o.resume) {
    trainer.emplace(DqnTrainer::resume(env, checkpoint_dir(out)));
    if (trainer->config() != effective_dqn(c) || trainer->total_steps() != c.total_steps ||
        trainer->seed() != o.seed) {
      throw ConfigError("resume", "checkpoint in '" + out.string() +
                                      "' was made with a different config or seed");
    }
  } else {
    trainer.emplace(env, effective_dqn(c), c.total_steps, o.seed);
  }
  fs::create_directories(out);
  write_json(json(c), out / "config.json");

  const std::int64_t limit =
      o.stop_after > 0 ? std::min(c.total_steps, trainer->step() + o.stop_after) : c.total_steps;
  while (trainer->step() < limit) {
    std::int64_t next = limit;
    if (c.checkpoint_every > 0) {
      next = std::min(limit, (trainer->step() / c.checkpoint_every + 1) * c.checkpoint_every);
    }
    trainer->run_until(next);
    if (next < limit) trainer->save_checkpoint(ckpt);
  }
  trainer->save_checkpoint(ckpt);
  write_training_curve(trainer->log(), out / "training.csv");

  const TrainingLog& log = trainer->log();
  std::size_t successes = 0;
  for (const auto& e : log.episodes) successes += e.success ? 1 : 0;
  json summary{{"config_fingerprint", fingerprint(c, net)},
               {"seed", o.seed},
               {"steps", trainer->step()},
               {"total_steps", c.total_steps},
               {"finished", trainer->finished()},
               {"episodes", log.episodes.size()},
               {"successes", successes},
               {"dead_on_arrival_skipped", log.dead_on_arrival_skipped}};
  write_json(summary, out / "summary.json");
  std::printf("trained %lld/%lld steps, %zu episodes (%zu successful, %zu skipped unsolvable)\n",
              static_cast<long long>(trainer->step()), static_cast<long long>(c.total_steps),
              log.episodes.size(), successes, log.dead_on_arrival_skipped);
  std::printf("output in %s\n", out.string().c_str());
  return kExitOk;
}

int cmd_eval() {
  const auto& o = xopts();
  ExperimentConfig c = open_config();
  const NetworkCase net = load_experiment_case(c);
  const ScenarioManifest manifest = pick_manifest(c, net);

  EvalReport report;
  if (!o.checkpoint.empty()) {
    report = eval_checkpoint(c, net, manifest, o.checkpoint);
  } else {
    if (!o.agent.empty()) c.agent = agent_kind_from_string(o.agent, "--agent");
    const std::uint64_t seed = o.eval_seed.value_or(c.seeds.front());
    report = run_evaluation(c, net, *make_baseline(c, seed), manifest, seed);
  }
  if (report.episodes == 0) std::cerr << "warning: the test manifest holds no episodes\n";

  if (o.json_output) {
    std::cout << json(report).dump(2) << '\n';
  } else {
    std::printf("manifest %s, config %s\n", report.manifest_id.c_str(),
                report.config_fingerprint.c_str());
    print_header();
    print_row(report);
  }
  if (!o.output.empty()) write_json(json(report), o.output);
  return kExitOk;
}

int cmd_compare() {
  const auto& o = xopts();
  ExperimentConfig c = open_config();
  if (!o.threads) c.eval_threads = std::max(1u, std::thread::hardware_concurrency());
  const NetworkCase net = load_experiment_case(c);
  const ScenarioManifest manifest = pick_manifest(c, net);
  if (o.agents.empty() && o.checkpoints.empty() && o.reports.empty()) {
    throw ConfigError("compare", "give at least one --agent, --checkpoint or --report");
  }

  std::vector<EvalReport> reports;
  for (const auto& path : o.reports) {
    reports.push_back(eval_report_from_json(read_json(path)));
  }
  for (const auto& name : o.agents) {
    ExperimentConfig a = c;
    a.agent = agent_kind_from_string(name, "--agent");
    const std::vector<std::uint64_t> seeds =
        o.eval_seed ? std::vector<std::uint64_t>{*o.eval_seed} : c.seeds;
    for (std::uint64_t seed : seeds) {
      reports.push_back(run_evaluation(a, net, *make_baseline(a, seed), manifest, seed));
    }
  }
  for (const auto& dir : o.checkpoints) reports.push_back(eval_checkpoint(c, net, manifest, dir));

  for (const auto& r : reports) {
    if (r.manifest_id != reports.front().manifest_id) {
      throw Error("reports were evaluated on different test manifests (" +
                  reports.front().manifest_id + " vs " + r.manifest_id + ")");
    }
  }

  std::printf("manifest %s\n", reports.front().manifest_id.c_str());
  print_header();
  for (const auto& r : reports) print_row(r);

  auto mean_psoobv = [&](const std::string& prefix) -> std::optional<double> {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : reports) {
      if (r.agent.rfind(prefix, 0) == 0) {
        sum += r.psoobv;
        ++n;
      }
    }
    return n > 0 ? std::optional<double>(sum / n) : std::nullopt;
  };
  const auto graph = mean_psoobv("graph");
  const auto random = mean_psoobv("random");
  if (graph && random && *graph < *random) {
    std::cerr << "warning: graph agent PSOOBV " << *graph << " is below random agent's "
              << *random << '\n';
  }

  if (!o.csv.empty()) write_csv(reports, o.csv);
  if (!o.output.empty()) write_json(json(reports), o.output);
  return kExitOk;
}

bool yes_no(const std::string& v) { return v == "yes"; }

int cmd_table1() {
  const auto& o = xopts();
  ExperimentConfig c = open_config();
  if (!o.seeds.empty()) c.seeds = o.seeds;
  Table1Spec spec;
  spec.observations = observation_group_from_string(o.observations);
  spec.unique_actions = yes_no(o.uae);
  spec.min_max_voltages = yes_no(o.mmv);
  spec.reward_scheme = static_cast<RewardScheme>(o.rs);
  spec.scale = o.scale;
  const Table1Row row = reproduce_table1_row(c, spec);

  std::printf("%-32s | %-3s | %-3s | %s | %5s | %5s\n", "Observations", "UAE", "MMV", "RS", "PS",
              "PSOOBV");
  std::printf("%s\n", format_table1_row(row).c_str());
  if (o.json_output || !o.output.empty()) {
    json doc{{"observations", to_string(spec.observations)},
             {"unique_actions", spec.unique_actions},
             {"min_max_voltages", spec.min_max_voltages},
             {"reward_scheme", o.rs},
             {"scale", spec.scale},
             {"ps", row.ps},
             {"psoobv", row.psoobv},
             {"runs", row.runs}};
    if (!o.output.empty()) write_json(doc, o.output);
    if (o.json_output) std::cout << doc.dump(2) << '\n';
  }
  return kExitOk;
}

void add_config_option(CLI::App* cmd) {
  cmd->add_option("-c,--config", xopts().config, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
}

}  // namespace

void register_experiment_commands(CLI::App& app) {
  auto& o = xopts();

  auto* gen = app.add_subcommand("scenario-gen", "Write a reproducible scenario manifest");
  gen->add_option("case", o.case_path, "Case file")->required()->check(CLI::ExistingFile);
  gen->add_option("--count", o.count, "Number of scenarios")->required();
  gen->add_option("--seed", o.seed, "Scenario stream seed")->required();
  gen->add_option("--first-index", o.first_index, "First index within the stream");
  gen->add_flag("--contingencies", o.contingencies, "Draw one branch outage per scenario");
  gen->add_option("-c,--config", o.config, "Take scenario settings from an experiment config")
      ->check(CLI::ExistingFile);
  gen->add_flag("--materialize", o.materialize, "Embed the generated scenarios for audit");
  gen->add_option("-o,--output", o.output, "Manifest path")->required();
  handlers()[gen] = cmd_scenario_gen;

  auto* train = app.add_subcommand("train", "Train a DQN agent and write a checkpoint");
  add_config_option(train);
  train->add_option("--seed", o.seed, "Run seed")->required();
  train->add_option("--out", o.out_dir, "Output directory")->required();
  train->add_flag("--resume", o.resume, "Continue from the checkpoint in --out");
  train->add_option("--stop-after", o.stop_after, "Stop after this many more steps");
  train->add_option("--checkpoint-every", o.checkpoint_every, "Steps between checkpoints");
  handlers()[train] = cmd_train;

  auto* eval = app.add_subcommand("eval", "Evaluate an agent on the test scenarios");
  add_config_option(eval);
  auto* ck = eval->add_option("--checkpoint", o.checkpoint, "Trained DQN output directory");
  eval->add_option("--agent", o.agent, "Baseline agent")
      ->check(CLI::IsMember({"random", "graph"}))
      ->excludes(ck);
  eval->add_option("--seed", o.eval_seed, "Seed of a baseline agent");
  eval->add_option("--manifest", o.manifest, "Test manifest (default: from the config)")
      ->check(CLI::ExistingFile);
  eval->add_option("--threads", o.threads, "Evaluation workers");
  eval->add_option("-o,--output", o.output, "Report path (JSON)");
  eval->add_flag("--json", o.json_output, "Print the report as JSON");
  handlers()[eval] = cmd_eval;

  auto* compare = app.add_subcommand("compare", "Evaluate several agents on one test set");
  add_config_option(compare);
  compare->add_option("--agent", o.agents, "Baseline agent, evaluated for every config seed")
      ->check(CLI::IsMember({"random", "graph"}));
  compare->add_option("--checkpoint", o.checkpoints, "Trained DQN output directory");
  compare->add_option("--report", o.reports, "Previously written eval report")
      ->check(CLI::ExistingFile);
  compare->add_option("--seed", o.eval_seed, "Single baseline seed instead of the config's");
  compare->add_option("--manifest", o.manifest, "Test manifest (default: from the config)")
      ->check(CLI::ExistingFile);
  compare->add_option("--threads", o.threads, "Evaluation workers (default: all cores)");
  compare->add_option("--csv", o.csv, "Delimited output path");
  compare->add_option("-o,--output", o.output, "Reports path (JSON)");
  handlers()[compare] = cmd_compare;

  auto* t1 = app.add_subcommand("table1", "Train and evaluate one row of the 14-bus matrix");
  add_config_option(t1);
  t1->add_option("--observations", o.observations, "Observation group")
      ->check(CLI::IsMember({"voltage", "voltage+gen", "voltage+branch", "voltage+gen+branch"}));
  t1->add_option("--uae", o.uae, "Unique actions per episode")
      ->check(CLI::IsMember({"yes", "no"}));
  t1->add_option("--mmv", o.mmv, "Min-max voltage scaling")->check(CLI::IsMember({"yes", "no"}));
  t1->add_option("--rs", o.rs, "Reward scheme")->check(CLI::IsMember({1, 2}));
  t1->add_option("--scale", o.scale, "Fraction of steps and test episodes")
      ->check(CLI::Range(1e-9, 1.0));
  t1->add_option("--seeds", o.seeds, "Run seeds (default: the config's)")->delimiter(',');
  t1->add_option("--threads", o.threads, "Evaluation workers");
  t1->add_option("-o,--output", o.output, "Row and per-seed reports (JSON)");
  t1->add_flag("--json", o.json_output, "Print the row as JSON");
  handlers()[t1] = cmd_table1;
}

}  // namespace voltgrid::cli
