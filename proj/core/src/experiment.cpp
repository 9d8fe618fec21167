#include "voltgrid/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "voltgrid/case_io.hpp"
#include "voltgrid/error.hpp"
#include "voltgrid/hash.hpp"

namespace voltgrid {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve_case(const std::string& given, const fs::path& base_dir) {
  const fs::path p(given);
  std::vector<fs::path> tried;
  if (p.is_absolute()) {
    tried.push_back(p);
  } else {
    tried.push_back(base_dir / p);
    if (const char* dir = std::getenv(kCaseDirEnv); dir && *dir) tried.push_back(fs::path(dir) / p);
  }
  for (const auto& candidate : tried) {
    if (fs::is_regular_file(candidate)) return fs::weakly_canonical(candidate);
  }
  std::string where;
  for (const auto& t : tried) where += (where.empty() ? "" : ", ") + t.string();
  throw ConfigError("case", "file '" + given + "' not found (looked in " + where + ")");
}

std::int64_t scaled(std::int64_t n, double scale) {
  return std::max<std::int64_t>(1, std::llround(static_cast<double>(n) * scale));
}

}  // namespace

const char* to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::kDqn:
      return "dqn";
    case AgentKind::kRandom:
      return "random";
    case AgentKind::kGraph:
      return "graph";
  }
  return "?";
}

AgentKind agent_kind_from_string(const std::string& name, const std::string& field) {
  if (name == "dqn") return AgentKind::kDqn;
  if (name == "random") return AgentKind::kRandom;
  if (name == "graph") return AgentKind::kGraph;
  throw ConfigError(field, "must be one of dqn, random, graph (got '" + name + "')");
}

void check(const ExperimentConfig& c) {
  if (!fs::is_regular_file(c.case_path)) {
    throw ConfigError("case", "file '" + c.case_path.string() + "' not found");
  }
  check(c.scenario, "scenario");
  check(c.env, "env");
  check(c.dqn, "dqn");
  if (c.total_steps < 0) throw ConfigError("total_steps", "must be non-negative");
  if (c.seeds.empty()) throw ConfigError("seeds", "must list at least one seed");
  if (c.checkpoint_every < 0) throw ConfigError("checkpoint_every", "must be non-negative");
  if (c.eval_threads < 1) throw ConfigError("eval_threads", "must be at least 1");
}

ExperimentConfig experiment_from_json(const json& in, const fs::path& base_dir) {
  ExperimentConfig c;
  detail::ConfigReader r(in, "");
  std::string case_name;
  r.require("case", case_name);
  c.case_path = resolve_case(case_name, base_dir);
  if (const json* s = r.child("scenario")) c.scenario = scenario_config_from_json(*s, "scenario");
  if (const json* e = r.child("env")) c.env = env_config_from_json(*e, "env");
  std::string agent = to_string(c.agent);
  r.get("agent", agent);
  c.agent = agent_kind_from_string(agent);
  r.get("unique_actions", c.unique_actions);
  if (const json* d = r.child("dqn")) {
    if (d->is_object() && d->contains("unique_actions")) {
      throw ConfigError("dqn.unique_actions", "is set at the top level as unique_actions");
    }
    c.dqn = dqn_config_from_json(*d, "dqn");
  }
  c.dqn.unique_actions = c.unique_actions;
  r.get("total_steps", c.total_steps);
  r.get("n_test_episodes", c.n_test_episodes);
  r.get("seeds", c.seeds);
  r.get("test_seed", c.test_seed);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("eval_threads", c.eval_threads);
  r.finish();
  check(c);
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return experiment_from_json(doc, path.parent_path());
}

void to_json(json& out, const ExperimentConfig& c) {
  json dqn = c.dqn;
  dqn.erase("unique_actions");
  out = json{{"case", c.case_path.string()},
             {"scenario", c.scenario},
             {"env", c.env},
             {"agent", to_string(c.agent)},
             {"unique_actions", c.unique_actions},
             {"dqn", dqn},
             {"total_steps", c.total_steps},
             {"n_test_episodes", c.n_test_episodes},
             {"seeds", c.seeds},
             {"test_seed", c.test_seed},
             {"checkpoint_every", c.checkpoint_every},
             {"eval_threads", c.eval_threads}};
}

std::string fingerprint(const ExperimentConfig& c, const NetworkCase& net) {
  json key = c;
  key.erase("case");
  key.erase("checkpoint_every");
  key.erase("eval_threads");
  key["case_fingerprint"] = case_fingerprint(net);
  return hex64(fnv1a(key.dump()));
}

std::uint64_t training_scenario_seed(std::uint64_t seed) {
  return stream_seed(seed, 0x747261696eULL);
}

NetworkCase load_experiment_case(const ExperimentConfig& c) {
  return load_case(c.case_path, detect_format(c.case_path));
}

ScenarioManifest test_manifest(const ExperimentConfig& c, const NetworkCase& net) {
  ScenarioManifest m;
  m.seed = c.test_seed;
  m.first_index = 0;
  m.count = c.n_test_episodes;
  m.config = c.scenario;
  m.case_name = net.name;
  m.case_fingerprint = case_fingerprint(net);
  return m;
}

ScenarioManifest training_manifest(const ExperimentConfig& c, const NetworkCase& net,
                                   std::uint64_t seed) {
  ScenarioManifest m;
  m.seed = training_scenario_seed(seed);
  m.first_index = 0;
  m.count = std::numeric_limits<std::uint64_t>::max() / 2;
  m.config = c.scenario;
  m.case_name = net.name;
  m.case_fingerprint = case_fingerprint(net);
  return m;
}

VoltageEnv make_env(const ExperimentConfig& c, const NetworkCase& net, std::uint64_t scenario_seed) {
  return VoltageEnv(net, c.env, c.scenario, scenario_seed);
}

DqnConfig effective_dqn(const ExperimentConfig& c) {
  DqnConfig d = c.dqn;
  d.unique_actions = c.unique_actions;
  return d;
}

std::unique_ptr<Policy> make_baseline(const ExperimentConfig& c, std::uint64_t seed) {
  switch (c.agent) {
    case AgentKind::kRandom:
      return std::make_unique<RandomAgent>(seed, c.unique_actions);
    case AgentKind::kGraph:
      return std::make_unique<GraphAgent>();
    case AgentKind::kDqn:
      break;
  }
  throw ConfigError("agent", "the DQN agent needs a trained checkpoint");
}

EvalReport run_evaluation(const ExperimentConfig& c, const NetworkCase& net, const Policy& policy,
                          const ScenarioManifest& manifest, std::uint64_t seed) {
  const std::vector<Scenario> scenarios = manifest.generate(net);
  const VoltageEnv env = make_env(c, net, c.test_seed);
  EvalReport r = evaluate(policy, env, scenarios, c.eval_threads);
  r.seed = seed;
  r.config_fingerprint = fingerprint(c, net);
  r.manifest_id = manifest.id();
  return r;
}

void require_disjoint(const ExperimentConfig& c, const NetworkCase& net,
                      const ScenarioManifest& test, std::uint64_t seed) {
  const ScenarioManifest train = training_manifest(c, net, seed);
  if (overlaps(train, test)) {
    throw Error("test manifest " + test.id() + " draws from the training stream of seed " +
                std::to_string(seed) + " (scenario seed " + std::to_string(train.seed) +
                "); choose a different test seed");
  }
}

void write_training_curve(const TrainingLog& log, std::ostream& out) {
  out << "episode,env_episode,steps,reward,success,mean_reward_100\n";
  double window = 0.0;
  const auto& e = log.episodes;
  char line[160];
  for (std::size_t k = 0; k < e.size(); ++k) {
    window += e[k].reward;
    if (k >= 100) window -= e[k - 100].reward;
    const double mean = window / static_cast<double>(std::min<std::size_t>(k + 1, 100));
    std::snprintf(line, sizeof line, "%zu,%llu,%d,%.10g,%d,%.10g\n", k,
                  static_cast<unsigned long long>(e[k].env_episode), e[k].steps, e[k].reward,
                  e[k].success ? 1 : 0, mean);
    out << line;
  }
}

void write_training_curve(const TrainingLog& log, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_training_curve(log, out);
  if (!out) throw Error("failed writing " + path.string());
}

const char* to_string(ObservationGroup g) {
  switch (g) {
    case ObservationGroup::kVoltage:
      return "voltage";
    case ObservationGroup::kVoltageGen:
      return "voltage+gen";
    case ObservationGroup::kVoltageBranch:
      return "voltage+branch";
    case ObservationGroup::kVoltageGenBranch:
      return "voltage+gen+branch";
  }
  return "?";
}

ObservationGroup observation_group_from_string(const std::string& name) {
  for (auto g : {ObservationGroup::kVoltage, ObservationGroup::kVoltageGen,
                 ObservationGroup::kVoltageBranch, ObservationGroup::kVoltageGenBranch}) {
    if (name == to_string(g)) return g;
  }
  throw ConfigError("observations", "must be voltage, voltage+gen, voltage+branch or "
                                    "voltage+gen+branch (got '" + name + "')");
}

ObservationSet observation_set(ObservationGroup g) {
  ObservationSet s;
  s.gen_states = g == ObservationGroup::kVoltageGen || g == ObservationGroup::kVoltageGenBranch;
  s.branch_states =
      g == ObservationGroup::kVoltageBranch || g == ObservationGroup::kVoltageGenBranch;
  return s;
}

ExperimentConfig table1_config(const ExperimentConfig& base, const Table1Spec& spec) {
  if (!(spec.scale > 0.0 && spec.scale <= 1.0)) throw ConfigError("scale", "must lie in (0, 1]");
  ExperimentConfig c = base;
  c.agent = AgentKind::kDqn;
  c.env.observation = observation_set(spec.observations);
  c.env.min_max_voltages = spec.min_max_voltages;
  c.env.reward_scheme = spec.reward_scheme;
  c.unique_actions = spec.unique_actions;
  c.dqn.unique_actions = spec.unique_actions;
  c.total_steps = scaled(base.total_steps, spec.scale);
  c.n_test_episodes = static_cast<std::size_t>(
      scaled(static_cast<std::int64_t>(base.n_test_episodes), spec.scale));
  check(c);
  return c;
}

Table1Row reproduce_table1_row(const ExperimentConfig& base, const Table1Spec& spec) {
  const ExperimentConfig c = table1_config(base, spec);
  const NetworkCase net = load_experiment_case(c);
  const ScenarioManifest test = test_manifest(c, net);
  Table1Row row;
  row.spec = spec;
  for (std::uint64_t seed : c.seeds) {
    require_disjoint(c, net, test, seed);
    VoltageEnv env = make_env(c, net, training_scenario_seed(seed));
    const TrainingResult trained = train(env, effective_dqn(c), c.total_steps, seed);
    const DqnPolicy policy(trained.online, c.unique_actions);
    row.runs.push_back(run_evaluation(c, net, policy, test, seed));
    row.ps += row.runs.back().ps;
    row.psoobv += row.runs.back().psoobv;
  }
  row.ps /= static_cast<double>(row.runs.size());
  row.psoobv /= static_cast<double>(row.runs.size());
  return row;
}

std::string format_table1_row(const Table1Row& row) {
  const char* obs = "Voltage Only";
  switch (row.spec.observations) {
    case ObservationGroup::kVoltage:
      break;
    case ObservationGroup::kVoltageGen:
      obs = "Voltage and Gen. State";
      break;
    case ObservationGroup::kVoltageBranch:
      obs = "Voltage and Branch State";
      break;
    case ObservationGroup::kVoltageGenBranch:
      obs = "Voltage, Gen. and Branch State";
      break;
  }
  char line[160];
  std::snprintf(line, sizeof line, "%-32s | %-3s | %-3s | %d | %5.1f | %5.1f", obs,
                row.spec.unique_actions ? "Yes" : "No", row.spec.min_max_voltages ? "Yes" : "No",
                static_cast<int>(row.spec.reward_scheme), row.ps, row.psoobv);
  return line;
}

}  // namespace voltgrid
