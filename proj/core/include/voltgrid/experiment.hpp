#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "voltgrid/agents.hpp"
#include "voltgrid/dqn.hpp"
#include "voltgrid/env.hpp"
#include "voltgrid/scenario.hpp"

namespace voltgrid {

/// Directory searched for relative case paths that do not resolve next to
/// the config file.
inline constexpr const char* kCaseDirEnv = "VOLTGRID_CASE_DIR";

enum class AgentKind { kDqn, kRandom, kGraph };

const char* to_string(AgentKind kind);
/// Throws ConfigError naming `field` for an unknown name.
AgentKind agent_kind_from_string(const std::string& name, const std::string& field = "agent");

struct ExperimentConfig {
  std::filesystem::path case_path;  // resolved and known to exist
  ScenarioConfig scenario;
  EnvConfig env;
  AgentKind agent = AgentKind::kDqn;
  /// Applies to the DQN and random agents alike.
  bool unique_actions = true;
  DqnConfig dqn;
  std::int64_t total_steps = 50000;
  std::size_t n_test_episodes = 500;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  /// Stream of the shared test scenarios; training streams derive from the
  /// run seed and never coincide with it.
  std::uint64_t test_seed = 90210;
  /// 0 disables periodic checkpoints during training.
  std::int64_t checkpoint_every = 0;
  unsigned eval_threads = 1;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Throws ConfigError with the dotted path of the offending field.
void check(const ExperimentConfig& config);

/// Relative case paths resolve against `base_dir`, then kCaseDirEnv.
ExperimentConfig experiment_from_json(const nlohmann::json& in,
                                      const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);
void to_json(nlohmann::json& out, const ExperimentConfig& config);

/// Hash of every setting that can change an emitted artifact, with the case
/// identified by content rather than path.
std::string fingerprint(const ExperimentConfig& config, const NetworkCase& net);

/// Scenario stream the training environment of run `seed` draws from.
std::uint64_t training_scenario_seed(std::uint64_t seed);

NetworkCase load_experiment_case(const ExperimentConfig& config);
ScenarioManifest test_manifest(const ExperimentConfig& config, const NetworkCase& net);
/// Unbounded index range of the training stream for `seed`.
ScenarioManifest training_manifest(const ExperimentConfig& config, const NetworkCase& net,
                                   std::uint64_t seed);

VoltageEnv make_env(const ExperimentConfig& config, const NetworkCase& net,
                    std::uint64_t scenario_seed);
DqnConfig effective_dqn(const ExperimentConfig& config);

/// Random or graph agent for `seed`. Throws ConfigError for the DQN kind.
std::unique_ptr<Policy> make_baseline(const ExperimentConfig& config, std::uint64_t seed);

/// Evaluates on the manifest's scenarios and stamps seed, fingerprint and
/// manifest id into the report. Throws ConfigError if the manifest belongs
/// to another case.
EvalReport run_evaluation(const ExperimentConfig& config, const NetworkCase& net,
                          const Policy& policy, const ScenarioManifest& manifest,
                          std::uint64_t seed);

/// Throws Error when the test manifest shares scenarios with the training
/// stream of `seed`.
void require_disjoint(const ExperimentConfig& config, const NetworkCase& net,
                      const ScenarioManifest& test, std::uint64_t seed);

/// One line per completed episode with a 100-episode trailing mean.
void write_training_curve(const TrainingLog& log, std::ostream& out);
void write_training_curve(const TrainingLog& log, const std::filesystem::path& path);

/// Observation groupings used by the 14-bus experiment matrix.
enum class ObservationGroup { kVoltage, kVoltageGen, kVoltageBranch, kVoltageGenBranch };
const char* to_string(ObservationGroup group);
ObservationGroup observation_group_from_string(const std::string& name);
ObservationSet observation_set(ObservationGroup group);

struct Table1Spec {
  ObservationGroup observations = ObservationGroup::kVoltage;
  bool unique_actions = true;
  bool min_max_voltages = true;
  RewardScheme reward_scheme = RewardScheme::kMovement;
  /// Multiplies total_steps and n_test_episodes; in (0, 1].
  double scale = 1.0;
};

struct Table1Row {
  Table1Spec spec;
  std::vector<EvalReport> runs;  // one per seed
  double ps = 0.0;
  double psoobv = 0.0;
};

/// Base config adjusted to one row of the matrix.
ExperimentConfig table1_config(const ExperimentConfig& base, const Table1Spec& spec);
/// Trains and evaluates a DQN per seed of `base` and averages the metrics.
Table1Row reproduce_table1_row(const ExperimentConfig& base, const Table1Spec& spec);
std::string format_table1_row(const Table1Row& row);

}  // namespace voltgrid
