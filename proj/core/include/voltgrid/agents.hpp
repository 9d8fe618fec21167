#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "voltgrid/dqn.hpp"
#include "voltgrid/env.hpp"
#include "voltgrid/nn.hpp"
#include "voltgrid/rng.hpp"
#include "voltgrid/scenario.hpp"

namespace voltgrid {

/// An acting agent for evaluation. Instances are single-threaded; clone()
/// gives each worker its own.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  /// Called after every reset; `episode` keys any per-episode randomness so
  /// results do not depend on how episodes are spread over workers.
  virtual void begin_episode(const VoltageEnv& env, std::uint64_t episode) = 0;
  virtual std::size_t act(const VoltageEnv& env, const Observation& obs) = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;
};

/// Greedy rollout of a trained network.
class DqnPolicy : public Policy {
 public:
  DqnPolicy(Parameters params, bool unique_actions, std::string name = "dqn");

  std::string name() const override { return name_; }
  void begin_episode(const VoltageEnv& env, std::uint64_t episode) override;
  std::size_t act(const VoltageEnv& env, const Observation& obs) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<DqnPolicy>(*this); }

  const Parameters& params() const { return params_; }

 private:
  Parameters params_;
  bool unique_;
  std::string name_;
  ActionMask mask_;
  Rng unused_;
};

/// Uniform over the action space, or over actions not yet taken this
/// episode when unique_actions is set.
class RandomAgent : public Policy {
 public:
  RandomAgent(std::uint64_t seed, bool unique_actions);

  std::string name() const override { return unique_ ? "random-uae" : "random"; }
  void begin_episode(const VoltageEnv& env, std::uint64_t episode) override;
  std::size_t act(const VoltageEnv& env, const Observation& obs) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<RandomAgent>(*this); }

 private:
  std::uint64_t seed_;
  bool unique_;
  Rng rng_;
  ActionMask mask_;
};

/// Topology heuristic: corrects the worst bus with a nearby switched shunt
/// if one helps, else with the electrically nearest generator's set point,
/// one discrete step at a time. Never repeats an action within an episode.
class GraphAgent : public Policy {
 public:
  std::string name() const override { return "graph"; }
  void begin_episode(const VoltageEnv& env, std::uint64_t episode) override;
  std::size_t act(const VoltageEnv& env, const Observation& obs) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<GraphAgent>(*this); }

 private:
  ActionMask used_;
};

/// Shortest |x|-weighted path length from `source` (case bus position) to
/// every bus over in-service branches; infinity where unreachable.
std::vector<double> reactance_distances(const NetworkCase& net, std::size_t source);

struct EpisodeRecord {
  std::uint64_t index = 0;  // scenario ordinal within the test set
  bool dead_on_arrival = false;
  bool started_in_band = false;
  int initial_oob = 0;
  bool success = false;
  double reward = 0.0;
  std::vector<std::size_t> actions;

  bool operator==(const EpisodeRecord&) const = default;
};

struct EvalReport {
  std::string agent;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  std::string manifest_id;
  std::size_t episodes = 0;
  /// Episodes whose initial state could not be solved; excluded from every
  /// metric below.
  std::size_t dead_on_arrival = 0;
  std::size_t oob_episodes = 0;
  double ps = 0.0;      // % of scored episodes ending all in band
  double psoobv = 0.0;  // same over episodes starting with an out-of-band bus
  double mean_reward = 0.0;
  /// Over successful episodes that started with an out-of-band bus.
  double mean_actions_per_success = 0.0;
  std::vector<EpisodeRecord> records;

  bool operator==(const EvalReport&) const = default;
};

/// Recomputes the summary fields from `records`.
void summarize(EvalReport& report);

/// Rolls `policy` through every scenario on copies of `env`, fanned out over
/// `threads` workers. Records and metrics do not depend on the thread count.
EvalReport evaluate(const Policy& policy, const VoltageEnv& env,
                    const std::vector<Scenario>& scenarios, unsigned threads = 1);

void to_json(nlohmann::json& out, const EpisodeRecord& record);
void to_json(nlohmann::json& out, const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& in);

}  // namespace voltgrid
