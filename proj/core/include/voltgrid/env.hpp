#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "voltgrid/netmodel.hpp"
#include "voltgrid/powerflow.hpp"
#include "voltgrid/scenario.hpp"

namespace voltgrid {

using Observation = std::vector<double>;

struct StepInfo {
  bool all_in_band = false;
  /// Power flow failed to converge or left the failure bounds.
  bool diverged = false;
  bool capped = false;
  int oob_bus_count = 0;
  int action_count = 0;  // actions taken this episode, including this one
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Minimal episodic interface the agents train against.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::size_t observation_size() const = 0;
  virtual std::size_t action_count() const = 0;
  /// Starts the next episode of the environment's own scenario stream.
  virtual Observation reset() = 0;
  virtual StepResult step(std::size_t action) = 0;
  /// Index of the current episode within the stream.
  virtual std::uint64_t episode_index() const = 0;
  /// Repositions the stream so the next reset() starts episode `index`.
  virtual void seek(std::uint64_t index) = 0;
  /// The episode just reset cannot be acted on; its first step ends it.
  virtual bool dead_on_arrival() const { return false; }
};

enum class RewardScheme { kMovement = 1, kClipped = 2, kGridMind = 3 };
enum class ActionSpace { kPerGenerator, kTuple };

struct ObservationSet {
  bool gen_states = false;
  bool branch_states = false;
  bool shunt_states = false;

  bool operator==(const ObservationSet&) const = default;
};

/// Scheme-1 magnitudes.
struct MovementRewards {
  double move_scale = 100.0;  // per p.u. of distance-to-band change
  double in_band_bonus = 1.0;
  double leave_penalty = 1.0;
  double action_penalty = 0.1;
  double diverge_penalty = -10.0;
  double success_bonus = 5.0;

  bool operator==(const MovementRewards&) const = default;
};

struct GridMindRewards {
  double in_band = 100.0;
  double outer = -50.0;
  double far = -100.0;
  double outer_low = 0.8;  // [outer_low, band_low) draws `outer`
  double outer_high = 1.25;

  bool operator==(const GridMindRewards&) const = default;
};

struct EnvConfig {
  ObservationSet observation;
  bool min_max_voltages = true;
  RewardScheme reward_scheme = RewardScheme::kMovement;
  ActionSpace action_space = ActionSpace::kPerGenerator;
  /// 0 means twice the generator count.
  int action_cap = 0;
  double band_low = 0.95;
  double band_high = 1.05;
  double fail_low = 0.7;
  double fail_high = 1.2;
  /// Voltage changes below this count as no movement.
  double move_threshold = 1e-5;
  std::vector<double> setpoints = {0.95, 0.975, 1.0, 1.025, 1.05};
  MovementRewards movement;
  GridMindRewards gridmind;
  std::size_t tuple_action_limit = 100000;
  SolverConfig solver;
  bool record_trace = false;

  bool operator==(const EnvConfig&) const = default;
};

/// Throws ConfigError naming the first offending field under `path`.
void check(const EnvConfig& config, const std::string& path = "env");

void to_json(nlohmann::json& out, const EnvConfig& config);
EnvConfig env_config_from_json(const nlohmann::json& in, const std::string& path = "env");

enum class ActionKind { kNoOp, kGenSetpoint, kShuntToggle };

struct Action {
  ActionKind kind = ActionKind::kNoOp;
  std::size_t gen = 0;
  std::size_t setpoint = 0;
  std::size_t shunt = 0;

  bool operator==(const Action&) const = default;
};

/// Flat ids: 0 is no-op, then n_v ids per generator, then one per shunt.
class ActionCodec {
 public:
  ActionCodec(std::size_t n_gens, std::size_t n_setpoints, std::size_t n_shunts)
      : n_g_(n_gens), n_v_(n_setpoints), n_s_(n_shunts) {}

  std::size_t count() const { return 1 + n_g_ * n_v_ + n_s_; }
  Action decode(std::size_t id) const;
  std::size_t encode(const Action& action) const;

 private:
  std::size_t n_g_, n_v_, n_s_;
};

/// Distance of a voltage from the band, p.u.; zero inside.
double band_distance(double v, double lo, double hi);

/// Scheme 1 over converged voltage profiles of equal length.
double movement_reward(const std::vector<double>& prev, const std::vector<double>& next,
                       bool no_op, const EnvConfig& config);
/// Scheme 2 over converged voltage profiles.
double clipped_reward(const std::vector<double>& prev, const std::vector<double>& next,
                      bool no_op, const EnvConfig& config);
/// GridMind per-step tiers for one converged profile.
double gridmind_step_reward(const std::vector<double>& v, const EnvConfig& config);

struct TraceStep {
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<double> voltages;  // bus-id order; empty when diverged
};

/// Voltage-control environment over one network case.
class VoltageEnv : public Environment {
 public:
  /// Scenario stream for reset() is (scenario_seed, episode index).
  VoltageEnv(NetworkCase net, EnvConfig config, ScenarioConfig scenario_config,
             std::uint64_t scenario_seed);

  std::size_t observation_size() const override { return obs_size_; }
  std::size_t action_count() const override { return n_actions_; }
  Observation reset() override;
  StepResult step(std::size_t action) override;
  std::uint64_t episode_index() const override { return episode_; }
  void seek(std::uint64_t index) override { next_episode_ = index; }

  /// Starts an episode from an explicit scenario; the stream is untouched.
  Observation reset(const Scenario& scenario);

  const EnvConfig& config() const { return config_; }
  const NetworkCase& base_case() const { return net_; }
  /// Case as modified by the scenario and the actions so far.
  const NetworkCase& state() const { return state_; }
  const PowerFlowSolution& solution() const { return solution_; }
  const ActionCodec& codec() const { return codec_; }
  int action_cap() const { return cap_; }
  bool done() const { return done_; }
  /// Initial state failed to solve or left the failure bounds.
  bool dead_on_arrival() const override { return dead_on_arrival_; }
  bool started_in_band() const { return started_in_band_; }
  int initial_oob_count() const { return initial_oob_; }
  /// Bus voltages by ascending bus id from the last good solution.
  const std::vector<double>& voltages() const { return last_v_; }
  const std::vector<TraceStep>& trace() const { return trace_; }
  /// Ordering of case bus positions by ascending id.
  const std::vector<std::size_t>& bus_order() const { return bus_order_; }

 private:
  void apply(std::size_t action);
  bool solve_state(std::vector<double>& v_sorted);
  Observation observe() const;
  int count_oob(const std::vector<double>& v) const;
  double failure_reward() const;
  double success_reward() const;

  NetworkCase net_;
  EnvConfig config_;
  ScenarioSampler sampler_;
  std::uint64_t scenario_seed_;
  ActionCodec codec_;
  std::size_t n_actions_ = 0;
  std::size_t obs_size_ = 0;
  int cap_ = 0;
  std::vector<std::size_t> bus_order_;

  std::uint64_t episode_ = 0;
  std::uint64_t next_episode_ = 0;
  NetworkCase state_;
  PowerFlowSolution solution_;
  std::vector<double> last_v_;
  bool active_ = false;
  bool done_ = false;
  bool dead_on_arrival_ = false;
  bool started_in_band_ = false;
  int initial_oob_ = 0;
  int actions_taken_ = 0;
  std::vector<double> episode_rewards_;
  std::vector<TraceStep> trace_;
};

}  // namespace voltgrid
