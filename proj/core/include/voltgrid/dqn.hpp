#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "voltgrid/env.hpp"
#include "voltgrid/nn.hpp"
#include "voltgrid/replay.hpp"
#include "voltgrid/rng.hpp"

namespace voltgrid {

struct DqnConfig {
  double gamma = 0.99;
  double learning_rate = 5e-4;
  std::size_t buffer_capacity = 50000;
  std::size_t batch_size = 32;
  std::int64_t learning_starts = 1000;
  std::int64_t train_frequency = 1;
  std::int64_t target_sync = 500;
  double epsilon_start = 1.0;
  double epsilon_end = 0.02;
  /// Share of total steps over which epsilon decays linearly.
  double exploration_fraction = 0.1;
  bool prioritized = true;
  double alpha = 0.6;
  /// Annealed linearly to beta_end over the whole run.
  double beta_start = 0.4;
  double beta_end = 1.0;
  double priority_floor = 1e-6;
  bool double_q = true;
  bool dueling = true;
  std::vector<std::size_t> hidden = {64, 64};
  double huber_delta = 1.0;
  /// Global gradient norm bound; 0 disables clipping.
  double grad_clip = 10.0;
  bool unique_actions = true;
  /// Episodes whose initial state cannot be acted on are drawn past.
  bool skip_dead_on_arrival = true;

  bool operator==(const DqnConfig&) const = default;
};

void check(const DqnConfig& config, const std::string& path = "dqn");
void to_json(nlohmann::json& out, const DqnConfig& config);
DqnConfig dqn_config_from_json(const nlohmann::json& in, const std::string& path = "dqn");

/// Flat action ids already taken in the current episode.
class ActionMask {
 public:
  explicit ActionMask(std::size_t n_actions = 0) : taken_(n_actions, false) {}

  std::size_t action_count() const { return taken_.size(); }
  std::size_t taken_count() const { return n_taken_; }
  bool contains(std::size_t id) const { return taken_[id]; }
  void mark(std::size_t id);
  void clear();

 private:
  std::vector<bool> taken_;
  std::size_t n_taken_ = 0;
};

/// With probability epsilon a uniform pick among eligible actions, else the
/// highest-valued eligible action, lowest id on ties. Eligible means not in
/// the mask when `unique` is set, any action otherwise; with `unique` the
/// pick is added to the mask. Draws from `rng` only when epsilon > 0.
/// Throws StateError when no action is eligible.
std::size_t select_action(const Eigen::Ref<const Eigen::VectorXd>& q, ActionMask& mask,
                          bool unique, double epsilon, Rng& rng);

/// y = r for terminal transitions, else r + gamma·Q_target(s', a*) with
/// a* = argmax Q_online(s', ·) over every action (double Q), or
/// max Q_target(s', ·) when double_q is off. Lowest id wins ties.
Eigen::VectorXd compute_targets(const Eigen::VectorXd& rewards, const std::vector<bool>& done,
                                const Eigen::MatrixXd& next_obs, const Parameters& online,
                                const Parameters& target, double gamma, bool double_q = true);

struct EpisodeLog {
  std::uint64_t env_episode = 0;  // index in the environment's stream
  int steps = 0;
  double reward = 0.0;
  bool success = false;  // last step left every bus in band

  bool operator==(const EpisodeLog&) const = default;
};

struct TrainingLog {
  std::vector<EpisodeLog> episodes;
  std::int64_t steps = 0;
  std::int64_t dead_on_arrival_skipped = 0;

  bool operator==(const TrainingLog&) const = default;
};

/// Single-threaded DQN loop with exact checkpoint/resume. The environment
/// must be deterministic given its episode index and the actions taken.
class DqnTrainer {
 public:
  DqnTrainer(Environment& env, DqnConfig config, std::int64_t total_steps, std::uint64_t seed);

  /// Restores a trainer from a checkpoint directory, replaying the partial
  /// episode so the environment is where it was.
  static DqnTrainer resume(Environment& env, const std::filesystem::path& dir);

  /// Runs until `limit` steps (capped at total_steps) have been taken.
  void run_until(std::int64_t limit);
  void run() { run_until(total_steps_); }
  bool finished() const { return step_ >= total_steps_; }

  void save_checkpoint(const std::filesystem::path& dir) const;

  double epsilon() const;
  double beta() const;
  std::int64_t step() const { return step_; }
  std::int64_t total_steps() const { return total_steps_; }
  std::uint64_t seed() const { return seed_; }
  const DqnConfig& config() const { return config_; }
  const MlpSpec& spec() const { return online_.spec; }
  const Parameters& online() const { return online_; }
  const Parameters& target() const { return target_; }
  const TrainingLog& log() const { return log_; }
  const PrioritizedReplay& replay() const { return replay_; }
  /// Loss of the most recent gradient step; NaN before learning starts.
  double last_loss() const { return last_loss_; }

 private:
  void begin_episode();
  void learn();

  Environment* env_;
  DqnConfig config_;
  std::int64_t total_steps_;
  std::uint64_t seed_;
  Parameters online_;
  Parameters target_;
  AdamState adam_;
  PrioritizedReplay replay_;
  Rng rng_;
  std::int64_t step_ = 0;
  TrainingLog log_;
  double last_loss_;

  bool in_episode_ = false;
  Observation obs_;
  ActionMask mask_;
  std::uint64_t episode_index_ = 0;
  std::vector<std::size_t> episode_actions_;
  double episode_reward_ = 0.0;
};

struct TrainingResult {
  Parameters online;
  TrainingLog log;
};

TrainingResult train(Environment& env, const DqnConfig& config, std::int64_t total_steps,
                     std::uint64_t seed);

}  // namespace voltgrid
