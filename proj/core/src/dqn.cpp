#include "voltgrid/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "voltgrid/error.hpp"

namespace voltgrid {

namespace {

using nlohmann::json;

constexpr const char* kCheckpointFormat = "voltgrid-checkpoint";
constexpr int kCheckpointVersion = 1;
constexpr std::int64_t kMaxDeadInARow = 100000;

std::size_t argmax_row(const Eigen::MatrixXd& m, Eigen::Index row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < m.cols(); ++j) {
    if (m(row, j) > m(row, best)) best = j;
  }
  return static_cast<std::size_t>(best);
}

Eigen::MatrixXd stack(const std::vector<const Observation*>& rows, std::size_t width) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]->size() != width) throw SpecMismatchError("observation width changed");
    for (std::size_t j = 0; j < width; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*rows[i])[j];
    }
  }
  return m;
}

json log_to_json(const TrainingLog& log) {
  json episodes = json::array();
  for (const auto& e : log.episodes) {
    episodes.push_back({e.env_episode, e.steps, e.reward, e.success});
  }
  return {{"steps", log.steps},
          {"dead_on_arrival_skipped", log.dead_on_arrival_skipped},
          {"episodes", episodes}};
}

TrainingLog log_from_json(const json& j) {
  TrainingLog log;
  log.steps = j.at("steps").get<std::int64_t>();
  log.dead_on_arrival_skipped = j.at("dead_on_arrival_skipped").get<std::int64_t>();
  for (const auto& e : j.at("episodes")) {
    log.episodes.push_back({e.at(0).get<std::uint64_t>(), e.at(1).get<int>(),
                            e.at(2).get<double>(), e.at(3).get<bool>()});
  }
  return log;
}

}  // namespace

void check(const DqnConfig& c, const std::string& path) {
  auto field = [&](const char* name) { return path + "." + name; };
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw ConfigError(field("gamma"), "must lie in (0, 1]");
  if (!(c.learning_rate > 0.0)) throw ConfigError(field("learning_rate"), "must be positive");
  if (c.buffer_capacity == 0) throw ConfigError(field("buffer_capacity"), "must be positive");
  if (c.batch_size == 0) throw ConfigError(field("batch_size"), "must be positive");
  if (c.learning_starts < 0) throw ConfigError(field("learning_starts"), "must be non-negative");
  if (c.train_frequency < 1) throw ConfigError(field("train_frequency"), "must be at least 1");
  if (c.target_sync < 1) throw ConfigError(field("target_sync"), "must be at least 1");
  for (auto [v, name] : {std::pair{c.epsilon_start, "epsilon_start"},
                         std::pair{c.epsilon_end, "epsilon_end"},
                         std::pair{c.exploration_fraction, "exploration_fraction"},
                         std::pair{c.beta_start, "beta_start"}, std::pair{c.beta_end, "beta_end"}}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(field(name), "must lie in [0, 1]");
  }
  if (!(c.alpha >= 0.0)) throw ConfigError(field("alpha"), "must be non-negative");
  if (!(c.priority_floor > 0.0)) throw ConfigError(field("priority_floor"), "must be positive");
  for (std::size_t h : c.hidden) {
    if (h == 0) throw ConfigError(field("hidden"), "layer widths must be positive");
  }
  if (!(c.huber_delta > 0.0)) throw ConfigError(field("huber_delta"), "must be positive");
  if (!(c.grad_clip >= 0.0)) throw ConfigError(field("grad_clip"), "must be non-negative");
}

void to_json(json& out, const DqnConfig& c) {
  out = json{{"gamma", c.gamma},
             {"learning_rate", c.learning_rate},
             {"buffer_capacity", c.buffer_capacity},
             {"batch_size", c.batch_size},
             {"learning_starts", c.learning_starts},
             {"train_frequency", c.train_frequency},
             {"target_sync", c.target_sync},
             {"epsilon_start", c.epsilon_start},
             {"epsilon_end", c.epsilon_end},
             {"exploration_fraction", c.exploration_fraction},
             {"prioritized", c.prioritized},
             {"alpha", c.alpha},
             {"beta_start", c.beta_start},
             {"beta_end", c.beta_end},
             {"priority_floor", c.priority_floor},
             {"double_q", c.double_q},
             {"dueling", c.dueling},
             {"hidden", c.hidden},
             {"huber_delta", c.huber_delta},
             {"grad_clip", c.grad_clip},
             {"unique_actions", c.unique_actions},
             {"skip_dead_on_arrival", c.skip_dead_on_arrival}};
}

DqnConfig dqn_config_from_json(const json& in, const std::string& path) {
  DqnConfig c;
  detail::ConfigReader r(in, path);
  r.get("gamma", c.gamma);
  r.get("learning_rate", c.learning_rate);
  r.get("buffer_capacity", c.buffer_capacity);
  r.get("batch_size", c.batch_size);
  r.get("learning_starts", c.learning_starts);
  r.get("train_frequency", c.train_frequency);
  r.get("target_sync", c.target_sync);
  r.get("epsilon_start", c.epsilon_start);
  r.get("epsilon_end", c.epsilon_end);
  r.get("exploration_fraction", c.exploration_fraction);
  r.get("prioritized", c.prioritized);
  r.get("alpha", c.alpha);
  r.get("beta_start", c.beta_start);
  r.get("beta_end", c.beta_end);
  r.get("priority_floor", c.priority_floor);
  r.get("double_q", c.double_q);
  r.get("dueling", c.dueling);
  r.get("hidden", c.hidden);
  r.get("huber_delta", c.huber_delta);
  r.get("grad_clip", c.grad_clip);
  r.get("unique_actions", c.unique_actions);
  r.get("skip_dead_on_arrival", c.skip_dead_on_arrival);
  r.finish();
  check(c, path);
  return c;
}

void ActionMask::mark(std::size_t id) {
  if (!taken_[id]) {
    taken_[id] = true;
    ++n_taken_;
  }
}

void ActionMask::clear() {
  std::fill(taken_.begin(), taken_.end(), false);
  n_taken_ = 0;
}

std::size_t select_action(const Eigen::Ref<const Eigen::VectorXd>& q, ActionMask& mask,
                          bool unique, double epsilon, Rng& rng) {
  const auto n = static_cast<std::size_t>(q.size());
  if (mask.action_count() != n) throw StateError("action mask size differs from the Q vector");
  const std::size_t eligible = unique ? n - mask.taken_count() : n;
  if (eligible == 0) throw StateError("every action is masked");
  auto allowed = [&](std::size_t i) { return !unique || !mask.contains(i); };

  std::size_t pick = n;
  if (epsilon > 0.0 && rng.uniform() < epsilon) {
    std::size_t k = rng.below(eligible);
    for (std::size_t i = 0; i < n; ++i) {
      if (allowed(i) && k-- == 0) {
        pick = i;
        break;
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (allowed(i) && (pick == n || q(static_cast<Eigen::Index>(i)) >
                                          q(static_cast<Eigen::Index>(pick)))) {
        pick = i;
      }
    }
  }
  if (unique) mask.mark(pick);
  return pick;
}

Eigen::VectorXd compute_targets(const Eigen::VectorXd& rewards, const std::vector<bool>& done,
                                const Eigen::MatrixXd& next_obs, const Parameters& online,
                                const Parameters& target, double gamma, bool double_q) {
  const Eigen::Index b = rewards.size();
  if (b == 0 || next_obs.rows() != b || done.size() != static_cast<std::size_t>(b)) {
    throw SpecMismatchError("compute_targets: inconsistent batch");
  }
  const Eigen::MatrixXd q_target = forward(target, next_obs);
  const Eigen::MatrixXd q_select = double_q ? forward(online, next_obs) : q_target;
  Eigen::VectorXd y = rewards;
  for (Eigen::Index i = 0; i < b; ++i) {
    if (done[static_cast<std::size_t>(i)]) continue;
    const auto a = static_cast<Eigen::Index>(argmax_row(q_select, i));
    y(i) += gamma * q_target(i, a);
  }
  return y;
}

DqnTrainer::DqnTrainer(Environment& env, DqnConfig config, std::int64_t total_steps,
                       std::uint64_t seed)
    : env_(&env),
      config_(std::move(config)),
      total_steps_(total_steps),
      seed_(seed),
      replay_(config_.buffer_capacity, config_.prioritized ? config_.alpha : 0.0,
              config_.priority_floor),
      rng_(stream_seed(seed, 1)),
      last_loss_(std::numeric_limits<double>::quiet_NaN()),
      mask_(env.action_count()) {
  check(config_);
  if (total_steps < 0) throw ConfigError("total_steps", "must be non-negative");
  const MlpSpec spec{.input_dim = env.observation_size(),
                     .hidden = config_.hidden,
                     .n_actions = env.action_count(),
                     .dueling = config_.dueling};
  Rng init(stream_seed(seed, 0));
  online_ = init_params(spec, init);
  target_ = online_;
  adam_ = make_adam(online_);
}

double DqnTrainer::epsilon() const {
  const double span = config_.exploration_fraction * static_cast<double>(total_steps_);
  const double frac = span > 0.0 ? std::min(1.0, static_cast<double>(step_) / span) : 1.0;
  return config_.epsilon_start + frac * (config_.epsilon_end - config_.epsilon_start);
}

double DqnTrainer::beta() const {
  const double frac =
      total_steps_ > 0 ? std::min(1.0, static_cast<double>(step_) / total_steps_) : 1.0;
  return config_.beta_start + frac * (config_.beta_end - config_.beta_start);
}

void DqnTrainer::begin_episode() {
  for (std::int64_t dead = 0;; ++dead) {
    if (dead == kMaxDeadInARow) {
      throw Error("environment produced " + std::to_string(dead) +
                  " unusable episodes in a row");
    }
    obs_ = env_->reset();
    if (!config_.skip_dead_on_arrival || !env_->dead_on_arrival()) break;
    ++log_.dead_on_arrival_skipped;
  }
  episode_index_ = env_->episode_index();
  in_episode_ = true;
  mask_.clear();
  episode_actions_.clear();
  episode_reward_ = 0.0;
}

void DqnTrainer::run_until(std::int64_t limit) {
  limit = std::min(limit, total_steps_);
  Eigen::MatrixXd row(1, static_cast<Eigen::Index>(online_.spec.input_dim));
  while (step_ < limit) {
    if (!in_episode_) begin_episode();
    for (std::size_t j = 0; j < obs_.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = obs_[j];
    const Eigen::MatrixXd q = forward(online_, row);
    const std::size_t a =
        select_action(q.row(0).transpose(), mask_, config_.unique_actions, epsilon(), rng_);
    StepResult res = env_->step(a);
    episode_actions_.push_back(a);
    episode_reward_ += res.reward;
    replay_.add({obs_, a, res.reward, res.observation, res.done});
    obs_ = std::move(res.observation);
    log_.steps = ++step_;

    if (step_ > config_.learning_starts && step_ % config_.train_frequency == 0) learn();
    if (step_ > config_.learning_starts && step_ % config_.target_sync == 0) target_ = online_;
    if (res.done) {
      log_.episodes.push_back({episode_index_, static_cast<int>(episode_actions_.size()),
                               episode_reward_, res.info.all_in_band});
      in_episode_ = false;
    }
  }
}

void DqnTrainer::learn() {
  const auto batch = config_.prioritized ? replay_.sample(config_.batch_size, beta(), rng_)
                                         : replay_.sample_uniform(config_.batch_size, rng_);
  const std::size_t b = batch.indices.size();
  std::vector<const Observation*> obs, next;
  std::vector<std::size_t> actions(b);
  std::vector<bool> done(b);
  Eigen::VectorXd rewards(static_cast<Eigen::Index>(b));
  Eigen::VectorXd weights(static_cast<Eigen::Index>(b));
  for (std::size_t k = 0; k < b; ++k) {
    const Transition& t = replay_.at(batch.indices[k]);
    obs.push_back(&t.obs);
    next.push_back(&t.next_obs);
    actions[k] = t.action;
    done[k] = t.done;
    rewards(static_cast<Eigen::Index>(k)) = t.reward;
    weights(static_cast<Eigen::Index>(k)) = batch.weights[k];
  }
  const std::size_t width = online_.spec.input_dim;
  const Eigen::VectorXd y = compute_targets(rewards, done, stack(next, width), online_, target_,
                                            config_.gamma, config_.double_q);
  Gradients g = backward(online_, stack(obs, width), weights, actions, y, config_.huber_delta);
  if (!std::isfinite(g.loss)) {
    throw Error("non-finite training loss at step " + std::to_string(step_) +
                " (learning rate " + std::to_string(config_.learning_rate) + ")");
  }
  if (config_.grad_clip > 0.0) clip_grad_norm(g.grads, config_.grad_clip);
  adam_step(online_, g.grads, adam_, config_.learning_rate);
  if (config_.prioritized) {
    replay_.update_priorities(
        batch.indices, std::vector<double>(g.td_error.data(), g.td_error.data() + g.td_error.size()));
  }
  last_loss_ = g.loss;
}

void DqnTrainer::save_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_params(online_, dir / "online.vgnn");
  save_params(target_, dir / "target.vgnn");
  save_adam(adam_, dir / "adam.bin");
  replay_.save(dir / "replay.bin");

  json state{{"format", kCheckpointFormat},
             {"version", kCheckpointVersion},
             {"config", config_},
             {"total_steps", total_steps_},
             {"seed", seed_},
             {"step", step_},
             {"epsilon", epsilon()},
             {"beta", beta()},
             {"rng", rng_.state()},
             {"last_loss", std::isfinite(last_loss_) ? json(last_loss_) : json(nullptr)},
             {"log", log_to_json(log_)},
             {"in_episode", in_episode_}};
  if (step_ > 0) state["episode_index"] = episode_index_;
  if (in_episode_) {
    state["episode_actions"] = episode_actions_;
    state["episode_reward"] = episode_reward_;
  }
  // The sidecar is written last and renamed into place, so a directory with
  // a state.json always holds a complete checkpoint.
  const auto tmp = dir / "state.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write " + tmp.string());
    out << state.dump(2) << '\n';
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / "state.json");
}

DqnTrainer DqnTrainer::resume(Environment& env, const std::filesystem::path& dir) {
  const auto state_path = dir / "state.json";
  std::ifstream in(state_path);
  if (!in) throw Error("cannot open " + state_path.string());
  json state;
  try {
    state = json::parse(in);
    if (state.at("format") != kCheckpointFormat || state.at("version") != kCheckpointVersion) {
      throw CorruptFileError(state_path.string() + ": not a version 1 checkpoint");
    }
    DqnTrainer t(env, dqn_config_from_json(state.at("config"), "checkpoint.config"),
                 state.at("total_steps").get<std::int64_t>(), state.at("seed").get<std::uint64_t>());
    const MlpSpec spec = t.online_.spec;
    t.online_ = load_params(dir / "online.vgnn", spec);
    t.target_ = load_params(dir / "target.vgnn", spec);
    t.adam_ = load_adam(dir / "adam.bin", spec);
    t.replay_.load(dir / "replay.bin");
    t.rng_.restore(state.at("rng").get<std::string>());
    t.step_ = state.at("step").get<std::int64_t>();
    const json& loss = state.at("last_loss");
    t.last_loss_ = loss.is_null() ? std::numeric_limits<double>::quiet_NaN() : loss.get<double>();
    t.log_ = log_from_json(state.at("log"));
    if (t.log_.steps != t.step_) throw CorruptFileError(state_path.string() + ": step mismatch");

    if (state.contains("episode_index")) {
      t.episode_index_ = state.at("episode_index").get<std::uint64_t>();
    }
    if (state.at("in_episode").get<bool>()) {
      env.seek(t.episode_index_);
      t.obs_ = env.reset();
      t.in_episode_ = true;
      for (std::size_t a : state.at("episode_actions").get<std::vector<std::size_t>>()) {
        if (t.config_.unique_actions) t.mask_.mark(a);
        t.episode_actions_.push_back(a);
        t.obs_ = env.step(a).observation;
      }
      t.episode_reward_ = state.at("episode_reward").get<double>();
    } else if (state.contains("episode_index")) {
      env.seek(t.episode_index_ + 1);
    }
    return t;
  } catch (const json::exception& e) {
    throw CorruptFileError(state_path.string() + ": " + e.what());
  }
}

TrainingResult train(Environment& env, const DqnConfig& config, std::int64_t total_steps,
                     std::uint64_t seed) {
  DqnTrainer t(env, config, total_steps, seed);
  t.run();
  return {t.online(), t.log()};
}

}  // namespace voltgrid
