#include "voltgrid/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "voltgrid/error.hpp"

namespace voltgrid {

using nlohmann::json;

// --- configuration ----------------------------------------------------------

void check(const EnvConfig& c, const std::string& path) {
  auto fail = [&](const char* field, const char* msg) {
    throw ConfigError(path + "." + field, msg);
  };
  if (!(c.band_low < c.band_high)) fail("band", "needs low < high");
  if (!(c.fail_low < c.fail_high)) fail("failure_bounds", "needs low < high");
  if (!(c.fail_low <= c.band_low && c.band_high <= c.fail_high)) {
    fail("band", "must lie within failure_bounds");
  }
  if (c.action_cap < 0) fail("action_cap", "must be nonnegative (0 selects 2 x generators)");
  if (!(c.move_threshold >= 0.0)) fail("move_threshold", "must be nonnegative");
  if (c.setpoints.empty()) fail("setpoints", "must not be empty");
  for (double v : c.setpoints) {
    if (!(v > 0.0)) fail("setpoints", "entries must be positive");
  }
  if (!(c.gridmind.outer_low <= c.band_low && c.band_high <= c.gridmind.outer_high)) {
    fail("gridmind_rewards", "outer band must contain the band");
  }
  if (!(c.solver.tolerance > 0.0)) fail("solver.tolerance", "must be positive");
  if (c.solver.max_iterations < 1) fail("solver.max_iterations", "must be at least 1");
}

void to_json(json& out, const EnvConfig& c) {
  json blocks = json::array();
  if (c.observation.gen_states) blocks.push_back("gen_states");
  if (c.observation.branch_states) blocks.push_back("branch_states");
  if (c.observation.shunt_states) blocks.push_back("shunt_states");
  json scheme = c.reward_scheme == RewardScheme::kGridMind
                    ? json("gridmind")
                    : json(static_cast<int>(c.reward_scheme));
  const auto& m = c.movement;
  const auto& g = c.gridmind;
  out = json{
      {"observation", blocks},
      {"min_max_voltages", c.min_max_voltages},
      {"reward_scheme", scheme},
      {"action_space", c.action_space == ActionSpace::kTuple ? "tuple" : "per_generator"},
      {"action_cap", c.action_cap},
      {"band", {c.band_low, c.band_high}},
      {"failure_bounds", {c.fail_low, c.fail_high}},
      {"move_threshold", c.move_threshold},
      {"setpoints", c.setpoints},
      {"movement_rewards",
       {{"move_scale", m.move_scale},
        {"in_band_bonus", m.in_band_bonus},
        {"leave_penalty", m.leave_penalty},
        {"action_penalty", m.action_penalty},
        {"diverge_penalty", m.diverge_penalty},
        {"success_bonus", m.success_bonus}}},
      {"gridmind_rewards",
       {{"in_band", g.in_band},
        {"outer", g.outer},
        {"far", g.far},
        {"outer_band", {g.outer_low, g.outer_high}}}},
      {"tuple_action_limit", c.tuple_action_limit},
      {"solver",
       {{"tolerance", c.solver.tolerance},
        {"max_iterations", c.solver.max_iterations},
        {"enforce_q_limits", c.solver.enforce_q_limits}}},
      {"record_trace", c.record_trace}};
}

namespace {

void read_pair(detail::ConfigReader& r, const std::string& key, double& lo, double& hi) {
  std::vector<double> v{lo, hi};
  r.get(key, v);
  if (v.size() != 2) throw ConfigError(r.path_of(key), "expects [low, high]");
  lo = v[0];
  hi = v[1];
}

}  // namespace

EnvConfig env_config_from_json(const json& in, const std::string& path) {
  detail::ConfigReader r(in, path);
  EnvConfig c;
  std::vector<std::string> blocks;
  r.get("observation", blocks);
  for (const auto& b : blocks) {
    if (b == "voltages") continue;
    if (b == "gen_states") {
      c.observation.gen_states = true;
    } else if (b == "branch_states") {
      c.observation.branch_states = true;
    } else if (b == "shunt_states") {
      c.observation.shunt_states = true;
    } else {
      throw ConfigError(r.path_of("observation"), "unknown block '" + b + "'");
    }
  }
  r.get("min_max_voltages", c.min_max_voltages);
  if (const json* s = r.child("reward_scheme")) {
    if (*s == 1) {
      c.reward_scheme = RewardScheme::kMovement;
    } else if (*s == 2) {
      c.reward_scheme = RewardScheme::kClipped;
    } else if (*s == "gridmind") {
      c.reward_scheme = RewardScheme::kGridMind;
    } else {
      throw ConfigError(r.path_of("reward_scheme"), "must be 1, 2 or \"gridmind\"");
    }
  }
  std::string space = c.action_space == ActionSpace::kTuple ? "tuple" : "per_generator";
  r.get("action_space", space);
  if (space == "per_generator") {
    c.action_space = ActionSpace::kPerGenerator;
  } else if (space == "tuple") {
    c.action_space = ActionSpace::kTuple;
  } else {
    throw ConfigError(r.path_of("action_space"), "must be \"per_generator\" or \"tuple\"");
  }
  r.get("action_cap", c.action_cap);
  read_pair(r, "band", c.band_low, c.band_high);
  read_pair(r, "failure_bounds", c.fail_low, c.fail_high);
  r.get("move_threshold", c.move_threshold);
  r.get("setpoints", c.setpoints);
  if (const json* m = r.child("movement_rewards")) {
    detail::ConfigReader mr(*m, r.path_of("movement_rewards"));
    mr.get("move_scale", c.movement.move_scale);
    mr.get("in_band_bonus", c.movement.in_band_bonus);
    mr.get("leave_penalty", c.movement.leave_penalty);
    mr.get("action_penalty", c.movement.action_penalty);
    mr.get("diverge_penalty", c.movement.diverge_penalty);
    mr.get("success_bonus", c.movement.success_bonus);
    mr.finish();
  }
  if (const json* g = r.child("gridmind_rewards")) {
    detail::ConfigReader gr(*g, r.path_of("gridmind_rewards"));
    gr.get("in_band", c.gridmind.in_band);
    gr.get("outer", c.gridmind.outer);
    gr.get("far", c.gridmind.far);
    read_pair(gr, "outer_band", c.gridmind.outer_low, c.gridmind.outer_high);
    gr.finish();
  }
  r.get("tuple_action_limit", c.tuple_action_limit);
  if (const json* s = r.child("solver")) {
    detail::ConfigReader sr(*s, r.path_of("solver"));
    sr.get("tolerance", c.solver.tolerance);
    sr.get("max_iterations", c.solver.max_iterations);
    sr.get("enforce_q_limits", c.solver.enforce_q_limits);
    sr.finish();
  }
  r.get("record_trace", c.record_trace);
  r.finish();
  check(c, path);
  return c;
}

// --- actions and rewards ------------------------------------------------------

Action ActionCodec::decode(std::size_t id) const {
  if (id >= count()) throw StateError("action id " + std::to_string(id) + " out of range");
  if (id == 0) return {};
  const std::size_t k = id - 1;
  if (k < n_g_ * n_v_) {
    return Action{ActionKind::kGenSetpoint, k / n_v_, k % n_v_, 0};
  }
  return Action{ActionKind::kShuntToggle, 0, 0, k - n_g_ * n_v_};
}

std::size_t ActionCodec::encode(const Action& a) const {
  switch (a.kind) {
    case ActionKind::kNoOp:
      return 0;
    case ActionKind::kGenSetpoint:
      if (a.gen >= n_g_ || a.setpoint >= n_v_) throw StateError("set-point action out of range");
      return 1 + a.gen * n_v_ + a.setpoint;
    case ActionKind::kShuntToggle:
      if (a.shunt >= n_s_) throw StateError("shunt action out of range");
      return 1 + n_g_ * n_v_ + a.shunt;
  }
  return 0;
}

double band_distance(double v, double lo, double hi) {
  return std::max({0.0, lo - v, v - hi});
}

double movement_reward(const std::vector<double>& prev, const std::vector<double>& next,
                       bool no_op, const EnvConfig& c) {
  const auto& k = c.movement;
  double moved = 0.0;
  int entered = 0, left = 0;
  bool all_in = true;
  for (std::size_t i = 0; i < next.size(); ++i) {
    const double d0 = band_distance(prev[i], c.band_low, c.band_high);
    const double d1 = band_distance(next[i], c.band_low, c.band_high);
    moved += d0 - d1;
    entered += d0 > 0.0 && d1 == 0.0;
    left += d0 == 0.0 && d1 > 0.0;
    all_in = all_in && d1 == 0.0;
  }
  double r = k.move_scale * moved + k.in_band_bonus * entered - k.leave_penalty * left;
  if (!no_op) r -= k.action_penalty;
  if (all_in) r += k.success_bonus;
  return r;
}

double clipped_reward(const std::vector<double>& prev, const std::vector<double>& next,
                      bool no_op, const EnvConfig& c) {
  int better = 0, worse = 0, oob = 0;
  for (std::size_t i = 0; i < next.size(); ++i) {
    const double d1 = band_distance(next[i], c.band_low, c.band_high);
    oob += d1 > 0.0;
    // A bus counts as moving only if its voltage moved past the noise floor.
    if (std::abs(next[i] - prev[i]) < c.move_threshold) continue;
    const double d0 = band_distance(prev[i], c.band_low, c.band_high);
    better += d1 < d0;
    worse += d1 > d0;
  }
  if (oob == 0) return 1.0;
  const int m = better - worse;
  if (m == 0) return no_op ? 0.0 : -0.10;
  const int mag = std::abs(m);
  const int third = (oob + 2) / 3;
  const int two_thirds = (2 * oob + 2) / 3;
  const double tier = mag <= third ? 0.25 : mag <= two_thirds ? 0.50 : 0.75;
  return m > 0 ? tier : -tier;
}

double gridmind_step_reward(const std::vector<double>& v, const EnvConfig& c) {
  const auto& g = c.gridmind;
  bool outer = false;
  for (double x : v) {
    if (x < g.outer_low || x > g.outer_high) return g.far;
    outer = outer || x < c.band_low || x > c.band_high;
  }
  return outer ? g.outer : g.in_band;
}

// --- environment ----------------------------------------------------------------

namespace {

std::size_t tuple_count(std::size_t n_v, std::size_t n_g, std::size_t limit) {
  std::size_t n = 1;
  for (std::size_t g = 0; g < n_g; ++g) {
    if (n > limit / n_v) return limit + 1;
    n *= n_v;
  }
  return n;
}

}  // namespace

VoltageEnv::VoltageEnv(NetworkCase net, EnvConfig config, ScenarioConfig scenario_config,
                       std::uint64_t scenario_seed)
    : net_(std::move(net)),
      config_(std::move(config)),
      sampler_(net_, std::move(scenario_config)),
      scenario_seed_(scenario_seed),
      codec_(net_.generators.size(), config_.setpoints.size(), net_.shunts.size()) {
  check(config_);
  const std::size_t n_g = net_.generators.size();
  if (config_.action_space == ActionSpace::kTuple) {
    n_actions_ = tuple_count(config_.setpoints.size(), n_g, config_.tuple_action_limit);
    if (n_actions_ > config_.tuple_action_limit) {
      throw ConfigError("env.action_space",
                        "tuple action space exceeds " +
                            std::to_string(config_.tuple_action_limit) + " actions");
    }
  } else {
    n_actions_ = codec_.count();
  }
  cap_ = config_.action_cap > 0 ? config_.action_cap : static_cast<int>(2 * n_g);
  obs_size_ = net_.buses.size();
  if (config_.observation.gen_states) obs_size_ += n_g;
  if (config_.observation.branch_states) obs_size_ += net_.branches.size();
  if (config_.observation.shunt_states) obs_size_ += net_.shunts.size();

  bus_order_.resize(net_.buses.size());
  std::iota(bus_order_.begin(), bus_order_.end(), std::size_t{0});
  std::sort(bus_order_.begin(), bus_order_.end(), [&](std::size_t a, std::size_t b) {
    return net_.buses[a].id < net_.buses[b].id;
  });
  last_v_.assign(net_.buses.size(), 1.0);
  state_ = net_;
}

Observation VoltageEnv::reset() {
  episode_ = next_episode_++;
  return reset(sampler_.sample(scenario_seed_, episode_));
}

Observation VoltageEnv::reset(const Scenario& scenario) {
  state_ = apply_scenario(net_, scenario);
  std::vector<double> v;
  const bool ok = solve_state(v);
  dead_on_arrival_ = !ok;
  last_v_ = ok ? v : std::vector<double>(net_.buses.size(), 1.0);
  initial_oob_ = ok ? count_oob(v) : 0;
  started_in_band_ = ok && initial_oob_ == 0;
  active_ = true;
  done_ = false;
  actions_taken_ = 0;
  episode_rewards_.clear();
  trace_.clear();
  return observe();
}

StepResult VoltageEnv::step(std::size_t action) {
  if (!active_) throw StateError("step() before reset()");
  if (done_) throw StateError("step() on a finished episode");
  if (action >= n_actions_) throw StateError("action id " + std::to_string(action) + " out of range");

  StepResult r;
  r.info.action_count = ++actions_taken_;
  bool converged_in_bounds = true;
  if (dead_on_arrival_) {
    converged_in_bounds = false;
    r.reward = failure_reward();
  } else if (started_in_band_) {
    r.reward = success_reward();
    r.info.all_in_band = true;
  } else {
    apply(action);
    std::vector<double> v;
    converged_in_bounds = solve_state(v);
    if (!converged_in_bounds) {
      r.reward = failure_reward();
    } else {
      const bool no_op =
          config_.action_space == ActionSpace::kPerGenerator && action == 0;
      switch (config_.reward_scheme) {
        case RewardScheme::kMovement:
          r.reward = movement_reward(last_v_, v, no_op, config_);
          break;
        case RewardScheme::kClipped:
          r.reward = clipped_reward(last_v_, v, no_op, config_);
          break;
        case RewardScheme::kGridMind:
          r.reward = gridmind_step_reward(v, config_);
          break;
      }
      last_v_ = std::move(v);
      r.info.all_in_band = count_oob(last_v_) == 0;
    }
  }
  r.info.diverged = !converged_in_bounds;
  r.info.oob_bus_count =
      converged_in_bounds ? count_oob(last_v_) : static_cast<int>(net_.buses.size());
  r.done = r.info.diverged || r.info.all_in_band;
  if (!r.done && actions_taken_ >= cap_) {
    r.done = true;
    r.info.capped = true;
  }
  episode_rewards_.push_back(r.reward);
  if (r.done && config_.reward_scheme == RewardScheme::kGridMind) {
    r.reward += std::accumulate(episode_rewards_.begin(), episode_rewards_.end(), 0.0) /
                static_cast<double>(episode_rewards_.size());
  }
  done_ = r.done;
  if (config_.record_trace) {
    trace_.push_back({action, r.reward,
                      converged_in_bounds ? last_v_ : std::vector<double>{}});
  }
  r.observation = observe();
  return r;
}

void VoltageEnv::apply(std::size_t action) {
  if (config_.action_space == ActionSpace::kTuple) {
    const std::size_t n_v = config_.setpoints.size();
    for (auto& gen : state_.generators) {
      gen.v_setpoint = config_.setpoints[action % n_v];
      action /= n_v;
    }
    return;
  }
  const Action a = codec_.decode(action);
  switch (a.kind) {
    case ActionKind::kNoOp:
      break;
    case ActionKind::kGenSetpoint:
      // Stored even for an offline unit, where it has no electrical effect.
      state_.generators[a.gen].v_setpoint = config_.setpoints[a.setpoint];
      break;
    case ActionKind::kShuntToggle:
      state_.shunts[a.shunt].closed = !state_.shunts[a.shunt].closed;
      break;
  }
}

bool VoltageEnv::solve_state(std::vector<double>& v_sorted) {
  solution_ = solve(state_, config_.solver);
  if (!solution_.converged()) return false;
  v_sorted.resize(bus_order_.size());
  for (std::size_t j = 0; j < bus_order_.size(); ++j) {
    const double v = solution_.v[bus_order_[j]];
    if (v < config_.fail_low || v > config_.fail_high) return false;
    v_sorted[j] = v;
  }
  return true;
}

Observation VoltageEnv::observe() const {
  Observation obs;
  obs.reserve(obs_size_);
  const double span = config_.fail_high - config_.fail_low;
  for (double v : last_v_) {
    obs.push_back(config_.min_max_voltages
                      ? std::clamp((v - config_.fail_low) / span, 0.0, 1.0)
                      : v);
  }
  if (config_.observation.gen_states) {
    for (const auto& g : state_.generators) obs.push_back(g.in_service ? 1.0 : 0.0);
  }
  if (config_.observation.branch_states) {
    for (const auto& b : state_.branches) obs.push_back(b.in_service ? 1.0 : 0.0);
  }
  if (config_.observation.shunt_states) {
    for (const auto& s : state_.shunts) obs.push_back(s.closed ? 1.0 : 0.0);
  }
  return obs;
}

int VoltageEnv::count_oob(const std::vector<double>& v) const {
  int n = 0;
  for (double x : v) n += x < config_.band_low || x > config_.band_high;
  return n;
}

double VoltageEnv::failure_reward() const {
  switch (config_.reward_scheme) {
    case RewardScheme::kMovement:
      return config_.movement.diverge_penalty;
    case RewardScheme::kClipped:
      return -1.0;
    case RewardScheme::kGridMind:
      return config_.gridmind.far;
  }
  return 0.0;
}

double VoltageEnv::success_reward() const {
  switch (config_.reward_scheme) {
    case RewardScheme::kMovement:
      return config_.movement.success_bonus;
    case RewardScheme::kClipped:
      return 1.0;
    case RewardScheme::kGridMind:
      return config_.gridmind.in_band;
  }
  return 0.0;
}

}  // namespace voltgrid
