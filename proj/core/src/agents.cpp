#include "voltgrid/agents.hpp"

#include <algorithm>
#include <exception>
#include <limits>
#include <queue>
#include <thread>

#include <nlohmann/json.hpp>

#include "voltgrid/error.hpp"

namespace voltgrid {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Whether toggling the shunt pushes the bus voltage in the wanted direction.
bool corrective_toggle(const Shunt& s, bool raise) {
  const bool closing = !s.closed;
  const bool capacitive = s.q_nominal > 0.0;
  return raise ? closing == capacitive : closing != capacitive;
}

// Index of the nearest set point strictly above (or below) `current`.
std::optional<std::size_t> next_setpoint(const std::vector<double>& setpoints, double current,
                                         bool up) {
  constexpr double kEps = 1e-12;
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < setpoints.size(); ++k) {
    const double s = setpoints[k];
    if (up ? s <= current + kEps : s >= current - kEps) continue;
    if (!best || (up ? s < setpoints[*best] : s > setpoints[*best])) best = k;
  }
  return best;
}

}  // namespace

DqnPolicy::DqnPolicy(Parameters params, bool unique_actions, std::string name)
    : params_(std::move(params)),
      unique_(unique_actions),
      name_(std::move(name)),
      mask_(params_.spec.n_actions) {}

void DqnPolicy::begin_episode(const VoltageEnv& env, std::uint64_t) {
  if (env.action_count() != params_.spec.n_actions ||
      env.observation_size() != params_.spec.input_dim) {
    throw SpecMismatchError("network " + describe(params_.spec) + " does not fit an environment with " +
                            std::to_string(env.observation_size()) + " observations and " +
                            std::to_string(env.action_count()) + " actions");
  }
  mask_.clear();
}

std::size_t DqnPolicy::act(const VoltageEnv&, const Observation& obs) {
  const Eigen::MatrixXd row = Eigen::Map<const Eigen::RowVectorXd>(
      obs.data(), static_cast<Eigen::Index>(obs.size()));
  const Eigen::MatrixXd q = forward(params_, row);
  return select_action(q.row(0).transpose(), mask_, unique_, 0.0, unused_);
}

RandomAgent::RandomAgent(std::uint64_t seed, bool unique_actions)
    : seed_(seed), unique_(unique_actions), rng_(seed) {}

void RandomAgent::begin_episode(const VoltageEnv& env, std::uint64_t episode) {
  rng_ = Rng(stream_seed(seed_, episode));
  if (mask_.action_count() != env.action_count()) mask_ = ActionMask(env.action_count());
  mask_.clear();
}

std::size_t RandomAgent::act(const VoltageEnv& env, const Observation&) {
  const Eigen::VectorXd flat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(env.action_count()));
  return select_action(flat, mask_, unique_, 1.0, rng_);
}

void GraphAgent::begin_episode(const VoltageEnv& env, std::uint64_t) {
  if (env.config().action_space != ActionSpace::kPerGenerator) {
    throw ConfigError("env.action_space", "the graph agent needs per-generator actions");
  }
  if (used_.action_count() != env.action_count()) used_ = ActionMask(env.action_count());
  used_.clear();
}

std::vector<double> reactance_distances(const NetworkCase& net, std::size_t source) {
  const BusIndex index(net);
  std::vector<std::vector<std::pair<std::size_t, double>>> edges(net.buses.size());
  for (const Branch& br : net.branches) {
    if (!br.in_service) continue;
    const std::size_t a = index.at(br.from_bus), b = index.at(br.to_bus);
    edges[a].emplace_back(b, std::abs(br.x));
    edges[b].emplace_back(a, std::abs(br.x));
  }
  std::vector<double> dist(net.buses.size(), kInf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[source] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) continue;
    for (const auto& [v, w] : edges[u]) {
      if (d + w < dist[v]) {
        dist[v] = d + w;
        heap.emplace(dist[v], v);
      }
    }
  }
  return dist;
}

std::size_t GraphAgent::act(const VoltageEnv& env, const Observation&) {
  const NetworkCase& net = env.state();
  const PowerFlowSolution& sol = env.solution();
  const EnvConfig& cfg = env.config();
  if (!sol.converged()) return 0;

  std::optional<std::size_t> worst;
  double worst_d = 0.0;
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const double d = band_distance(sol.v[i], cfg.band_low, cfg.band_high);
    if (d > worst_d) {
      worst_d = d;
      worst = i;
    }
  }
  if (!worst) return 0;
  const std::size_t b = *worst;
  const bool raise = sol.v[b] < cfg.band_low;
  const ActionCodec& codec = env.codec();
  auto take = [&](const Action& a) -> std::optional<std::size_t> {
    const std::size_t id = codec.encode(a);
    if (used_.contains(id)) return std::nullopt;
    used_.mark(id);
    return id;
  };

  if (!net.shunts.empty()) {
    const auto adj = adjacency(net);
    const BusIndex index(net);
    for (int ring = 0; ring < 2; ++ring) {
      for (std::size_t s = 0; s < net.shunts.size(); ++s) {
        const std::size_t at = index.at(net.shunts[s].bus);
        const bool here = ring == 0 ? at == b
                                    : std::find(adj[b].begin(), adj[b].end(), at) != adj[b].end();
        if (!here || !corrective_toggle(net.shunts[s], raise)) continue;
        if (auto id = take({ActionKind::kShuntToggle, 0, 0, s})) return *id;
      }
    }
  }

  const std::vector<double> dist = reactance_distances(net, b);
  const BusIndex index(net);
  std::vector<std::pair<double, std::size_t>> gens;
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    if (!net.generators[g].in_service) continue;
    const double d = dist[index.at(net.generators[g].bus)];
    if (d < kInf) gens.emplace_back(d, g);
  }
  std::sort(gens.begin(), gens.end());
  for (const auto& [d, g] : gens) {
    const auto k = next_setpoint(cfg.setpoints, net.generators[g].v_setpoint, raise);
    if (!k) continue;
    if (auto id = take({ActionKind::kGenSetpoint, g, *k, 0})) return *id;
  }
  return 0;
}

void summarize(EvalReport& r) {
  r.episodes = r.records.size();
  r.dead_on_arrival = 0;
  r.oob_episodes = 0;
  std::size_t scored = 0, successes = 0, oob_successes = 0;
  double reward = 0.0, success_actions = 0.0;
  for (const auto& e : r.records) {
    if (e.dead_on_arrival) {
      ++r.dead_on_arrival;
      continue;
    }
    ++scored;
    reward += e.reward;
    successes += e.success;
    if (e.initial_oob > 0) {
      ++r.oob_episodes;
      if (e.success) {
        ++oob_successes;
        success_actions += static_cast<double>(e.actions.size());
      }
    }
  }
  r.ps = scored ? 100.0 * static_cast<double>(successes) / static_cast<double>(scored) : 0.0;
  r.psoobv = r.oob_episodes ? 100.0 * static_cast<double>(oob_successes) /
                                  static_cast<double>(r.oob_episodes)
                            : 0.0;
  r.mean_reward = scored ? reward / static_cast<double>(scored) : 0.0;
  r.mean_actions_per_success =
      oob_successes ? success_actions / static_cast<double>(oob_successes) : 0.0;
}

EvalReport evaluate(const Policy& policy, const VoltageEnv& env,
                    const std::vector<Scenario>& scenarios, unsigned threads) {
  EvalReport report;
  report.agent = policy.name();
  report.records.resize(scenarios.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(scenarios.size())));

  auto work = [&](unsigned worker) {
    VoltageEnv e = env;
    std::unique_ptr<Policy> p = policy.clone();
    for (std::size_t i = worker; i < scenarios.size(); i += threads) {
      EpisodeRecord& rec = report.records[i];
      rec.index = i;
      Observation obs = e.reset(scenarios[i]);
      rec.dead_on_arrival = e.dead_on_arrival();
      rec.started_in_band = e.started_in_band();
      rec.initial_oob = e.initial_oob_count();
      if (rec.dead_on_arrival) continue;
      p->begin_episode(e, i);
      for (;;) {
        const std::size_t a = p->act(e, obs);
        StepResult res = e.step(a);
        rec.actions.push_back(a);
        rec.reward += res.reward;
        obs = std::move(res.observation);
        if (res.done) {
          rec.success = res.info.all_in_band;
          break;
        }
      }
    }
  };

  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }
  summarize(report);
  return report;
}

void to_json(json& out, const EpisodeRecord& e) {
  out = json{{"index", e.index},
             {"dead_on_arrival", e.dead_on_arrival},
             {"started_in_band", e.started_in_band},
             {"initial_oob", e.initial_oob},
             {"success", e.success},
             {"reward", e.reward},
             {"actions", e.actions}};
}

void to_json(json& out, const EvalReport& r) {
  out = json{{"agent", r.agent},
             {"seed", r.seed},
             {"config_fingerprint", r.config_fingerprint},
             {"manifest_id", r.manifest_id},
             {"episodes", r.episodes},
             {"dead_on_arrival", r.dead_on_arrival},
             {"oob_episodes", r.oob_episodes},
             {"ps", r.ps},
             {"psoobv", r.psoobv},
             {"mean_reward", r.mean_reward},
             {"mean_actions_per_success", r.mean_actions_per_success},
             {"records", r.records}};
}

EvalReport eval_report_from_json(const json& in) {
  try {
    EvalReport r;
    r.agent = in.at("agent").get<std::string>();
    r.seed = in.at("seed").get<std::uint64_t>();
    r.config_fingerprint = in.at("config_fingerprint").get<std::string>();
    r.manifest_id = in.at("manifest_id").get<std::string>();
    for (const auto& e : in.at("records")) {
      EpisodeRecord rec;
      rec.index = e.at("index").get<std::uint64_t>();
      rec.dead_on_arrival = e.at("dead_on_arrival").get<bool>();
      rec.started_in_band = e.at("started_in_band").get<bool>();
      rec.initial_oob = e.at("initial_oob").get<int>();
      rec.success = e.at("success").get<bool>();
      rec.reward = e.at("reward").get<double>();
      rec.actions = e.at("actions").get<std::vector<std::size_t>>();
      r.records.push_back(std::move(rec));
    }
    summarize(r);
    return r;
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("evaluation report: ") + e.what());
  }
}

}  // namespace voltgrid
