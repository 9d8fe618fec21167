// Runs the acceptance criteria and prints one PASS/FAIL line for each.
//
// The exit status reports whether every requested criterion could be
// evaluated, not whether it passed; --strict turns any FAIL into status 1.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "support/chain_mdp.hpp"
#include "support/crafted.hpp"
#include "support/oracle.hpp"
#include "voltgrid/agents.hpp"
#include "voltgrid/case_io.hpp"
#include "voltgrid/dqn.hpp"
#include "voltgrid/experiment.hpp"
#include "voltgrid/nn.hpp"
#include "voltgrid/powerflow.hpp"
#include "voltgrid/replay.hpp"
#include "voltgrid/scenario.hpp"

namespace voltgrid::acceptance {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::data_path;

struct Verdict {
  bool pass = false;
  std::string detail;
  json evidence;  // compared across reruns for the determinism criterion
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

NetworkCase open_case(const std::string& file) {
  return load_case(data_path("cases/" + file), CaseFormat::kNative);
}

ScenarioConfig standard_scenarios() {
  ScenarioConfig c;
  c.contingency_branches = {{1, 5}, {2, 3}, {4, 5}, {7, 9}};
  return c;
}

fs::path config_path(const std::string& name) {
  return fs::path(VOLTGRID_SOURCE_DIR) / "configs" / name;
}

// ---------------------------------------------------------------- 1

Verdict power_flow_oracle() {
  Stopwatch clock;
  double worst_v = 0.0, worst_a = 0.0;
  bool converged = true;
  json evidence;
  for (const char* name : {"ieee14", "activsg200", "activsg500"}) {
    const NetworkCase net = open_case(std::string(name) + ".json");
    const PowerFlowSolution sol = solve(net);
    converged = converged && sol.converged();
    const auto ref = testing::read_reference("reference_" + std::string(name) + ".csv");
    double dv = 0.0, da = 0.0;
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
      const auto& r = ref.at(net.buses[i].id);
      dv = std::max(dv, std::abs(sol.v[i] - r.vm));
      da = std::max(da, std::abs(sol.theta[i] - r.va));
    }
    worst_v = std::max(worst_v, dv);
    worst_a = std::max(worst_a, da);
    evidence[name] = {{"max_dv", dv}, {"max_dtheta", da}, {"iterations", sol.iterations}};
  }
  const double t = clock.seconds();
  Verdict v;
  v.pass = converged && worst_v <= 1e-4 && worst_a <= 1e-3 && t < 1.0;
  v.detail = std::string(converged ? "all converged" : "a base case failed") + ", max |dV| " +
             fmt("%.2e", worst_v) + " pu, max |dtheta| " + fmt("%.2e", worst_a) + " rad, " +
             fmt("%.2f", t) + " s";
  v.evidence = evidence;
  return v;
}

// ---------------------------------------------------------------- 2

Verdict mismatch_invariant() {
  Stopwatch clock;
  const NetworkCase net = open_case("ieee14.json");
  const ScenarioSampler sampler(net, standard_scenarios());
  int converged = 0, skipped = 0, bad = 0;
  double worst = 0.0;
  for (std::uint64_t i = 0; converged < 1000; ++i) {
    const NetworkCase state = apply_scenario(net, sampler.sample(77, i));
    const PowerFlowSolution sol = solve(state);
    if (!sol.converged()) {
      ++skipped;
      continue;
    }
    ++converged;
    const auto m = testing::recompute_mismatch(state, sol);
    worst = std::max({worst, m.p, m.q});
    bad += m.p > 1e-6 || m.q > 1e-6;
  }
  const double t = clock.seconds();
  Verdict v;
  v.pass = bad == 0 && t < 60.0;
  v.detail = std::to_string(converged) + " converged solves (" + std::to_string(skipped) +
             " non-convergent draws skipped), " + std::to_string(bad) +
             " over 1e-6, worst mismatch " + fmt("%.2e", worst) + " pu, " + fmt("%.1f", t) + " s";
  v.evidence = {{"worst", worst}, {"skipped", skipped}};
  return v;
}

// ---------------------------------------------------------------- 3

Verdict sampler_statistics() {
  Stopwatch clock;
  const NetworkCase net = open_case("ieee14.json");
  const ScenarioConfig config = standard_scenarios();
  const ScenarioSampler sampler(net, config);
  const double base = net.total_load_mw();
  const int n = 10000;
  int total_ok = 0, capacity_ok = 0;
  std::size_t leading = 0, loads = 0;
  std::vector<std::map<double, int>> setpoints(net.generators.size());
  for (int i = 0; i < n; ++i) {
    const Scenario s = sampler.sample(2024, static_cast<std::uint64_t>(i));
    total_ok += s.total_load_p >= 0.6 * base && s.total_load_p <= 1.4 * base;
    double committed = 0.0;
    for (std::size_t g = 0; g < s.gen_on.size(); ++g) {
      if (s.gen_on[g]) committed += s.gen_p[g];
      ++setpoints[g][s.gen_v[g]];
    }
    capacity_ok += committed >= 1.03 * s.total_load_p;
    for (double q : s.load_q) {
      leading += q < 0.0;
      ++loads;
    }
  }
  const double leading_fraction = static_cast<double>(leading) / static_cast<double>(loads);
  double worst_freq = 0.0;
  bool all_values = true;
  for (const auto& m : setpoints) {
    all_values = all_values && m.size() == config.setpoints.size();
    for (const auto& [value, count] : m) {
      worst_freq = std::max(worst_freq, std::abs(static_cast<double>(count) / n - 0.2));
    }
  }
  const double t = clock.seconds();
  Verdict v;
  v.pass = total_ok == n && capacity_ok == n && std::abs(leading_fraction - 0.10) <= 0.01 &&
           all_values && worst_freq <= 0.015 && t < 30.0;
  v.detail = "totals in range " + std::to_string(total_ok) + "/" + std::to_string(n) +
             ", capacity >= 1.03x load " + std::to_string(capacity_ok) + "/" + std::to_string(n) +
             ", leading pf " + fmt("%.4f", leading_fraction) + ", worst set-point deviation " +
             fmt("%.4f", worst_freq) + ", " + fmt("%.1f", t) + " s";
  json freq = json::array();
  for (const auto& m : setpoints) {
    json row = json::object();
    for (const auto& [value, count] : m) row[fmt("%.3f", value)] = count;
    freq.push_back(row);
  }
  v.evidence = {{"leading", leading}, {"loads", loads}, {"setpoints", freq},
                {"total_ok", total_ok}, {"capacity_ok", capacity_ok}};
  return v;
}

// ---------------------------------------------------------------- 4

// Weighted Huber loss written out from the Q table, independent of backward.
double reference_loss(const Parameters& p, const Eigen::MatrixXd& obs, const Eigen::VectorXd& w,
                      const std::vector<std::size_t>& actions, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd q = forward(p, obs);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < obs.rows(); ++i) {
    const double e = q(i, static_cast<Eigen::Index>(actions[static_cast<std::size_t>(i)])) - y(i);
    const double a = std::abs(e);
    loss += w(i) * (a <= 1.0 ? 0.5 * e * e : a - 0.5);
  }
  return loss / static_cast<double>(obs.rows());
}

Verdict gradient_check() {
  Stopwatch clock;
  Rng rng(4242);
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t entries = 0;
  for (int net = 0; net < 20; ++net) {
    MlpSpec spec;
    spec.input_dim = 2 + rng.below(6);
    spec.hidden.resize(1 + rng.below(2));
    for (auto& width : spec.hidden) width = 2 + rng.below(8);
    spec.n_actions = 2 + rng.below(6);
    spec.dueling = true;
    Parameters p = init_params(spec, rng);
    const Eigen::Index batch = 1 + static_cast<Eigen::Index>(rng.below(6));
    Eigen::MatrixXd obs(batch, static_cast<Eigen::Index>(spec.input_dim));
    for (Eigen::Index k = 0; k < obs.size(); ++k) obs.data()[k] = rng.uniform(-1.0, 1.0);
    Eigen::VectorXd w(batch), y(batch);
    std::vector<std::size_t> actions(static_cast<std::size_t>(batch));
    for (Eigen::Index i = 0; i < batch; ++i) {
      w(i) = rng.uniform(0.2, 1.0);
      y(i) = rng.uniform(-2.0, 2.0);
      actions[static_cast<std::size_t>(i)] = rng.below(spec.n_actions);
    }
    const Gradients g = backward(p, obs, w, actions, y);
    auto sweep = [&](double* data, const double* grad, Eigen::Index n) {
      for (Eigen::Index k = 0; k < n; ++k) {
        const double saved = data[k];
        data[k] = saved + h;
        const double up = reference_loss(p, obs, w, actions, y);
        data[k] = saved - h;
        const double down = reference_loss(p, obs, w, actions, y);
        data[k] = saved;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max({std::abs(numeric), std::abs(grad[k]), 1e-6});
        worst = std::max(worst, std::abs(numeric - grad[k]) / scale);
        ++entries;
      }
    };
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      sweep(p.weights[l].data(), g.grads.weights[l].data(), p.weights[l].size());
      sweep(p.biases[l].data(), g.grads.biases[l].data(), p.biases[l].size());
    }
  }
  const double t = clock.seconds();
  Verdict v;
  v.pass = worst < 1e-4 && t < 30.0;
  v.detail = "20 dueling networks, " + std::to_string(entries) + " entries, worst relative error " +
             fmt("%.2e", worst) + ", " + fmt("%.2f", t) + " s";
  v.evidence = {{"worst", worst}};
  return v;
}

// ---------------------------------------------------------------- 5

Verdict replay_frequencies() {
  Stopwatch clock;
  const double floor = 1e-6;
  PrioritizedReplay replay(3, 1.0, floor);
  const Observation obs{0.0};
  for (std::size_t a = 0; a < 3; ++a) replay.add({obs, a, 0.0, obs, false});
  replay.update_priorities({0, 1, 2}, {1.0 - floor, 2.0 - floor, 4.0 - floor});
  Rng rng(5);
  std::vector<int> counts(3, 0);
  const int draws = 100000;
  for (int done = 0; done < draws; done += 32) {
    const auto batch = replay.sample(std::min(32, draws - done), 1.0, rng);
    for (std::size_t i : batch.indices) ++counts[i];
  }
  const double expected[3] = {1.0 / 7, 2.0 / 7, 4.0 / 7};
  double worst = 0.0;
  std::string freq;
  for (int k = 0; k < 3; ++k) {
    const double f = static_cast<double>(counts[k]) / draws;
    worst = std::max(worst, std::abs(f - expected[k]));
    freq += (k ? "/" : "") + fmt("%.4f", f);
  }
  const double t = clock.seconds();
  Verdict v;
  v.pass = worst <= 0.01 && t < 10.0;
  v.detail = "frequencies " + freq + " vs 0.1429/0.2857/0.5714, worst deviation " +
             fmt("%.4f", worst) + ", " + fmt("%.2f", t) + " s";
  v.evidence = {{"counts", counts}};
  return v;
}

// ---------------------------------------------------------------- 6

Verdict chain_convergence() {
  Stopwatch clock;
  DqnConfig config;  // dueling, double Q, prioritized replay
  // With two actions the once-per-episode rule would exhaust the action set.
  config.unique_actions = false;
  const auto q_star = testing::ChainMdp::optimal_q(config.gamma);
  int solved = 0;
  double worst_q = 0.0;
  json evidence = json::array();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    testing::ChainMdp env;
    const TrainingResult r = train(env, config, 20000, seed);
    bool optimal = true;
    json q_values = json::array();
    for (std::size_t s = 0; s + 1 < testing::ChainMdp::kStates; ++s) {
      Eigen::MatrixXd x(1, static_cast<Eigen::Index>(testing::ChainMdp::kStates));
      const auto hot = testing::ChainMdp::one_hot(s);
      for (std::size_t k = 0; k < hot.size(); ++k) x(0, static_cast<Eigen::Index>(k)) = hot[k];
      const Eigen::MatrixXd q = forward(r.online, x);
      const std::size_t greedy = q(0, 1) > q(0, 0) ? 1 : 0;
      const std::size_t best = q_star[s][1] > q_star[s][0] ? 1 : 0;
      optimal = optimal && greedy == best;
      worst_q = std::max({worst_q, std::abs(q(0, 0) - q_star[s][0]), std::abs(q(0, 1) - q_star[s][1])});
      q_values.push_back({q(0, 0), q(0, 1)});
    }
    solved += optimal;
    evidence.push_back(q_values);
  }
  const double t = clock.seconds();
  Verdict v;
  v.pass = solved >= 9 && t < 300.0;
  v.detail = std::to_string(solved) + "/10 seeds greedy-optimal after 20000 steps, worst |Q - Q*| " +
             fmt("%.3f", worst_q) + ", " + fmt("%.1f", t) + " s";
  v.evidence = evidence;
  return v;
}

// ---------------------------------------------------------------- 8

struct DeskScaleRun {
  std::vector<EvalReport> random_plain, random_unique, dqn_unique, dqn_plain;
  EvalReport graph;
  double seconds = 0.0;
};

double mean_psoobv(const std::vector<EvalReport>& reports) {
  double sum = 0.0;
  for (const auto& r : reports) sum += r.psoobv;
  return reports.empty() ? 0.0 : sum / static_cast<double>(reports.size());
}

DeskScaleRun run_desk_scale(unsigned threads) {
  Stopwatch clock;
  ExperimentConfig c = load_experiment(config_path("ieee14.json"));
  c.eval_threads = threads;
  const NetworkCase net = load_experiment_case(c);
  const ScenarioManifest test = test_manifest(c, net);
  DeskScaleRun run;

  ExperimentConfig graph = c;
  graph.agent = AgentKind::kGraph;
  run.graph = run_evaluation(graph, net, *make_baseline(graph, 0), test, 0);

  for (std::uint64_t seed : c.seeds) {
    for (bool unique : {false, true}) {
      ExperimentConfig random = c;
      random.agent = AgentKind::kRandom;
      random.unique_actions = unique;
      (unique ? run.random_unique : run.random_plain)
          .push_back(run_evaluation(random, net, *make_baseline(random, seed), test, seed));

      ExperimentConfig dqn = c;
      dqn.unique_actions = unique;
      require_disjoint(dqn, net, test, seed);
      VoltageEnv env = make_env(dqn, net, training_scenario_seed(seed));
      const TrainingResult trained = train(env, effective_dqn(dqn), dqn.total_steps, seed);
      const DqnPolicy policy(trained.online, unique);
      (unique ? run.dqn_unique : run.dqn_plain)
          .push_back(run_evaluation(dqn, net, policy, test, seed));
    }
  }
  run.seconds = clock.seconds();
  return run;
}

json evidence_of(const DeskScaleRun& run) {
  auto dump = [](const std::vector<EvalReport>& v) {
    json out = json::array();
    for (const auto& r : v) out.push_back(r);
    return out;
  };
  return {{"graph", run.graph},
          {"random", dump(run.random_plain)},
          {"random_uae", dump(run.random_unique)},
          {"dqn_uae", dump(run.dqn_unique)},
          {"dqn", dump(run.dqn_plain)}};
}

std::string seed_list(const std::vector<EvalReport>& reports) {
  std::string out;
  for (const auto& r : reports) out += (out.empty() ? "" : "/") + fmt("%.1f", r.psoobv);
  return out;
}

Verdict desk_scale(const DeskScaleRun& run) {
  const double graph = run.graph.psoobv;
  const double random = mean_psoobv(run.random_plain);
  const double random_uae = mean_psoobv(run.random_unique);
  const double dqn_uae = mean_psoobv(run.dqn_unique);
  const double dqn = mean_psoobv(run.dqn_plain);
  const bool a = graph >= 25.0 && graph <= 55.0;
  const bool b = random >= 8.0 && random <= 25.0 && random_uae >= 8.0 && random_uae <= 25.0;
  const bool c = dqn_uae > std::max(random, random_uae);
  const bool d = dqn_uae >= dqn;
  auto mark = [](bool ok) { return ok ? "ok" : "FAIL"; };
  Verdict v;
  v.pass = a && b && c && d && run.seconds < 7200.0;
  v.detail = std::string("(a) graph ") + fmt("%.1f", graph) + " " + mark(a) + "; (b) random " +
             fmt("%.1f", random) + ", random-uae " + fmt("%.1f", random_uae) + " " + mark(b) +
             "; (c) dqn uae+mmv+rs1 " + fmt("%.1f", dqn_uae) + " [" + seed_list(run.dqn_unique) +
             "] " + mark(c) + "; (d) no-uae " + fmt("%.1f", dqn) + " [" +
             seed_list(run.dqn_plain) + "] " + mark(d) + "; " + std::to_string(run.graph.episodes) +
             " episodes (" + std::to_string(run.graph.dead_on_arrival) + " unsolvable at start, " +
             std::to_string(run.graph.oob_episodes) + " out of band), " +
             fmt("%.0f", run.seconds) + " s";
  v.evidence = evidence_of(run);
  return v;
}

// ---------------------------------------------------------------- 7

Verdict unique_actions(const DeskScaleRun& run) {
  // Exhaustive trace check over every evaluation episode run with the rule on.
  std::size_t episodes = 0, repeats = 0;
  for (const auto* set : {&run.dqn_unique, &run.random_unique}) {
    for (const auto& report : *set) {
      for (const auto& rec : report.records) {
        ++episodes;
        const std::set<std::size_t> distinct(rec.actions.begin(), rec.actions.end());
        repeats += distinct.size() != rec.actions.size();
      }
    }
  }

  // A crafted stuck state: the preferred action is a set point the unit
  // already holds, so it changes nothing.
  NetworkCase net = testing::four_bus();
  net.loads[0] = Load{4, 150, 90};
  VoltageEnv env(net, EnvConfig{}, ScenarioConfig{}, 0);
  env.reset(base_scenario(net));
  std::vector<double> q(env.action_count(), 0.0);
  q[env.codec().encode({ActionKind::kGenSetpoint, 0, 0, 0})] = 1.0;
  const Parameters params = testing::constant_q(env.observation_size(), q);
  const std::vector<Scenario> stuck_set{base_scenario(net)};
  const auto off = evaluate(DqnPolicy(params, false), env, stuck_set).records.at(0);
  const auto on = evaluate(DqnPolicy(params, true), env, stuck_set).records.at(0);
  const std::set<std::size_t> off_distinct(off.actions.begin(), off.actions.end());
  const std::set<std::size_t> on_distinct(on.actions.begin(), on.actions.end());
  const bool reproduced = !env.started_in_band() && !off.success && off_distinct.size() == 1 &&
                          off.actions.size() == static_cast<std::size_t>(env.action_cap());
  const bool masked = on_distinct.size() == on.actions.size();

  Verdict v;
  v.pass = episodes > 0 && repeats == 0 && reproduced && masked;
  v.detail = std::to_string(repeats) + " repeats across " + std::to_string(episodes) +
             " unique-action episodes; stuck case without the rule repeats one action " +
             std::to_string(off.actions.size()) + " times (" + (reproduced ? "reproduced" : "NOT reproduced") +
             "), with it takes " + std::to_string(on.actions.size()) + " distinct actions";
  v.evidence = {{"repeats", repeats}, {"off", off.actions}, {"on", on.actions}};
  return v;
}

// ---------------------------------------------------------------- 9

Verdict gridmind(unsigned threads) {
  Stopwatch clock;
  ExperimentConfig c = load_experiment(config_path("ieee14_gridmind.json"));
  c.eval_threads = threads;
  const NetworkCase net = load_experiment_case(c);
  const ScenarioManifest test = test_manifest(c, net);
  const std::uint64_t seed = c.seeds.front();
  require_disjoint(c, net, test, seed);
  VoltageEnv env = make_env(c, net, training_scenario_seed(seed));
  const TrainingResult trained = train(env, effective_dqn(c), c.total_steps, seed);
  const EvalReport r =
      run_evaluation(c, net, DqnPolicy(trained.online, c.unique_actions), test, seed);
  Verdict v;
  v.pass = r.ps >= 90.0;
  v.detail = "PS " + fmt("%.1f", r.ps) + "% over " + std::to_string(r.episodes) +
             " episodes after " + std::to_string(c.total_steps) + " steps (" +
             std::to_string(env.action_count()) + " joint actions), " +
             fmt("%.0f", clock.seconds()) + " s";
  v.evidence = r;
  return v;
}

// ---------------------------------------------------------------- driver

struct Criterion {
  int id;
  const char* title;
};

constexpr Criterion kCriteria[] = {
    {1, "power flow oracle equivalence"},
    {2, "mismatch invariant"},
    {3, "scenario sampler statistics"},
    {4, "gradient check"},
    {5, "prioritized replay frequencies"},
    {6, "known-MDP convergence"},
    {7, "unique-actions behaviour"},
    {8, "desk-scale 14-bus experiment"},
    {9, "GridMind variant sanity"},
    {10, "determinism"},
};

int run(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> only;
  std::string report_path;
  bool strict = false;
  unsigned threads = 1;
  app.add_option("--only", only, "Criteria to run (default: all)")
      ->delimiter(',')
      ->check(CLI::Range(1, 10));
  app.add_option("--report", report_path, "Write the verdicts and evidence as JSON");
  app.add_option("--threads", threads, "Evaluation workers")->check(CLI::Range(1u, 256u));
  app.add_flag("--strict", strict, "Exit with status 1 if any criterion fails");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> wanted(only.begin(), only.end());
  auto selected = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };

  std::optional<DeskScaleRun> desk;
  auto desk_run = [&]() -> const DeskScaleRun& {
    if (!desk) desk = run_desk_scale(threads);
    return *desk;
  };
  std::map<int, std::function<Verdict()>> checks{
      {1, power_flow_oracle},
      {2, mismatch_invariant},
      {3, sampler_statistics},
      {4, gradient_check},
      {5, replay_frequencies},
      {6, chain_convergence},
      {7, [&] { return unique_actions(desk_run()); }},
      {8, [&] { return desk_scale(desk_run()); }},
      {9, [&] { return gridmind(threads); }},
      {10,
       [&] {
         Stopwatch clock;
         // Second runs of the stochastic criteria, compared artifact for artifact.
         std::vector<std::string> differ;
         if (sampler_statistics().evidence != sampler_statistics().evidence) differ.push_back("3");
         if (chain_convergence().evidence != chain_convergence().evidence) differ.push_back("6");
         if (evidence_of(desk_run()) != evidence_of(run_desk_scale(threads))) differ.push_back("8");
         Verdict v;
         v.pass = differ.empty();
         std::string which;
         for (const auto& d : differ) which += (which.empty() ? "" : ", ") + d;
         v.detail = differ.empty() ? "criteria 3, 6 and 8 reproduced identical reports"
                                   : "reports differ on rerun for criteria " + which;
         v.detail += ", " + fmt("%.0f", clock.seconds()) + " s";
         return v;
       }},
  };

  json report = json::object();
  int failed = 0;
  for (const auto& c : kCriteria) {
    if (!selected(c.id)) continue;
    Verdict v;
    try {
      v = checks.at(c.id)();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("error: ") + e.what();
    }
    failed += !v.pass;
    std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", c.id, c.title,
                v.detail.c_str());
    std::fflush(stdout);
    report[std::to_string(c.id)] = {
        {"title", c.title}, {"pass", v.pass}, {"detail", v.detail}, {"evidence", v.evidence}};
  }
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << report.dump(2) << '\n';
  }
  std::printf("%d of %zu criteria failed\n", failed, report.size());
  return strict && failed > 0 ? 1 : 0;
}

}  // namespace
}  // namespace voltgrid::acceptance

int main(int argc, char** argv) {
  try {
    return voltgrid::acceptance::run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "acceptance run aborted: " << e.what() << '\n';
    return 2;
  }
}
