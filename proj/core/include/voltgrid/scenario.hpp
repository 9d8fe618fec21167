#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "voltgrid/netmodel.hpp"
#include "voltgrid/rng.hpp"

namespace voltgrid {

/// kStandard draws every episode quantity at random. kGridMind scales each
/// load independently around its base value and keeps base-case commitment,
/// dispatch shape, set points and shunt states.
enum class ScenarioMode { kStandard, kGridMind };

struct ScenarioConfig {
  ScenarioMode mode = ScenarioMode::kStandard;
  double load_scale_min = 0.6;  // × base total active load
  double load_scale_max = 1.4;
  double pf_min = 0.8;  // pf ~ U[pf_min, pf_max)
  double pf_max = 1.0;
  double leading_probability = 0.1;
  double loss_fraction = 0.03;
  std::vector<double> setpoints = {0.95, 0.975, 1.0, 1.025, 1.05};
  bool contingencies_enabled = true;
  /// Candidate outages as (from, to) bus pairs; empty means every in-service
  /// branch.
  std::vector<std::pair<int, int>> contingency_branches;
  int max_redraws = 100;
  /// Per-load factor range in kGridMind mode.
  double gridmind_load_min = 0.8;
  double gridmind_load_max = 1.2;

  bool operator==(const ScenarioConfig&) const = default;
};

/// Throws ConfigError naming the first offending field under `path`.
void check(const ScenarioConfig& config, const std::string& path = "scenario");

struct Scenario {
  std::vector<double> load_p;  // MW per load
  std::vector<double> load_q;  // MVAr per load
  std::vector<bool> gen_on;
  std::vector<double> gen_p;  // MW; 0 when off
  std::vector<double> gen_v;  // p.u. set point
  std::vector<bool> shunt_closed;
  std::optional<std::size_t> outaged_branch;
  double total_load_p = 0.0;  // MW

  bool operator==(const Scenario&) const = default;
};

struct Loading {
  std::vector<double> load_p;
  std::vector<double> load_q;
  double total_load_p = 0.0;
};

struct Dispatch {
  std::vector<bool> gen_on;
  std::vector<double> gen_p;
  std::vector<std::size_t> order;  // visiting permutation of the accepted draw
};

struct Controls {
  std::vector<double> gen_v;
  std::vector<bool> shunt_closed;
  std::optional<std::size_t> outaged_branch;
};

Loading sample_loading(const NetworkCase& net, const ScenarioConfig& config, Rng& rng);

/// Commits generators in a random order until committed output reaches
/// (1 + loss_fraction) × total_load_p. The slack unit is forced on at p_min
/// if the order never reached it. Throws ScenarioError when even full
/// commitment cannot cover the target.
Dispatch sample_commitment_dispatch(const NetworkCase& net, double total_load_p,
                                    const ScenarioConfig& config, Rng& rng);

/// `candidates` is the outage list from outage_candidates().
Controls sample_setpoints_shunts_outage(const NetworkCase& net,
                                        const ScenarioConfig& config,
                                        const std::vector<std::size_t>& candidates,
                                        Rng& rng);

/// Branch indices eligible for the episode outage: the configured list (or
/// every in-service branch) minus those whose removal strands a bus.
/// Empty when contingencies are disabled. Throws ScenarioError when
/// contingencies are enabled and nothing qualifies, or when a configured
/// pair names no branch.
std::vector<std::size_t> outage_candidates(const NetworkCase& net,
                                           const ScenarioConfig& config);

/// Scenario reproducing the case as given.
Scenario base_scenario(const NetworkCase& net);

/// Copy of the case with the scenario applied and bus types rederived. The
/// slack generator stays in service.
NetworkCase apply_scenario(const NetworkCase& net, const Scenario& scenario);

/// Draws scenarios; the stream for (seed, index) is independent of every
/// other index.
class ScenarioSampler {
 public:
  ScenarioSampler(NetworkCase net, ScenarioConfig config);

  Scenario sample(std::uint64_t seed, std::uint64_t index) const;
  Scenario sample(Rng& rng) const;

  const NetworkCase& network() const { return net_; }
  const ScenarioConfig& config() const { return config_; }

 private:
  Scenario sample_gridmind(Rng& rng) const;

  NetworkCase net_;
  ScenarioConfig config_;
  std::vector<std::size_t> candidates_;
};

Scenario sample_scenario(const NetworkCase& net, const ScenarioConfig& config,
                         std::uint64_t seed, std::uint64_t index);

/// A reproducible scenario set: indices [first_index, first_index + count)
/// of the stream `seed`.
struct ScenarioManifest {
  std::uint64_t seed = 0;
  std::uint64_t first_index = 0;
  std::uint64_t count = 0;
  ScenarioConfig config;
  std::string case_name;
  std::string case_fingerprint;
  /// Optional materialized copy for audit; never consulted on load.
  std::vector<Scenario> records;

  /// Hash of everything that determines the scenarios.
  std::string id() const;
  std::vector<Scenario> generate(const NetworkCase& net) const;
};

/// Throws ConfigError if the manifest was built for a different case.
void check_case(const ScenarioManifest& manifest, const NetworkCase& net);

bool overlaps(const ScenarioManifest& a, const ScenarioManifest& b);

void write_manifest(const ScenarioManifest& manifest, const std::filesystem::path& path);
ScenarioManifest read_manifest(const std::filesystem::path& path);

/// FNV-1a of the native serialization, hex.
std::string case_fingerprint(const NetworkCase& net);

void to_json(nlohmann::json& out, const ScenarioConfig& config);
void to_json(nlohmann::json& out, const Scenario& scenario);
/// `path` prefixes field names in ConfigError messages.
ScenarioConfig scenario_config_from_json(const nlohmann::json& in,
                                         const std::string& path = "scenario");
Scenario scenario_from_json(const nlohmann::json& in);

}  // namespace voltgrid
