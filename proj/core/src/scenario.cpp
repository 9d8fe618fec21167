#include "voltgrid/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "voltgrid/case_io.hpp"
#include "voltgrid/error.hpp"
#include "voltgrid/hash.hpp"

namespace voltgrid {

using nlohmann::json;

namespace {

constexpr const char* kManifestTag = "voltgrid-scenarios";
constexpr int kManifestVersion = 1;

// Generator at the slack bus, whether or not it is in service.
std::optional<std::size_t> slack_unit(const NetworkCase& net) {
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    if (net.generators[g].bus == net.slack_bus) return g;
  }
  return std::nullopt;
}

const char* to_string(ScenarioMode mode) {
  return mode == ScenarioMode::kGridMind ? "gridmind" : "standard";
}

}  // namespace

void check(const ScenarioConfig& c, const std::string& path) {
  auto fail = [&](const char* field, const char* msg) {
    throw ConfigError(path + "." + field, msg);
  };
  if (!(c.load_scale_min > 0.0) || !(c.load_scale_min <= c.load_scale_max)) {
    fail("load_scale", "needs 0 < min <= max");
  }
  if (!(c.pf_min > 0.0) || !(c.pf_min <= c.pf_max) || !(c.pf_max <= 1.0)) {
    fail("power_factor", "needs 0 < min <= max <= 1");
  }
  if (!(c.leading_probability >= 0.0 && c.leading_probability <= 1.0)) {
    fail("leading_probability", "must lie in [0, 1]");
  }
  if (!(c.loss_fraction >= 0.0)) fail("loss_fraction", "must be nonnegative");
  if (c.setpoints.empty()) fail("setpoints", "must not be empty");
  for (double v : c.setpoints) {
    if (!(v > 0.0)) fail("setpoints", "entries must be positive");
  }
  if (c.max_redraws < 1) fail("max_redraws", "must be at least 1");
  if (!(c.gridmind_load_min > 0.0) || !(c.gridmind_load_min <= c.gridmind_load_max)) {
    fail("gridmind_load", "needs 0 < min <= max");
  }
}

Loading sample_loading(const NetworkCase& net, const ScenarioConfig& config, Rng& rng) {
  const std::size_t n = net.loads.size();
  if (n == 0) throw ScenarioError("case has no loads to scale");
  Loading out;
  out.total_load_p =
      rng.uniform(config.load_scale_min, config.load_scale_max) * net.total_load_mw();

  std::vector<double> weight(n);
  double sum = 0.0;
  for (int attempt = 0; sum <= 0.0; ++attempt) {
    if (attempt == config.max_redraws) throw ScenarioError("load weights stayed zero");
    sum = 0.0;
    for (auto& w : weight) {
      w = rng.uniform();
      sum += w;
    }
  }

  out.load_p.resize(n);
  out.load_q.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.load_p[i] = weight[i] / sum * out.total_load_p;
    const double pf = rng.uniform(config.pf_min, config.pf_max);
    double q = out.load_p[i] * std::tan(std::acos(pf));
    if (rng.bernoulli(config.leading_probability)) q = -q;
    out.load_q[i] = q;
  }
  return out;
}

Dispatch sample_commitment_dispatch(const NetworkCase& net, double total_load_p,
                                    const ScenarioConfig& config, Rng& rng) {
  const std::size_t n = net.generators.size();
  const double target = (1.0 + config.loss_fraction) * total_load_p;
  double capacity = 0.0;
  for (const auto& g : net.generators) capacity += g.p_max;
  if (capacity < target) {
    throw ScenarioError("generation capacity " + std::to_string(capacity) +
                        " MW cannot cover " + std::to_string(target) + " MW");
  }

  std::vector<std::size_t> order(n);
  for (int attempt = 0; attempt < config.max_redraws; ++attempt) {
    Dispatch d{std::vector<bool>(n, false), std::vector<double>(n, 0.0), {}};
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double committed = 0.0;
    bool reached = false;
    for (std::size_t g : order) {
      const auto& gen = net.generators[g];
      d.gen_on[g] = true;
      d.gen_p[g] = rng.uniform(gen.p_min, gen.p_max);
      committed += d.gen_p[g];
      if (committed >= target) {
        reached = true;
        break;
      }
    }
    if (!reached) continue;
    d.order = order;
    if (auto s = slack_unit(net); s && !d.gen_on[*s]) {
      d.gen_on[*s] = true;
      d.gen_p[*s] = net.generators[*s].p_min;
    }
    return d;
  }
  throw ScenarioError("dispatch never reached the committed-capacity target");
}

std::vector<std::size_t> outage_candidates(const NetworkCase& net,
                                           const ScenarioConfig& config) {
  if (!config.contingencies_enabled) return {};
  std::vector<std::size_t> listed;
  if (config.contingency_branches.empty()) {
    for (std::size_t k = 0; k < net.branches.size(); ++k) {
      if (net.branches[k].in_service) listed.push_back(k);
    }
  } else {
    for (const auto& [a, b] : config.contingency_branches) {
      auto k = find_branch(net, a, b);
      if (!k) {
        throw ScenarioError("no branch joins buses " + std::to_string(a) + " and " +
                            std::to_string(b));
      }
      if (net.branches[*k].in_service) listed.push_back(*k);
    }
  }
  std::vector<std::size_t> out;
  NetworkCase probe = net;
  for (std::size_t k : listed) {
    probe.branches[k].in_service = false;
    if (unreachable_buses(probe).empty()) out.push_back(k);
    probe.branches[k].in_service = true;
  }
  if (out.empty()) throw ScenarioError("every candidate outage islands the network");
  return out;
}

Controls sample_setpoints_shunts_outage(const NetworkCase& net,
                                        const ScenarioConfig& config,
                                        const std::vector<std::size_t>& candidates,
                                        Rng& rng) {
  Controls c;
  c.gen_v.resize(net.generators.size());
  for (auto& v : c.gen_v) v = config.setpoints[rng.below(config.setpoints.size())];
  c.shunt_closed.resize(net.shunts.size());
  for (std::size_t s = 0; s < net.shunts.size(); ++s) c.shunt_closed[s] = rng.bernoulli(0.5);
  if (config.contingencies_enabled) {
    if (candidates.empty()) throw ScenarioError("no outage candidates");
    c.outaged_branch = candidates[rng.below(candidates.size())];
  }
  return c;
}

Scenario base_scenario(const NetworkCase& net) {
  Scenario s;
  for (const auto& l : net.loads) {
    s.load_p.push_back(l.p);
    s.load_q.push_back(l.q);
  }
  for (const auto& g : net.generators) {
    s.gen_on.push_back(g.in_service);
    s.gen_p.push_back(g.in_service ? g.p_mw : 0.0);
    s.gen_v.push_back(g.v_setpoint);
  }
  for (const auto& sh : net.shunts) s.shunt_closed.push_back(sh.closed);
  s.total_load_p = net.total_load_mw();
  return s;
}

NetworkCase apply_scenario(const NetworkCase& net, const Scenario& s) {
  if (s.load_p.size() != net.loads.size() || s.load_q.size() != net.loads.size() ||
      s.gen_on.size() != net.generators.size() || s.gen_p.size() != net.generators.size() ||
      s.gen_v.size() != net.generators.size() || s.shunt_closed.size() != net.shunts.size() ||
      (s.outaged_branch && *s.outaged_branch >= net.branches.size())) {
    throw ScenarioError("scenario dimensions do not match case '" + net.name + "'");
  }
  NetworkCase out = net;
  for (std::size_t i = 0; i < out.loads.size(); ++i) {
    out.loads[i].p = s.load_p[i];
    out.loads[i].q = s.load_q[i];
  }
  for (std::size_t g = 0; g < out.generators.size(); ++g) {
    auto& gen = out.generators[g];
    gen.in_service = s.gen_on[g];
    // Offline units keep their case dispatch; it has no electrical effect.
    if (s.gen_on[g]) gen.p_mw = s.gen_p[g];
    gen.v_setpoint = s.gen_v[g];
  }
  if (auto k = slack_unit(out)) out.generators[*k].in_service = true;
  for (std::size_t i = 0; i < out.shunts.size(); ++i) out.shunts[i].closed = s.shunt_closed[i];
  if (s.outaged_branch) out.branches[*s.outaged_branch].in_service = false;
  assign_bus_types(out);
  return out;
}

ScenarioSampler::ScenarioSampler(NetworkCase net, ScenarioConfig config)
    : net_(std::move(net)), config_(std::move(config)) {
  check(config_);
  candidates_ = outage_candidates(net_, config_);
}

Scenario ScenarioSampler::sample(std::uint64_t seed, std::uint64_t index) const {
  Rng rng(stream_seed(seed, index));
  return sample(rng);
}

Scenario ScenarioSampler::sample(Rng& rng) const {
  if (config_.mode == ScenarioMode::kGridMind) return sample_gridmind(rng);
  for (int attempt = 0; attempt < config_.max_redraws; ++attempt) {
    Loading loading = sample_loading(net_, config_, rng);
    Dispatch dispatch;
    try {
      dispatch = sample_commitment_dispatch(net_, loading.total_load_p, config_, rng);
    } catch (const ScenarioError&) {
      continue;
    }
    Controls controls = sample_setpoints_shunts_outage(net_, config_, candidates_, rng);
    Scenario s;
    s.load_p = std::move(loading.load_p);
    s.load_q = std::move(loading.load_q);
    s.total_load_p = loading.total_load_p;
    s.gen_on = std::move(dispatch.gen_on);
    s.gen_p = std::move(dispatch.gen_p);
    s.gen_v = std::move(controls.gen_v);
    s.shunt_closed = std::move(controls.shunt_closed);
    s.outaged_branch = controls.outaged_branch;
    return s;
  }
  throw ScenarioError("no feasible scenario after " + std::to_string(config_.max_redraws) +
                      " redraws");
}

Scenario ScenarioSampler::sample_gridmind(Rng& rng) const {
  Scenario s = base_scenario(net_);
  const double base_total = net_.total_load_mw();
  s.total_load_p = 0.0;
  for (std::size_t i = 0; i < s.load_p.size(); ++i) {
    const double f = rng.uniform(config_.gridmind_load_min, config_.gridmind_load_max);
    s.load_p[i] *= f;
    s.load_q[i] *= f;
    s.total_load_p += s.load_p[i];
  }
  // Dispatch follows the load linearly; the slack picks up the remainder.
  const double ratio = base_total > 0.0 ? s.total_load_p / base_total : 1.0;
  const auto slack = slack_unit(net_);
  double others = 0.0;
  for (std::size_t g = 0; g < s.gen_p.size(); ++g) {
    if (!s.gen_on[g] || (slack && g == *slack)) continue;
    const auto& gen = net_.generators[g];
    s.gen_p[g] = std::clamp(gen.p_mw * ratio, gen.p_min, gen.p_max);
    others += s.gen_p[g];
  }
  if (slack) {
    s.gen_on[*slack] = true;
    s.gen_p[*slack] = std::max(0.0, (1.0 + config_.loss_fraction) * s.total_load_p - others);
  }
  if (config_.contingencies_enabled) s.outaged_branch = candidates_[rng.below(candidates_.size())];
  return s;
}

Scenario sample_scenario(const NetworkCase& net, const ScenarioConfig& config,
                         std::uint64_t seed, std::uint64_t index) {
  return ScenarioSampler(net, config).sample(seed, index);
}

// --- persistence --------------------------------------------------------------

std::string case_fingerprint(const NetworkCase& net) { return hex64(fnv1a(to_native(net))); }

void to_json(json& out, const ScenarioConfig& c) {
  json pairs = json::array();
  for (const auto& [a, b] : c.contingency_branches) pairs.push_back({a, b});
  out = json{{"mode", to_string(c.mode)},
             {"load_scale", {c.load_scale_min, c.load_scale_max}},
             {"power_factor", {c.pf_min, c.pf_max}},
             {"leading_probability", c.leading_probability},
             {"loss_fraction", c.loss_fraction},
             {"setpoints", c.setpoints},
             {"contingencies", c.contingencies_enabled},
             {"contingency_branches", pairs},
             {"max_redraws", c.max_redraws},
             {"gridmind_load", {c.gridmind_load_min, c.gridmind_load_max}}};
}

namespace {

void read_range(detail::ConfigReader& r, const std::string& key, double& lo, double& hi) {
  std::vector<double> v{lo, hi};
  r.get(key, v);
  if (v.size() != 2) throw ConfigError(r.path_of(key), "expects [min, max]");
  lo = v[0];
  hi = v[1];
}

}  // namespace

ScenarioConfig scenario_config_from_json(const json& in, const std::string& path) {
  detail::ConfigReader r(in, path);
  ScenarioConfig c;
  std::string mode = to_string(c.mode);
  r.get("mode", mode);
  if (mode == "standard") {
    c.mode = ScenarioMode::kStandard;
  } else if (mode == "gridmind") {
    c.mode = ScenarioMode::kGridMind;
  } else {
    throw ConfigError(r.path_of("mode"), "must be \"standard\" or \"gridmind\"");
  }
  read_range(r, "load_scale", c.load_scale_min, c.load_scale_max);
  read_range(r, "power_factor", c.pf_min, c.pf_max);
  r.get("leading_probability", c.leading_probability);
  r.get("loss_fraction", c.loss_fraction);
  r.get("setpoints", c.setpoints);
  r.get("contingencies", c.contingencies_enabled);
  std::vector<std::vector<int>> pairs;
  r.get("contingency_branches", pairs);
  for (const auto& p : pairs) {
    if (p.size() != 2) {
      throw ConfigError(r.path_of("contingency_branches"), "entries must be [from, to]");
    }
    c.contingency_branches.emplace_back(p[0], p[1]);
  }
  r.get("max_redraws", c.max_redraws);
  read_range(r, "gridmind_load", c.gridmind_load_min, c.gridmind_load_max);
  r.finish();
  check(c, path);
  return c;
}

void to_json(json& out, const Scenario& s) {
  out = json{{"load_p", s.load_p},
             {"load_q", s.load_q},
             {"gen_on", s.gen_on},
             {"gen_p", s.gen_p},
             {"gen_v", s.gen_v},
             {"shunt_closed", s.shunt_closed},
             {"outaged_branch", s.outaged_branch ? json(*s.outaged_branch) : json(nullptr)},
             {"total_load_p", s.total_load_p}};
}

Scenario scenario_from_json(const json& in) {
  Scenario s;
  try {
    in.at("load_p").get_to(s.load_p);
    in.at("load_q").get_to(s.load_q);
    in.at("gen_on").get_to(s.gen_on);
    in.at("gen_p").get_to(s.gen_p);
    in.at("gen_v").get_to(s.gen_v);
    in.at("shunt_closed").get_to(s.shunt_closed);
    if (!in.at("outaged_branch").is_null()) {
      s.outaged_branch = in.at("outaged_branch").get<std::size_t>();
    }
    in.at("total_load_p").get_to(s.total_load_p);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario record: ") + e.what());
  }
  return s;
}

std::string ScenarioManifest::id() const {
  json key = {{"seed", seed},
              {"first_index", first_index},
              {"count", count},
              {"config", config},
              {"case_fingerprint", case_fingerprint}};
  return hex64(fnv1a(key.dump()));
}

std::vector<Scenario> ScenarioManifest::generate(const NetworkCase& net) const {
  check_case(*this, net);
  ScenarioSampler sampler(net, config);
  std::vector<Scenario> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(sampler.sample(seed, first_index + i));
  return out;
}

void check_case(const ScenarioManifest& manifest, const NetworkCase& net) {
  if (manifest.case_fingerprint != case_fingerprint(net)) {
    throw ConfigError("manifest.case", "manifest was generated for case '" +
                                           manifest.case_name + "' (" +
                                           manifest.case_fingerprint + "), not '" +
                                           net.name + "'");
  }
}

bool overlaps(const ScenarioManifest& a, const ScenarioManifest& b) {
  if (a.seed != b.seed || a.count == 0 || b.count == 0) return false;
  return a.first_index < b.first_index + b.count && b.first_index < a.first_index + a.count;
}

void write_manifest(const ScenarioManifest& m, const std::filesystem::path& path) {
  json doc = {{"format", kManifestTag},
              {"version", kManifestVersion},
              {"id", m.id()},
              {"seed", m.seed},
              {"first_index", m.first_index},
              {"count", m.count},
              {"case", {{"name", m.case_name}, {"fingerprint", m.case_fingerprint}}},
              {"config", m.config}};
  if (!m.records.empty()) doc["records"] = m.records;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

ScenarioManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  detail::ConfigReader r(doc, "manifest");
  std::string tag;
  int version = 0;
  r.require("format", tag);
  r.require("version", version);
  if (tag != kManifestTag || version != kManifestVersion) {
    throw ConfigError("manifest.format", "not a version-1 scenario manifest");
  }
  ScenarioManifest m;
  std::string stored_id;
  r.require("id", stored_id);
  r.require("seed", m.seed);
  r.require("first_index", m.first_index);
  r.require("count", m.count);
  const json* c = r.child("case");
  if (!c) throw ConfigError("manifest.case", "is required");
  detail::ConfigReader cr(*c, "manifest.case");
  cr.require("name", m.case_name);
  cr.require("fingerprint", m.case_fingerprint);
  cr.finish();
  const json* cfg = r.child("config");
  if (!cfg) throw ConfigError("manifest.config", "is required");
  m.config = scenario_config_from_json(*cfg, "manifest.config");
  if (const json* rec = r.child("records")) {
    for (const auto& item : *rec) m.records.push_back(scenario_from_json(item));
  }
  r.finish();
  if (m.id() != stored_id) {
    throw CorruptFileError(path.string() + ": manifest id does not match its contents");
  }
  return m;
}

}  // namespace voltgrid
