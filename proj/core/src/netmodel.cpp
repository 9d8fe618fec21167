#include "voltgrid/netmodel.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>

#include "voltgrid/error.hpp"

namespace voltgrid {

const char* to_string(BusType type) {
  switch (type) {
    case BusType::kSlack:
      return "slack";
    case BusType::kPv:
      return "pv";
    case BusType::kPq:
      return "pq";
  }
  return "?";
}

std::optional<std::size_t> NetworkCase::find_bus(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> NetworkCase::slack_generator() const {
  for (std::size_t g = 0; g < generators.size(); ++g) {
    if (generators[g].bus == slack_bus) return g;
  }
  return std::nullopt;
}

double NetworkCase::total_load_mw() const {
  double total = 0.0;
  for (const auto& l : loads) total += l.p;
  return total;
}

BusIndex::BusIndex(const NetworkCase& net) {
  pos_.reserve(net.buses.size());
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    pos_.emplace(net.buses[i].id, i);
  }
}

std::size_t BusIndex::at(int bus_id) const {
  auto it = pos_.find(bus_id);
  if (it == pos_.end()) {
    throw Error("unknown bus id " + std::to_string(bus_id));
  }
  return it->second;
}

void assign_bus_types(NetworkCase& net) {
  std::set<int> regulated;
  for (const auto& g : net.generators) {
    if (g.in_service) regulated.insert(g.bus);
  }
  for (auto& b : net.buses) {
    if (b.id == net.slack_bus) {
      b.type = BusType::kSlack;
    } else if (regulated.count(b.id)) {
      b.type = BusType::kPv;
    } else {
      b.type = BusType::kPq;
    }
  }
}

std::vector<std::vector<std::size_t>> adjacency(const NetworkCase& net) {
  std::unordered_map<int, std::size_t> pos;
  for (std::size_t i = 0; i < net.buses.size(); ++i) pos[net.buses[i].id] = i;
  std::vector<std::vector<std::size_t>> adj(net.buses.size());
  for (const auto& br : net.branches) {
    if (!br.in_service) continue;
    auto f = pos.find(br.from_bus);
    auto t = pos.find(br.to_bus);
    if (f == pos.end() || t == pos.end()) continue;
    adj[f->second].push_back(t->second);
    adj[t->second].push_back(f->second);
  }
  return adj;
}

std::vector<int> unreachable_buses(const NetworkCase& net) {
  std::vector<bool> seen(net.buses.size(), false);
  auto start = net.find_bus(net.slack_bus);
  if (start) {
    const auto adj = adjacency(net);
    std::deque<std::size_t> frontier{*start};
    seen[*start] = true;
    while (!frontier.empty()) {
      const std::size_t at = frontier.front();
      frontier.pop_front();
      for (std::size_t next : adj[at]) {
        if (!seen[next]) {
          seen[next] = true;
          frontier.push_back(next);
        }
      }
    }
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    if (!seen[i]) out.push_back(net.buses[i].id);
  }
  return out;
}

std::optional<std::size_t> find_branch(const NetworkCase& net, int bus_a,
                                       int bus_b) {
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    if ((br.from_bus == bus_a && br.to_bus == bus_b) ||
        (br.from_bus == bus_b && br.to_bus == bus_a)) {
      return k;
    }
  }
  return std::nullopt;
}

namespace {

template <typename... Parts>
std::string cat(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

}  // namespace

std::vector<int> islanded_equipment(const NetworkCase& net) {
  std::set<int> equipped;
  for (const auto& g : net.generators) equipped.insert(g.bus);
  for (const auto& l : net.loads) equipped.insert(l.bus);
  for (const auto& s : net.shunts) equipped.insert(s.bus);
  for (const auto& b : net.buses) {
    if (b.gs_mw != 0.0 || b.bs_mvar != 0.0) equipped.insert(b.id);
  }
  std::vector<int> out;
  for (int id : unreachable_buses(net)) {
    if (equipped.count(id)) out.push_back(id);
  }
  return out;
}

std::vector<std::string> validate_structure(const NetworkCase& net) {
  std::vector<std::string> out;
  std::map<int, int> seen;
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto& b = net.buses[i];
    if (++seen[b.id] == 2) out.push_back(cat("bus ", b.id, ": duplicate bus id"));
    if (!(b.base_kv > 0.0)) {
      out.push_back(cat("bus ", b.id, ": base_kv must be positive"));
    }
    if (!(b.v_init > 0.0 && b.v_init < 2.0)) {
      out.push_back(cat("bus ", b.id, ": v_init must lie in (0, 2)"));
    }
  }
  if (!(net.base_mva > 0.0)) out.push_back("case: base_mva must be positive");

  const auto exists = [&](int id) { return seen.count(id) != 0; };

  std::vector<int> slack_ids;
  for (const auto& b : net.buses) {
    if (b.type == BusType::kSlack) slack_ids.push_back(b.id);
  }
  if (slack_ids.size() > 1) {
    std::ostringstream os;
    os << "case: exactly one slack bus required, found " << slack_ids.size()
       << " (";
    for (std::size_t i = 0; i < slack_ids.size(); ++i) {
      os << (i ? ", " : "") << slack_ids[i];
    }
    os << ")";
    out.push_back(os.str());
  } else if (!exists(net.slack_bus)) {
    out.push_back(cat("case: slack bus ", net.slack_bus, " does not exist"));
  } else if (slack_ids.size() == 1 && slack_ids.front() != net.slack_bus) {
    out.push_back(cat("case: bus ", slack_ids.front(),
                      " is typed slack but slack_bus is ", net.slack_bus));
  } else {
    bool regulated = false;
    for (const auto& g : net.generators) {
      regulated = regulated || (g.bus == net.slack_bus && g.in_service);
    }
    if (!regulated) {
      out.push_back(cat("case: slack bus ", net.slack_bus,
                        " has no in-service generator"));
    }
  }

  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    const auto tag = cat("branch ", k, " (", br.from_bus, "-", br.to_bus, ")");
    if (br.x == 0.0) out.push_back(tag + ": reactance must be nonzero");
    if (br.from_bus == br.to_bus) out.push_back(tag + ": endpoints must differ");
    if (!exists(br.from_bus) || !exists(br.to_bus)) {
      out.push_back(tag + ": endpoint bus does not exist");
    }
    if (!(br.tap_ratio > 0.0)) out.push_back(tag + ": tap_ratio must be positive");
  }

  std::map<int, int> gens_per_bus;
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto& gen = net.generators[g];
    const auto tag = cat("generator ", g, " (bus ", gen.bus, ")");
    if (!exists(gen.bus)) out.push_back(tag + ": bus does not exist");
    if (gen.p_min > gen.p_max) out.push_back(tag + ": p_min exceeds p_max");
    if (gen.q_min > gen.q_max) out.push_back(tag + ": q_min exceeds q_max");
    if (!(gen.v_setpoint > 0.0)) out.push_back(tag + ": v_setpoint must be positive");
    if (++gens_per_bus[gen.bus] == 2) {
      out.push_back(tag + ": more than one generator on the bus");
    }
  }
  for (std::size_t l = 0; l < net.loads.size(); ++l) {
    const auto& load = net.loads[l];
    const auto tag = cat("load ", l, " (bus ", load.bus, ")");
    if (!exists(load.bus)) out.push_back(tag + ": bus does not exist");
    if (load.p < 0.0) out.push_back(tag + ": active power must be nonnegative");
  }
  for (std::size_t s = 0; s < net.shunts.size(); ++s) {
    if (!exists(net.shunts[s].bus)) {
      out.push_back(cat("shunt ", s, " (bus ", net.shunts[s].bus,
                        "): bus does not exist"));
    }
  }

  return out;
}

std::vector<std::string> validate(const NetworkCase& net) {
  auto out = validate_structure(net);
  if (out.empty()) {
    for (int id : islanded_equipment(net)) {
      out.push_back(cat("bus ", id, ": islanded from the slack bus"));
    }
  }
  return out;
}

}  // namespace voltgrid
