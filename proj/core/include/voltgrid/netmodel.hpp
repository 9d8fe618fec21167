#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace voltgrid {

enum class BusType { kSlack, kPv, kPq };

const char* to_string(BusType type);

struct Bus {
  int id = 0;
  double base_kv = 1.0;
  /// Derived from slack designation and generator status; never read from file.
  BusType type = BusType::kPq;
  double v_init = 1.0;      // p.u.
  double angle_init = 0.0;  // rad
  /// Fixed (non-switchable) shunt at the bus, MW / MVAr drawn at 1.0 p.u.
  /// Positive susceptance is capacitive.
  double gs_mw = 0.0;
  double bs_mvar = 0.0;

  bool operator==(const Bus&) const = default;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charging = 0.0;
  double tap_ratio = 1.0;
  bool in_service = true;

  bool operator==(const Branch&) const = default;
};

struct Generator {
  int bus = 0;
  /// Base-case active output, MW.
  double p_mw = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double v_setpoint = 1.0;
  bool in_service = true;

  bool operator==(const Generator&) const = default;
};

struct Load {
  int bus = 0;
  double p = 0.0;  // MW
  double q = 0.0;  // MVAr

  bool operator==(const Load&) const = default;
};

/// Switchable shunt. q_nominal is the MVAr injected at 1.0 p.u. when closed.
struct Shunt {
  int bus = 0;
  double q_nominal = 0.0;
  bool closed = false;

  bool operator==(const Shunt&) const = default;
};

struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  int slack_bus = 0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<Load> loads;
  std::vector<Shunt> shunts;

  bool operator==(const NetworkCase&) const = default;

  /// Position of the bus with the given id, if any. Linear scan.
  std::optional<std::size_t> find_bus(int id) const;
  /// Index of the in-service generator regulating the slack bus, if any.
  std::optional<std::size_t> slack_generator() const;
  double total_load_mw() const;
};

/// Maps bus ids to positions in NetworkCase::buses.
class BusIndex {
 public:
  explicit BusIndex(const NetworkCase& net);
  std::size_t at(int bus_id) const;
  bool contains(int bus_id) const { return pos_.count(bus_id) != 0; }

 private:
  std::unordered_map<int, std::size_t> pos_;
};

/// Recomputes every bus type: slack at slack_bus, PV where an in-service
/// generator sits, PQ elsewhere.
void assign_bus_types(NetworkCase& net);

/// Structural and topological violations, one human-readable entry per
/// broken invariant. Empty when the case is valid.
std::vector<std::string> validate(const NetworkCase& net);

/// validate() without the connectivity rule.
std::vector<std::string> validate_structure(const NetworkCase& net);

/// Buses carrying equipment (generator, load, shunt) that cannot be reached
/// from the slack bus.
std::vector<int> islanded_equipment(const NetworkCase& net);

/// Buses not reachable from the slack bus over in-service branches, in case
/// order. Unknown slack yields every bus.
std::vector<int> unreachable_buses(const NetworkCase& net);

/// Neighbours of each bus (by position) over in-service branches.
std::vector<std::vector<std::size_t>> adjacency(const NetworkCase& net);

/// Index of the branch joining the two buses (either orientation).
std::optional<std::size_t> find_branch(const NetworkCase& net, int bus_a,
                                       int bus_b);

}  // namespace voltgrid
