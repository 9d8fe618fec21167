#pragma once

// Test-only reference computations. Nothing here calls into the solver's
// admittance or Jacobian code.

#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "voltgrid/netmodel.hpp"
#include "voltgrid/powerflow.hpp"

namespace voltgrid::testing {

inline std::string data_path(const std::string& rel) {
  return std::string(VOLTGRID_DATA_DIR) + "/" + rel;
}

inline std::string fixture_path(const std::string& rel) {
  return std::string(VOLTGRID_FIXTURE_DIR) + "/" + rel;
}

struct ReferenceBus {
  double vm = 0.0;
  double va = 0.0;
};

inline std::map<int, ReferenceBus> read_reference(const std::string& file) {
  std::ifstream in(fixture_path(file));
  std::string line;
  std::getline(in, line);  // header
  std::map<int, ReferenceBus> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, vm, va;
    std::getline(ss, id, ',');
    std::getline(ss, vm, ',');
    std::getline(ss, va, ',');
    out[std::stoi(id)] = {std::stod(vm), std::stod(va)};
  }
  return out;
}

/// Complex power flowing into the network at every bus (p.u.), accumulated
/// branch by branch from the pi-model.
inline std::vector<std::complex<double>> injections_from_branches(
    const NetworkCase& net, const std::vector<double>& v,
    const std::vector<double>& theta) {
  using cd = std::complex<double>;
  std::map<int, std::size_t> pos;
  for (std::size_t i = 0; i < net.buses.size(); ++i) pos[net.buses[i].id] = i;
  std::vector<cd> volt(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) volt[i] = std::polar(v[i], theta[i]);
  std::vector<cd> s(v.size(), cd{});
  for (const auto& br : net.branches) {
    if (!br.in_service) continue;
    const std::size_t f = pos[br.from_bus], t = pos[br.to_bus];
    const cd z(br.r, br.x);
    const cd a = br.tap_ratio;
    // Ideal transformer on the from side, series impedance, then charging.
    const cd vf_ref = volt[f] / a;
    const cd i_series = (vf_ref - volt[t]) / z;
    const cd i_from_ref = i_series + cd(0, br.b_charging / 2) * vf_ref;
    const cd i_to = -i_series + cd(0, br.b_charging / 2) * volt[t];
    const cd i_from = i_from_ref / std::conj(a);
    s[f] += volt[f] * std::conj(i_from);
    s[t] += volt[t] * std::conj(i_to);
  }
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto& b = net.buses[i];
    const cd y(b.gs_mw / net.base_mva, b.bs_mvar / net.base_mva);
    s[i] += std::norm(volt[i]) * std::conj(y);
  }
  for (const auto& sh : net.shunts) {
    if (!sh.closed) continue;
    const std::size_t i = pos[sh.bus];
    s[i] += std::norm(volt[i]) * std::conj(cd(0, sh.q_nominal / net.base_mva));
  }
  return s;
}

struct Mismatch {
  double p = 0.0;  // worst |dP| over non-slack buses, p.u.
  double q = 0.0;  // worst |dQ| over buses not voltage-regulated, p.u.
};

/// Recomputes the power-balance residuals of a returned solution.
inline Mismatch recompute_mismatch(const NetworkCase& net,
                                   const PowerFlowSolution& sol) {
  std::map<int, std::size_t> pos;
  for (std::size_t i = 0; i < net.buses.size(); ++i) pos[net.buses[i].id] = i;
  const std::size_t n = net.buses.size();
  std::vector<double> p_sched(n, 0.0), q_sched(n, 0.0);
  std::vector<bool> regulated(n, false);
  for (const auto& l : net.loads) {
    p_sched[pos[l.bus]] -= l.p / net.base_mva;
    q_sched[pos[l.bus]] -= l.q / net.base_mva;
  }
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto& gen = net.generators[g];
    if (!gen.in_service) continue;
    const std::size_t i = pos[gen.bus];
    p_sched[i] += gen.p_mw / net.base_mva;
    if (sol.gen_at_limit[g]) {
      q_sched[i] += sol.gen_q[g] / net.base_mva;
    } else {
      regulated[i] = true;
    }
  }
  const auto s = injections_from_branches(net, sol.v, sol.theta);
  Mismatch m;
  for (std::size_t i = 0; i < n; ++i) {
    if (net.buses[i].id == net.slack_bus) continue;
    m.p = std::max(m.p, std::abs(s[i].real() - p_sched[i]));
    if (!regulated[i]) m.q = std::max(m.q, std::abs(s[i].imag() - q_sched[i]));
  }
  return m;
}

}  // namespace voltgrid::testing
