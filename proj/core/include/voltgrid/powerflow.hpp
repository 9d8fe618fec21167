#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "voltgrid/netmodel.hpp"

namespace voltgrid {

struct SolverConfig {
  double tolerance = 1e-8;  // max |mismatch|, p.u.
  int max_iterations = 25;  // Newton iterations per inner solve
  bool enforce_q_limits = true;
  bool flat_start = true;
  int max_q_rounds = 10;

  bool operator==(const SolverConfig&) const = default;
};

enum class SolveStatus { kConverged, kDiverged, kMaxIterations, kIslanded };

const char* to_string(SolveStatus status);

struct PowerFlowSolution {
  SolveStatus status = SolveStatus::kDiverged;
  int iterations = 0;  // Newton iterations summed over Q-limit rounds
  int q_rounds = 0;
  std::vector<double> v;      // p.u., case bus order
  std::vector<double> theta;  // rad, case bus order
  std::vector<double> gen_q;  // MVAr per generator; 0 when offline
  std::vector<bool> gen_at_limit;
  double gen_p_slack = 0.0;  // MW

  bool converged() const { return status == SolveStatus::kConverged; }
};

using AdmittanceMatrix = Eigen::SparseMatrix<std::complex<double>>;

/// Bus admittance matrix in p.u., rows/columns in case bus order.
AdmittanceMatrix build_admittance(const NetworkCase& net);

struct Connectivity {
  bool connected = true;
  std::vector<int> isolated_buses;
};

Connectivity check_connectivity(const NetworkCase& net);

/// Newton-Raphson power flow in polar coordinates. Never throws for
/// numerical trouble; the outcome is in PowerFlowSolution::status.
PowerFlowSolution solve(const NetworkCase& net, const SolverConfig& config = {});

struct BranchFlow {
  std::complex<double> from;  // MVA leaving the from end
  std::complex<double> to;    // MVA leaving the to end
};

/// Zero for out-of-service branches.
std::vector<BranchFlow> branch_flows(const NetworkCase& net,
                                     const PowerFlowSolution& solution);

}  // namespace voltgrid
