#include "voltgrid/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

namespace voltgrid {

using cd = std::complex<double>;

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kConverged:
      return "converged";
    case SolveStatus::kDiverged:
      return "diverged";
    case SolveStatus::kMaxIterations:
      return "max_iterations";
    case SolveStatus::kIslanded:
      return "islanded";
  }
  return "?";
}

namespace {

struct BranchAdmittance {
  cd ff, ft, tf, tt;
};

BranchAdmittance branch_admittance(const Branch& br) {
  const cd ys = 1.0 / cd(br.r, br.x);
  const cd half_charging(0.0, br.b_charging / 2.0);
  const double t = br.tap_ratio;
  return {(ys + half_charging) / (t * t), -ys / t, -ys / t, ys + half_charging};
}

// Jacobians up to this many unknowns are factored densely.
constexpr Eigen::Index kDenseLimit = 160;

// Voltage magnitudes outside this range mean the iteration has run away.
constexpr double kRunawayVoltage = 10.0;

enum class Role { kSlack, kPv, kPq };

class NewtonSolver {
 public:
  NewtonSolver(const NetworkCase& net, const SolverConfig& config)
      : net_(net), config_(config), index_(net), ybus_(build_admittance(net)) {
    const std::size_t n = net.buses.size();
    load_.assign(n, cd{});
    for (const auto& l : net.loads) {
      load_[index_.at(l.bus)] += cd(l.p, l.q) / net.base_mva;
    }
    gen_of_bus_.assign(n, -1);
    for (std::size_t g = 0; g < net.generators.size(); ++g) {
      if (net.generators[g].in_service) {
        gen_of_bus_[index_.at(net.generators[g].bus)] = static_cast<int>(g);
      }
    }
    pinned_.assign(n, 0);
  }

  PowerFlowSolution run() {
    const std::size_t n = net_.buses.size();
    PowerFlowSolution out;
    out.gen_q.assign(net_.generators.size(), 0.0);
    out.gen_at_limit.assign(net_.generators.size(), false);

    vm_.assign(n, 1.0);
    va_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (!config_.flat_start) {
        vm_[i] = net_.buses[i].v_init;
        va_[i] = net_.buses[i].angle_init;
      }
      if (gen_of_bus_[i] >= 0 && role(i) != Role::kPq) {
        vm_[i] = net_.generators[gen_of_bus_[i]].v_setpoint;
      }
    }

    for (int round = 0;; ++round) {
      out.q_rounds = round;
      const SolveStatus inner = newton(out.iterations);
      if (inner != SolveStatus::kConverged) {
        out.status = inner;
        break;
      }
      if (!config_.enforce_q_limits || !update_q_limits()) {
        out.status = SolveStatus::kConverged;
        break;
      }
      if (round + 1 >= config_.max_q_rounds) {
        out.status = SolveStatus::kMaxIterations;
        break;
      }
    }

    out.v = vm_;
    out.theta = va_;
    if (out.status == SolveStatus::kConverged ||
        out.status == SolveStatus::kMaxIterations) {
      const auto s = injections();
      for (std::size_t i = 0; i < n; ++i) {
        const int g = gen_of_bus_[i];
        if (g < 0) continue;
        if (pinned_[i] != 0) {
          out.gen_q[g] = pinned_[i] > 0 ? net_.generators[g].q_max
                                        : net_.generators[g].q_min;
          out.gen_at_limit[g] = true;
        } else {
          out.gen_q[g] = (s[i].imag() + load_[i].imag()) * net_.base_mva;
        }
        if (role(i) == Role::kSlack) {
          out.gen_p_slack = (s[i].real() + load_[i].real()) * net_.base_mva;
        }
      }
    }
    return out;
  }

 private:
  Role role(std::size_t i) const {
    if (net_.buses[i].id == net_.slack_bus) return Role::kSlack;
    if (gen_of_bus_[i] >= 0 && pinned_[i] == 0) return Role::kPv;
    return Role::kPq;
  }

  // Complex power injected into the network at each bus, p.u.
  std::vector<cd> injections() const {
    const std::size_t n = vm_.size();
    std::vector<cd> volt(n);
    for (std::size_t i = 0; i < n; ++i) volt[i] = std::polar(vm_[i], va_[i]);
    std::vector<cd> current(n, cd{});
    for (int k = 0; k < ybus_.outerSize(); ++k) {
      for (AdmittanceMatrix::InnerIterator it(ybus_, k); it; ++it) {
        current[it.row()] += it.value() * volt[it.col()];
      }
    }
    std::vector<cd> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = volt[i] * std::conj(current[i]);
    return s;
  }

  // Scheduled injection: generation minus load, pinned generators at limit.
  cd scheduled(std::size_t i) const {
    cd s = -load_[i];
    const int g = gen_of_bus_[i];
    if (g >= 0) {
      const auto& gen = net_.generators[g];
      s += gen.p_mw / net_.base_mva;
      if (pinned_[i] != 0) {
        s += cd(0.0, (pinned_[i] > 0 ? gen.q_max : gen.q_min) / net_.base_mva);
      }
    }
    return s;
  }

  SolveStatus newton(int& iteration_counter) {
    const std::size_t n = vm_.size();
    std::vector<Eigen::Index> ang_col(n, -1), mag_col(n, -1);
    Eigen::Index dim = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (role(i) != Role::kSlack) ang_col[i] = dim++;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (role(i) == Role::kPq) mag_col[i] = dim++;
    }
    std::vector<cd> target(n);
    for (std::size_t i = 0; i < n; ++i) target[i] = scheduled(i);

    Eigen::VectorXd f(dim);
    for (int it = 0;; ++it) {
      const auto s = injections();
      double worst = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const cd mis = s[i] - target[i];
        if (ang_col[i] >= 0) f[ang_col[i]] = mis.real();
        if (mag_col[i] >= 0) f[mag_col[i]] = mis.imag();
      }
      for (Eigen::Index r = 0; r < dim; ++r) {
        if (!std::isfinite(f[r])) return SolveStatus::kDiverged;
        worst = std::max(worst, std::abs(f[r]));
      }
      if (worst <= config_.tolerance) return SolveStatus::kConverged;
      if (it >= config_.max_iterations) return SolveStatus::kMaxIterations;

      ++iteration_counter;
      Eigen::VectorXd dx;
      if (!step(ang_col, mag_col, dim, f, dx)) return SolveStatus::kDiverged;
      for (std::size_t i = 0; i < n; ++i) {
        if (ang_col[i] >= 0) va_[i] -= dx[ang_col[i]];
        if (mag_col[i] >= 0) vm_[i] -= dx[mag_col[i]];
        if (!std::isfinite(va_[i]) || !std::isfinite(vm_[i]) || vm_[i] <= 0.0 ||
            vm_[i] > kRunawayVoltage) {
          return SolveStatus::kDiverged;
        }
      }
    }
  }

  // Solves J dx = f. Rows: P at non-slack buses, then Q at PQ buses (same
  // numbering as the unknowns).
  bool step(const std::vector<Eigen::Index>& ang_col,
            const std::vector<Eigen::Index>& mag_col, Eigen::Index dim,
            const Eigen::VectorXd& f, Eigen::VectorXd& dx) const {
    const std::size_t n = vm_.size();
    std::vector<cd> volt(n), unit(n), current(n, cd{});
    for (std::size_t i = 0; i < n; ++i) {
      volt[i] = std::polar(vm_[i], va_[i]);
      unit[i] = std::polar(1.0, va_[i]);
    }
    for (int k = 0; k < ybus_.outerSize(); ++k) {
      for (AdmittanceMatrix::InnerIterator it(ybus_, k); it; ++it) {
        current[it.row()] += it.value() * volt[it.col()];
      }
    }

    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(ybus_.nonZeros()) * 4 + 4 * n);
    const auto put = [&](std::size_t row_bus, std::size_t col_bus, cd ds_dva,
                         cd ds_dvm) {
      const Eigen::Index rp = ang_col[row_bus];
      const Eigen::Index rq = mag_col[row_bus];
      const Eigen::Index ca = ang_col[col_bus];
      const Eigen::Index cm = mag_col[col_bus];
      if (rp >= 0 && ca >= 0) entries.emplace_back(rp, ca, ds_dva.real());
      if (rp >= 0 && cm >= 0) entries.emplace_back(rp, cm, ds_dvm.real());
      if (rq >= 0 && ca >= 0) entries.emplace_back(rq, ca, ds_dva.imag());
      if (rq >= 0 && cm >= 0) entries.emplace_back(rq, cm, ds_dvm.imag());
    };
    const cd j(0.0, 1.0);
    for (int k = 0; k < ybus_.outerSize(); ++k) {
      for (AdmittanceMatrix::InnerIterator it(ybus_, k); it; ++it) {
        const auto r = static_cast<std::size_t>(it.row());
        const auto c = static_cast<std::size_t>(it.col());
        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
        // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
        const cd dva = j * volt[r] * std::conj(-it.value() * volt[c]);
        const cd dvm = volt[r] * std::conj(it.value() * unit[c]);
        put(r, c, dva, dvm);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      put(i, i, j * volt[i] * std::conj(current[i]),
          std::conj(current[i]) * unit[i]);
    }

    if (dim <= kDenseLimit) {
      Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(dim, dim);
      for (const auto& t : entries) jac(t.row(), t.col()) += t.value();
      Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
      if (!lu.isInvertible()) return false;
      dx = lu.solve(f);
    } else {
      Eigen::SparseMatrix<double> jac(dim, dim);
      jac.setFromTriplets(entries.begin(), entries.end());
      jac.makeCompressed();
      Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
      lu.compute(jac);
      if (lu.info() != Eigen::Success) return false;
      dx = lu.solve(f);
      if (lu.info() != Eigen::Success) return false;
    }
    return dx.allFinite();
  }

  // Pins generators that broke a reactive limit and releases pinned ones whose
  // voltage moved back to the regulating side. Returns true if anything moved.
  bool update_q_limits() {
    constexpr double kQTol = 1e-6;    // MVAr
    constexpr double kVTol = 1e-9;    // p.u.
    const auto s = injections();
    bool changed = false;
    for (std::size_t i = 0; i < vm_.size(); ++i) {
      const int g = gen_of_bus_[i];
      if (g < 0 || net_.buses[i].id == net_.slack_bus) continue;
      const auto& gen = net_.generators[g];
      if (pinned_[i] == 0) {
        const double q = (s[i].imag() + load_[i].imag()) * net_.base_mva;
        if (q > gen.q_max + kQTol) {
          pinned_[i] = 1;
          changed = true;
        } else if (q < gen.q_min - kQTol) {
          pinned_[i] = -1;
          changed = true;
        }
      } else {
        const bool release = pinned_[i] > 0 ? vm_[i] > gen.v_setpoint + kVTol
                                            : vm_[i] < gen.v_setpoint - kVTol;
        if (release) {
          pinned_[i] = 0;
          vm_[i] = gen.v_setpoint;
          changed = true;
        }
      }
    }
    return changed;
  }

  const NetworkCase& net_;
  SolverConfig config_;
  BusIndex index_;
  AdmittanceMatrix ybus_;
  std::vector<cd> load_;
  std::vector<int> gen_of_bus_;
  std::vector<int> pinned_;  // +1 at q_max, -1 at q_min
  std::vector<double> vm_, va_;
};

}  // namespace

AdmittanceMatrix build_admittance(const NetworkCase& net) {
  const BusIndex index(net);
  const auto n = static_cast<Eigen::Index>(net.buses.size());
  std::vector<Eigen::Triplet<cd>> entries;
  entries.reserve(net.branches.size() * 4 + net.buses.size());
  for (const auto& br : net.branches) {
    if (!br.in_service) continue;
    const auto f = static_cast<Eigen::Index>(index.at(br.from_bus));
    const auto t = static_cast<Eigen::Index>(index.at(br.to_bus));
    const auto y = branch_admittance(br);
    entries.emplace_back(f, f, y.ff);
    entries.emplace_back(f, t, y.ft);
    entries.emplace_back(t, f, y.tf);
    entries.emplace_back(t, t, y.tt);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = net.buses[static_cast<std::size_t>(i)];
    // Diagonal always present so every bus has a structural entry.
    entries.emplace_back(i, i, cd(b.gs_mw, b.bs_mvar) / net.base_mva);
  }
  for (const auto& sh : net.shunts) {
    if (!sh.closed) continue;
    const auto i = static_cast<Eigen::Index>(index.at(sh.bus));
    entries.emplace_back(i, i, cd(0.0, sh.q_nominal / net.base_mva));
  }
  AdmittanceMatrix y(n, n);
  y.setFromTriplets(entries.begin(), entries.end());
  y.makeCompressed();
  return y;
}

Connectivity check_connectivity(const NetworkCase& net) {
  Connectivity c;
  c.isolated_buses = unreachable_buses(net);
  c.connected = c.isolated_buses.empty();
  return c;
}

PowerFlowSolution solve(const NetworkCase& net, const SolverConfig& config) {
  if (!check_connectivity(net).connected) {
    PowerFlowSolution out;
    out.status = SolveStatus::kIslanded;
    out.v.assign(net.buses.size(), 0.0);
    out.theta.assign(net.buses.size(), 0.0);
    out.gen_q.assign(net.generators.size(), 0.0);
    out.gen_at_limit.assign(net.generators.size(), false);
    return out;
  }
  return NewtonSolver(net, config).run();
}

std::vector<BranchFlow> branch_flows(const NetworkCase& net,
                                     const PowerFlowSolution& solution) {
  const BusIndex index(net);
  std::vector<BranchFlow> flows(net.branches.size());
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    if (!br.in_service) continue;
    const std::size_t f = index.at(br.from_bus);
    const std::size_t t = index.at(br.to_bus);
    const cd vf = std::polar(solution.v[f], solution.theta[f]);
    const cd vt = std::polar(solution.v[t], solution.theta[t]);
    const auto y = branch_admittance(br);
    flows[k].from = vf * std::conj(y.ff * vf + y.ft * vt) * net.base_mva;
    flows[k].to = vt * std::conj(y.tf * vf + y.tt * vt) * net.base_mva;
  }
  return flows;
}

}  // namespace voltgrid
