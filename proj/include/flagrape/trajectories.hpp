#pragma once

// Accelerated quantum-trajectory engine: one deterministic no-jump pass under
// the non-Hermitian effective Hamiltonian yields the first-jump probability
// table; single-jump trajectories are importance-sampled from it and the
// ensemble approximates rho(T) as a weighted average. Trajectories with two
// or more jumps are dropped (weak-decoherence regime); the induced bias is
// reported, never hidden.

#include "flagrape/lindblad.hpp"

#include <random>

namespace flagrape {

struct NoJumpMass : std::runtime_error {
  NoJumpMass() : std::runtime_error("no single-jump probability mass to sample") {}
};

/// Per-step non-unitary propagators xi_k = exp(-i H_eff,k dt),
/// H_eff,k = H_k - (i/2) sum_mu gamma_mu c_mu' c_mu.
struct StepPropagatorChain {
  std::vector<Matrix> xi;       // N propagators
  std::vector<Matrix> jump_ops; // sqrt(gamma_mu dt) c_mu
  std::vector<Matrix> jump_rates_ops;  // gamma_mu dt c_mu' c_mu (probability kernels)
  double dt;
};

inline StepPropagatorChain build_chain(const PulseSchedule& pulses,
                                       const SystemModel& model) {
  if (pulses.channels != int(model.controls.size()))
    throw std::invalid_argument("build_chain: channel count mismatch");
  if (!pulses.amplitudes.allFinite())
    throw std::invalid_argument("build_chain: non-finite amplitudes");

  const int d = model.dim();
  Matrix decay = Matrix::Zero(d, d);
  for (const auto& j : model.jumps) decay += j.rate * (j.op.adjoint() * j.op);

  StepPropagatorChain chain;
  chain.dt = pulses.dt;
  chain.xi.reserve(pulses.steps);
  for (int k = 0; k < pulses.steps; ++k) {
    const Matrix heff =
        step_hamiltonian(model, pulses.amplitudes.row(k)) - 0.5 * kI * decay;
    chain.xi.push_back(matrix_exponential(-kI * pulses.dt * heff));
  }
  for (const auto& j : model.jumps) {
    chain.jump_ops.push_back(std::sqrt(j.rate * pulses.dt) * j.op);
    chain.jump_rates_ops.push_back(j.rate * pulses.dt * (j.op.adjoint() * j.op));
  }
  return chain;
}

/// Unnormalized-state convention: phi_k = xi_k ... xi_1 |psi_0>, survival
/// ||phi_k||^2, and first-jump mass p(k, mu) = gamma_mu dt <phi_k|c'c|phi_k>.
/// The shrinking norm already carries the no-jump survival factor, so
/// survival(N) + sum p(k, mu) ~= 1 up to the dropped multi-jump mass.
struct NoJumpRecord {
  std::vector<Vector> states;   // N+1, states[0] = psi_0
  Eigen::VectorXd survival;     // N+1 squared norms
  Eigen::MatrixXd jump_probs;   // N x channels, p(k, mu) at row k-1
  double total_jump_mass = 0.0; // P_1
};

inline NoJumpRecord run_no_jump(const Vector& psi0,
                                const StepPropagatorChain& chain,
                                const SystemModel& model) {
  (void)model;
  const int n = int(chain.xi.size());
  const int nc = int(chain.jump_ops.size());
  NoJumpRecord rec;
  rec.states.reserve(n + 1);
  rec.states.push_back(psi0);
  rec.survival.resize(n + 1);
  rec.survival(0) = psi0.squaredNorm();
  rec.jump_probs.resize(n, nc);
  for (int k = 0; k < n; ++k) {
    rec.states.push_back(chain.xi[k] * rec.states.back());
    const Vector& phi = rec.states.back();
    rec.survival(k + 1) = phi.squaredNorm();
    for (int mu = 0; mu < nc; ++mu)
      rec.jump_probs(k, mu) =
          (phi.adjoint() * chain.jump_rates_ops[mu] * phi)(0).real();
  }
  rec.total_jump_mass = rec.jump_probs.sum();
  return rec;
}

/// i.i.d. draws of first-jump locations (step k in 1..N, channel mu) from the
/// categorical distribution p(k, mu) / P_1. Fixed step-major walk order and an
/// explicit 53-bit uniform keep the draw sequence identical for a given seed.
inline std::vector<std::pair<int, int>> sample_jumps(const NoJumpRecord& record,
                                                     int count, uint64_t seed) {
  if (count <= 0) return {};
  if (record.total_jump_mass <= 0.0) throw NoJumpMass();
  std::mt19937_64 rng(seed);
  const int n = int(record.jump_probs.rows());
  const int nc = int(record.jump_probs.cols());
  std::vector<std::pair<int, int>> draws;
  draws.reserve(count);
  for (int s = 0; s < count; ++s) {
    const double u = double(rng() >> 11) * 0x1.0p-53 * record.total_jump_mass;
    double acc = 0.0;
    int pick_k = -1, pick_mu = -1;
    for (int k = 0; k < n && pick_k < 0; ++k)
      for (int mu = 0; mu < nc; ++mu) {
        acc += record.jump_probs(k, mu);
        if (u < acc) { pick_k = k + 1; pick_mu = mu; break; }
      }
    if (pick_k < 0) {  // round-off fallthrough: take the last nonzero category
      for (int k = n - 1; k >= 0 && pick_k < 0; --k)
        for (int mu = nc - 1; mu >= 0; --mu)
          if (record.jump_probs(k, mu) > 0.0) { pick_k = k + 1; pick_mu = mu; break; }
    }
    draws.emplace_back(pick_k, pick_mu);
  }
  return draws;
}

/// One single-jump path: xi_N ... xi_{k+1} sqrt(gamma dt) c_mu xi_k ... xi_1 |psi_0>.
struct JumpRecord {
  int jump_step;        // k in 1..N
  int jump_channel;     // mu
  Vector final_state;   // unnormalized
  double category_mass; // p(k, mu) of the sampled category
};

/// Prefix-reuse form: the no-jump record already holds xi_k ... xi_1 |psi_0>.
inline JumpRecord run_single_jump(const NoJumpRecord& record,
                                  const StepPropagatorChain& chain,
                                  std::pair<int, int> jump,
                                  const SystemModel& model) {
  (void)model;
  const auto [k, mu] = jump;
  if (k < 1 || k > int(chain.xi.size()))
    throw std::invalid_argument("run_single_jump: jump step out of range");
  Vector psi = chain.jump_ops[mu] * record.states[k];
  for (size_t m = k; m < chain.xi.size(); ++m) psi = chain.xi[m] * psi;
  return {k, mu, std::move(psi), record.jump_probs(k - 1, mu)};
}

/// Full re-propagation variant (no prefix reuse); used as its own oracle.
inline JumpRecord run_single_jump(const Vector& psi0,
                                  const StepPropagatorChain& chain,
                                  std::pair<int, int> jump,
                                  const SystemModel& model) {
  (void)model;
  const auto [k, mu] = jump;
  if (k < 1 || k > int(chain.xi.size()))
    throw std::invalid_argument("run_single_jump: jump step out of range");
  Vector psi = psi0;
  for (int m = 0; m < k; ++m) psi = chain.xi[m] * psi;
  const double mass = (psi.adjoint() * chain.jump_rates_ops[mu] * psi)(0).real();
  psi = chain.jump_ops[mu] * psi;
  for (size_t m = k; m < chain.xi.size(); ++m) psi = chain.xi[m] * psi;
  return {k, mu, std::move(psi), mass};
}

/// No-jump record plus M-1 importance-sampled single-jump records; M = 1 is
/// the pure no-jump approximation.
struct TrajectoryEnsemble {
  NoJumpRecord no_jump;
  std::vector<JumpRecord> jumps;
  double total_single_jump_mass = 0.0;  // P_1
  uint64_t rng_seed = 0;
};

/// Builds the ensemble for one initial state. When the model carries no jump
/// mass (closed limit) the ensemble degenerates to the exact no-jump record.
inline TrajectoryEnsemble make_ensemble(const Vector& psi0,
                                        const StepPropagatorChain& chain,
                                        const SystemModel& model, int m,
                                        uint64_t seed) {
  if (m < 1) throw std::invalid_argument("make_ensemble: M must be >= 1");
  TrajectoryEnsemble ens;
  ens.no_jump = run_no_jump(psi0, chain, model);
  ens.total_single_jump_mass = ens.no_jump.total_jump_mass;
  ens.rng_seed = seed;
  if (m > 1 && ens.total_single_jump_mass > 0.0) {
    for (auto jump : sample_jumps(ens.no_jump, m - 1, seed))
      ens.jumps.push_back(run_single_jump(ens.no_jump, chain, jump, model));
  }
  return ens;
}

/// Weighted-average estimator of Tr[O rho(T)]:
///   <phi_N|O|phi_N> + (P_1 / (M-1)) sum_s <psi_s|O|psi_s> / p(k_s, mu_s).
/// Each sampled path is reweighted by the total single-jump mass over its
/// category's sampling density; fixed summation order keeps it reproducible.
inline Complex assemble_expectation(const TrajectoryEnsemble& ensemble,
                                    const Matrix& o) {
  const Vector& phi = ensemble.no_jump.states.back();
  if (o.rows() != phi.size())
    throw std::invalid_argument("assemble_expectation: dimension mismatch");
  Complex val = (phi.adjoint() * o * phi)(0);
  if (!ensemble.jumps.empty()) {
    Complex acc = 0.0;
    for (const auto& j : ensemble.jumps)
      acc += (j.final_state.adjoint() * o * j.final_state)(0) / j.category_mass;
    val += ensemble.total_single_jump_mass / double(ensemble.jumps.size()) * acc;
  }
  return val;
}

/// Mass unaccounted for by the no-jump branch and the single-jump table;
/// scales like the dropped two-jump probability.
inline double two_jump_mass_estimate(const NoJumpRecord& record) {
  const int n = int(record.survival.size()) - 1;
  return std::max(0.0, 1.0 - record.survival(n) - record.total_jump_mass);
}

/// Analytic bound on the single-jump truncation bias for ||O|| <= 1.
inline double truncation_bias_bound(const SystemModel& model, double total_time) {
  double s = 0.0;
  for (const auto& j : model.jumps) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(j.op.adjoint() * j.op,
                                             Eigen::EigenvaluesOnly);
    s += j.rate * es.eigenvalues().maxCoeff();
  }
  return 0.5 * (s * total_time) * (s * total_time);
}

}  // namespace flagrape
