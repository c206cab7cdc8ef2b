#pragma once

// Post-selected and decoded-logical objectives with trajectory-based
// gradients. Jump locations and importance weights are frozen within one
// optimizer iteration, so the differentiable object is the frozen-ensemble
// estimator; gradients flow through forward/backward chains of the
// non-unitary step propagators, with insertions respecting each trajectory's
// recorded jump slot.

#include "flagrape/grape_core.hpp"
#include "flagrape/trajectories.hpp"

namespace flagrape {

/// Per-constraint target observable entering the estimator numerator:
/// the target projector for post-selected objectives, or the Bloch-weighted
/// combination sum_j eps_j M_0 O_j M_0 for decoded logical objectives.
inline Matrix target_observable(const Constraint& c, ObjectiveKind kind,
                                const SystemModel& model) {
  if (kind == ObjectiveKind::logical_post_selected) {
    Matrix o = c.bloch(0) * c.tomo->x + c.bloch(1) * c.tomo->y +
               c.bloch(2) * c.tomo->z;
    return model.projector * o * model.projector;
  }
  return c.target * c.target.adjoint();
}

/// One frozen ensemble per constraint plus the estimator numerators and p0.
struct FlagEvaluation {
  StepPropagatorChain chain;
  std::vector<TrajectoryEnsemble> ensembles;
  std::vector<Matrix> observables;   // per-constraint target observable
  std::vector<double> numerators;    // Tr[rho O_t] estimates
  std::vector<double> p0s;           // Tr[rho M_0] estimates
};

/// Builds the trajectory ensembles and estimates numerator and p0 for every
/// constraint; the ensembles are retained so the gradient reuses the same
/// frozen jump locations and weights.
inline FlagEvaluation estimate_numerator_and_p0(const PulseSchedule& pulses,
                                                const SystemModel& model,
                                                const ObjectiveSpec& objective,
                                                int m, uint64_t seed) {
  if (m < 1) throw std::invalid_argument("estimate_numerator_and_p0: M must be >= 1");
  FlagEvaluation ev;
  ev.chain = build_chain(pulses, model);
  for (size_t i = 0; i < objective.constraints.size(); ++i) {
    const auto& c = objective.constraints[i];
    ev.ensembles.push_back(
        make_ensemble(c.initial, ev.chain, model, m, seed + i));
    ev.observables.push_back(target_observable(c, objective.kind, model));
    ev.numerators.push_back(
        std::real(assemble_expectation(ev.ensembles.back(), ev.observables.back())));
    ev.p0s.push_back(
        std::real(assemble_expectation(ev.ensembles.back(), model.projector)));
  }
  return ev;
}

/// Phi_flag = sum_i (1 - numerator_i / p0_i).
inline double flag_objective(const std::vector<double>& numerators,
                             const std::vector<double>& p0s) {
  double phi = 0.0;
  for (size_t i = 0; i < numerators.size(); ++i) {
    if (p0s[i] < kP0Floor) throw DegeneratePostSelection(p0s[i]);
    phi += 1.0 - numerators[i] / p0s[i];
  }
  return phi;
}

inline double flag_objective(const FlagEvaluation& ev) {
  return flag_objective(ev.numerators, ev.p0s);
}

// ---------------------------------------------------------------------------
// Chain gradients

namespace detail {

/// Forward pass of one trajectory; the prefix states live in the shared
/// no-jump record, the post-jump tail is materialized here.
struct TrajectoryForward {
  const NoJumpRecord* record;
  int jump_step = 0;        // 0: no-jump path
  int jump_channel = -1;
  std::vector<Vector> post;  // states after xi_m for m = jump_step .. N
                             // (post[0] is Jop * states[jump_step])
};

inline TrajectoryForward forward_no_jump(const NoJumpRecord& record) {
  return {&record, 0, -1, {}};
}

inline TrajectoryForward forward_jump(const NoJumpRecord& record,
                                      const StepPropagatorChain& chain,
                                      const JumpRecord& jrec) {
  TrajectoryForward fw{&record, jrec.jump_step, jrec.jump_channel, {}};
  fw.post.reserve(chain.xi.size() - jrec.jump_step + 1);
  fw.post.push_back(chain.jump_ops[jrec.jump_channel] *
                    record.states[jrec.jump_step]);
  for (size_t m = jrec.jump_step; m < chain.xi.size(); ++m)
    fw.post.push_back(chain.xi[m] * fw.post.back());
  return fw;
}

/// d <out|O_r|out> / du_k^(j) for every observable O_r, one trajectory.
/// The insertion -i dt H_c^(j) sits directly after xi_k; for the jump step
/// itself that is before the jump operator, matching the recorded slot.
/// H_c phi products are shared across observables.
inline std::vector<Eigen::MatrixXd> trajectory_gradients(
    const StepPropagatorChain& chain, const SystemModel& model,
    const TrajectoryForward& fw, const std::vector<const Matrix*>& observables) {
  const int n = int(chain.xi.size());
  const int nj = int(model.controls.size());
  const int nobs = int(observables.size());
  const Complex ins = -kI * chain.dt;

  auto state_after = [&](int m) -> const Vector& {
    // state after xi_m, before any insertion; jump folded in only for m > jump_step
    return (fw.jump_step > 0 && m > fw.jump_step)
               ? fw.post[m - fw.jump_step]
               : fw.record->states[m];
  };
  const Vector& out =
      fw.jump_step > 0 ? fw.post.back() : fw.record->states[n];

  std::vector<Eigen::MatrixXd> grads(nobs, Eigen::MatrixXd::Zero(n, nj));
  std::vector<Vector> lam(nobs);
  for (int r = 0; r < nobs; ++r) lam[r] = (*observables[r]) * out;

  std::vector<Vector> hphi(nj);
  for (int m = n; m >= 1; --m) {
    if (fw.jump_step > 0 && m == fw.jump_step)
      for (int r = 0; r < nobs; ++r)
        lam[r] = chain.jump_ops[fw.jump_channel].adjoint() * lam[r];
    const Vector& phi = state_after(m);
    for (int j = 0; j < nj; ++j) hphi[j] = model.controls[j] * phi;
    for (int r = 0; r < nobs; ++r)
      for (int j = 0; j < nj; ++j)
        grads[r](m - 1, j) += 2.0 * std::real(ins * (lam[r].adjoint() * hphi[j])(0));
    for (int r = 0; r < nobs; ++r) lam[r] = chain.xi[m - 1].adjoint() * lam[r];
  }
  return grads;
}

/// Frozen-ensemble gradient of Tr[rho O_r] for each observable: no-jump term
/// plus importance-weighted single-jump terms with weights held constant.
inline std::vector<Eigen::MatrixXd> ensemble_gradients(
    const StepPropagatorChain& chain, const SystemModel& model,
    const TrajectoryEnsemble& ens, const std::vector<const Matrix*>& observables) {
  auto grads =
      trajectory_gradients(chain, model, detail::forward_no_jump(ens.no_jump),
                           observables);
  if (!ens.jumps.empty()) {
    const double scale =
        ens.total_single_jump_mass / double(ens.jumps.size());
    for (const auto& jrec : ens.jumps) {
      const auto fw = forward_jump(ens.no_jump, chain, jrec);
      const auto g = trajectory_gradients(chain, model, fw, observables);
      const double w = scale / jrec.category_mass;
      for (size_t r = 0; r < grads.size(); ++r) grads[r] += w * g[r];
    }
  }
  return grads;
}

}  // namespace detail

/// Frozen-ensemble objective re-evaluated at (possibly different) pulses: the
/// jump slots and importance weights are taken from `ref`, only the
/// propagator chains are rebuilt. This is the literal differentiable object
/// that flag_gradient / logical_objective_and_gradient correspond to.
inline double frozen_objective(const PulseSchedule& pulses,
                               const SystemModel& model,
                               const ObjectiveSpec& objective,
                               const FlagEvaluation& ref) {
  const StepPropagatorChain chain = build_chain(pulses, model);
  double phi = 0.0;
  for (size_t i = 0; i < ref.ensembles.size(); ++i) {
    const auto& ens = ref.ensembles[i];
    const NoJumpRecord rec =
        run_no_jump(ens.no_jump.states.front(), chain, model);
    auto estimate = [&](const Matrix& o) {
      const Vector& phi_n = rec.states.back();
      double val = (phi_n.adjoint() * o * phi_n)(0).real();
      if (!ens.jumps.empty()) {
        const double scale =
            ens.total_single_jump_mass / double(ens.jumps.size());
        for (const auto& j : ens.jumps) {
          const Vector psi =
              run_single_jump(rec, chain, {j.jump_step, j.jump_channel}, model)
                  .final_state;
          val += scale / j.category_mass * (psi.adjoint() * o * psi)(0).real();
        }
      }
      return val;
    };
    const double num = estimate(ref.observables[i]);
    const double p0 = estimate(model.projector);
    if (p0 < kP0Floor) throw DegeneratePostSelection(p0);
    phi += objective.kind == ObjectiveKind::logical_post_selected
               ? 0.5 - num / (2.0 * p0)
               : 1.0 - num / p0;
  }
  return phi;
}

/// Gradient of Phi_flag on the frozen ensemble, combining the target and M_0
/// observable gradients with the quotient rule
///   d f / du = -(1/p0) d num/du + (num/p0^2) d p0/du.
inline Eigen::MatrixXd flag_gradient(const PulseSchedule& pulses,
                                     const SystemModel& model,
                                     const ObjectiveSpec& objective,
                                     const FlagEvaluation& ev) {
  (void)objective;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(pulses.steps, pulses.channels);
  for (size_t i = 0; i < ev.ensembles.size(); ++i) {
    if (ev.p0s[i] < kP0Floor) throw DegeneratePostSelection(ev.p0s[i]);
    const auto g = detail::ensemble_gradients(
        ev.chain, model, ev.ensembles[i],
        {&ev.observables[i], &model.projector});
    grad += -g[0] / ev.p0s[i] +
            (ev.numerators[i] / (ev.p0s[i] * ev.p0s[i])) * g[1];
  }
  return grad;
}

/// Decoded logical objective 1/2 - sum_i num_i / (2 p0_i) and its gradient,
/// evaluated on the same frozen ensembles. num here is the Bloch-weighted
/// tomography expectation Tr[rho sum_j eps_j M_0 O_j M_0].
inline std::pair<double, Eigen::MatrixXd> logical_objective_and_gradient(
    const PulseSchedule& pulses, const SystemModel& model,
    const ObjectiveSpec& objective, const FlagEvaluation& ev) {
  if (objective.kind != ObjectiveKind::logical_post_selected)
    throw std::invalid_argument("logical_objective_and_gradient: wrong objective kind");
  double phi = 0.0;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(pulses.steps, pulses.channels);
  for (size_t i = 0; i < ev.ensembles.size(); ++i) {
    if (ev.p0s[i] < kP0Floor) throw DegeneratePostSelection(ev.p0s[i]);
    phi += 0.5 - ev.numerators[i] / (2.0 * ev.p0s[i]);
    const auto g = detail::ensemble_gradients(
        ev.chain, model, ev.ensembles[i],
        {&ev.observables[i], &model.projector});
    grad += -g[0] / (2.0 * ev.p0s[i]) +
            (ev.numerators[i] / (2.0 * ev.p0s[i] * ev.p0s[i])) * g[1];
  }
  return {phi, grad};
}

/// Optimizer eval adapter: resamples the ensemble each iteration (seed split
/// per iteration), evaluates the frozen objective and gradient.
inline EvalFn make_flag_eval(const SystemModel& model,
                             const ObjectiveSpec& objective, int m,
                             uint64_t seed) {
  return [&model, &objective, m, seed](const PulseSchedule& p, int it) {
    const uint64_t it_seed = seed + 0x9E3779B97F4A7C15ull * uint64_t(it + 1);
    const auto ev = estimate_numerator_and_p0(p, model, objective, m, it_seed);
    Evaluation out;
    if (objective.kind == ObjectiveKind::logical_post_selected) {
      auto [phi, g] = logical_objective_and_gradient(p, model, objective, ev);
      out = {phi, std::move(g)};
    } else {
      out = {flag_objective(ev), flag_gradient(p, model, objective, ev)};
    }
    double p0_min = 1.0;
    for (double v : ev.p0s) p0_min = std::min(p0_min, v);
    out.p0 = p0_min;
    return out;
  };
}

}  // namespace flagrape
