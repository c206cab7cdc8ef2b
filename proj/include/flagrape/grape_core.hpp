#pragma once

// Pulse parametrization, the closed-system objective/gradient, and the shared
// optimizer loop used by both the closed-system and the flag-based stages.

#include "flagrape/lindblad.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <random>

namespace flagrape {

struct OptimizationDiverged : std::runtime_error {
  OptimizationDiverged() : std::runtime_error("non-finite objective or gradient") {}
};

enum class StepRule { fixed_rate, adaptive_moment, quasi_newton };
enum class DerivativeScheme { first_order, exact };

struct OptimizerConfig {
  int max_iterations = 500;
  StepRule step_rule = StepRule::adaptive_moment;
  double learning_rate = 2.0 * M_PI * 1e6;     // amplitude units, rad/s
  double gradient_tolerance = 0.0;
  double objective_tolerance = 0.0;
  double amplitude_bound = 2.0 * M_PI * 50e6;  // max |u|, rad/s
  double init_scale = 2.0 * M_PI * 5e6;
  // Amplitudes are O(1e7) rad/s and gradients O(1e-13) per rad/s, so the
  // conventional 1e-8 regularizer would swamp the second-moment estimate.
  double adam_epsilon = 1e-20;
  uint64_t seed = 0;
  DerivativeScheme scheme = DerivativeScheme::first_order;

  void validate() const {
    if (learning_rate <= 0.0 || amplitude_bound <= 0.0 ||
        gradient_tolerance < 0.0 || objective_tolerance < 0.0 ||
        init_scale < 0.0 || adam_epsilon <= 0.0)
      throw std::invalid_argument("OptimizerConfig: invalid hyperparameters");
  }
};

struct IterationStat {
  double objective;
  double gradient_norm;
  double p0;        // NaN when not applicable
  double wall_ms;
};

struct ConvergenceTrace {
  std::vector<IterationStat> iterations;
  double best_objective = std::numeric_limits<double>::infinity();
};

/// Amplitudes i.i.d. uniform in [-init_scale, +init_scale]; deterministic
/// given config.seed.
inline PulseSchedule random_init(const OptimizerConfig& config, int n, int j,
                                 double dt) {
  PulseSchedule p = PulseSchedule::zeros(n, j, dt);
  std::mt19937_64 rng(config.seed);
  for (int k = 0; k < n; ++k)
    for (int c = 0; c < j; ++c) {
      const double u = double(rng() >> 11) * 0x1.0p-53;  // [0, 1)
      p.amplitudes(k, c) = config.init_scale * (2.0 * u - 1.0);
    }
  return p;
}

// ---------------------------------------------------------------------------
// Closed-system objective and gradient

inline std::vector<Matrix> step_unitaries(const PulseSchedule& pulses,
                                          const SystemModel& model) {
  std::vector<Matrix> u;
  u.reserve(pulses.steps);
  for (int k = 0; k < pulses.steps; ++k)
    u.push_back(matrix_exponential(
        -kI * pulses.dt * step_hamiltonian(model, pulses.amplitudes.row(k))));
  return u;
}

/// Exact Frechet derivative of exp(-i dt H) in control direction Hc, via the
/// eigendecomposition of H and the divided-difference (Loewner) kernel.
inline Matrix propagator_derivative_exact(const Matrix& h, const Matrix& hc,
                                          double dt) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  const Matrix& v = es.eigenvectors();
  const Eigen::VectorXd& lam = es.eigenvalues();
  const Eigen::Index d = lam.size();
  Matrix w = v.adjoint() * (-kI * dt * hc) * v;
  for (Eigen::Index a = 0; a < d; ++a) {
    const Complex mua = -kI * dt * lam(a);
    for (Eigen::Index b = 0; b < d; ++b) {
      const Complex mub = -kI * dt * lam(b);
      // sinh form of the divided difference avoids cancellation for close
      // eigenvalues: (e^a - e^b)/(a - b) = e^{(a+b)/2} sinh(d/2)/(d/2)
      const Complex half = 0.5 * (mua - mub);
      w(a, b) *= std::exp(0.5 * (mua + mub)) *
                 (std::abs(half) < 1e-30 ? Complex(1.0)
                                         : std::sinh(half) / half);
    }
  }
  return v * w * v.adjoint();
}

/// Phi_conv = sum_i (1 - |<psi_t^i| U_N ... U_1 |psi_0^i>|^2) for zero rates;
/// with nonzero rates the evaluation falls back to the master equation.
inline double closed_objective(const PulseSchedule& pulses,
                               const SystemModel& model,
                               const ObjectiveSpec& objective,
                               const IntegratorOptions& opts = {}) {
  if (objective.kind != ObjectiveKind::conventional)
    throw std::invalid_argument("closed_objective: expected conventional objective");
  bool open = false;
  for (const auto& j : model.jumps) open = open || j.rate > 0.0;
  double phi = 0.0;
  if (open) {
    for (const auto& c : objective.constraints) {
      const Matrix rho =
          propagate_master(c.initial * c.initial.adjoint(), pulses, model, opts);
      phi += infidelity_pre(rho, c.target);
    }
    return phi;
  }
  const auto us = step_unitaries(pulses, model);
  for (const auto& c : objective.constraints) {
    Vector psi = c.initial;
    for (const auto& u : us) psi = u * psi;
    phi += 1.0 - std::norm((c.target.adjoint() * psi)(0));
  }
  return phi;
}

/// dPhi/du via cached forward/backward state chains, with the objective from
/// the same forward pass. The first_order scheme uses dU_k/du ~ -i dt H_c U_k;
/// the exact scheme uses the Frechet derivative.
inline std::pair<double, Eigen::MatrixXd> closed_objective_and_gradient(
    const PulseSchedule& pulses, const SystemModel& model,
    const ObjectiveSpec& objective,
    DerivativeScheme scheme = DerivativeScheme::first_order) {
  const int n = pulses.steps;
  const int nj = pulses.channels;
  const auto us = step_unitaries(pulses, model);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, nj);
  double phi = 0.0;

  // Exact scheme: one eigendecomposition and divided-difference kernel per
  // step, shared across channels and constraints.
  std::vector<Matrix> evecs(scheme == DerivativeScheme::exact ? n : 0);
  std::vector<Matrix> kernels(evecs.size());
  if (scheme == DerivativeScheme::exact) {
    for (int k = 0; k < n; ++k) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(
          step_hamiltonian(model, pulses.amplitudes.row(k)));
      const Eigen::VectorXd& lam = es.eigenvalues();
      const Eigen::Index d = lam.size();
      Matrix ker(d, d);
      for (Eigen::Index a = 0; a < d; ++a) {
        const Complex mua = -kI * pulses.dt * lam(a);
        for (Eigen::Index b = 0; b < d; ++b) {
          const Complex mub = -kI * pulses.dt * lam(b);
          const Complex half = 0.5 * (mua - mub);
          ker(a, b) = std::exp(0.5 * (mua + mub)) *
                      (std::abs(half) < 1e-30 ? Complex(1.0)
                                              : std::sinh(half) / half);
        }
      }
      evecs[k] = es.eigenvectors();
      kernels[k] = std::move(ker);
    }
  }

  for (const auto& c : objective.constraints) {
    std::vector<Vector> fwd(n + 1);  // fwd[k] = U_k ... U_1 psi_0
    fwd[0] = c.initial;
    for (int k = 0; k < n; ++k) fwd[k + 1] = us[k] * fwd[k];
    const Complex overlap = (c.target.adjoint() * fwd[n])(0);
    phi += 1.0 - std::norm(overlap);

    Vector back = c.target;  // back at step k: (U_{k+1} ... U_N)^dag psi_t
    for (int k = n - 1; k >= 0; --k) {
      for (int j = 0; j < nj; ++j) {
        Complex dc;
        if (scheme == DerivativeScheme::first_order) {
          dc = (back.adjoint() * (-kI * pulses.dt) *
                (model.controls[j] * fwd[k + 1]))(0);
        } else {
          const Matrix& v = evecs[k];
          const Matrix w = (v.adjoint() * (-kI * pulses.dt * model.controls[j]) * v)
                               .cwiseProduct(kernels[k]);
          dc = ((v.adjoint() * back).adjoint() * (w * (v.adjoint() * fwd[k])))(0);
        }
        grad(k, j) += -2.0 * std::real(std::conj(overlap) * dc);
      }
      back = us[k].adjoint() * back;
    }
  }
  return {phi, grad};
}

inline Eigen::MatrixXd closed_gradient(
    const PulseSchedule& pulses, const SystemModel& model,
    const ObjectiveSpec& objective,
    DerivativeScheme scheme = DerivativeScheme::first_order) {
  return closed_objective_and_gradient(pulses, model, objective, scheme).second;
}

// ---------------------------------------------------------------------------
// Shared optimizer loop

/// Objective + gradient evaluated together (trajectory objectives share one
/// ensemble between the two); `iteration` lets stochastic objectives resample.
/// Optional p0 is recorded in the trace.
struct Evaluation {
  double objective;
  Eigen::MatrixXd gradient;
  double p0 = std::numeric_limits<double>::quiet_NaN();
};
using EvalFn = std::function<Evaluation(const PulseSchedule&, int iteration)>;
using ObjFn = std::function<double(const PulseSchedule&)>;

inline void clip_amplitudes(PulseSchedule& p, double bound) {
  p.amplitudes = p.amplitudes.cwiseMax(-bound).cwiseMin(bound);
}

/// Iterates until max_iterations or both tolerances are met; amplitudes are
/// clipped to +-amplitude_bound after each step; returns the best-seen pulses.
inline std::pair<PulseSchedule, ConvergenceTrace> optimize(
    const PulseSchedule& initial, const EvalFn& eval,
    const OptimizerConfig& config, const ObjFn& objective_only = nullptr) {
  config.validate();
  PulseSchedule cur = initial;
  clip_amplitudes(cur, config.amplitude_bound);
  PulseSchedule best = cur;
  ConvergenceTrace trace;

  // adaptive_moment state
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(cur.steps, cur.channels);
  Eigen::MatrixXd m2 = m1;
  const double b1 = 0.9, b2 = 0.999, adam_eps = config.adam_epsilon;

  // quasi_newton (L-BFGS) state
  const int lbfgs_mem = 10;
  std::vector<Eigen::MatrixXd> s_hist, y_hist;
  Eigen::MatrixXd prev_u, prev_g;

  double prev_obj = std::numeric_limits<double>::infinity();
  for (int it = 0; it < config.max_iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    Evaluation ev = eval(cur, it);
    if (!std::isfinite(ev.objective) || !ev.gradient.allFinite())
      throw OptimizationDiverged();

    const double gnorm = ev.gradient.cwiseAbs().maxCoeff();
    if (ev.objective < trace.best_objective) {
      trace.best_objective = ev.objective;
      best = cur;
    }

    if (config.step_rule == StepRule::fixed_rate) {
      cur.amplitudes -= config.learning_rate * ev.gradient;
    } else if (config.step_rule == StepRule::adaptive_moment) {
      m1 = b1 * m1 + (1.0 - b1) * ev.gradient;
      m2 = b2 * m2 + (1.0 - b2) * ev.gradient.cwiseProduct(ev.gradient);
      const double c1 = 1.0 - std::pow(b1, it + 1);
      const double c2 = 1.0 - std::pow(b2, it + 1);
      cur.amplitudes -= config.learning_rate *
                        (m1 / c1).cwiseQuotient(
                            ((m2 / c2).cwiseSqrt().array() + adam_eps).matrix());
    } else {  // quasi_newton: L-BFGS two-loop with Armijo backtracking
      if (prev_u.size() > 0) {
        Eigen::MatrixXd s = cur.amplitudes - prev_u;
        Eigen::MatrixXd y = ev.gradient - prev_g;
        const double sy = (s.array() * y.array()).sum();
        if (sy > 1e-30) {
          s_hist.push_back(std::move(s));
          y_hist.push_back(std::move(y));
          if (int(s_hist.size()) > lbfgs_mem) {
            s_hist.erase(s_hist.begin());
            y_hist.erase(y_hist.begin());
          }
        }
      }
      Eigen::MatrixXd q = ev.gradient;
      std::vector<double> alpha(s_hist.size());
      for (int i = int(s_hist.size()) - 1; i >= 0; --i) {
        const double rho_i = 1.0 / (s_hist[i].array() * y_hist[i].array()).sum();
        alpha[i] = rho_i * (s_hist[i].array() * q.array()).sum();
        q -= alpha[i] * y_hist[i];
      }
      if (!s_hist.empty()) {
        const auto& s = s_hist.back();
        const auto& y = y_hist.back();
        q *= (s.array() * y.array()).sum() / (y.array() * y.array()).sum();
      } else {
        q *= config.learning_rate / std::max(gnorm, 1e-300);
      }
      for (size_t i = 0; i < s_hist.size(); ++i) {
        const double rho_i = 1.0 / (s_hist[i].array() * y_hist[i].array()).sum();
        const double beta = rho_i * (y_hist[i].array() * q.array()).sum();
        q += (alpha[i] - beta) * s_hist[i];
      }
      prev_u = cur.amplitudes;
      prev_g = ev.gradient;
      const double gq = (ev.gradient.array() * q.array()).sum();
      double step = 1.0;
      PulseSchedule trial = cur;
      for (int ls = 0; ls < 20; ++ls) {
        trial.amplitudes = cur.amplitudes - step * q;
        clip_amplitudes(trial, config.amplitude_bound);
        const double fobj =
            objective_only ? objective_only(trial) : eval(trial, it).objective;
        if (std::isfinite(fobj) && fobj <= ev.objective - 1e-4 * step * gq) break;
        step *= 0.5;
      }
      cur = trial;
    }
    clip_amplitudes(cur, config.amplitude_bound);

    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    trace.iterations.push_back({ev.objective, gnorm, ev.p0, ms});

    const bool grad_done =
        config.gradient_tolerance > 0.0 && gnorm < config.gradient_tolerance;
    const bool obj_done = config.objective_tolerance > 0.0 &&
                          std::abs(prev_obj - ev.objective) < config.objective_tolerance;
    prev_obj = ev.objective;
    if (grad_done && obj_done) break;
    if (grad_done && config.objective_tolerance == 0.0) break;
    if (obj_done && config.gradient_tolerance == 0.0) break;
  }

  // best-seen guarantee covers the final iterate too
  Evaluation last = eval(cur, config.max_iterations);
  if (last.objective < trace.best_objective) {
    trace.best_objective = last.objective;
    best = cur;
  }
  return {best, trace};
}

/// Convenience wrapper for deterministic closed-system optimization.
inline std::pair<PulseSchedule, ConvergenceTrace> optimize_closed(
    const PulseSchedule& initial, const SystemModel& model,
    const ObjectiveSpec& objective, const OptimizerConfig& config) {
  EvalFn eval = [&](const PulseSchedule& p, int) {
    auto [phi, grad] = closed_objective_and_gradient(p, model, objective,
                                                     config.scheme);
    return Evaluation{phi, std::move(grad)};
  };
  ObjFn obj = [&](const PulseSchedule& p) {
    return closed_objective_and_gradient(p, model, objective, config.scheme)
        .first;
  };
  return optimize(initial, eval, config, obj);
}

}  // namespace flagrape
