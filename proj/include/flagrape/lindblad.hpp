#pragma once

// System-model construction and the exact master-equation oracle:
// Lindblad propagation with piecewise-constant controls, ancilla
// post-selection, and the infidelity measures evaluated on exact states.

#include "flagrape/hilbert.hpp"

#include <Eigen/Eigenvalues>

#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace flagrape {

struct DegeneratePostSelection : std::runtime_error {
  explicit DegeneratePostSelection(double p0)
      : std::runtime_error("post-selection probability below 1e-12 (p0 = " +
                           std::to_string(p0) + ")") {}
};

struct JumpChannel {
  Matrix op;    // c_mu on the composite space
  double rate;  // gamma_mu, angular frequency (rad/s)
};

/// Drift + control Hamiltonians, jump channels and the ancilla projector.
/// Immutable after construction; validate() enforces the Hermiticity and
/// projector contracts.
struct SystemModel {
  HilbertSpace space;
  Matrix drift;
  std::vector<Matrix> controls;
  std::vector<JumpChannel> jumps;
  Matrix projector;  // M_0

  int dim() const { return space.total_dim(); }

  void validate(double tol = 1e-10) const {
    const int d = dim();
    auto check_dim = [&](const Matrix& m, const char* what) {
      if (m.rows() != d || m.cols() != d)
        throw std::invalid_argument(std::string("SystemModel: ") + what +
                                    " has wrong dimension");
    };
    check_dim(drift, "drift");
    if (!is_hermitian(drift, tol))
      throw std::invalid_argument("SystemModel: drift not Hermitian");
    for (const auto& hc : controls) {
      check_dim(hc, "control");
      if (!is_hermitian(hc, tol))
        throw std::invalid_argument("SystemModel: control not Hermitian");
    }
    for (const auto& j : jumps) {
      check_dim(j.op, "jump operator");
      if (j.rate < 0.0)
        throw std::invalid_argument("SystemModel: negative jump rate");
    }
    check_dim(projector, "projector");
    if (!is_hermitian(projector, tol) ||
        (projector * projector - projector).cwiseAbs().maxCoeff() > tol)
      throw std::invalid_argument("SystemModel: projector not an orthogonal projector");
  }
};

/// Piecewise-constant control amplitudes u_k^(j) on an N-step grid.
struct PulseSchedule {
  int steps;        // N
  int channels;     // J
  double dt;        // seconds
  Eigen::MatrixXd amplitudes;  // N x J, rad/s

  double duration() const { return steps * dt; }

  static PulseSchedule zeros(int n, int j, double dt) {
    return PulseSchedule{n, j, dt, Eigen::MatrixXd::Zero(n, j)};
  }
};

/// H_k = H_0 + sum_j u_k^(j) H_c^(j)
inline Matrix step_hamiltonian(const SystemModel& model,
                               const Eigen::VectorXd& u) {
  Matrix h = model.drift;
  for (size_t j = 0; j < model.controls.size(); ++j) h += u(j) * model.controls[j];
  return h;
}

// ---------------------------------------------------------------------------
// Model builders

/// The dispersive cavity-transmon model: drift (chi/2) a'a sigma_z, drives
/// {sigma_x, sigma_y, a+a', i(a-a')}, losses {a, sigma_-, sigma_z}, flag
/// projector M_0 = I (x) |g><g|. All frequencies are angular (rad/s).
inline SystemModel build_dispersive_model(double chi, int d_c,
                                     const std::array<double, 3>& rates) {
  for (double g : rates)
    if (g < 0.0) throw std::invalid_argument("build_dispersive_model: negative rate");
  HilbertSpace space(d_c);
  const Matrix a = fock_annihilation(d_c);
  const Matrix adag = a.adjoint();

  SystemModel m{space,
                0.5 * chi * tensor(fock_number(d_c), pauli(Pauli::Z)),
                {lift_qubit(pauli(Pauli::X), space),
                 lift_qubit(pauli(Pauli::Y), space),
                 lift_cavity(a + adag, space),
                 lift_cavity(kI * (a - adag), space)},
                {{lift_cavity(a, space), rates[0]},
                 {lift_qubit(pauli(Pauli::minus), space), rates[1]},
                 {lift_qubit(pauli(Pauli::Z), space), rates[2]}},
                Matrix::Zero(2 * d_c, 2 * d_c)};
  Matrix gg = Matrix::Zero(2, 2);
  gg(0, 0) = 1.0;
  m.projector = lift_qubit(gg, space);
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Master-equation propagation

enum class Integrator { liouville_exp, rk4 };

struct IntegratorOptions {
  Integrator method = Integrator::liouville_exp;
  int rk4_substeps = 4;
};

/// Dense Liouvillian acting on the column-major vectorization of rho.
inline Matrix liouvillian(const SystemModel& model, const Eigen::VectorXd& u) {
  const int d = model.dim();
  const Matrix id = Matrix::Identity(d, d);
  const Matrix h = step_hamiltonian(model, u);
  // vec(A rho B) = (B^T (x) A) vec(rho), column-major vec.
  Matrix L = -kI * (tensor(id, h) - tensor(h.transpose(), id));
  for (const auto& j : model.jumps) {
    const Matrix cdc = j.op.adjoint() * j.op;
    L += j.rate * (tensor(j.op.conjugate(), j.op) -
                   0.5 * tensor(id, cdc) - 0.5 * tensor(cdc.transpose(), id));
  }
  return L;
}

inline Matrix lindblad_rhs(const SystemModel& model, const Matrix& h,
                           const Matrix& rho) {
  Matrix out = -kI * (h * rho - rho * h);
  for (const auto& j : model.jumps) {
    const Matrix crho = j.op * rho;
    const Matrix cdc_rho = j.op.adjoint() * crho;
    out += j.rate * (crho * j.op.adjoint() -
                     0.5 * (cdc_rho + cdc_rho.adjoint()));
  }
  return out;
}

/// Integrates d rho/dt = -i[H(t), rho] + dissipator with H piecewise constant
/// per step. Default: exact exponential of the step-constant Liouvillian on
/// vec(rho), cached per distinct amplitude row; rk4 with fixed substeps as the
/// fallback for larger truncations.
inline Matrix propagate_master(const Matrix& rho0, const PulseSchedule& pulses,
                               const SystemModel& model,
                               const IntegratorOptions& opts = {}) {
  const int d = model.dim();
  if (rho0.rows() != d || rho0.cols() != d)
    throw std::invalid_argument("propagate_master: state dimension mismatch");
  if (pulses.channels != int(model.controls.size()))
    throw std::invalid_argument("propagate_master: channel count mismatch");
  if (!pulses.amplitudes.allFinite())
    throw std::invalid_argument("propagate_master: non-finite amplitudes");

  if (opts.method == Integrator::liouville_exp) {
    std::map<std::vector<double>, Matrix> cache;
    Eigen::VectorXcd v = Eigen::Map<const Eigen::VectorXcd>(rho0.data(), d * d);
    for (int k = 0; k < pulses.steps; ++k) {
      const Eigen::VectorXd u = pulses.amplitudes.row(k);
      std::vector<double> key(u.data(), u.data() + u.size());
      auto it = cache.find(key);
      if (it == cache.end())
        it = cache.emplace(std::move(key),
                           matrix_exponential(pulses.dt * liouvillian(model, u)))
                 .first;
      v = it->second * v;
    }
    return Eigen::Map<const Matrix>(v.data(), d, d);
  }

  // RK4 on the matrix form, fixed substeps per pulse step.
  Matrix rho = rho0;
  const double h = pulses.dt / opts.rk4_substeps;
  for (int k = 0; k < pulses.steps; ++k) {
    const Matrix ham = step_hamiltonian(model, pulses.amplitudes.row(k));
    for (int s = 0; s < opts.rk4_substeps; ++s) {
      const Matrix k1 = lindblad_rhs(model, ham, rho);
      const Matrix k2 = lindblad_rhs(model, ham, rho + 0.5 * h * k1);
      const Matrix k3 = lindblad_rhs(model, ham, rho + 0.5 * h * k2);
      const Matrix k4 = lindblad_rhs(model, ham, rho + h * k3);
      rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return rho;
}

// ---------------------------------------------------------------------------
// Post-selection and infidelity measures

inline constexpr double kP0Floor = 1e-12;

/// M_0 rho M_0 / p0 together with the success probability p0 = Tr[M_0 rho].
inline std::pair<Matrix, double> post_select(const Matrix& rhoT,
                                             const SystemModel& model) {
  const double p0 = (model.projector * rhoT).trace().real();
  if (p0 < kP0Floor) throw DegeneratePostSelection(p0);
  Matrix kept = model.projector * rhoT * model.projector / p0;
  kept /= kept.trace().real();  // renormalize residual projector round-off
  return {kept, p0};
}

/// f_pre = 1 - <psi_t| rho(T) |psi_t>
inline double infidelity_pre(const Matrix& rhoT, const Vector& target) {
  return 1.0 - (target.adjoint() * rhoT * target)(0).real();
}

/// f_post = 1 - <psi_t| rho(T) |psi_t> / p0, with p0.
inline std::pair<double, double> infidelity_post(const Matrix& rhoT,
                                                 const Vector& target,
                                                 const SystemModel& model) {
  const double p0 = (model.projector * rhoT).trace().real();
  if (p0 < kP0Floor) throw DegeneratePostSelection(p0);
  const double num = (target.adjoint() * rhoT * target)(0).real();
  return {1.0 - num / p0, p0};
}

struct TomographySet {
  Matrix x, y, z;  // Hermitian logical tomography operators
};

/// Decoded logical infidelity of an already post-selected state:
/// 1/2 - 1/2 (eps_X <X_L> + eps_Y <Y_L> + eps_Z <Z_L>).
inline double logical_infidelity(const Matrix& rho_f, const TomographySet& tomo,
                                 const Eigen::Vector3d& eps) {
  const double s = eps(0) * (tomo.x * rho_f).trace().real() +
                   eps(1) * (tomo.y * rho_f).trace().real() +
                   eps(2) * (tomo.z * rho_f).trace().real();
  return 0.5 - 0.5 * s;
}

// ---------------------------------------------------------------------------
// Objectives

enum class ObjectiveKind { conventional, post_selected, logical_post_selected };

/// One state-transfer constraint. For logical objectives the target is a
/// tomography triple on the composite space plus the target's logical Bloch
/// vector; otherwise it is a pure composite target state.
struct Constraint {
  Vector initial;
  Vector target;                       // used unless logical
  std::optional<TomographySet> tomo;   // composite-space operators
  Eigen::Vector3d bloch = Eigen::Vector3d::Zero();
};

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::conventional;
  std::vector<Constraint> constraints;

  void validate(double tol = 1e-10) const {
    for (const auto& c : constraints) {
      if (std::abs(c.initial.norm() - 1.0) > tol)
        throw std::invalid_argument("ObjectiveSpec: initial state not normalized");
      if (kind == ObjectiveKind::logical_post_selected) {
        if (!c.tomo) throw std::invalid_argument("ObjectiveSpec: missing tomography set");
        if (!is_hermitian(c.tomo->x, tol) || !is_hermitian(c.tomo->y, tol) ||
            !is_hermitian(c.tomo->z, tol))
          throw std::invalid_argument("ObjectiveSpec: tomography operator not Hermitian");
        if (c.bloch.squaredNorm() > 1.0 + 1e-10)
          throw std::invalid_argument("ObjectiveSpec: Bloch vector exceeds unit norm");
      } else if (std::abs(c.target.norm() - 1.0) > tol) {
        throw std::invalid_argument("ObjectiveSpec: target state not normalized");
      }
    }
  }
};

inline double min_eigenvalue(const Matrix& hermitian) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace flagrape
