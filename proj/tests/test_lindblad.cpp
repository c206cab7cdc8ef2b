#include "flagrape/lindblad.hpp"
#include "flagrape/catcode.hpp"
#include "flagrape/grape_core.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace flagrape;

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

SystemModel baseline_model(int d_c = 6) {
  return build_dispersive_model(kTwoPi * 2.59e6, d_c,
                           {kTwoPi * 275.0, kTwoPi * 810.0, kTwoPi * 8250.0});
}

PulseSchedule random_pulses(int n, int j, double dt, double scale,
                            uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  PulseSchedule p = PulseSchedule::zeros(n, j, dt);
  for (int k = 0; k < n; ++k)
    for (int c = 0; c < j; ++c) p.amplitudes(k, c) = dist(rng);
  return p;
}

Matrix pure(const Vector& psi) { return psi * psi.adjoint(); }

}  // namespace

TEST_CASE("build_dispersive_model structure") {
  const SystemModel m = baseline_model(10);
  CHECK(m.controls.size() == 4);
  CHECK(m.jumps.size() == 3);
  CHECK(is_hermitian(m.drift));
  for (const auto& hc : m.controls) CHECK(is_hermitian(hc));
  CHECK(is_hermitian(m.projector));
  CHECK((m.projector * m.projector - m.projector).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(build_dispersive_model(1.0, 6, {-1.0, 0.0, 0.0}),
                  std::invalid_argument);

  // drift shifts the cavity by +chi/2 when the qubit is in |g>
  const Vector one_g = tensor(fock_state(1, 10), fock_state(0, 2));
  CHECK(std::abs((one_g.adjoint() * m.drift * one_g)(0).real() -
                 0.5 * kTwoPi * 2.59e6) < 1.0);
}

TEST_CASE("zero rates give unitary propagation") {
  SystemModel m = build_dispersive_model(kTwoPi * 2.59e6, 6, {0.0, 0.0, 0.0});
  const PulseSchedule p = random_pulses(20, 4, 1e-9, kTwoPi * 5e6, 3);
  const Vector psi0 = tensor(fock_state(0, 6), fock_state(0, 2));
  const Matrix rho = propagate_master(pure(psi0), p, m);
  CHECK(std::abs((rho * rho).trace().real() - 1.0) < 1e-9);  // purity
  CHECK(std::abs(rho.trace().real() - 1.0) < 1e-8);
}

TEST_CASE("amplitude damping population decay") {
  // zero H, single jump a at rate gamma, rho0 = |1, g><1, g|, gamma T = 0.1
  SystemModel m = baseline_model(4);
  m.drift.setZero();
  const double gamma = m.jumps[0].rate;
  m.jumps[1].rate = m.jumps[2].rate = 0.0;
  const double T = 0.1 / gamma;
  const PulseSchedule p = PulseSchedule::zeros(1000, 4, T / 1000);
  const Vector one_g = tensor(fock_state(1, 4), fock_state(0, 2));

  for (auto method : {Integrator::liouville_exp, Integrator::rk4}) {
    const Matrix rho = propagate_master(pure(one_g), p, m, {method, 4});
    const double pop = (one_g.adjoint() * rho * one_g)(0).real();
    CHECK(std::abs(pop - std::exp(-0.1)) < 1e-6);
  }
}

TEST_CASE("dephasing coherence decay") {
  SystemModel m = baseline_model(2);
  m.drift.setZero();
  const double gamma = m.jumps[2].rate;
  m.jumps[0].rate = m.jumps[1].rate = 0.0;
  const double T = 0.05 / gamma;  // 2 gamma T = 0.1
  const PulseSchedule p = PulseSchedule::zeros(1000, 4, T / 1000);
  const Vector plus =
      tensor(fock_state(0, 2), Vector((fock_state(0, 2) + fock_state(1, 2)) /
                                      std::sqrt(2.0)));
  const Matrix rho = propagate_master(pure(plus), p, m);
  // off-diagonal |0,g><0,e| element decays as e^{-2 gamma T}
  CHECK(std::abs(std::abs(rho(0, 1)) - 0.5 * std::exp(-0.1)) < 1e-6);
}

TEST_CASE("Rabi oscillation under constant drive") {
  SystemModel m = baseline_model(2);
  m.drift.setZero();
  for (auto& j : m.jumps) j.rate = 0.0;
  const double u = kTwoPi * 5e6;
  const double T = 0.6 / u;
  PulseSchedule p = PulseSchedule::zeros(1000, 4, T / 1000);
  p.amplitudes.col(0).setConstant(u);  // sigma_x channel
  const Vector g = tensor(fock_state(0, 2), fock_state(0, 2));
  const Vector e = tensor(fock_state(0, 2), fock_state(1, 2));
  const Matrix rho = propagate_master(pure(g), p, m);
  const double pop = (e.adjoint() * rho * e)(0).real();
  CHECK(std::abs(pop - std::pow(std::sin(u * T), 2)) < 1e-8);
}

TEST_CASE("trace preservation and positivity at baseline") {
  const SystemModel m = baseline_model(6);
  const PulseSchedule p = random_pulses(100, 4, 1e-9, kTwoPi * 1e7, 7);
  const Vector psi0 = tensor(fock_state(0, 6), fock_state(0, 2));
  for (auto method : {Integrator::liouville_exp, Integrator::rk4}) {
    const Matrix rho = propagate_master(pure(psi0), p, m, {method, 4});
    CHECK(std::abs(rho.trace().real() - 1.0) < 1e-8);
    CHECK(is_hermitian(rho, 1e-10));
    CHECK(min_eigenvalue(rho) > -1e-8);  // up to integration error
  }
}

TEST_CASE("integrators agree at baseline rates") {
  const SystemModel m = baseline_model(6);
  const PulseSchedule p = random_pulses(1000, 4, 1e-10, kTwoPi * 1e7, 17);
  const Vector psi0 = tensor(fock_state(0, 6), fock_state(0, 2));
  const Matrix a = propagate_master(pure(psi0), p, m,
                                    {Integrator::liouville_exp, 4});
  const Matrix b = propagate_master(pure(psi0), p, m, {Integrator::rk4, 4});
  // trace distance = 1/2 sum |eigenvalues of a - b|
  Eigen::SelfAdjointEigenSolver<Matrix> es(a - b, Eigen::EigenvaluesOnly);
  CHECK(0.5 * es.eigenvalues().cwiseAbs().sum() < 1e-6);
}

TEST_CASE("post_select") {
  const SystemModel m = baseline_model(4);
  const Vector zg = tensor(fock_state(0, 4), fock_state(0, 2));
  const Vector ze = tensor(fock_state(0, 4), fock_state(1, 2));

  auto [kept, p0] = post_select(pure(zg), m);
  CHECK(p0 == Catch::Approx(1.0).margin(1e-12));
  CHECK((kept - pure(zg)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(post_select(pure(ze), m), DegeneratePostSelection);

  auto [kept2, p02] = post_select(Matrix(0.5 * pure(zg) + 0.5 * pure(ze)), m);
  CHECK(p02 == Catch::Approx(0.5).margin(1e-12));
  CHECK((kept2 - pure(zg)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(kept2.trace().real() - 1.0) < 1e-10);
}

TEST_CASE("infidelity measures") {
  const SystemModel m = baseline_model(4);
  const Vector zg = tensor(fock_state(0, 4), fock_state(0, 2));
  const Vector og = tensor(fock_state(1, 4), fock_state(0, 2));

  CHECK(infidelity_pre(pure(zg), zg) == Catch::Approx(0.0).margin(1e-12));
  CHECK(infidelity_pre(pure(og), zg) == Catch::Approx(1.0).margin(1e-12));

  // closed system ending with the qubit in |g>: f_post == f_pre, p0 == 1
  SystemModel closed = build_dispersive_model(kTwoPi * 2.59e6, 4, {0.0, 0.0, 0.0});
  PulseSchedule p = PulseSchedule::zeros(50, 4, 1e-9);
  p.amplitudes.col(2).setConstant(kTwoPi * 3e6);  // cavity drive only
  const Matrix rho = propagate_master(pure(zg), p, closed);
  auto [fpost, p0] = infidelity_post(rho, zg, closed);
  CHECK(std::abs(p0 - 1.0) < 1e-10);
  CHECK(std::abs(fpost - infidelity_pre(rho, zg)) < 1e-10);
}

TEST_CASE("closed-limit infidelity matches the unitary objective") {
  SystemModel m = build_dispersive_model(kTwoPi * 2.59e6, 6, {0.0, 0.0, 0.0});
  const PulseSchedule p = random_pulses(40, 4, 2.5e-10, kTwoPi * 1e7, 23);
  const Vector psi0 = tensor(fock_state(0, 6), fock_state(0, 2));
  Vector target = tensor(
      Vector((fock_state(0, 6) + fock_state(1, 6)) / std::sqrt(2.0)),
      fock_state(0, 2));

  ObjectiveSpec spec;
  spec.kind = ObjectiveKind::conventional;
  spec.constraints = {{psi0, target, std::nullopt, {}}};
  const double phi = closed_objective(p, m, spec);
  const Matrix rho = propagate_master(pure(psi0), p, m);
  CHECK(std::abs(phi - infidelity_pre(rho, target)) < 1e-9);
}

TEST_CASE("logical_infidelity") {
  // unencoded qubit with the bare Paulis
  const Vector psi = (fock_state(0, 2) +
                      std::exp(kI * 0.3) * fock_state(1, 2)) /
                     std::sqrt(2.0);
  const TomographySet tomo{pauli(Pauli::X), pauli(Pauli::Y), pauli(Pauli::Z)};
  const Eigen::Vector3d bloch(std::cos(0.3), std::sin(0.3), 0.0);
  CHECK(logical_infidelity(pure(psi), tomo, bloch) ==
        Catch::Approx(0.0).margin(1e-12));
  CHECK(logical_infidelity(Matrix(0.5 * Matrix::Identity(2, 2)), tomo, bloch) ==
        Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("decoded infidelity of the exact encoded target") {
  const CatCodeParams params{2.0, 40};
  const Vector target = logical_target(params, -M_PI / 4.0);
  const TomographySet tomo = cat_tomography(params);
  const Eigen::Vector3d bloch(std::cos(M_PI / 4.0), -std::sin(M_PI / 4.0), 0.0);
  // floor set by the approximate X/Y tomography operators at alpha = 2
  CHECK(logical_infidelity(pure(target), tomo, bloch) <= 6e-3);
}

TEST_CASE("ObjectiveSpec validation") {
  const Vector psi0 = fock_state(0, 4);
  ObjectiveSpec bad;
  bad.constraints = {{Vector(2.0 * psi0), psi0, std::nullopt, {}}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  ObjectiveSpec ok;
  ok.constraints = {{psi0, psi0, std::nullopt, {}}};
  CHECK_NOTHROW(ok.validate());
}
