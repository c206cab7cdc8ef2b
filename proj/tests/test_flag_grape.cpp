#include "flagrape/flag_grape.hpp"
#include "flagrape/catcode.hpp"

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

ObjectiveSpec post_selected_objective(const SystemModel& m) {
  const int d = m.space.cavity_dim;
  ObjectiveSpec spec;
  spec.kind = ObjectiveKind::post_selected;
  spec.constraints = {
      {tensor(fock_state(0, d), fock_state(0, 2)),
       tensor(Vector((fock_state(0, d) + fock_state(1, d)) / std::sqrt(2.0)),
              fock_state(0, 2)),
       std::nullopt,
       {}}};
  return spec;
}

}  // namespace

TEST_CASE("flag_objective arithmetic") {
  CHECK(flag_objective({0.5}, {0.5}) == Catch::Approx(0.0).margin(1e-15));
  CHECK(flag_objective({0.0}, {0.5}) == Catch::Approx(1.0).margin(1e-15));
  CHECK(flag_objective({0.2, 0.3}, {0.4, 0.6}) ==
        Catch::Approx(1.0).margin(1e-12));
  CHECK_THROWS_AS(flag_objective({0.1}, {1e-15}), DegeneratePostSelection);
}

TEST_CASE("zero rates: numerator equals closed fidelity") {
  SystemModel m = build_dispersive_model(kTwoPi * 2.59e6, 6, {0.0, 0.0, 0.0});
  const ObjectiveSpec spec = post_selected_objective(m);
  const PulseSchedule p = random_pulses(40, 4, 2.5e-10, kTwoPi * 1e7, 3);
  const auto ev = estimate_numerator_and_p0(p, m, spec, 50, 1);

  ObjectiveSpec conv = spec;
  conv.kind = ObjectiveKind::conventional;
  const double fid = 1.0 - closed_objective(p, m, conv);
  CHECK(std::abs(ev.numerators[0] - fid) < 1e-10);

  // p0 = overlap of the final state with the kept subspace
  const Vector& psi0 = spec.constraints[0].initial;
  const Matrix rho = propagate_master(psi0 * psi0.adjoint(), p, m);
  CHECK(std::abs(ev.p0s[0] - (m.projector * rho).trace().real()) < 1e-9);
}

TEST_CASE("estimates agree with the oracle at baseline") {
  const SystemModel m = baseline_model(6);
  const ObjectiveSpec spec = post_selected_objective(m);
  const Matrix tproj = spec.constraints[0].target *
                       spec.constraints[0].target.adjoint();
  const Vector& psi0 = spec.constraints[0].initial;
  const double bias = truncation_bias_bound(m, 250 * 4e-10);

  int within = 0;
  const int reps = 40;
  std::mt19937_64 seeds(31);
  for (int r = 0; r < reps; ++r) {
    const PulseSchedule p = random_pulses(250, 4, 4e-10, kTwoPi * 1e7, seeds());
    const auto ev = estimate_numerator_and_p0(p, m, spec, 50, seeds());
    const Matrix rho =
        propagate_master(psi0 * psi0.adjoint(), p, m, {Integrator::rk4, 4});
    // 3 sigma on the total estimate; conservative SE bound P_1 / sqrt(M-1)
    const double band =
        3.0 * ev.ensembles[0].total_single_jump_mass / std::sqrt(49.0) + bias;
    const bool ok_n =
        std::abs(ev.numerators[0] - (tproj * rho).trace().real()) < band;
    const bool ok_p =
        std::abs(ev.p0s[0] - (m.projector * rho).trace().real()) < band;
    within += ok_n && ok_p;
  }
  CHECK(within >= int(0.9 * reps));
}

TEST_CASE("M = 1 numerator bias bounded by the single-jump mass") {
  const SystemModel m = baseline_model(6);
  const ObjectiveSpec spec = post_selected_objective(m);
  const Vector& psi0 = spec.constraints[0].initial;
  const PulseSchedule p = random_pulses(200, 4, 5e-10, kTwoPi * 1e7, 41);
  const auto ev = estimate_numerator_and_p0(p, m, spec, 1, 0);
  const Matrix rho =
      propagate_master(psi0 * psi0.adjoint(), p, m, {Integrator::rk4, 4});
  const Matrix tproj = spec.constraints[0].target *
                       spec.constraints[0].target.adjoint();
  CHECK(std::abs(ev.numerators[0] - (tproj * rho).trace().real()) <=
        ev.ensembles[0].total_single_jump_mass + 1e-9);
}

TEST_CASE("frozen-ensemble gradient matches frozen finite differences") {
  const SystemModel m = baseline_model(6);
  const ObjectiveSpec spec = post_selected_objective(m);
  const PulseSchedule p = random_pulses(20, 4, 1e-10, kTwoPi * 5e6, 53);
  const auto ev = estimate_numerator_and_p0(p, m, spec, 30, 9);
  const Eigen::MatrixXd g = flag_gradient(p, m, spec, ev);
  const double gmax = g.cwiseAbs().maxCoeff();

  std::mt19937_64 rng(17);
  const double h = 1e3;
  double worst = 0.0;
  for (int t = 0; t < 25; ++t) {
    const int k = int(rng() % 20), j = int(rng() % 4);
    PulseSchedule plus = p, minus = p;
    plus.amplitudes(k, j) += h;
    minus.amplitudes(k, j) -= h;
    const double fd = (frozen_objective(plus, m, spec, ev) -
                       frozen_objective(minus, m, spec, ev)) /
                      (2.0 * h);
    worst = std::max(worst, std::abs(g(k, j) - fd) / gmax);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("closed-limit flag gradient reduces to the closed gradient") {
  SystemModel m = build_dispersive_model(kTwoPi * 2.59e6, 6, {0.0, 0.0, 0.0});
  m.projector = Matrix::Identity(12, 12);  // M_0 = I keeps everything
  ObjectiveSpec spec = post_selected_objective(m);
  const PulseSchedule p = random_pulses(25, 4, 1e-10, kTwoPi * 5e6, 59);
  const auto ev = estimate_numerator_and_p0(p, m, spec, 10, 2);
  const Eigen::MatrixXd gf = flag_gradient(p, m, spec, ev);

  ObjectiveSpec conv = spec;
  conv.kind = ObjectiveKind::conventional;
  const Eigen::MatrixXd gc = closed_gradient(p, m, conv);
  CHECK((gf - gc).cwiseAbs().maxCoeff() <
        1e-10 * std::max(1.0, gc.cwiseAbs().maxCoeff()));
  CHECK(std::abs(flag_objective(ev) - closed_objective(p, m, conv)) < 1e-10);
}

TEST_CASE("descent direction decreases the frozen objective") {
  const SystemModel m = baseline_model(6);
  const ObjectiveSpec spec = post_selected_objective(m);
  int down = 0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    const PulseSchedule p =
        random_pulses(30, 4, 1e-10, kTwoPi * 5e6, 100 + r);
    const auto ev = estimate_numerator_and_p0(p, m, spec, 20, r);
    const Eigen::MatrixXd g = flag_gradient(p, m, spec, ev);
    PulseSchedule stepped = p;
    stepped.amplitudes -= (1e3 / g.cwiseAbs().maxCoeff()) * g;
    down += frozen_objective(stepped, m, spec, ev) <
            frozen_objective(p, m, spec, ev);
  }
  CHECK(down >= int(0.95 * reps));
}

TEST_CASE("post-selection can only help on the kept subspace") {
  const SystemModel m = baseline_model(6);
  const ObjectiveSpec spec = post_selected_objective(m);
  const Vector& psi0 = spec.constraints[0].initial;
  const Vector& target = spec.constraints[0].target;
  const PulseSchedule p = random_pulses(100, 4, 4e-10, kTwoPi * 1e7, 71);
  const Matrix rho = propagate_master(psi0 * psi0.adjoint(), p, m);
  auto [fpost, p0] = infidelity_post(rho, target, m);
  CHECK(fpost <= infidelity_pre(rho, target) + 1e-12);
}

TEST_CASE("unencoded Paulis reproduce the post-selected objective") {
  const SystemModel m = baseline_model(2);  // two-level "cavity"
  const HilbertSpace& space = m.space;
  const double theta = 0.3;
  const Vector cav_target =
      Vector((fock_state(0, 2) + std::exp(kI * theta) * fock_state(1, 2)) /
             std::sqrt(2.0));
  const Vector initial = tensor(fock_state(0, 2), fock_state(0, 2));
  const Vector target = tensor(cav_target, fock_state(0, 2));

  // cavity-level Paulis in the {|0>, |1>} basis, lifted to the composite space
  TomographySet tomo{lift_cavity(pauli(Pauli::X), space),
                     lift_cavity(pauli(Pauli::Y), space),
                     lift_cavity(pauli(Pauli::Z), space)};

  ObjectiveSpec logical;
  logical.kind = ObjectiveKind::logical_post_selected;
  logical.constraints = {{initial, target, tomo,
                          Eigen::Vector3d(std::cos(theta), std::sin(theta), 0.0)}};

  ObjectiveSpec flag;
  flag.kind = ObjectiveKind::post_selected;
  flag.constraints = {{initial, target, std::nullopt, {}}};

  const PulseSchedule p = random_pulses(40, 4, 2.5e-10, kTwoPi * 1e7, 83);
  const auto evl = estimate_numerator_and_p0(p, m, logical, 30, 4);
  const auto evf = estimate_numerator_and_p0(p, m, flag, 30, 4);
  auto [phi_l, g_l] = logical_objective_and_gradient(p, m, logical, evl);
  // 1/2 - <B.P>/2 equals 1 - |<target|psi>|^2 for a pure qubit target
  CHECK(std::abs(phi_l - flag_objective(evf)) < 1e-9);
}

TEST_CASE("logical gradient matches frozen finite differences") {
  const SystemModel m = baseline_model(11);
  const HilbertSpace& space = m.space;
  const CatCodeParams params{1.0, 11};  // small-alpha cat keeps the dim low
  const TomographySet cav = cat_tomography(params);
  TomographySet tomo{lift_cavity(cav.x, space), lift_cavity(cav.y, space),
                     lift_cavity(cav.z, space)};
  ObjectiveSpec spec;
  spec.kind = ObjectiveKind::logical_post_selected;
  spec.constraints = {{tensor(fock_state(0, 11), fock_state(0, 2)),
                       tensor(logical_target(params, -M_PI / 4.0),
                              fock_state(0, 2)),
                       tomo,
                       Eigen::Vector3d(std::cos(M_PI / 4.0),
                                       -std::sin(M_PI / 4.0), 0.0)}};

  const PulseSchedule p = random_pulses(15, 4, 1e-10, kTwoPi * 5e6, 97);
  const auto ev = estimate_numerator_and_p0(p, m, spec, 20, 6);
  auto [phi, g] = logical_objective_and_gradient(p, m, spec, ev);
  CHECK(std::abs(phi - frozen_objective(p, m, spec, ev)) < 1e-12);

  const double gmax = g.cwiseAbs().maxCoeff();
  std::mt19937_64 rng(29);
  const double h = 1e3;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int k = int(rng() % 15), j = int(rng() % 4);
    PulseSchedule plus = p, minus = p;
    plus.amplitudes(k, j) += h;
    minus.amplitudes(k, j) -= h;
    const double fd = (frozen_objective(plus, m, spec, ev) -
                       frozen_objective(minus, m, spec, ev)) /
                      (2.0 * h);
    worst = std::max(worst, std::abs(g(k, j) - fd) / gmax);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("cat-code logical objective on the exact encoded target") {
  const CatCodeParams params{2.0, 40};
  const Vector target = logical_target(params, -M_PI / 4.0);
  const TomographySet tomo = cat_tomography(params);
  const Eigen::Vector3d bloch(std::cos(M_PI / 4.0), -std::sin(M_PI / 4.0), 0.0);
  const double s = bloch(0) * (target.adjoint() * tomo.x * target)(0).real() +
                   bloch(1) * (target.adjoint() * tomo.y * target)(0).real() +
                   bloch(2) * (target.adjoint() * tomo.z * target)(0).real();
  // floor set by the approximate X/Y tomography operators at alpha = 2
  CHECK(0.5 - 0.5 * s <= 6e-3);
}

TEST_CASE("make_flag_eval is deterministic per iteration") {
  const SystemModel m = baseline_model(6);
  const ObjectiveSpec spec = post_selected_objective(m);
  const PulseSchedule p = random_pulses(30, 4, 4e-10, kTwoPi * 1e7, 111);
  EvalFn eval = make_flag_eval(m, spec, 20, 77);
  const Evaluation a = eval(p, 3);
  const Evaluation b = eval(p, 3);
  CHECK(a.objective == b.objective);
  CHECK(a.gradient == b.gradient);
  CHECK(a.p0 == b.p0);
  const Evaluation c = eval(p, 4);  // resampled ensemble
  CHECK(a.objective != c.objective);
}
