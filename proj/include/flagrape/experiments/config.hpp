#pragma once

// Experiment configuration: an INI-style text format with nested sections
// (model, pulses, optimizer.closed, optimizer.flag, ensemble, sweeps, ...).
// All frequencies in config files are /2pi values in Hz; they are converted
// to angular rad/s on load. Unknown sections or keys are errors.

#include "flagrape/grape_core.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace flagrape {

inline constexpr double kTwoPi = 2.0 * M_PI;

enum class TaskKind { fock_state_prep, cat_state_prep };

struct OptimizerSection {
  std::string step_rule = "adaptive_moment";
  int max_iterations = 300;
  double learning_rate_hz = 2.5e5;
  double amplitude_bound_hz = 5e7;
  double init_scale_hz = 5e6;
  double gradient_tolerance = 0.0;
  double objective_tolerance = 0.0;
  std::string derivative_scheme = "first_order";

  OptimizerConfig to_optimizer_config(uint64_t seed) const {
    OptimizerConfig c;
    if (step_rule == "fixed_rate") c.step_rule = StepRule::fixed_rate;
    else if (step_rule == "adaptive_moment") c.step_rule = StepRule::adaptive_moment;
    else if (step_rule == "quasi_newton") c.step_rule = StepRule::quasi_newton;
    else throw std::invalid_argument("unknown step_rule: " + step_rule);
    if (derivative_scheme == "first_order") c.scheme = DerivativeScheme::first_order;
    else if (derivative_scheme == "exact") c.scheme = DerivativeScheme::exact;
    else throw std::invalid_argument("unknown derivative_scheme: " + derivative_scheme);
    c.max_iterations = max_iterations;
    c.learning_rate = kTwoPi * learning_rate_hz;
    c.amplitude_bound = kTwoPi * amplitude_bound_hz;
    c.init_scale = kTwoPi * init_scale_hz;
    c.gradient_tolerance = gradient_tolerance;
    c.objective_tolerance = objective_tolerance;
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct ExperimentConfig {
  // [task]
  TaskKind task = TaskKind::fock_state_prep;
  double target_phase = -M_PI / 4.0;  // theta in |0_L> + e^{i theta} |1_L>
  double cat_alpha = 2.0;

  // [model] (/2pi Hz)
  double chi_hz = 2.59e6;
  double gamma_cavity_hz = 275.0;
  double gamma_qubit_decay_hz = 810.0;
  double gamma_qubit_dephase_hz = 8250.0;
  int cavity_dim = 10;

  // [pulses]
  double duration_s = 1e-7;
  int steps = 250;

  // [ensemble]
  int ensemble_size = 20;
  int trajectories = 50;
  uint64_t seed = 1;

  OptimizerSection closed_opt{.step_rule = "quasi_newton",
                              .max_iterations = 1000,
                              .learning_rate_hz = 1e6};
  OptimizerSection flag_opt{.step_rule = "adaptive_moment",
                            .max_iterations = 800,
                            .learning_rate_hz = 5e4};

  // [sweeps]
  std::vector<double> gamma_factors = {0.25, 0.5, 1.0, 1.5, 2.0};
  std::vector<double> durations_s;
  std::vector<double> cavity_factors;
  std::vector<double> qubit_factors;
  int sweep_pulses = 5;
  int sweep_seeds = 5;

  // [evaluation]
  std::string integrator = "rk4";
  int rk4_substeps = 4;
  std::string frontier_fit = "quantile";  // or "hull"

  IntegratorOptions integrator_options() const {
    IntegratorOptions o;
    if (integrator == "rk4") o.method = Integrator::rk4;
    else if (integrator == "liouville_exp") o.method = Integrator::liouville_exp;
    else throw std::invalid_argument("unknown integrator: " + integrator);
    o.rk4_substeps = rk4_substeps;
    return o;
  }

  /// Paper-scale overrides: the desk-scale grid and ensemble sizes are
  /// replaced by N = 1000 steps and 500 seeds.
  void apply_full_scale() {
    steps = 1000;
    ensemble_size = 500;
  }

  /// Encoded-state task: longer gate, a truncation that holds the four
  /// coherent components of alpha = 2, and a smaller seed ensemble.
  void apply_cat_task() {
    task = TaskKind::cat_state_prep;
    duration_s = 2e-7;
    cavity_dim = 18;
    ensemble_size = 10;
  }
};

namespace detail {

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(std::strtod(cell.c_str(), nullptr));
  }
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in,
                                     const std::string& origin = "<config>") {
  ExperimentConfig cfg;
  std::string line, section;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    auto d = [&] { return std::strtod(val.c_str(), nullptr); };
    auto i = [&] { return std::atoi(val.c_str()); };

    if (section == "task") {
      if (key == "kind") {
        if (val == "fock_state_prep") cfg.task = TaskKind::fock_state_prep;
        else if (val == "cat_state_prep") cfg.task = TaskKind::cat_state_prep;
        else fail("unknown task kind: " + val);
      } else if (key == "target_phase") cfg.target_phase = d();
      else if (key == "cat_alpha") cfg.cat_alpha = d();
      else fail("unknown key in [task]: " + key);
    } else if (section == "model") {
      if (key == "chi_hz") cfg.chi_hz = d();
      else if (key == "gamma_cavity_hz") cfg.gamma_cavity_hz = d();
      else if (key == "gamma_qubit_decay_hz") cfg.gamma_qubit_decay_hz = d();
      else if (key == "gamma_qubit_dephase_hz") cfg.gamma_qubit_dephase_hz = d();
      else if (key == "cavity_dim") cfg.cavity_dim = i();
      else fail("unknown key in [model]: " + key);
    } else if (section == "pulses") {
      if (key == "duration_s") cfg.duration_s = d();
      else if (key == "steps") cfg.steps = i();
      else fail("unknown key in [pulses]: " + key);
    } else if (section == "ensemble") {
      if (key == "size") cfg.ensemble_size = i();
      else if (key == "trajectories") cfg.trajectories = i();
      else if (key == "seed") cfg.seed = std::strtoull(val.c_str(), nullptr, 10);
      else fail("unknown key in [ensemble]: " + key);
    } else if (section == "optimizer.closed" || section == "optimizer.flag") {
      OptimizerSection& o =
          section == "optimizer.closed" ? cfg.closed_opt : cfg.flag_opt;
      if (key == "step_rule") o.step_rule = val;
      else if (key == "max_iterations") o.max_iterations = i();
      else if (key == "learning_rate_hz") o.learning_rate_hz = d();
      else if (key == "amplitude_bound_hz") o.amplitude_bound_hz = d();
      else if (key == "init_scale_hz") o.init_scale_hz = d();
      else if (key == "gradient_tolerance") o.gradient_tolerance = d();
      else if (key == "objective_tolerance") o.objective_tolerance = d();
      else if (key == "derivative_scheme") o.derivative_scheme = val;
      else fail("unknown key in [" + section + "]: " + key);
    } else if (section == "sweeps") {
      if (key == "gamma_factors") cfg.gamma_factors = detail::parse_double_list(val);
      else if (key == "durations_s") cfg.durations_s = detail::parse_double_list(val);
      else if (key == "cavity_factors") cfg.cavity_factors = detail::parse_double_list(val);
      else if (key == "qubit_factors") cfg.qubit_factors = detail::parse_double_list(val);
      else if (key == "sweep_pulses") cfg.sweep_pulses = i();
      else if (key == "sweep_seeds") cfg.sweep_seeds = i();
      else fail("unknown key in [sweeps]: " + key);
    } else if (section == "evaluation") {
      if (key == "integrator") cfg.integrator = val;
      else if (key == "rk4_substeps") cfg.rk4_substeps = i();
      else if (key == "frontier_fit") cfg.frontier_fit = val;
      else fail("unknown key in [evaluation]: " + key);
    } else {
      fail("unknown section [" + section + "]");
    }
  }
  if (cfg.ensemble_size < 1) throw std::runtime_error("ensemble size must be >= 1");
  if (cfg.steps < 1 || cfg.duration_s <= 0.0)
    throw std::runtime_error("invalid pulse grid");
  for (double g : cfg.gamma_factors)
    if (g < 0.0) throw std::runtime_error("gamma factors must be >= 0");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  return parse_config(f, path);
}

/// Serializes the resolved configuration; written next to the results so a
/// run directory is self-describing.
inline std::string config_to_string(const ExperimentConfig& c) {
  std::ostringstream o;
  auto list = [](const std::vector<double>& v) {
    std::ostringstream s;
    for (size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  o << "# resolved experiment config; frequencies are /2pi values in Hz\n";
  o << "[task]\nkind = "
    << (c.task == TaskKind::fock_state_prep ? "fock_state_prep" : "cat_state_prep")
    << "\ntarget_phase = " << c.target_phase << "\ncat_alpha = " << c.cat_alpha
    << "\n\n";
  o << "[model]\nchi_hz = " << c.chi_hz << "\ngamma_cavity_hz = " << c.gamma_cavity_hz
    << "\ngamma_qubit_decay_hz = " << c.gamma_qubit_decay_hz
    << "\ngamma_qubit_dephase_hz = " << c.gamma_qubit_dephase_hz
    << "\ncavity_dim = " << c.cavity_dim << "\n\n";
  o << "[pulses]\nduration_s = " << c.duration_s << "\nsteps = " << c.steps << "\n\n";
  o << "[ensemble]\nsize = " << c.ensemble_size
    << "\ntrajectories = " << c.trajectories << "\nseed = " << c.seed << "\n\n";
  for (const auto* pair : {&c.closed_opt, &c.flag_opt}) {
    o << (pair == &c.closed_opt ? "[optimizer.closed]\n" : "[optimizer.flag]\n");
    o << "step_rule = " << pair->step_rule
      << "\nmax_iterations = " << pair->max_iterations
      << "\nlearning_rate_hz = " << pair->learning_rate_hz
      << "\namplitude_bound_hz = " << pair->amplitude_bound_hz
      << "\ninit_scale_hz = " << pair->init_scale_hz
      << "\ngradient_tolerance = " << pair->gradient_tolerance
      << "\nobjective_tolerance = " << pair->objective_tolerance
      << "\nderivative_scheme = " << pair->derivative_scheme << "\n\n";
  }
  o << "[sweeps]\ngamma_factors = " << list(c.gamma_factors);
  if (!c.durations_s.empty()) o << "\ndurations_s = " << list(c.durations_s);
  if (!c.cavity_factors.empty()) o << "\ncavity_factors = " << list(c.cavity_factors);
  if (!c.qubit_factors.empty()) o << "\nqubit_factors = " << list(c.qubit_factors);
  o << "\nsweep_pulses = " << c.sweep_pulses << "\nsweep_seeds = " << c.sweep_seeds
    << "\n\n";
  o << "[evaluation]\nintegrator = " << c.integrator
    << "\nrk4_substeps = " << c.rk4_substeps
    << "\nfrontier_fit = " << c.frontier_fit << "\n";
  return o.str();
}

/// Per-run seed split from the master seed (splitmix64 of master + run id).
inline uint64_t derive_seed(uint64_t master, uint64_t run_id) {
  uint64_t z = master + 0x9E3779B97F4A7C15ull * (run_id + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace flagrape
