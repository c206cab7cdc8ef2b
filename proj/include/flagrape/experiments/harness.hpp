#pragma once

// Reproduction harness: two-stage ensemble optimization (closed-system stage,
// then the flag stage warm-started from it), oracle-only reporting, noise and
// duration sweeps, frontier scans, summary statistics and persistence.
//
// Every persisted f_pre / f_post / p0 comes from the master-equation oracle;
// trajectory estimates drive optimization only.

#include "flagrape/catcode.hpp"
#include "flagrape/experiments/config.hpp"
#include "flagrape/experiments/stats.hpp"
#include "flagrape/flag_grape.hpp"
#include "flagrape/pulse_io.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <mutex>
#include <thread>

namespace flagrape {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Model plus the two stage objectives for one task configuration.
struct TaskSetup {
  SystemModel model;
  ObjectiveSpec closed;  // conventional
  ObjectiveSpec flag;    // post_selected or logical_post_selected
  Vector initial;        // composite |0, g>
  Vector target;         // composite pure target (cat: encoded target (x) |g>)
  std::optional<TomographySet> tomo;  // composite-space operators (cat task)
  Eigen::Vector3d bloch = Eigen::Vector3d::Zero();
};

inline SystemModel make_model(const ExperimentConfig& cfg,
                              double cavity_scale = 1.0,
                              double qubit_scale = 1.0) {
  return build_dispersive_model(kTwoPi * cfg.chi_hz, cfg.cavity_dim,
                           {cavity_scale * kTwoPi * cfg.gamma_cavity_hz,
                            qubit_scale * kTwoPi * cfg.gamma_qubit_decay_hz,
                            qubit_scale * kTwoPi * cfg.gamma_qubit_dephase_hz});
}

inline TaskSetup make_task(const ExperimentConfig& cfg,
                           double cavity_scale = 1.0,
                           double qubit_scale = 1.0) {
  TaskSetup t{make_model(cfg, cavity_scale, qubit_scale), {}, {}, {}, {}};
  const HilbertSpace& space = t.model.space;
  const Vector ground = fock_state(0, 2);
  t.initial = tensor(fock_state(0, space.cavity_dim), ground);

  Vector cavity_target;
  if (cfg.task == TaskKind::fock_state_prep) {
    Vector psi = Vector::Zero(space.cavity_dim);
    psi(0) = 1.0;
    psi(1) = std::exp(kI * cfg.target_phase);
    cavity_target = psi / psi.norm();
  } else {
    cavity_target = logical_target({cfg.cat_alpha, space.cavity_dim},
                                   cfg.target_phase);
  }
  t.target = tensor(cavity_target, ground);

  t.closed.kind = ObjectiveKind::conventional;
  t.closed.constraints = {{t.initial, t.target, std::nullopt, {}}};

  if (cfg.task == TaskKind::fock_state_prep) {
    t.flag.kind = ObjectiveKind::post_selected;
    t.flag.constraints = {{t.initial, t.target, std::nullopt, {}}};
  } else {
    const TomographySet cav = cat_tomography({cfg.cat_alpha, space.cavity_dim});
    t.tomo = TomographySet{lift_cavity(cav.x, space), lift_cavity(cav.y, space),
                           lift_cavity(cav.z, space)};
    t.bloch = {std::cos(cfg.target_phase), std::sin(cfg.target_phase), 0.0};
    t.flag.kind = ObjectiveKind::logical_post_selected;
    t.flag.constraints = {{t.initial, t.target, t.tomo, t.bloch}};
  }
  t.closed.validate();
  t.flag.validate();
  return t;
}

struct OracleEval {
  double f_pre, f_post, p0;
};

/// Exact master-equation evaluation of one pulse: f_pre against the pure
/// composite target, and the post-selected infidelity (decoded logical
/// infidelity for the cat task).
inline OracleEval oracle_evaluate(const PulseSchedule& pulses,
                                  const TaskSetup& task,
                                  const IntegratorOptions& opts) {
  const Matrix rho =
      propagate_master(task.initial * task.initial.adjoint(), pulses,
                       task.model, opts);
  OracleEval ev{};
  ev.f_pre = infidelity_pre(rho, task.target);
  if (task.tomo) {
    auto [rho_f, p0] = post_select(rho, task.model);
    ev.p0 = p0;
    ev.f_post = logical_infidelity(rho_f, *task.tomo, task.bloch);
  } else {
    std::tie(ev.f_post, ev.p0) = infidelity_post(rho, task.target, task.model);
  }
  return ev;
}

struct RunRecord {
  int run_id = 0;
  std::string stage;  // "closed" or "flag"
  uint64_t seed = 0;
  double f_pre = 0.0, f_post = 0.0, p0 = 0.0;
  int iterations = 0;
  double objective = 0.0;
  double wall_ms = 0.0;
  std::string pulse_path;
  std::string status = "ok";
};

inline json record_to_json(const RunRecord& r) {
  return {{"run_id", r.run_id},     {"stage", r.stage},
          {"seed", r.seed},         {"f_pre", r.f_pre},
          {"f_post", r.f_post},     {"p0", r.p0},
          {"iterations", r.iterations}, {"objective", r.objective},
          {"wall_ms", r.wall_ms},   {"pulse_path", r.pulse_path},
          {"status", r.status}};
}

inline RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id");
  r.stage = j.at("stage");
  r.seed = j.at("seed");
  r.f_pre = j.at("f_pre");
  r.f_post = j.at("f_post");
  r.p0 = j.at("p0");
  r.iterations = j.at("iterations");
  r.objective = j.at("objective");
  r.wall_ms = j.at("wall_ms");
  r.pulse_path = j.at("pulse_path");
  r.status = j.value("status", "ok");
  return r;
}

inline void write_records_csv(const std::string& path,
                              const std::vector<RunRecord>& records) {
  std::ofstream f(path);
  f << "run_id,stage,seed,f_pre,f_post,p0,iterations,objective,wall_ms,pulse_path\n";
  for (const auto& r : records)
    f << r.run_id << "," << r.stage << "," << r.seed << ","
      << format_double(r.f_pre) << "," << format_double(r.f_post) << ","
      << format_double(r.p0) << "," << r.iterations << ","
      << format_double(r.objective) << "," << format_double(r.wall_ms) << ","
      << r.pulse_path << "\n";
}

inline std::vector<RunRecord> load_records_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  json j;
  f >> j;
  std::vector<RunRecord> out;
  for (const auto& item : j) out.push_back(record_from_json(item));
  return out;
}

/// Closed stage from random init, then the flag stage warm-started from its
/// result. Returns the two oracle-evaluated records plus the pulses.
struct RunOutput {
  RunRecord closed_rec, flag_rec;
  PulseSchedule closed_pulses, flag_pulses;
};

inline RunOutput run_one(const ExperimentConfig& cfg, const TaskSetup& task,
                         int run_id) {
  const uint64_t run_seed = derive_seed(cfg.seed, uint64_t(run_id));
  const double dt = cfg.duration_s / cfg.steps;
  const int nj = int(task.model.controls.size());
  const IntegratorOptions opts = cfg.integrator_options();
  RunOutput out;
  out.closed_pulses = PulseSchedule::zeros(cfg.steps, nj, dt);
  out.flag_pulses = out.closed_pulses;

  // closed stage: optimized against the noiseless model, scored on the noisy one
  {
    const auto t0 = std::chrono::steady_clock::now();
    const OptimizerConfig oc = cfg.closed_opt.to_optimizer_config(run_seed);
    const PulseSchedule init = random_init(oc, cfg.steps, nj, dt);
    SystemModel unitary_model = task.model;
    for (auto& j : unitary_model.jumps) j.rate = 0.0;
    auto [pulses, trace] =
        optimize_closed(init, unitary_model, task.closed, oc);
    const OracleEval ev = oracle_evaluate(pulses, task, opts);
    out.closed_pulses = std::move(pulses);
    out.closed_rec = {run_id,
                      "closed",
                      run_seed,
                      ev.f_pre,
                      ev.f_post,
                      ev.p0,
                      int(trace.iterations.size()),
                      trace.best_objective,
                      std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count(),
                      "",
                      "ok"};
  }

  // flag stage, warm-started
  {
    const auto t0 = std::chrono::steady_clock::now();
    const uint64_t flag_seed = derive_seed(run_seed, 0x666c6167ull);  // split
    const OptimizerConfig oc = cfg.flag_opt.to_optimizer_config(flag_seed);
    const EvalFn eval =
        make_flag_eval(task.model, task.flag, cfg.trajectories, flag_seed);
    auto [pulses, trace] = optimize(out.closed_pulses, eval, oc);
    const OracleEval ev = oracle_evaluate(pulses, task, opts);
    out.flag_pulses = std::move(pulses);
    out.flag_rec = {run_id,
                    "flag",
                    flag_seed,
                    ev.f_pre,
                    ev.f_post,
                    ev.p0,
                    int(trace.iterations.size()),
                    trace.best_objective,
                    std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count(),
                    "",
                    "ok"};
  }
  return out;
}

/// Full ensemble: per-run results land in <out>/runs and <out>/pulses as they
/// complete (single writer per run); the aggregate records.csv / records.json
/// are written once at the end in run-id order. Reruns with the same config
/// and output directory skip completed runs. Per-run failures are recorded
/// with a status and never abort the ensemble.
inline std::vector<RunRecord> run_ensemble(const ExperimentConfig& cfg,
                                           const std::string& out_dir,
                                           int workers = 1) {
  const TaskSetup task = make_task(cfg);
  fs::create_directories(fs::path(out_dir) / "runs");
  fs::create_directories(fs::path(out_dir) / "pulses");
  {
    std::ofstream snap(fs::path(out_dir) / "config.ini");
    snap << config_to_string(cfg);
  }

  std::vector<std::vector<RunRecord>> per_run(cfg.ensemble_size);
  std::atomic<int> next{0};
  std::mutex io_mutex;

  auto worker = [&] {
    for (;;) {
      const int id = next.fetch_add(1);
      if (id >= cfg.ensemble_size) return;
      const fs::path run_json = fs::path(out_dir) / "runs" /
                                ("run_" + std::to_string(id) + ".json");
      if (fs::exists(run_json)) {
        try {
          auto recs = load_records_json(run_json.string());
          per_run[id] = std::move(recs);
          continue;
        } catch (const std::exception&) {
          // corrupt record: fall through and recompute
        }
      }
      std::vector<RunRecord> recs;
      try {
        RunOutput out = run_one(cfg, task, id);
        const PulseMetadata meta{out.closed_pulses.dt, cfg.steps,
                                 int(task.model.controls.size()),
                                 model_hash(task.model),
                                 out.closed_rec.seed};
        const std::string cpath =
            (fs::path(out_dir) / "pulses" /
             ("run_" + std::to_string(id) + "_closed.csv"))
                .string();
        const std::string fpath =
            (fs::path(out_dir) / "pulses" /
             ("run_" + std::to_string(id) + "_flag.csv"))
                .string();
        save_pulse(cpath, out.closed_pulses, meta);
        save_pulse(fpath, out.flag_pulses,
                   {out.flag_pulses.dt, cfg.steps,
                    int(task.model.controls.size()), model_hash(task.model),
                    out.flag_rec.seed});
        out.closed_rec.pulse_path = cpath;
        out.flag_rec.pulse_path = fpath;
        recs = {out.closed_rec, out.flag_rec};
      } catch (const std::exception& e) {
        RunRecord failed;
        failed.run_id = id;
        failed.stage = "closed";
        failed.seed = derive_seed(cfg.seed, uint64_t(id));
        failed.f_pre = failed.f_post = failed.p0 =
            std::numeric_limits<double>::quiet_NaN();
        failed.status = std::string("failed: ") + e.what();
        recs = {failed};
      }
      {
        std::lock_guard<std::mutex> lock(io_mutex);
        std::ofstream f(run_json);
        json arr = json::array();
        for (const auto& r : recs) arr.push_back(record_to_json(r));
        f << arr.dump(2) << "\n";
      }
      per_run[id] = std::move(recs);
    }
  };

  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<RunRecord> records;
  for (auto& recs : per_run)
    for (auto& r : recs) records.push_back(std::move(r));
  write_records_csv((fs::path(out_dir) / "records.csv").string(), records);
  {
    std::ofstream f(fs::path(out_dir) / "records.json");
    json arr = json::array();
    for (const auto& r : records) arr.push_back(record_to_json(r));
    f << arr.dump(2) << "\n";
  }
  return records;
}

// ---------------------------------------------------------------------------
// Sweeps and statistics

struct SweepRow {
  std::string pulse_path;
  std::string stage;
  double factor = 1.0;
  double f_pre = 0.0, f_post = 0.0, p0 = 0.0;
};

struct NoiseSweepResult {
  std::vector<SweepRow> rows;
  // per pulse path: linear fit of f_post vs factor
  std::vector<std::pair<std::string, stats::FitResult>> fits;
  // 2D mode: (cavity factor, qubit factor, 1 - f_flag / f_closed)
  std::vector<std::array<double, 3>> improvement_grid;
};

/// Re-evaluates fixed pulses with the oracle under scaled rates {Gamma *
/// gamma_mu} and fits f_post = beta * Gamma + const per pulse. When 2D grids
/// are configured, cavity and qubit rates scale independently and the grid
/// reports the relative improvement of the best flag pulse over the best
/// closed pulse.
inline NoiseSweepResult noise_sweep(
    const ExperimentConfig& cfg,
    const std::vector<std::pair<std::string, std::string>>& pulse_files) {
  NoiseSweepResult out;
  const IntegratorOptions opts = cfg.integrator_options();
  for (const auto& [path, stage] : pulse_files) {
    const auto [pulses, meta] = load_pulse(path);
    std::vector<double> xs, ys;
    for (double g : cfg.gamma_factors) {
      const TaskSetup task = make_task(cfg, g, g);
      const OracleEval ev = oracle_evaluate(pulses, task, opts);
      out.rows.push_back({path, stage, g, ev.f_pre, ev.f_post, ev.p0});
      xs.push_back(g);
      ys.push_back(ev.f_post);
    }
    out.fits.emplace_back(path, stats::linear_fit(xs, ys));
  }

  if (!cfg.cavity_factors.empty() && !cfg.qubit_factors.empty()) {
    // best pulse per stage by f_post at baseline
    std::string best_closed, best_flag;
    double bc = std::numeric_limits<double>::infinity(), bf = bc;
    for (const auto& r : out.rows) {
      if (r.factor != 1.0) continue;
      if (r.stage == "closed" && r.f_post < bc) { bc = r.f_post; best_closed = r.pulse_path; }
      if (r.stage == "flag" && r.f_post < bf) { bf = r.f_post; best_flag = r.pulse_path; }
    }
    if (!best_closed.empty() && !best_flag.empty()) {
      const auto [pc, mc] = load_pulse(best_closed);
      const auto [pf, mf] = load_pulse(best_flag);
      for (double gc : cfg.cavity_factors)
        for (double gq : cfg.qubit_factors) {
          const TaskSetup task = make_task(cfg, gc, gq);
          const double fc = oracle_evaluate(pc, task, opts).f_post;
          const double ff = oracle_evaluate(pf, task, opts).f_post;
          out.improvement_grid.push_back({gc, gq, 1.0 - ff / fc});
        }
    }
  }
  return out;
}

struct TooFewPoints : std::runtime_error {
  TooFewPoints() : std::runtime_error("frontier scan needs >= 5 flag-stage records") {}
};

struct FrontierResult {
  std::vector<std::array<double, 2>> scatter;  // (p0, f_post), flag stage
  stats::FitResult fit;                        // lower-envelope fit
  double extrapolation_p0_1 = 0.0;             // fitted f at p0 = 1
};

/// Scatter of (p0, f_post) for flag-stage records and a lower-envelope fit:
/// 5th-percentile quantile regression by default, convex-hull lower edge as
/// the alternative.
inline FrontierResult frontier_scan(const std::vector<RunRecord>& records,
                                    const std::string& method = "quantile") {
  FrontierResult out;
  std::vector<double> xs, ys;
  for (const auto& r : records) {
    if (r.stage != "flag" || r.status != "ok") continue;
    out.scatter.push_back({r.p0, r.f_post});
    xs.push_back(r.p0);
    ys.push_back(r.f_post);
  }
  if (xs.size() < 5) throw TooFewPoints();
  out.fit = method == "hull" ? stats::lower_hull_fit(xs, ys)
                             : stats::quantile_regression(xs, ys, 0.05);
  out.extrapolation_p0_1 = out.fit.intercept + out.fit.slope;
  return out;
}

struct DurationPoint {
  double duration_s;
  double best_f_post, median_f_post;
  double best_closed_f_post;
};

/// Small ensemble per duration; reports best/median oracle f_post to locate
/// the feasibility knee. The step count is held fixed, so dt scales with T.
inline std::vector<DurationPoint> duration_sweep(const ExperimentConfig& base,
                                                 const std::vector<double>& durations,
                                                 int workers = 1) {
  (void)workers;
  std::vector<DurationPoint> out;
  for (double t : durations) {
    ExperimentConfig cfg = base;
    cfg.duration_s = t;
    cfg.ensemble_size = base.sweep_seeds;
    const TaskSetup task = make_task(cfg);
    std::vector<double> fposts, fclosed;
    for (int id = 0; id < cfg.ensemble_size; ++id) {
      const RunOutput r = run_one(cfg, task, id);
      fposts.push_back(r.flag_rec.f_post);
      fclosed.push_back(r.closed_rec.f_post);
    }
    out.push_back({t, *std::min_element(fposts.begin(), fposts.end()),
                   stats::median(fposts),
                   *std::min_element(fclosed.begin(), fclosed.end())});
  }
  return out;
}

struct Summary {
  double closed_mean = 0.0, closed_se = 0.0, closed_median = 0.0, closed_best = 0.0;
  double flag_mean = 0.0, flag_se = 0.0, flag_median = 0.0, flag_best = 0.0;
  double closed_p0_mean = 0.0, flag_p0_mean = 0.0;
  double mean_improvement = 0.0;     // 1 - mean_flag / mean_closed
  double best_improvement = 0.0;     // 1 - best_flag / best_closed
  double fraction_beating_reference = std::numeric_limits<double>::quiet_NaN();
  int n_closed = 0, n_flag = 0;
};

/// Ensemble statistics over oracle-evaluated records; `reference_best`
/// (optional) is an external f_post to compare the flag-stage pulses against,
/// e.g. the best unencoded result when summarizing a cat-code run.
inline Summary summarize(const std::vector<RunRecord>& records,
                         double reference_best =
                             std::numeric_limits<double>::quiet_NaN()) {
  std::vector<double> fc, ff, pc, pf;
  for (const auto& r : records) {
    if (r.status != "ok") continue;
    if (r.stage == "closed") { fc.push_back(r.f_post); pc.push_back(r.p0); }
    else if (r.stage == "flag") { ff.push_back(r.f_post); pf.push_back(r.p0); }
  }
  Summary s;
  s.n_closed = int(fc.size());
  s.n_flag = int(ff.size());
  if (!fc.empty()) {
    s.closed_mean = stats::mean(fc);
    s.closed_se = stats::standard_error(fc);
    s.closed_median = stats::median(fc);
    s.closed_best = *std::min_element(fc.begin(), fc.end());
    s.closed_p0_mean = stats::mean(pc);
  }
  if (!ff.empty()) {
    s.flag_mean = stats::mean(ff);
    s.flag_se = stats::standard_error(ff);
    s.flag_median = stats::median(ff);
    s.flag_best = *std::min_element(ff.begin(), ff.end());
    s.flag_p0_mean = stats::mean(pf);
  }
  if (!fc.empty() && !ff.empty()) {
    s.mean_improvement = 1.0 - s.flag_mean / s.closed_mean;
    s.best_improvement = 1.0 - s.flag_best / s.closed_best;
  }
  if (!std::isnan(reference_best) && !ff.empty()) {
    int count = 0;
    for (double f : ff) count += f < reference_best;
    s.fraction_beating_reference = double(count) / double(ff.size());
  }
  return s;
}

}  // namespace flagrape
