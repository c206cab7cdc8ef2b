// Command-line front end for the optimization harness: ensemble runs, noise
// and duration sweeps, frontier scans, summaries, and oracle evaluation of
// stored pulse files. All frequencies in config files are /2pi values in Hz.

#include "flagrape/experiments/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace flagrape;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  int workers = 1;
  uint64_t seed = 0;
  bool seed_set = false;
  bool full_scale = false;
};

void add_common(CLI::App* cmd, CommonOpts* o, bool need_config,
                bool need_out) {
  auto* c = cmd->add_option("--config", o->config_path, "experiment config file");
  if (need_config) c->required();
  auto* out = cmd->add_option("--out", o->out_dir, "output directory");
  if (need_out) out->required();
  cmd->add_option("--workers", o->workers, "parallel ensemble workers")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o->seed, "master seed override")
      ->each([o](const std::string&) { o->seed_set = true; });
  cmd->add_flag("--full-scale", o->full_scale,
                "full-scale overrides (1000 steps, 500 seeds)");
}

ExperimentConfig resolve_config(const CommonOpts& o) {
  ExperimentConfig cfg =
      o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.seed_set) cfg.seed = o.seed;
  if (o.full_scale) cfg.apply_full_scale();
  return cfg;
}

void print_summary(const Summary& s) {
  std::cout << "closed: n=" << s.n_closed << " mean=" << s.closed_mean
            << " se=" << s.closed_se << " median=" << s.closed_median
            << " best=" << s.closed_best << " p0_mean=" << s.closed_p0_mean
            << "\n";
  std::cout << "flag:   n=" << s.n_flag << " mean=" << s.flag_mean
            << " se=" << s.flag_se << " median=" << s.flag_median
            << " best=" << s.flag_best << " p0_mean=" << s.flag_p0_mean << "\n";
  std::cout << "mean improvement: " << 100.0 * s.mean_improvement
            << "%  best-vs-best: " << 100.0 * s.best_improvement << "%\n";
  if (!std::isnan(s.fraction_beating_reference))
    std::cout << "fraction beating reference: "
              << 100.0 * s.fraction_beating_reference << "%\n";
}

std::vector<RunRecord> records_from_dir(const std::string& dir) {
  return load_records_json((fs::path(dir) / "records.json").string());
}

/// sweep_pulses best records per stage, by oracle f_post.
std::vector<std::pair<std::string, std::string>> best_pulses(
    const std::vector<RunRecord>& records, int per_stage) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string stage : {"closed", "flag"}) {
    std::vector<const RunRecord*> recs;
    for (const auto& r : records)
      if (r.stage == stage && r.status == "ok" && !r.pulse_path.empty())
        recs.push_back(&r);
    std::sort(recs.begin(), recs.end(),
              [](const auto* a, const auto* b) { return a->f_post < b->f_post; });
    for (int i = 0; i < per_stage && i < int(recs.size()); ++i)
      out.emplace_back(recs[i]->pulse_path, stage);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flag-ancilla pulse optimization harness"};
  app.require_subcommand(1);

  CommonOpts opt_o, noise_o, dur_o, frontier_o, summ_o, eval_o;
  std::string pulse_path, frontier_method;
  double reference_best = std::numeric_limits<double>::quiet_NaN();

  auto* optimize_cmd =
      app.add_subcommand("optimize", "run a two-stage ensemble from a config");
  add_common(optimize_cmd, &opt_o, false, true);

  auto* noise_cmd = app.add_subcommand(
      "sweep-noise", "re-evaluate the best stored pulses under scaled rates");
  add_common(noise_cmd, &noise_o, false, true);

  auto* dur_cmd = app.add_subcommand(
      "sweep-duration", "small ensemble per gate duration (durations_s in config)");
  add_common(dur_cmd, &dur_o, true, false);

  auto* frontier_cmd = app.add_subcommand(
      "frontier", "lower-envelope fit of f_post vs p0 over flag-stage records");
  add_common(frontier_cmd, &frontier_o, false, true);
  frontier_cmd->add_option("--method", frontier_method,
                           "fit method: quantile or hull");

  auto* summ_cmd =
      app.add_subcommand("summarize", "ensemble statistics from a run directory");
  add_common(summ_cmd, &summ_o, false, true);
  summ_cmd->add_option("--reference-best", reference_best,
                       "external best f_post to compare flag pulses against");

  auto* eval_cmd =
      app.add_subcommand("evaluate", "oracle-evaluate a stored pulse file");
  add_common(eval_cmd, &eval_o, false, false);
  eval_cmd->add_option("--pulse", pulse_path, "pulse CSV file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (optimize_cmd->parsed()) {
      const ExperimentConfig cfg = resolve_config(opt_o);
      const auto records = run_ensemble(cfg, opt_o.out_dir, opt_o.workers);
      print_summary(summarize(records));
    } else if (noise_cmd->parsed()) {
      const ExperimentConfig cfg = resolve_config(noise_o);
      const auto records = records_from_dir(noise_o.out_dir);
      const auto files = best_pulses(records, cfg.sweep_pulses);
      if (files.empty()) throw std::runtime_error("no usable pulse records");
      const NoiseSweepResult res = noise_sweep(cfg, files);
      std::ofstream csv(fs::path(noise_o.out_dir) / "noise_sweep.csv");
      csv << "pulse_path,stage,factor,f_pre,f_post,p0\n";
      for (const auto& r : res.rows)
        csv << r.pulse_path << "," << r.stage << "," << r.factor << ","
            << format_double(r.f_pre) << "," << format_double(r.f_post) << ","
            << format_double(r.p0) << "\n";
      for (const auto& [path, fit] : res.fits)
        std::cout << path << ": slope=" << fit.slope
                  << " intercept=" << fit.intercept << " r2=" << fit.r2 << "\n";
      if (!res.improvement_grid.empty()) {
        std::ofstream grid(fs::path(noise_o.out_dir) / "noise_grid.csv");
        grid << "cavity_factor,qubit_factor,improvement\n";
        for (const auto& g : res.improvement_grid)
          grid << g[0] << "," << g[1] << "," << format_double(g[2]) << "\n";
      }
    } else if (dur_cmd->parsed()) {
      const ExperimentConfig cfg = resolve_config(dur_o);
      if (cfg.durations_s.empty())
        throw std::runtime_error("config has no [sweeps] durations_s grid");
      const auto points = duration_sweep(cfg, cfg.durations_s, dur_o.workers);
      std::cout << "duration_s,best_f_post,median_f_post,best_closed_f_post\n";
      std::ostringstream rows;
      for (const auto& p : points)
        rows << p.duration_s << "," << format_double(p.best_f_post) << ","
             << format_double(p.median_f_post) << ","
             << format_double(p.best_closed_f_post) << "\n";
      std::cout << rows.str();
      if (!dur_o.out_dir.empty()) {
        fs::create_directories(dur_o.out_dir);
        std::ofstream csv(fs::path(dur_o.out_dir) / "duration_sweep.csv");
        csv << "duration_s,best_f_post,median_f_post,best_closed_f_post\n"
            << rows.str();
      }
    } else if (frontier_cmd->parsed()) {
      const ExperimentConfig cfg = resolve_config(frontier_o);
      const std::string method =
          frontier_method.empty() ? cfg.frontier_fit : frontier_method;
      const FrontierResult res =
          frontier_scan(records_from_dir(frontier_o.out_dir), method);
      std::ofstream csv(fs::path(frontier_o.out_dir) / "frontier.csv");
      csv << "p0,f_post\n";
      for (const auto& pt : res.scatter)
        csv << format_double(pt[0]) << "," << format_double(pt[1]) << "\n";
      std::cout << "fit (" << method << "): slope=" << res.fit.slope
                << " intercept=" << res.fit.intercept
                << "\nextrapolated f_post at p0=1: " << res.extrapolation_p0_1
                << "\n";
    } else if (summ_cmd->parsed()) {
      print_summary(summarize(records_from_dir(summ_o.out_dir), reference_best));
    } else if (eval_cmd->parsed()) {
      const ExperimentConfig cfg = resolve_config(eval_o);
      const TaskSetup task = make_task(cfg);
      const auto [pulses, meta] = load_pulse(pulse_path);
      if (meta.model_hash != 0 && meta.model_hash != model_hash(task.model))
        std::cerr << "warning: pulse was optimized for a different model\n";
      const OracleEval ev =
          oracle_evaluate(pulses, task, cfg.integrator_options());
      std::cout << "f_pre=" << ev.f_pre << " f_post=" << ev.f_post
                << " p0=" << ev.p0 << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
