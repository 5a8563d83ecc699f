// hbm: command line front end for the harmonic balance experiments.
//
//   hbm solve    [--config F] [--problem P] [-N n] [--initial solution.txt]
//   hbm sweep    [--config F] [--problem P] [--harmonics 2,4,8] [--warm]
//   hbm continue [--config F] [--problem P]
//   hbm check

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <fmt/format.h>

#include "hbm/checks.hpp"
#include "hbm/config.hpp"
#include "hbm/experiment.hpp"

namespace {

using namespace hbm;

struct CommonOptions {
  std::string config;
  std::string problem;
  std::string out;
};

ExperimentConfig load(const CommonOptions& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
    if (!o.problem.empty() && parse_problem_id(o.problem) != cfg.problem)
      throw ConfigError("--problem " + o.problem + " conflicts with the config file (" + to_string(cfg.problem) + ")");
  } else {
    cfg = default_config(o.problem.empty() ? ProblemId::Circuit : parse_problem_id(o.problem));
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

std::vector<Index> parse_list(const std::string& s) {
  std::istringstream in(s);
  std::vector<Index> out;
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(std::stol(tok));
  return out;
}

std::filesystem::path output(const ExperimentConfig& cfg, const std::string& file) { return cfg.output_dir / file; }

void print_fit(const SweepResult& r) {
  if (r.fit)
    fmt::print("kappa = {:.4f} (R^2 = {:.4f}, {} points above 100 x floor {:.1e})\n", r.fit->kappa, r.fit->r_squared,
               r.fit->harmonics.size(), r.floor);
  else
    fmt::print("kappa: too few points above 100 x floor {:.1e}\n", r.floor);
}

void print_records(const SweepResult& r) {
  fmt::print("{:>4} {:>24} {:>6} {:>10}  {}\n", "N", "E", "iters", "time_s", "status");
  for (const auto& rec : r.records)
    fmt::print("{:>4} {:>24} {:>6} {:>10.3f}  {}\n", rec.harmonics, format_double(rec.E), rec.newton_iterations,
               rec.wall_time_s, rec.converged() ? "converged" : rec.failure);
}

SolutionFile to_solution(const ExperimentConfig& cfg, const ConvergenceRecord& rec, std::optional<double> param) {
  SolutionFile s;
  s.problem = to_string(cfg.problem);
  s.order = cfg.problem == ProblemId::Linear || cfg.problem == ProblemId::Circuit ? 1 : 2;
  s.known_period = cfg.problem != ProblemId::MassSpring;
  s.tau = rec.tau;
  s.param = param;
  s.x = rec.x;
  return s;
}

int cmd_solve(const CommonOptions& o, std::optional<Index> harmonics, const std::string& initial) {
  ExperimentConfig cfg = load(o);
  const Index N = harmonics.value_or(cfg.harmonics);
  std::optional<SolutionFile> init;
  if (!initial.empty()) init = read_solution(initial);

  SweepSettings s = make_sweep_settings(cfg);
  s.harmonics = {N};
  SweepResult r;
  std::optional<double> param;
  if (cfg.problem == ProblemId::MassSpring) {
    BranchPoint start = init ? BranchPoint{init->x, init->tau, std::nullopt, {}}
                             : eigen_initial_guess(cfg.branch, cfg.amplitude, std::max<Index>(N, 1));
    r = run_energy_sweep(build_mass_spring_2d(start.tau), mass_spring_energy(cfg.clock), cfg.target_energy, start, s);
  } else {
    const DaeProblem p = make_known_period_problem(cfg);
    if (cfg.problem == ProblemId::Beam) param = 2.0 * 3.14159265358979323846 / p.nominal_period();
    if (init) {
      // A one-entry warm sweep seeded from the file.
      HbSystem sys(p, N, cfg.system_options());
      const auto t0 = std::chrono::steady_clock::now();
      const NewtonReport rep = solve(sys, resize(init->x, N), p.nominal_period(), cfg.newton);
      ConvergenceRecord rec;
      rec.harmonics = N;
      rec.termination = rep.termination;
      rec.newton_iterations = rep.iterations();
      rec.x = rep.x;
      rec.tau = rep.tau;
      if (rep.converged())
        rec.E = compute_E(sys, rep.x, rep.tau, cfg.quadrature);
      else
        rec.failure = "newton " + to_string(rep.termination);
      rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      r.records.push_back(rec);
    } else {
      r = run_sweep(p, s);
    }
  }
  print_records(r);
  const auto& rec = r.records.front();
  if (!rec.converged()) return 1;
  fmt::print("tau = {}\n", format_double(rec.tau));
  write_solution(output(cfg, cfg.solution_file), to_solution(cfg, rec, param));
  fmt::print("wrote {}\n", output(cfg, cfg.solution_file).string());
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& list, bool warm) {
  ExperimentConfig cfg = load(o);
  if (!list.empty()) cfg.harmonics_list = parse_list(list);
  if (warm) cfg.warm_start = true;
  SweepResult r;
  if (cfg.problem == ProblemId::MassSpring) {
    const MassSpringRun run = run_mass_spring_continuation(make_mass_spring_settings(cfg));
    if (!run.failure.empty()) {
      fmt::print(stderr, "continuation to H = {} failed: {}\n", cfg.target_energy, run.failure);
      return 1;
    }
    const BranchPoint& end = run.branch.points.back();
    fmt::print("branch {} reached H = {} at tau = {}\n", cfg.branch, format_double(end.monitors.at("H")),
               format_double(end.tau));
    r = run_energy_sweep(build_mass_spring_2d(end.tau), mass_spring_energy(cfg.clock), cfg.target_energy, end,
                         make_sweep_settings(cfg));
  } else {
    r = run_sweep(make_known_period_problem(cfg), make_sweep_settings(cfg));
  }
  print_records(r);
  print_fit(r);
  write_convergence_csv(output(cfg, cfg.convergence_file), r.records);
  fmt::print("wrote {}\n", output(cfg, cfg.convergence_file).string());
  for (const auto& rec : r.records)
    if (!rec.converged()) return 1;
  return 0;
}

int cmd_continue(const CommonOptions& o, const std::string& list) {
  ExperimentConfig cfg = load(o);
  if (!list.empty()) cfg.harmonics_list = parse_list(list);
  if (cfg.problem == ProblemId::MassSpring) {
    const MassSpringRun run = run_mass_spring_continuation(make_mass_spring_settings(cfg));
    write_branch_csv(output(cfg, cfg.branch_file), run.branch, run.E, "tau", {"H", "amplitude", "residual"});
    const BranchPoint& end = run.branch.points.back();
    fmt::print("branch {}: {} points, {} rejected steps, final H = {}, tau = {}\n", cfg.branch,
               run.branch.points.size(), run.branch.rejected_steps, format_double(end.monitors.at("H")),
               format_double(end.tau));
    SolutionFile s;
    s.problem = to_string(cfg.problem);
    s.order = 2;
    s.known_period = false;
    s.tau = end.tau;
    s.x = end.x;
    write_solution(output(cfg, cfg.solution_file), s);
    fmt::print("wrote {} and {}\n", output(cfg, cfg.branch_file).string(), output(cfg, cfg.solution_file).string());
    if (!run.failure.empty()) {
      fmt::print(stderr, "continuation stopped early: {}\n", run.failure);
      return 1;
    }
    return 0;
  }
  if (cfg.problem != ProblemId::Beam)
    throw UsageError("continue runs the mass-spring energy branch or the beam frequency sweep");

  auto model = std::make_shared<const BeamModel>(build_beam_model(cfg.beam));
  const FrequencyRunSettings fs = make_frequency_settings(cfg, *model);
  const FrequencySweep sweep = run_frequency_sweep([model](double s) { return build_beam(model, s); }, fs);
  const std::filesystem::path branch = output(cfg, cfg.branch_file);
  bool ok = true;
  fmt::print("{:>4} {:>24} {:>7} {:>10}  {}\n", "N", "EB", "points", "time_s", "status");
  for (const auto& run : sweep.runs) {
    const auto path = branch.parent_path() / fmt::format("{}_N{}{}", branch.stem().string(), run.harmonics,
                                                         branch.extension().string());
    if (!run.branch.points.empty()) write_branch_csv(path, run.branch, run.E, "s", {"tau", "peak", "amplitude", "residual"});
    fmt::print("{:>4} {:>24} {:>7} {:>10.2f}  {}\n", run.harmonics, format_double(run.EB), run.branch.points.size(),
               run.wall_time_s, run.completed() ? "completed" : run.failure);
    ok = ok && run.completed();
  }
  write_eb_csv(output(cfg, cfg.eb_file), sweep);
  if (sweep.fit)
    fmt::print("kappa_B = {:.4f} (R^2 = {:.4f}, {} points above 100 x floor {:.1e})\n", sweep.fit->kappa,
               sweep.fit->r_squared, sweep.fit->harmonics.size(), sweep.floor);
  fmt::print("wrote {} and per-N branch files\n", output(cfg, cfg.eb_file).string());
  return ok ? 0 : 1;
}

int cmd_check() {
  int failed = 0;
  for (const auto& c : run_invariant_checks()) {
    fmt::print("{} {}: {}\n", c.passed ? "PASS" : "FAIL", c.name, c.detail);
    failed += c.passed ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Harmonic balance solver for periodic DAE solutions"};
  app.require_subcommand(1);
  CommonOptions common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("--problem", common.problem, "linear, circuit, mass-spring or beam");
    sub->add_option("--out", common.out, "output directory");
  };

  auto* solve_cmd = app.add_subcommand("solve", "solve one problem at one harmonic count");
  add_common(solve_cmd);
  std::optional<Index> harmonics;
  std::string initial;
  solve_cmd->add_option("-N,--harmonics", harmonics, "harmonic count");
  solve_cmd->add_option("--initial", initial, "solution file used as the initial guess")->check(CLI::ExistingFile);

  auto* sweep_cmd = app.add_subcommand("sweep", "convergence sweep over a list of harmonic counts");
  add_common(sweep_cmd);
  std::string sweep_list;
  bool warm = false;
  sweep_cmd->add_option("--harmonics", sweep_list, "comma separated harmonic counts");
  sweep_cmd->add_flag("--warm", warm, "warm start from the previous harmonic count");

  auto* cont_cmd = app.add_subcommand("continue", "branch continuation (mass-spring energy, beam frequency)");
  add_common(cont_cmd);
  std::string cont_list;
  cont_cmd->add_option("--harmonics", cont_list, "beam: comma separated harmonic counts");

  app.add_subcommand("check", "run the invariant suite");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*solve_cmd) return cmd_solve(common, harmonics, initial);
    if (*sweep_cmd) return cmd_sweep(common, sweep_list, warm);
    if (*cont_cmd) return cmd_continue(common, cont_list);
    return cmd_check();
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
}
