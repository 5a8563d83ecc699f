#include "hbm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "hbm/errors.hpp"

namespace hbm {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// F(Q_N x, tau)(t) with the derivative coefficients precomputed.
class PointResidual {
 public:
  PointResidual(const DaeProblem& problem, const CoefficientVector& x, double tau)
      : problem_(problem), harmonics_(x.harmonics()), tau_(tau) {
    double scale = 1.0;
    for (int j = 0; j <= problem.order(); ++j) {
      derivatives_.push_back(differentiate(x, j).as_matrix() * scale);
      scale /= tau;
    }
    args_.resize(derivatives_.size());
  }

  Eigen::VectorXd operator()(double t) {
    const auto row = basis_row(harmonics_, t);
    for (std::size_t j = 0; j < derivatives_.size(); ++j) args_[j] = derivatives_[j] * row.transpose();
    return problem_.residual(args_, tau_ * t);
  }

 private:
  const DaeProblem& problem_;
  Index harmonics_;
  double tau_;
  std::vector<Eigen::MatrixXd> derivatives_;
  std::vector<Eigen::VectorXd> args_;
};

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

double residual_noise_level(const HbSystem& sys, const CoefficientVector& x, double tau) {
  const auto traj = sys.trajectory(x, tau);
  const auto lin = eval_linearization(sys.problem(), traj);
  const Eigen::MatrixXd F = eval_F(sys.problem(), traj);
  double worst = 0.0;
  for (Index m = 0; m < traj.samples(); ++m) {
    double acc = F.row(m).norm();
    double scale = 1.0;
    for (std::size_t j = 0; j < lin.blocks.size(); ++j) {
      acc += lin.block(j, m).norm() * traj.derivatives[j].row(m).norm() * scale;
      scale /= traj.period;
    }
    worst = std::max(worst, acc);
  }
  return std::numeric_limits<double>::epsilon() * worst;
}

double compute_E(const HbSystem& sys, const CoefficientVector& x, double tau, const QuadratureTolerance& tol) {
  sys.check(x, tau);
  const double period = sys.effective_period(tau);
  PointResidual F(sys.problem(), x, period);

  // Pilot value from a dense trapezoid sum (spectrally accurate for smooth periodic F).
  const Index pilot = 4 * sys.grid().size();
  double pilot_sq = 0.0;
  for (Index m = 0; m < pilot; ++m) pilot_sq += F(static_cast<double>(m) / pilot).squaredNorm();
  const double E_pilot = std::sqrt(pilot_sq / pilot);

  const double tol_E =
      std::max({tol.absolute, tol.relative * E_pilot, residual_noise_level(sys, x, tau)});
  QuadratureTolerance sq;
  sq.absolute = 2.0 * E_pilot * tol_E + tol_E * tol_E;
  sq.relative = 0.0;
  sq.max_subdivisions = tol.max_subdivisions;
  sq.initial_panels = std::max<int>(tol.initial_panels, static_cast<int>(2 * x.harmonics() + 2));
  const auto r = integrate([&F](double t) { return Eigen::VectorXd::Constant(1, F(t).squaredNorm()); }, 0.0, 1.0, sq);
  return std::sqrt(std::max(0.0, r.value(0)));
}

double convergence_floor(double abs_tol, double quadrature_tol) { return std::max(abs_tol, 10.0 * quadrature_tol); }

std::optional<KappaFit> fit_kappa(const std::vector<Index>& harmonics, const std::vector<double>& errors, double floor,
                                  int min_points) {
  if (harmonics.size() != errors.size()) throw UsageError("fit_kappa: harmonics and errors differ in length");
  KappaFit fit;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!std::isfinite(errors[i]) || !(errors[i] > 100.0 * floor) || !(errors[i] > 0.0)) continue;
    fit.harmonics.push_back(harmonics[i]);
    xs.push_back(static_cast<double>(harmonics[i]));
    ys.push_back(std::log(errors[i]));
  }
  if (static_cast<int>(xs.size()) < std::max(2, min_points)) return std::nullopt;
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) return std::nullopt;
  const double slope = sxy / sxx;
  fit.kappa = -slope;
  fit.log_intercept = my - slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

std::vector<Index> SweepResult::harmonics() const {
  std::vector<Index> out;
  for (const auto& r : records) out.push_back(r.harmonics);
  return out;
}

std::vector<double> SweepResult::errors() const {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.converged() ? r.E : std::numeric_limits<double>::quiet_NaN());
  return out;
}

void SweepSettings::validate() const {
  if (harmonics.empty()) throw UsageError("sweep: harmonic list is empty");
  for (std::size_t i = 0; i < harmonics.size(); ++i) {
    if (harmonics[i] < 0) throw UsageError("sweep: negative harmonic count");
    if (i > 0 && harmonics[i] <= harmonics[i - 1]) throw UsageError("sweep: harmonic list must be increasing");
  }
  newton.validate();
}

SweepResult run_sweep(const DaeProblem& problem, const SweepSettings& settings) {
  settings.validate();
  if (!problem.known_period()) throw UsageError("run_sweep: use run_energy_sweep for an unknown period");
  HbSystem::Options opts = settings.system;
  opts.phase.reset();

  SweepResult out;
  std::optional<CoefficientVector> previous;
  for (const Index N : settings.harmonics) {
    ConvergenceRecord rec;
    rec.harmonics = N;
    const auto t0 = Clock::now();
    try {
      const HbSystem sys(problem, N, opts);
      const CoefficientVector x0 =
          settings.warm_start && previous ? resize(*previous, N) : CoefficientVector(sys.layout());
      const NewtonReport rep = solve(sys, x0, problem.nominal_period(), settings.newton);
      rec.termination = rep.termination;
      rec.newton_iterations = rep.iterations();
      rec.residual_norm = rep.final_residual();
      rec.x = rep.x;
      rec.tau = rep.tau;
      if (rep.converged()) {
        rec.E = compute_E(sys, rep.x, rep.tau, settings.quadrature);
        previous = rep.x;
      } else {
        rec.failure = "newton " + to_string(rep.termination);
      }
    } catch (const SolverError& e) {
      rec.termination = e.reason();
      rec.newton_iterations = e.iteration();
      rec.failure = e.what();
    } catch (const std::exception& e) {
      rec.termination = Termination::EvaluationFailure;
      rec.failure = e.what();
    }
    rec.wall_time_s = seconds_since(t0);
    out.records.push_back(std::move(rec));
  }
  out.floor = convergence_floor(settings.newton.abs_tol, settings.quadrature.absolute);
  out.fit = fit_kappa(out.harmonics(), out.errors(), out.floor);
  return out;
}

SweepResult run_energy_sweep(const DaeProblem& problem, const EnergyFunction& H, double energy, const BranchPoint& start,
                             const SweepSettings& settings) {
  settings.validate();
  if (problem.known_period()) throw UsageError("run_energy_sweep: the problem must have an unknown period");
  if (start.x.state_dim() != problem.state_dim()) throw UsageError("run_energy_sweep: start state dimension mismatch");

  SweepResult out;
  CoefficientVector x = start.x;
  double tau = start.tau;
  for (const Index N : settings.harmonics) {
    ConvergenceRecord rec;
    rec.harmonics = N;
    const auto t0 = Clock::now();
    try {
      const CoefficientVector x0 = resize(x, N);
      HbSystem::Options opts = settings.system;
      opts.phase = PhaseCondition(x0);
      PeriodBranch branch(HbSystem(problem, N, opts), H);
      const auto [y, rep] = solve_pinned(branch, branch.pack(BranchPoint{x0, tau, std::nullopt, {}}), "H", energy,
                                         settings.newton);
      rec.termination = rep.termination;
      rec.newton_iterations = rep.iterations();
      rec.residual_norm = rep.final_residual();
      const BranchPoint p = branch.make_point(y);
      rec.x = p.x;
      rec.tau = p.tau;
      rec.phase_residual = std::abs(branch.system().phase()->evaluate(p.x));
      if (rep.converged()) {
        rec.E = compute_E(branch.system(), p.x, p.tau, settings.quadrature);
        x = p.x;
        tau = p.tau;
      } else {
        rec.failure = "newton " + to_string(rep.termination);
      }
    } catch (const SolverError& e) {
      rec.termination = e.reason();
      rec.newton_iterations = e.iteration();
      rec.failure = e.what();
    } catch (const std::exception& e) {
      rec.termination = Termination::EvaluationFailure;
      rec.failure = e.what();
    }
    rec.wall_time_s = seconds_since(t0);
    out.records.push_back(std::move(rec));
  }
  out.floor = convergence_floor(settings.newton.abs_tol, settings.quadrature.absolute);
  out.fit = fit_kappa(out.harmonics(), out.errors(), out.floor);
  return out;
}

MassSpringRun run_mass_spring_continuation(const MassSpringRunSettings& settings) {
  MassSpringRun out;
  out.guess = eigen_initial_guess(settings.branch, settings.amplitude, settings.harmonics);
  const EnergyFunction H = mass_spring_energy(settings.clock);
  HbSystem::Options opts;
  opts.sample_count = settings.sample_count;
  opts.phase = PhaseCondition(out.guess.x);
  PeriodBranch branch(HbSystem(build_mass_spring_2d(out.guess.tau), settings.harmonics, opts), H);

  const Eigen::VectorXd y0 = branch.pack(out.guess);
  const double H0 = branch.constraint("H", y0).value;
  const auto [y, rep] = solve_pinned(branch, y0, "H", H0, settings.newton);
  if (!rep.converged())
    throw SolverError("mass-spring start: newton " + to_string(rep.termination), rep.termination, rep.iterations(), rep);
  out.start = branch.make_point(y);

  ContinuationSettings cs = settings.continuation;
  cs.stop = StopTarget{"H", settings.target_energy};
  try {
    out.branch = continue_branch(branch, out.start, cs);
  } catch (const ContinuationError& e) {
    out.branch = e.partial();
    out.failure = e.what();
  }
  for (const auto& p : out.branch.points) {
    // The phase anchor does not enter F.
    HbSystem::Options eo;
    eo.sample_count = settings.sample_count;
    eo.phase = PhaseCondition(p.x);
    out.E.push_back(compute_E(HbSystem(build_mass_spring_2d(p.tau), settings.harmonics, eo), p.x, p.tau,
                              settings.quadrature));
  }
  return out;
}

FrequencySweep run_frequency_sweep(const ProblemFactory& factory, const FrequencyRunSettings& settings) {
  if (settings.harmonics.empty()) throw UsageError("run_frequency_sweep: harmonic list is empty");
  if (!(settings.s_start > 0.0) || !(settings.s_end > 0.0) || settings.s_start == settings.s_end)
    throw UsageError("run_frequency_sweep: need distinct positive start and end parameters");

  FrequencySweep out;
  for (const Index N : settings.harmonics) {
    FrequencyRun run;
    run.harmonics = N;
    const auto t0 = Clock::now();
    try {
      ForcingBranch branch(factory, N, settings.s_start, settings.branch);
      const HbSystem sys0 = branch.system_at(settings.s_start);
      const NewtonReport rep = solve(sys0, CoefficientVector(sys0.layout()), 0.0, settings.start_solve);
      run.start_iterations = rep.iterations();
      if (!rep.converged()) throw SolverError("start solve: newton " + to_string(rep.termination), rep.termination,
                                             rep.iterations(), rep);
      BranchPoint start{rep.x, rep.tau, settings.s_start, {}};
      ContinuationSettings cs = settings.continuation;
      cs.stop = StopTarget{"s", settings.s_end};
      try {
        run.branch = continue_branch(branch, start, cs);
      } catch (const ContinuationError& e) {
        run.branch = e.partial();
        run.failure = e.what();
      }
      for (const auto& p : run.branch.points)
        run.E.push_back(compute_E(branch.system_at(*p.param), p.x, p.tau, settings.quadrature));
      if (run.failure.empty() && !run.E.empty()) run.EB = *std::max_element(run.E.begin(), run.E.end());
    } catch (const std::exception& e) {
      run.failure = e.what();
    }
    run.wall_time_s = seconds_since(t0);
    out.runs.push_back(std::move(run));
  }
  out.floor = convergence_floor(settings.floor_abs_tol(), settings.quadrature.absolute);
  std::vector<Index> Ns;
  std::vector<double> EB;
  for (const auto& r : out.runs) {
    Ns.push_back(r.harmonics);
    EB.push_back(r.EB);
  }
  out.fit = fit_kappa(Ns, EB, out.floor);
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.17g}", v);
}

void write_convergence_csv(const std::filesystem::path& path, const std::vector<ConvergenceRecord>& records) {
  auto out = open_output(path);
  out << "N,E,newton_iters,wall_time_s\n";
  for (const auto& r : records)
    out << r.harmonics << ',' << format_double(r.converged() ? r.E : std::numeric_limits<double>::quiet_NaN()) << ','
        << r.newton_iterations << ',' << format_double(r.wall_time_s) << '\n';
}

void write_branch_csv(const std::filesystem::path& path, const Branch& branch, const std::vector<double>& E,
                      const std::string& parameter_monitor, const std::vector<std::string>& monitors) {
  if (E.size() != branch.points.size()) throw UsageError("write_branch_csv: one E value per point is required");
  auto out = open_output(path);
  out << "step," << parameter_monitor;
  for (const auto& m : monitors) out << ',' << m;
  out << ",E,min_singular_value\n";
  auto monitor = [](const BranchPoint& p, const std::string& name) {
    const auto it = p.monitors.find(name);
    return it == p.monitors.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
  };
  for (std::size_t i = 0; i < branch.points.size(); ++i) {
    const auto& p = branch.points[i];
    out << i << ',' << format_double(monitor(p, parameter_monitor));
    for (const auto& m : monitors) out << ',' << format_double(monitor(p, m));
    out << ',' << format_double(E[i]) << ',' << format_double(monitor(p, "min_singular_value")) << '\n';
  }
}

void write_eb_csv(const std::filesystem::path& path, const FrequencySweep& sweep) {
  auto out = open_output(path);
  out << "N,EB,points,wall_time_s\n";
  for (const auto& r : sweep.runs)
    out << r.harmonics << ',' << format_double(r.EB) << ',' << r.branch.points.size() << ','
        << format_double(r.wall_time_s) << '\n';
}

std::string format_solution(const SolutionFile& s) {
  std::string out = "# hbm solution; coefficient blocks ordered (c0, s1, c1, ..., sN, cN), n values each\n";
  out += fmt::format("problem {}\n", s.problem);
  out += fmt::format("k {}\n", s.order);
  out += fmt::format("n {}\n", s.x.state_dim());
  out += fmt::format("N {}\n", s.x.harmonics());
  out += fmt::format("period_mode {}\n", s.known_period ? "known" : "unknown");
  out += "tau " + format_double(s.tau) + "\n";
  if (s.param) out += "param " + format_double(*s.param) + "\n";
  out += fmt::format("coefficients {}\n", s.x.size());
  for (Index i = 0; i < s.x.size(); ++i) out += format_double(s.x.values()(i)) + "\n";
  return out;
}

SolutionFile parse_solution(const std::string& text) {
  std::istringstream in(text);
  SolutionFile s;
  Index n = -1, N = -1;
  std::string line;
  auto fail = [](const std::string& why) { throw UsageError("solution file: " + why); };
  auto number = [&fail](const std::string& v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(v, &used);
    } catch (const std::exception&) {
      fail("bad number '" + v + "'");
    }
    if (used != v.size()) fail("bad number '" + v + "'");
    return d;
  };
  bool have_coefficients = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, value;
    ls >> key >> value;
    if (key == "problem") {
      s.problem = value;
    } else if (key == "k") {
      s.order = static_cast<int>(number(value));
    } else if (key == "n") {
      n = static_cast<Index>(number(value));
    } else if (key == "N") {
      N = static_cast<Index>(number(value));
    } else if (key == "period_mode") {
      if (value != "known" && value != "unknown") fail("period_mode must be known or unknown");
      s.known_period = value == "known";
    } else if (key == "tau") {
      s.tau = number(value);
    } else if (key == "param") {
      s.param = number(value);
    } else if (key == "coefficients") {
      if (n < 1 || N < 0) fail("n and N must precede the coefficients");
      const HarmonicLayout layout(N, n);
      if (static_cast<Index>(number(value)) != layout.size()) fail("coefficient count does not match n(2N+1)");
      Eigen::VectorXd v(layout.size());
      for (Index i = 0; i < layout.size(); ++i) {
        if (!std::getline(in, line)) fail("truncated coefficient list");
        v(i) = number(line);
      }
      s.x = CoefficientVector(layout, std::move(v));
      have_coefficients = true;
    } else {
      fail("unknown field '" + key + "'");
    }
  }
  if (!have_coefficients) fail("missing coefficients");
  if (s.problem.empty()) fail("missing problem id");
  return s;
}

void write_solution(const std::filesystem::path& path, const SolutionFile& s) {
  auto out = open_output(path);
  out << format_solution(s);
}

SolutionFile read_solution(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_solution(buf.str());
}

}  // namespace hbm
