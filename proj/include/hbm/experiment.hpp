#pragma once

// Convergence experiments: the error metric E(N), sweeps over the harmonic
// count, branch runs, and their CSV / solution-file outputs.

#include <Eigen/Dense>

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hbm/continuation.hpp"
#include "hbm/hb_system.hpp"
#include "hbm/newton.hpp"
#include "hbm/problems.hpp"
#include "hbm/quadrature.hpp"

namespace hbm {

/// E(N) = ||F(Q_N x, tau)||_{L2(0,1)} by adaptive quadrature.
///
/// `tol` is a tolerance on E itself. It is converted to an absolute target on
/// the integral of |F|^2 and widened to the rounding level of F, estimated
/// from the sampled linearization, so that converged solutions do not ask for
/// digits the integrand does not carry.
double compute_E(const HbSystem& sys, const CoefficientVector& x, double tau, const QuadratureTolerance& tol = {});

/// Rounding level of the pointwise residual F along Q_N x.
double residual_noise_level(const HbSystem& sys, const CoefficientVector& x, double tau);

struct KappaFit {
  double kappa = 0.0;
  double log_intercept = 0.0;  // ln E ~ log_intercept - kappa N
  double r_squared = 0.0;
  std::vector<Index> harmonics;  // points used
};

/// floor = max(abs_tol, 10 * quadrature tolerance).
double convergence_floor(double abs_tol, double quadrature_tol);

/// Least squares on ln E over the points with E > 100 floor. Empty when fewer
/// than `min_points` qualify.
std::optional<KappaFit> fit_kappa(const std::vector<Index>& harmonics, const std::vector<double>& errors, double floor,
                                  int min_points = 4);

struct ConvergenceRecord {
  Index harmonics = 0;
  double E = std::numeric_limits<double>::quiet_NaN();
  int newton_iterations = 0;
  double wall_time_s = 0.0;
  Termination termination = Termination::MaxIterations;
  /// Non-empty when the solve failed; the sweep continues.
  std::string failure;
  double residual_norm = std::numeric_limits<double>::quiet_NaN();
  /// |sigma_N(x)| for autonomous sweeps, 0 otherwise.
  double phase_residual = 0.0;
  CoefficientVector x;
  double tau = 0.0;

  bool converged() const { return failure.empty() && termination == Termination::Converged; }
};

struct SweepResult {
  std::vector<ConvergenceRecord> records;
  double floor = 0.0;
  std::optional<KappaFit> fit;

  std::vector<Index> harmonics() const;
  std::vector<double> errors() const;
};

struct SweepSettings {
  std::vector<Index> harmonics;
  /// Start from resize(previous solution) instead of the zero vector.
  bool warm_start = false;
  NewtonSettings newton;
  /// Phase anchors set by the sweep are ignored.
  HbSystem::Options system;
  QuadratureTolerance quadrature;

  void validate() const;
};

/// Known-period sweep: one Newton solve per N, cold or warm.
SweepResult run_sweep(const DaeProblem& problem, const SweepSettings& settings);

/// Autonomous sweep at fixed energy: each N starts from the previous solution
/// (the first from `start`), the phase is anchored at that start and the
/// system (R_N, sigma_N, H - energy) is solved by least squares.
SweepResult run_energy_sweep(const DaeProblem& problem, const EnergyFunction& H, double energy, const BranchPoint& start,
                             const SweepSettings& settings);

struct MassSpringRunSettings {
  int branch = 1;
  double amplitude = 1e-3;
  Index harmonics = 2;
  EnergyClock clock = EnergyClock::Rescaled;
  double target_energy = 10.0;
  Index sample_count = 0;
  NewtonSettings newton;
  ContinuationSettings continuation;
  QuadratureTolerance quadrature;
};

struct MassSpringRun {
  BranchPoint guess;
  /// First point on the branch (the eigen guess corrected at its own energy).
  BranchPoint start;
  Branch branch;
  std::vector<double> E;
  /// Set when continuation stopped early.
  std::string failure;
};

/// Eigen-initialized branch of the 2D mass-spring system continued to the
/// target energy.
MassSpringRun run_mass_spring_continuation(const MassSpringRunSettings& settings);

struct FrequencyRunSettings {
  std::vector<Index> harmonics;
  double s_start = 0.0;
  double s_end = 0.0;
  NewtonSettings start_solve;
  ContinuationSettings continuation;
  ForcingBranch::Options branch;
  QuadratureTolerance quadrature;
  /// Absolute Newton tolerance used for the floor.
  double floor_abs_tol() const { return continuation.corrector.abs_tol; }
};

struct FrequencyRun {
  Index harmonics = 0;
  Branch branch;
  /// E(N, .) per accepted point, in arclength order.
  std::vector<double> E;
  double EB = std::numeric_limits<double>::quiet_NaN();
  int start_iterations = 0;
  double wall_time_s = 0.0;
  std::string failure;

  bool completed() const { return failure.empty(); }
};

struct FrequencySweep {
  std::vector<FrequencyRun> runs;
  double floor = 0.0;
  std::optional<KappaFit> fit;
};

/// For every N: solve at s_start from the zero vector, continue in s to s_end,
/// evaluate E along the branch and take EB(N) = max E.
FrequencySweep run_frequency_sweep(const ProblemFactory& factory, const FrequencyRunSettings& settings);

// Output. Floats use 17 significant digits.

std::string format_double(double v);

/// Columns N, E, newton_iters, wall_time_s.
void write_convergence_csv(const std::filesystem::path& path, const std::vector<ConvergenceRecord>& records);

/// Columns step, tau_or_s, the listed monitors, E, min_singular_value.
void write_branch_csv(const std::filesystem::path& path, const Branch& branch, const std::vector<double>& E,
                      const std::string& parameter_monitor, const std::vector<std::string>& monitors);

/// Columns N, EB, points, wall_time_s for a frequency sweep.
void write_eb_csv(const std::filesystem::path& path, const FrequencySweep& sweep);

struct SolutionFile {
  std::string problem;
  int order = 1;
  bool known_period = true;
  double tau = 1.0;
  std::optional<double> param;
  CoefficientVector x;
};

std::string format_solution(const SolutionFile& s);
SolutionFile parse_solution(const std::string& text);
void write_solution(const std::filesystem::path& path, const SolutionFile& s);
SolutionFile read_solution(const std::filesystem::path& path);

}  // namespace hbm
