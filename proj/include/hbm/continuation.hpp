#pragma once

// Pseudo-arclength continuation of harmonic balance branches.
//
// A branch is traced in a flat unknown y. For autonomous problems y = (x, tau)
// with the phase condition re-anchored at every accepted point; for forced
// problems y = (x, s) where s is an external parameter fixing the period.

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hbm/hb_system.hpp"
#include "hbm/newton.hpp"

namespace hbm {

struct BranchPoint {
  CoefficientVector x;
  double tau = 1.0;
  std::optional<double> param;
  std::map<std::string, double> monitors;
};

/// Scalar functional of the branch unknowns with its gradient.
struct ScalarConstraint {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

class BranchSystem {
 public:
  virtual ~BranchSystem() = default;

  /// Number of unknowns in y.
  virtual Index dimension() const = 0;
  /// Residual rows (one fewer independent row than unknowns along a regular branch).
  virtual Eigen::VectorXd residual(const Eigen::VectorXd& y) const = 0;
  virtual Eigen::MatrixXd jacobian(const Eigen::VectorXd& y) const = 0;
  /// Called on every accepted point (e.g. to re-anchor a phase condition).
  virtual void accept(const Eigen::VectorXd& /*y*/) {}

  virtual Eigen::VectorXd pack(const BranchPoint& p) const = 0;
  virtual BranchPoint make_point(const Eigen::VectorXd& y) const = 0;
  /// Diagonal scaling of the arclength inner product.
  virtual Eigen::VectorXd weights() const { return Eigen::VectorXd::Ones(dimension()); }
  /// Direction the first tangent should point along (positive inner product).
  virtual Eigen::VectorXd orientation(const Eigen::VectorXd& y) const = 0;
  /// A named monitor as a constraint, for stop targets and pinned solves.
  virtual ScalarConstraint constraint(const std::string& monitor, const Eigen::VectorXd& y) const;
  /// Optional right preconditioner for Krylov corrector solves.
  virtual std::function<LinearOperator(const Eigen::VectorXd&, const Eigen::MatrixXd&)> preconditioner() const {
    return {};
  }
};

/// Which velocity the energy monitor sees: the physical u' = q'/tau, or the
/// derivative q' of the 1-periodic rescaled trajectory.
enum class EnergyClock { Physical, Rescaled };

/// Energy H(u, v) and its partial gradients.
struct EnergyFunction {
  std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> grad_u;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> grad_v;
  EnergyClock clock = EnergyClock::Physical;
};

/// H of the 2D mass-spring system.
EnergyFunction mass_spring_energy(EnergyClock clock = EnergyClock::Physical);

/// Grid mean of H(q, v) with v chosen by H.clock. With the physical clock
/// this is the conserved energy of a conservative solution.
double mean_energy(const HbSystem& sys, const EnergyFunction& H, const CoefficientVector& x, double tau);

/// y = (x, tau), equations (R_N, sigma_N). Monitors: tau, H (when an energy
/// is given), amplitude, residual.
class PeriodBranch : public BranchSystem {
 public:
  PeriodBranch(HbSystem sys, std::optional<EnergyFunction> energy = std::nullopt);

  const HbSystem& system() const { return sys_; }

  Index dimension() const override { return sys_.layout().size() + 1; }
  Eigen::VectorXd residual(const Eigen::VectorXd& y) const override;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& y) const override;
  void accept(const Eigen::VectorXd& y) override;
  Eigen::VectorXd pack(const BranchPoint& p) const override;
  BranchPoint make_point(const Eigen::VectorXd& y) const override;
  Eigen::VectorXd orientation(const Eigen::VectorXd& y) const override;
  ScalarConstraint constraint(const std::string& monitor, const Eigen::VectorXd& y) const override;

 private:
  HbSystem sys_;
  std::optional<EnergyFunction> energy_;
};

/// Builds the DAE at parameter value s.
using ProblemFactory = std::function<DaeProblem(double)>;
/// d R_N / d s at fixed coefficients.
using ParameterDerivative = std::function<CoefficientVector(const HbSystem& sys_at_s, const CoefficientVector& x, double s)>;

/// dR/ds for problems whose only s-dependence is the known period 2 pi / s
/// with forcing fixed in rescaled time.
ParameterDerivative forcing_frequency_derivative();

/// y = (x, s) for a known-period problem family. Monitors: s, tau, amplitude,
/// residual, and the sup-norm of one state component when requested.
class ForcingBranch : public BranchSystem {
 public:
  struct Options {
    HbSystem::Options system;
    /// Central differences in s when empty.
    ParameterDerivative derivative;
    double state_scale = 1.0;
    double param_scale = 1.0;
    /// State component reported as the "peak" monitor; -1 disables it.
    Index peak_component = -1;
  };

  /// `reference_param` is any valid s; it fixes the state dimension.
  ForcingBranch(ProblemFactory factory, Index harmonics, double reference_param, Options options);

  HbSystem system_at(double s) const;
  Index harmonics() const { return harmonics_; }

  Index dimension() const override { return HarmonicLayout(harmonics_, state_dim_).size() + 1; }
  Eigen::VectorXd residual(const Eigen::VectorXd& y) const override;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& y) const override;
  Eigen::VectorXd pack(const BranchPoint& p) const override;
  BranchPoint make_point(const Eigen::VectorXd& y) const override;
  Eigen::VectorXd weights() const override;
  Eigen::VectorXd orientation(const Eigen::VectorXd& y) const override;
  ScalarConstraint constraint(const std::string& monitor, const Eigen::VectorXd& y) const override;
  std::function<LinearOperator(const Eigen::VectorXd&, const Eigen::MatrixXd&)> preconditioner() const override;

 private:
  ProblemFactory factory_;
  Index harmonics_;
  Index state_dim_;
  Options options_;
};

/// Stop once the named monitor crosses `value`; the final point is refined onto it.
struct StopTarget {
  std::string monitor;
  double value = 0.0;
};

struct ContinuationSettings {
  double initial_step = 0.05;
  double min_step = 1e-8;
  double max_step = 0.5;
  int max_steps = 1000;
  /// Step doubles after a corrector taking at most this many iterations.
  int fast_iterations = 3;
  double growth = 2.0;
  double shrink = 0.5;
  std::optional<StopTarget> stop;
  NewtonSettings corrector = default_corrector();
  /// Record the smallest singular value of the bordered corrector matrix.
  bool monitor_singular_value = true;

  static NewtonSettings default_corrector();
  void validate() const;
};

enum class BranchTermination { TargetReached, MaxSteps };

struct Branch {
  std::vector<BranchPoint> points;
  /// Unit tangents (weighted norm) at every accepted point.
  std::vector<Eigen::VectorXd> tangents;
  /// Corrector iterations per accepted point (0 for the start point).
  std::vector<int> corrector_iterations;
  BranchTermination termination = BranchTermination::MaxSteps;
  int rejected_steps = 0;
};

class ContinuationError : public std::runtime_error {
 public:
  ContinuationError(const std::string& what, Branch partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const Branch& partial() const { return partial_; }

 private:
  Branch partial_;
};

/// Newton on (residual, monitor - value). Returns the converged y and report.
std::pair<Eigen::VectorXd, NewtonReport> solve_pinned(const BranchSystem& branch, const Eigen::VectorXd& y0,
                                                      const std::string& monitor, double value,
                                                      const NewtonSettings& settings);

/// Unit tangent at y in the weighted norm, oriented along `previous` (or the
/// branch orientation when `previous` is empty).
Eigen::VectorXd branch_tangent(const BranchSystem& branch, const Eigen::VectorXd& y, const Eigen::VectorXd& previous);

/// Bordered matrix [DF(y); (W^2 t)^T] whose inverse drives the corrector.
Eigen::MatrixXd bordered_jacobian(const BranchSystem& branch, const Eigen::VectorXd& y, const Eigen::VectorXd& tangent);

/// Smallest singular value; dense SVD when small, inverse iteration otherwise.
double smallest_singular_value(const Eigen::MatrixXd& A);

Branch continue_branch(BranchSystem& branch, const BranchPoint& start, const ContinuationSettings& settings);

/// Linearized-mode guess for the 2D mass-spring branches: one cosine harmonic
/// equal to amplitude times the unit eigenvector of K, tau = 2 pi / sqrt(lambda).
/// Branch 1 uses the smaller eigenvalue.
BranchPoint eigen_initial_guess(int branch, double amplitude, Index harmonics = 2);

}  // namespace hbm
