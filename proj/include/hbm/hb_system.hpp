#pragma once

// Harmonic balance residual R_N(x, tau) and its derivatives, assembled with
// the alternating frequency/time (AFT) scheme: synthesize the trajectory on a
// uniform grid, evaluate the DAE pointwise, analyze back to coefficients.

#include <Eigen/Dense>

#include <optional>

#include "hbm/dae.hpp"
#include "hbm/fourier.hpp"
#include "hbm/quadrature.hpp"

namespace hbm {

/// Integral phase condition anchored at a reference trajectory a:
///
///   sigma(x) = int (q - a) . a' + (q' - a') . a'' dt,   q = Q_N(x),
///
/// evaluated exactly in coefficient space. sigma is affine in x.
class PhaseCondition {
 public:
  explicit PhaseCondition(CoefficientVector anchor);

  const CoefficientVector& anchor() const { return anchor_; }
  double evaluate(const CoefficientVector& x) const;
  /// d sigma / dx for coefficient vectors of the given layout (constant in x).
  Eigen::VectorXd gradient(const HarmonicLayout& layout) const;
  PhaseCondition reanchored(CoefficientVector anchor) const { return PhaseCondition(std::move(anchor)); }

 private:
  CoefficientVector anchor_;
  CoefficientVector d1_;  // a'
  CoefficientVector d2_;  // a''
  CoefficientVector d3_;  // a'''
};

enum class JacobianMode { AnalyticAft, FiniteDifference };

/// Largest unknown count for which dense Jacobians are formed.
inline constexpr Index kMaxDenseUnknowns = 20000;

class HbSystem {
 public:
  struct Options {
    /// 0 selects default_sample_count(N).
    Index sample_count = 0;
    JacobianMode jacobian = JacobianMode::AnalyticAft;
    std::optional<PhaseCondition> phase;
  };

  HbSystem(DaeProblem problem, Index harmonics);
  HbSystem(DaeProblem problem, Index harmonics, Options options);

  const DaeProblem& problem() const { return problem_; }
  const HarmonicLayout& layout() const { return layout_; }
  const TimeGrid& grid() const { return grid_; }
  JacobianMode jacobian_mode() const { return options_.jacobian; }
  const std::optional<PhaseCondition>& phase() const { return options_.phase; }
  bool unknown_period() const { return !problem_.known_period(); }

  /// Same problem and grid policy with another phase anchor.
  HbSystem with_phase(PhaseCondition phase) const;
  /// Same problem and options at another harmonic count (grid re-derived when defaulted).
  HbSystem with_harmonics(Index harmonics) const;
  HbSystem with_problem(DaeProblem problem) const;

  /// tau actually used: the known period in Known mode, else tau itself.
  double effective_period(double tau) const;
  void check(const CoefficientVector& x, double tau) const;

  TrajectorySamples trajectory(const CoefficientVector& x, double tau) const;

  /// S x (2N+1) synthesis table and (2N+1) x S analysis table.
  const Eigen::MatrixXd& synthesis_table() const { return synthesis_; }
  const Eigen::MatrixXd& analysis_table() const { return analysis_; }

 private:
  DaeProblem problem_;
  HarmonicLayout layout_;
  Options options_;
  TimeGrid grid_;
  Eigen::MatrixXd synthesis_;
  Eigen::MatrixXd analysis_;
};

/// R_N(x, tau) = (c_0, s_1, c_1, ..., s_N, c_N) of F(Q_N(x), tau).
CoefficientVector residual(const HbSystem& sys, const CoefficientVector& x, double tau);

/// d R_N / dx as a dense n(2N+1) square matrix.
Eigen::MatrixXd jacobian_x(const HbSystem& sys, const CoefficientVector& x, double tau);

/// Matrix-free (d R_N / dx) v.
CoefficientVector jacobian_x_apply(const HbSystem& sys, const CoefficientVector& x, double tau,
                                   const CoefficientVector& v);

/// d R_N / d tau through the autonomous identity. Unknown period mode only.
CoefficientVector jacobian_tau(const HbSystem& sys, const CoefficientVector& x, double tau);

/// Coefficients of period_sensitivity(): the tau-derivative of R_N with the
/// DAE's explicit time argument held fixed. Valid in either period mode.
CoefficientVector period_sensitivity_coefficients(const HbSystem& sys, const CoefficientVector& x, double tau);

struct AugmentedResidual {
  CoefficientVector residual;
  double phase = 0.0;

  Eigen::VectorXd stacked() const;
};

/// (R_N(x, tau), sigma_N(x)). Unknown period mode with a phase condition.
AugmentedResidual residual_augmented(const HbSystem& sys, const CoefficientVector& x, double tau);

/// [[dR/dx, dR/dtau], [dsigma/dx, 0]], size n(2N+1)+1.
Eigen::MatrixXd jacobian_augmented(const HbSystem& sys, const CoefficientVector& x, double tau);

/// R_N with each Fourier integral computed by adaptive quadrature instead of AFT.
CoefficientVector residual_quadrature(const HbSystem& sys, const CoefficientVector& x, double tau,
                                      const QuadratureTolerance& tol = {});

/// Galerkin matrix of pointwise multiplication by sampled n x n matrices:
/// block (a, b) = (1/S) sum_m phi_a(t_m) phi_b(t_m) A(t_m). `samples` is
/// n^2 x S (column m = vec A(t_m)).
Eigen::MatrixXd multiplication_operator(const Eigen::MatrixXd& samples, Index state_dim, Index harmonics);

/// Per-harmonic block-diagonal part of a coefficient-space matrix: the
/// constant block (n x n) and one 2n x 2n (sin, cos) block per harmonic.
Eigen::MatrixXd harmonic_block_diagonal(const Eigen::MatrixXd& J, const HarmonicLayout& layout);

}  // namespace hbm
