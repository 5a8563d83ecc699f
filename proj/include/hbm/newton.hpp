#pragma once

// Inexact Newton iteration y_{j+1} = y_j + delta_j with
// DG(y_j) delta_j = -G(y_j) + r_j and ||r_j|| <= theta ||G(y_j)||.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hbm/hb_system.hpp"
#include "hbm/krylov.hpp"

namespace hbm {

/// A square or overdetermined nonlinear system G(y) = 0.
struct NonlinearFunction {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residual;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  /// Optional: builds M^{-1} for right-preconditioned GMRES from the current iterate and Jacobian.
  std::function<LinearOperator(const Eigen::VectorXd&, const Eigen::MatrixXd&)> preconditioner;
};

enum class InnerSolver {
  DirectLu,
  Krylov,
  /// Householder QR least squares; selected automatically for non-square systems.
  LeastSquares,
  /// Minimum-norm solution through a complete orthogonal decomposition.
  MinimumNorm,
};

struct KrylovSettings {
  double theta = 1e-6;
  int restart = 60;
  int max_iterations = 2000;
  bool precondition = true;
};

struct NewtonSettings {
  double abs_tol = 1e-15;
  double rel_tol = 1e-15;
  /// Active when set: convergence also requires ||delta|| <= update_tol.
  std::optional<double> update_tol;
  int max_iters = 50;
  InnerSolver inner = InnerSolver::DirectLu;
  KrylovSettings krylov;
  int max_halvings = 20;
  /// Halve steps that increase the residual (off: plain Newton).
  bool damp_on_increase = false;
  /// Consecutive iterations with ||G|| > 0.9 ||G_prev|| before declaring stagnation.
  int stagnation_window = 3;
  bool diagnostics = false;

  void validate() const;

  static NewtonSettings quadrature_preset();
  /// abs 1e-10 and update 1e-6, GMRES with theta = 1e-6, damped.
  static NewtonSettings beam_preset();
};

enum class Termination { Converged, MaxIterations, Stagnated, EvaluationFailure, SingularJacobian, InnerSolveFailure };

std::string to_string(Termination t);

struct NewtonStep {
  double residual_norm = 0.0;  // ||G|| after the step
  double update_norm = 0.0;
  /// ||DG delta + G|| / ||G|| of the inner solve.
  double inner_relative_residual = 0.0;
  int inner_iterations = 0;
  int halvings = 0;
};

struct KantorovichDiagnostics {
  double beta = 0.0;       // ||DG(y0)^{-1} G(y0)||
  double lipschitz = 0.0;  // sampled estimate of L
  double beta_l = 0.0;
  /// (1 - sqrt(2 beta L)) / (1 + sqrt(2 beta L)), or 0 when beta L >= 1/2.
  double theta_max = 0.0;
  double radius = 0.0;
  int samples = 0;

  bool hypothesis_holds() const { return beta_l < 0.5; }
};

struct NewtonReport {
  Termination termination = Termination::MaxIterations;
  double initial_residual = 0.0;
  std::vector<NewtonStep> history;
  /// y_0, y_1, ... (flattened unknowns).
  std::vector<Eigen::VectorXd> iterates;
  Eigen::VectorXd y;
  /// Filled by solve(HbSystem, ...); tau equals the known period in Known mode.
  CoefficientVector x;
  double tau = 0.0;
  std::optional<KantorovichDiagnostics> diagnostics;

  bool converged() const { return termination == Termination::Converged; }
  int iterations() const { return static_cast<int>(history.size()); }
  double final_residual() const { return history.empty() ? initial_residual : history.back().residual_norm; }
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, Termination reason, int iteration, NewtonReport partial)
      : std::runtime_error(what), reason_(reason), iteration_(iteration), partial_(std::move(partial)) {}

  Termination reason() const { return reason_; }
  int iteration() const { return iteration_; }
  const NewtonReport& partial() const { return partial_; }

 private:
  Termination reason_;
  int iteration_;
  NewtonReport partial_;
};

/// Right preconditioner from LU factors of the per-harmonic diagonal blocks of
/// J; rows beyond layout.size() (bordering unknowns) are left unscaled.
LinearOperator block_diagonal_preconditioner(const Eigen::MatrixXd& J, const HarmonicLayout& layout);

NewtonReport newton_iterate(const NonlinearFunction& f, const Eigen::VectorXd& y0, const NewtonSettings& settings);

/// The flat system solved for sys: G = R_N in Known mode, G = (R_N, sigma_N)
/// over y = (x, tau) in Unknown mode. The harmonic block-diagonal
/// preconditioner is attached.
NonlinearFunction as_nonlinear_function(const HbSystem& sys);
Eigen::VectorXd pack(const HbSystem& sys, const CoefficientVector& x, double tau);
void unpack(const HbSystem& sys, const Eigen::VectorXd& y, CoefficientVector& x, double& tau);

NewtonReport solve(const HbSystem& sys, const CoefficientVector& x0, double tau0, const NewtonSettings& settings = {});

struct KantorovichOptions {
  /// 0 selects 1e-2 * ||y0|| (or 1e-2 when y0 = 0).
  double radius = 0.0;
  int samples = 32;
  std::uint64_t seed = 20240601;
};

KantorovichDiagnostics kantorovich_diagnostics(const NonlinearFunction& f, const Eigen::VectorXd& y0,
                                               const KantorovichOptions& options = {});
KantorovichDiagnostics kantorovich_diagnostics(const HbSystem& sys, const CoefficientVector& x0, double tau0,
                                               const KantorovichOptions& options = {});

}  // namespace hbm
