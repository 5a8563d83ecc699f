#pragma once

// Restarted GMRES with optional right preconditioning. With a right
// preconditioner the minimized residual is the true residual b - A x, so the
// reported relative residual is the one an inexact Newton step needs.

#include <Eigen/Dense>

#include <functional>

namespace hbm {

using LinearOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct GmresSettings {
  double tolerance = 1e-6;  // on ||b - A x|| / ||b||
  int restart = 60;
  int max_iterations = 2000;
};

struct GmresResult {
  Eigen::VectorXd solution;
  /// ||b - A x|| / ||b|| recomputed from the returned solution.
  double relative_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Solves A x = b. `right_preconditioner` applies M^{-1}; empty means M = I.
GmresResult gmres(const LinearOperator& A, const Eigen::VectorXd& b, const GmresSettings& settings = {},
                  const LinearOperator& right_preconditioner = {});

}  // namespace hbm
