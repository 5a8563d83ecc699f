#pragma once

// Globally adaptive Gauss-Kronrod (7/15) quadrature for vector-valued
// integrands on a finite interval.

#include <Eigen/Dense>

#include <functional>

namespace hbm {

using Index = Eigen::Index;

struct QuadratureTolerance {
  double absolute = 1e-15;
  double relative = 1e-15;
  int max_subdivisions = 20000;
  /// Uniform panels created before adaptation starts.
  int initial_panels = 1;
};

struct QuadratureResult {
  Eigen::VectorXd value;
  double error_estimate = 0.0;
  int evaluations = 0;
  int panels = 0;
  /// True when some panels stopped refining because their error was at the
  /// rounding level of the integrand.
  bool roundoff_limited = false;
};

using VectorIntegrand = std::function<Eigen::VectorXd(double)>;

/// Integrates f over [a, b] until the summed error estimate (max norm over
/// components) is below max(absolute, relative * |I|_inf). Throws
/// QuadratureError when the subdivision budget runs out.
QuadratureResult integrate(const VectorIntegrand& f, double a, double b, const QuadratureTolerance& tol = {});

double integrate_scalar(const std::function<double(double)>& f, double a, double b,
                        const QuadratureTolerance& tol = {});

}  // namespace hbm
