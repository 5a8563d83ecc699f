#include "hbm/newton.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include <fmt/format.h>

#include "hbm/errors.hpp"

namespace hbm {
namespace {

struct InnerResult {
  Eigen::VectorXd delta;
  double relative_residual = 0.0;
  int iterations = 0;
};

bool is_square(const Eigen::MatrixXd& J) { return J.rows() == J.cols(); }

InnerResult inner_solve(const NonlinearFunction& f, const Eigen::VectorXd& y, const Eigen::MatrixXd& J,
                        const Eigen::VectorXd& G, const NewtonSettings& s, int iteration, const NewtonReport& report) {
  InnerResult out;
  const Eigen::VectorXd rhs = -G;
  InnerSolver kind = s.inner;
  if (!is_square(J) && (kind == InnerSolver::DirectLu || kind == InnerSolver::Krylov)) kind = InnerSolver::LeastSquares;

  auto fail = [&](const std::string& what, Termination t) {
    throw SolverError("newton iteration " + std::to_string(iteration) + ": " + what, t, iteration, report);
  };

  switch (kind) {
    case InnerSolver::DirectLu: {
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
      const double rc = lu.rcond();
      if (!(rc > std::numeric_limits<double>::epsilon())) fail(fmt::format("singular Jacobian (rcond {:.3e})", rc), Termination::SingularJacobian);
      out.delta = lu.solve(rhs);
      break;
    }
    case InnerSolver::LeastSquares: {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
      if (qr.rank() < J.cols()) fail("rank-deficient Jacobian", Termination::SingularJacobian);
      out.delta = qr.solve(rhs);
      break;
    }
    case InnerSolver::MinimumNorm: {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J);
      out.delta = cod.solve(rhs);
      break;
    }
    case InnerSolver::Krylov: {
      LinearOperator A = [&J](const Eigen::VectorXd& v) { return Eigen::VectorXd(J * v); };
      LinearOperator M;
      if (s.krylov.precondition && f.preconditioner) M = f.preconditioner(y, J);
      const GmresSettings gs{s.krylov.theta, s.krylov.restart, s.krylov.max_iterations};
      const auto res = gmres(A, rhs, gs, M);
      if (!res.converged)
        fail(fmt::format("GMRES reached relative residual {:.3e} above theta", res.relative_residual),
             Termination::InnerSolveFailure);
      out.delta = res.solution;
      out.iterations = res.iterations;
      break;
    }
  }
  if (!out.delta.allFinite()) fail("non-finite Newton update", Termination::SingularJacobian);
  const double gn = G.norm();
  out.relative_residual = gn > 0.0 ? (J * out.delta + G).norm() / gn : 0.0;
  return out;
}

double spectral_norm(const Eigen::MatrixXd& A, std::mt19937_64& rng) {
  if (A.cols() <= 400) return Eigen::BDCSVD<Eigen::MatrixXd>(A).singularValues()(0);
  std::normal_distribution<double> d;
  Eigen::VectorXd v(A.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = d(rng);
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd w = A.transpose() * (A * v);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    sigma = std::sqrt(nw);
    v = w / nw;
  }
  return sigma;
}

Eigen::VectorXd random_in_ball(Eigen::Index dim, double radius, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = d(rng);
  return v * (radius * std::pow(u(rng), 1.0 / static_cast<double>(dim)) / v.norm());
}

}  // namespace

void NewtonSettings::validate() const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw UsageError("NewtonSettings: tolerances must be positive");
  if (update_tol && !(*update_tol > 0.0)) throw UsageError("NewtonSettings: update tolerance must be positive");
  if (max_iters < 1) throw UsageError("NewtonSettings: max_iters must be positive");
  if (!(krylov.theta >= 0.0 && krylov.theta < 1.0)) throw UsageError("NewtonSettings: theta must lie in [0, 1)");
  if (max_halvings < 0 || stagnation_window < 1) throw UsageError("NewtonSettings: invalid damping or stagnation limits");
}

NewtonSettings NewtonSettings::quadrature_preset() { return NewtonSettings{}; }

NewtonSettings NewtonSettings::beam_preset() {
  NewtonSettings s;
  s.abs_tol = 1e-10;
  s.rel_tol = 1e-15;
  s.update_tol = 1e-6;
  s.damp_on_increase = true;
  s.inner = InnerSolver::Krylov;
  s.krylov.theta = 1e-6;
  return s;
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max-iters";
    case Termination::Stagnated: return "stagnated";
    case Termination::EvaluationFailure: return "evaluation-failure";
    case Termination::SingularJacobian: return "singular-jacobian";
    case Termination::InnerSolveFailure: return "inner-solve-failure";
  }
  return "unknown";
}

NewtonReport newton_iterate(const NonlinearFunction& f, const Eigen::VectorXd& y0, const NewtonSettings& s) {
  s.validate();
  if (!f.residual || !f.jacobian) throw UsageError("newton_iterate: residual and jacobian are required");

  NewtonReport report;
  report.y = y0;
  report.iterates.push_back(y0);
  Eigen::VectorXd G;
  try {
    G = f.residual(y0);
  } catch (const EvaluationError& e) {
    throw SolverError(std::string("residual evaluation failed at the initial guess: ") + e.what(),
                      Termination::EvaluationFailure, 0, report);
  }
  report.initial_residual = G.norm();
  const double tol = std::max(s.abs_tol, s.rel_tol * report.initial_residual);
  if (report.initial_residual <= tol && !s.update_tol) {
    report.termination = Termination::Converged;
    return report;
  }

  double previous = report.initial_residual;
  int slow = 0;
  for (int it = 1; it <= s.max_iters; ++it) {
    Eigen::MatrixXd J;
    try {
      J = f.jacobian(report.y);
    } catch (const EvaluationError& e) {
      throw SolverError(std::string("Jacobian evaluation failed: ") + e.what(), Termination::EvaluationFailure, it,
                        report);
    }
    const InnerResult inner = inner_solve(f, report.y, J, G, s, it, report);

    NewtonStep step;
    step.inner_relative_residual = inner.relative_residual;
    step.inner_iterations = inner.iterations;
    double lambda = 1.0;
    Eigen::VectorXd trial, Gt;
    for (;;) {
      trial = report.y + lambda * inner.delta;
      bool ok = true;
      try {
        Gt = f.residual(trial);
      } catch (const EvaluationError&) {
        ok = false;
      }
      const bool increase = ok && s.damp_on_increase && Gt.norm() > previous;
      if (ok && !increase) break;
      if (step.halvings >= s.max_halvings) {
        if (ok) break;  // accept the last increasing step
        throw SolverError("newton iteration " + std::to_string(it) + ": residual evaluation failed after " +
                              std::to_string(step.halvings) + " step halvings",
                          Termination::EvaluationFailure, it, report);
      }
      lambda *= 0.5;
      ++step.halvings;
    }
    step.update_norm = (lambda * inner.delta).norm();
    step.residual_norm = Gt.norm();
    report.y = trial;
    G = std::move(Gt);
    report.iterates.push_back(report.y);
    report.history.push_back(step);

    const bool small = step.residual_norm <= tol;
    const bool settled = !s.update_tol || step.update_norm <= *s.update_tol;
    if (small && settled) {
      report.termination = Termination::Converged;
      return report;
    }
    slow = step.residual_norm > 0.9 * previous ? slow + 1 : 0;
    if (slow >= s.stagnation_window) {
      report.termination = Termination::Stagnated;
      return report;
    }
    previous = step.residual_norm;
  }
  report.termination = Termination::MaxIterations;
  return report;
}

LinearOperator block_diagonal_preconditioner(const Eigen::MatrixXd& J, const HarmonicLayout& layout) {
  if (J.rows() < layout.size() || J.cols() < layout.size())
    throw UsageError("block_diagonal_preconditioner: matrix smaller than the layout");
  const Index n = layout.state_dim;
  using Factor = std::pair<Index, Eigen::PartialPivLU<Eigen::MatrixXd>>;
  auto factors = std::make_shared<std::vector<Factor>>();
  factors->emplace_back(0, Eigen::PartialPivLU<Eigen::MatrixXd>(J.topLeftCorner(n, n)));
  for (Index h = 1; h <= layout.harmonics; ++h) {
    const Index s = HarmonicLayout::sin_block(h) * n;
    factors->emplace_back(s, Eigen::PartialPivLU<Eigen::MatrixXd>(J.block(s, s, 2 * n, 2 * n)));
  }
  return [factors](const Eigen::VectorXd& v) {
    Eigen::VectorXd out = v;
    for (const auto& [start, lu] : *factors) out.segment(start, lu.rows()) = lu.solve(v.segment(start, lu.rows()));
    return out;
  };
}

Eigen::VectorXd pack(const HbSystem& sys, const CoefficientVector& x, double tau) {
  if (!sys.unknown_period()) return x.values();
  Eigen::VectorXd y(x.size() + 1);
  y << x.values(), tau;
  return y;
}

void unpack(const HbSystem& sys, const Eigen::VectorXd& y, CoefficientVector& x, double& tau) {
  const Index m = sys.layout().size();
  if (y.size() != m + (sys.unknown_period() ? 1 : 0)) throw UsageError("unpack: vector has the wrong size");
  x = CoefficientVector(sys.layout(), y.head(m));
  tau = sys.unknown_period() ? y(m) : sys.problem().nominal_period();
}

NonlinearFunction as_nonlinear_function(const HbSystem& sys) {
  auto shared = std::make_shared<const HbSystem>(sys);
  NonlinearFunction f;
  f.residual = [shared](const Eigen::VectorXd& y) {
    CoefficientVector x;
    double tau;
    unpack(*shared, y, x, tau);
    if (!shared->unknown_period()) return residual(*shared, x, tau).values();
    if (!(tau > 0.0)) throw EvaluationError("non-positive period iterate", -1);
    return residual_augmented(*shared, x, tau).stacked();
  };
  f.jacobian = [shared](const Eigen::VectorXd& y) {
    CoefficientVector x;
    double tau;
    unpack(*shared, y, x, tau);
    return shared->unknown_period() ? jacobian_augmented(*shared, x, tau) : jacobian_x(*shared, x, tau);
  };
  f.preconditioner = [shared](const Eigen::VectorXd&, const Eigen::MatrixXd& J) {
    return block_diagonal_preconditioner(J, shared->layout());
  };
  return f;
}

NewtonReport solve(const HbSystem& sys, const CoefficientVector& x0, double tau0, const NewtonSettings& settings) {
  sys.check(x0, tau0);
  const auto f = as_nonlinear_function(sys);
  const Eigen::VectorXd y0 = pack(sys, x0, tau0);
  std::optional<KantorovichDiagnostics> diag;
  if (settings.diagnostics) diag = kantorovich_diagnostics(f, y0);
  NewtonReport report;
  try {
    report = newton_iterate(f, y0, settings);
  } catch (SolverError& e) {
    NewtonReport partial = e.partial();
    unpack(sys, partial.y, partial.x, partial.tau);
    throw SolverError(e.what(), e.reason(), e.iteration(), std::move(partial));
  }
  unpack(sys, report.y, report.x, report.tau);
  report.diagnostics = diag;
  return report;
}

KantorovichDiagnostics kantorovich_diagnostics(const NonlinearFunction& f, const Eigen::VectorXd& y0,
                                               const KantorovichOptions& options) {
  if (options.samples < 1) throw UsageError("kantorovich_diagnostics: need at least one sample");
  const Eigen::MatrixXd J0 = f.jacobian(y0);
  if (!is_square(J0)) throw UsageError("kantorovich_diagnostics: square systems only");
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(J0);
  if (!(lu.rcond() > std::numeric_limits<double>::epsilon())) {
    NewtonReport r;
    r.y = y0;
    throw SolverError("kantorovich_diagnostics: singular Jacobian at the initial guess", Termination::SingularJacobian, 0, r);
  }
  KantorovichDiagnostics d;
  d.beta = lu.solve(f.residual(y0)).norm();
  d.radius = options.radius > 0.0 ? options.radius : (y0.norm() > 0.0 ? 1e-2 * y0.norm() : 1e-2);
  std::mt19937_64 rng(options.seed);
  for (int k = 0; k < options.samples; ++k) {
    const Eigen::VectorXd y = y0 + random_in_ball(y0.size(), d.radius, rng);
    const Eigen::VectorXd z = y0 + random_in_ball(y0.size(), d.radius, rng);
    const double dist = (z - y).norm();
    if (dist == 0.0) continue;
    Eigen::MatrixXd diff;
    try {
      diff = f.jacobian(z) - f.jacobian(y);
    } catch (const EvaluationError&) {
      continue;
    }
    d.lipschitz = std::max(d.lipschitz, spectral_norm(lu.solve(diff), rng) / dist);
    ++d.samples;
  }
  d.beta_l = d.beta * d.lipschitz;
  if (d.beta_l < 0.5) {
    const double r = std::sqrt(2.0 * d.beta_l);
    d.theta_max = (1.0 - r) / (1.0 + r);
  }
  return d;
}

KantorovichDiagnostics kantorovich_diagnostics(const HbSystem& sys, const CoefficientVector& x0, double tau0,
                                               const KantorovichOptions& options) {
  sys.check(x0, tau0);
  return kantorovich_diagnostics(as_nonlinear_function(sys), pack(sys, x0, tau0), options);
}

}  // namespace hbm
