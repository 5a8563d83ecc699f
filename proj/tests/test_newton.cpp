#include "doctest.h"

#include <cmath>

#include "hbm/newton.hpp"
#include "hbm/problems.hpp"

using namespace hbm;

namespace {

NonlinearFunction affine(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  NonlinearFunction f;
  f.residual = [A, b](const Eigen::VectorXd& y) { return Eigen::VectorXd(A * y - b); };
  f.jacobian = [A](const Eigen::VectorXd&) { return A; };
  return f;
}

// G(y) = y^2 - a.
NonlinearFunction square_root(double a) {
  NonlinearFunction f;
  f.residual = [a](const Eigen::VectorXd& y) { return Eigen::VectorXd::Constant(1, y(0) * y(0) - a); };
  f.jacobian = [](const Eigen::VectorXd& y) { return Eigen::MatrixXd::Constant(1, 1, 2.0 * y(0)); };
  return f;
}

}  // namespace

TEST_CASE("affine systems converge in one step") {
  Eigen::MatrixXd A(3, 3);
  A << 4, 1, 0, 1, 3, 1, 0, 1, 2;
  const Eigen::VectorXd b = Eigen::Vector3d(1, -2, 0.5);
  for (InnerSolver inner : {InnerSolver::DirectLu, InnerSolver::Krylov, InnerSolver::LeastSquares}) {
    NewtonSettings s;
    s.inner = inner;
    s.krylov.theta = 0.0;
    s.abs_tol = 1e-13;
    const auto r = newton_iterate(affine(A, b), Eigen::VectorXd::Zero(3), s);
    CHECK(r.converged());
    CHECK(r.iterations() == 1);
    CHECK((A * r.y - b).norm() < 1e-13);
  }
}

TEST_CASE("kantorovich quantities of the square root map") {
  // beta = |x0^2 - a| / |2 x0|; DG(y0)^{-1}(DG(y) - DG(z)) = (y - z) / x0, so L = 1/|x0|.
  const double a = 2.0, x0 = 1.5;
  const auto d = kantorovich_diagnostics(square_root(a), Eigen::VectorXd::Constant(1, x0));
  CHECK(d.beta == doctest::Approx(std::abs(x0 * x0 - a) / (2.0 * x0)).epsilon(1e-14));
  CHECK(d.lipschitz == doctest::Approx(1.0 / x0).epsilon(1e-12));
  CHECK(d.beta_l == doctest::Approx(d.beta * d.lipschitz));
  CHECK(d.hypothesis_holds());
  const double r = std::sqrt(2.0 * d.beta_l);
  CHECK(d.theta_max == doctest::Approx((1.0 - r) / (1.0 + r)));

  const auto far = kantorovich_diagnostics(square_root(a), Eigen::VectorXd::Constant(1, 0.2));
  CHECK_FALSE(far.hypothesis_holds());
  CHECK(far.theta_max == 0.0);
}

TEST_CASE("affine maps have zero Lipschitz constant") {
  Eigen::MatrixXd A(2, 2);
  A << 2, 1, 0, 3;
  const auto d = kantorovich_diagnostics(affine(A, Eigen::Vector2d(1, 1)), Eigen::Vector2d(0.3, 0.1));
  CHECK(d.lipschitz == 0.0);
  CHECK(d.theta_max == 1.0);
}

TEST_CASE("square root converges quadratically") {
  NewtonSettings s;
  s.abs_tol = 1e-15;
  const auto r = newton_iterate(square_root(2.0), Eigen::VectorXd::Constant(1, 1.0), s);
  REQUIRE(r.converged());
  CHECK(r.y(0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  // e_{j+1} / e_j^2 -> 1 / (2 sqrt 2).
  const double root = std::sqrt(2.0);
  const double e1 = std::abs(r.iterates[1](0) - root), e2 = std::abs(r.iterates[2](0) - root);
  CHECK(e2 / (e1 * e1) == doctest::Approx(1.0 / (2.0 * root)).epsilon(0.2));
}

TEST_CASE("circuit converges from zero with the direct and Krylov inner solvers") {
  const HbSystem sys(build_circuit_3d(), 6);
  const CoefficientVector x0(sys.layout());
  NewtonSettings direct;
  const auto rd = solve(sys, x0, 1.0, direct);
  REQUIRE(rd.converged());
  NewtonSettings krylov;
  krylov.inner = InnerSolver::Krylov;
  krylov.krylov.theta = 1e-12;
  const auto rk = solve(sys, x0, 1.0, krylov);
  REQUIRE(rk.converged());
  CHECK((rd.x.values() - rk.x.values()).norm() < 1e-12);
  for (const auto& st : rk.history) CHECK(st.inner_relative_residual <= 1e-12);

  // Restarting at the solution is immediately converged.
  const auto again = solve(sys, rd.x, 1.0, direct);
  CHECK(again.converged());
  CHECK(again.iterations() <= 1);
}

TEST_CASE("diagnostics are attached on request") {
  const HbSystem sys(build_circuit_3d(), 2);
  NewtonSettings s;
  s.diagnostics = true;
  const auto r = solve(sys, CoefficientVector(sys.layout()), 1.0, s);
  REQUIRE(r.diagnostics);
  CHECK(r.diagnostics->samples > 0);
  CHECK(r.diagnostics->beta > 0.0);
}

TEST_CASE("presets") {
  const auto q = NewtonSettings::quadrature_preset();
  CHECK(q.abs_tol == 1e-15);
  CHECK(q.inner == InnerSolver::DirectLu);
  const auto b = NewtonSettings::beam_preset();
  CHECK(b.abs_tol == 1e-10);
  REQUIRE(b.update_tol);
  CHECK(*b.update_tol == 1e-6);
  CHECK(b.inner == InnerSolver::Krylov);
  CHECK(b.krylov.theta == 1e-6);
}

TEST_CASE("invalid settings are rejected") {
  NewtonSettings s;
  s.krylov.theta = 1.0;
  CHECK_THROWS_AS(s.validate(), UsageError);
  s = {};
  s.abs_tol = 0.0;
  CHECK_THROWS_AS(s.validate(), UsageError);
}

TEST_CASE("singular Jacobian raises a SolverError with the partial report") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
  A(0, 0) = 1.0;
  try {
    newton_iterate(affine(A, Eigen::Vector2d(1, 1)), Eigen::Vector2d::Zero(), NewtonSettings{});
    FAIL("expected SolverError");
  } catch (const SolverError& e) {
    CHECK(e.reason() == Termination::SingularJacobian);
    CHECK(e.iteration() == 1);
    CHECK(e.partial().iterates.size() == 1);
  }
}

TEST_CASE("steps into an invalid region are halved") {
  // G(y) = log(y) - 1; a full step from y = 0.1 overshoots to a negative value.
  NonlinearFunction f;
  f.residual = [](const Eigen::VectorXd& y) {
    if (y(0) <= 0.0) throw EvaluationError("log of a non-positive value", 0);
    return Eigen::VectorXd::Constant(1, std::log(y(0)) - 1.0);
  };
  f.jacobian = [](const Eigen::VectorXd& y) { return Eigen::MatrixXd::Constant(1, 1, 1.0 / y(0)); };
  NewtonSettings s;
  s.abs_tol = 1e-14;
  const auto r = newton_iterate(f, Eigen::VectorXd::Constant(1, 10.0), s);
  REQUIRE(r.converged());
  CHECK(r.y(0) == doctest::Approx(std::exp(1.0)));
  int halvings = 0;
  for (const auto& st : r.history) halvings += st.halvings;
  CHECK(halvings > 0);
}

TEST_CASE("evaluation failure at the initial guess is reported") {
  NonlinearFunction f;
  f.residual = [](const Eigen::VectorXd&) -> Eigen::VectorXd { throw EvaluationError("bad", 0); };
  f.jacobian = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Identity(1, 1); };
  try {
    newton_iterate(f, Eigen::VectorXd::Zero(1), NewtonSettings{});
    FAIL("expected SolverError");
  } catch (const SolverError& e) {
    CHECK(e.reason() == Termination::EvaluationFailure);
  }
}
