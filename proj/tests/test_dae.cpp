#include "doctest.h"

#include <cmath>
#include <random>

#include "hbm/dae.hpp"
#include "hbm/problems.hpp"

using namespace hbm;

namespace {

constexpr double kPi = 3.14159265358979323846;

CoefficientVector random_coeffs(Index N, Index n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, scale);
  CoefficientVector x(HarmonicLayout(N, n));
  for (Index i = 0; i < x.size(); ++i) x.values()(i) = d(rng) / (1.0 + i / n);
  return x;
}

// u' + A u - f(t) with constant diagonal A and no analytic partials.
DaeProblem linear_first_order(const Eigen::MatrixXd& A) {
  DaeProblem::Definition def;
  def.name = "linear";
  def.order = 1;
  def.state_dim = A.rows();
  def.residual = [A](StateStack a, double t) {
    return Eigen::VectorXd(a[1] + A * a[0] - Eigen::VectorXd::Constant(A.rows(), std::sin(2 * kPi * t)));
  };
  return DaeProblem(std::move(def));
}

}  // namespace

TEST_CASE("construction checks") {
  DaeProblem::Definition def;
  def.residual = [](StateStack a, double) { return Eigen::VectorXd(a[0]); };
  def.period_mode = UnknownPeriod{1.0};
  CHECK_THROWS_AS(DaeProblem{def}, UsageError);  // unknown period needs autonomy
  def.time_dependence = TimeDependence::Autonomous;
  CHECK_NOTHROW(DaeProblem{def});
  def.order = 0;
  CHECK_THROWS_AS(DaeProblem{def}, UsageError);
  def.order = 1;
  def.residual = nullptr;
  CHECK_THROWS_AS(DaeProblem{def}, UsageError);
}

TEST_CASE("circuit residual vanishes at the origin") {
  const auto p = build_circuit_3d();
  const auto traj = make_trajectory(CoefficientVector(HarmonicLayout(2, 3)), TimeGrid(32), 1, 1.0);
  const auto F = eval_F(p, traj);
  CHECK(F.row(0).norm() == 0.0);
}

TEST_CASE("mass-spring residual vanishes at rest for any period") {
  const auto p = build_mass_spring_2d();
  for (double tau : {0.5, 2.0, 6.0}) {
    const auto traj = make_trajectory(CoefficientVector(HarmonicLayout(2, 2)), TimeGrid(32), 2, tau);
    CHECK(eval_F(p, traj).norm() == 0.0);
  }
}

TEST_CASE("scalar linear test solution has zero residual") {
  const auto p = build_linear_scalar();
  const double den = 1.0 + 4.0 * kPi * kPi;
  CoefficientVector x(HarmonicLayout(1, 1));
  x.values() << 0.0, 2.0 * kPi / den / std::sqrt(2.0), 1.0 / den / std::sqrt(2.0);
  // Independent check of the coefficients through the conventional form.
  const auto traj = make_trajectory(x, TimeGrid(16), 1, 1.0);
  for (Index m = 0; m < 16; ++m) {
    const double t = traj.grid.node(m);
    CHECK(std::abs(traj.derivatives[0](m, 0) - (std::cos(2 * kPi * t) + 2 * kPi * std::sin(2 * kPi * t)) / den) <
          1e-15);
  }
  CHECK(eval_F(p, traj).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("rescaling matches evaluating G on the tau-periodic signal") {
  std::mt19937_64 rng(1);
  const auto p = build_circuit_3d().with_period_mode(KnownPeriod{1.7});
  const auto x = random_coeffs(3, 3, 0.2, rng);
  const double tau = 1.7;
  const auto traj = make_trajectory(x, TimeGrid(16), 1, tau);
  const auto F = eval_F(p, traj);
  for (Index m = 0; m < 16; ++m) {
    const double s = tau * traj.grid.node(m);  // physical time
    // u(s) = Q(x)(s / tau); u'(s) by a centered difference in s.
    const double h = 1e-6;
    const Eigen::VectorXd u = evaluate(x, s / tau);
    const Eigen::VectorXd du = (evaluate(x, (s + h) / tau) - evaluate(x, (s - h) / tau)) / (2 * h);
    std::vector<Eigen::VectorXd> args{u, du};
    CHECK((p.residual(args, s) - F.row(m).transpose()).norm() < 1e-8);
    CHECK((eval_F_at(p, x, tau, traj.grid.node(m)) - F.row(m).transpose()).norm() < 1e-12);
  }
}

TEST_CASE("non-finite output reports the node") {
  DaeProblem::Definition def;
  def.residual = [](StateStack a, double) {
    Eigen::VectorXd g(1);
    g(0) = a[0](0) > 0.5 ? std::log(-1.0) : a[0](0);
    return g;
  };
  const DaeProblem p(def);
  CoefficientVector x(HarmonicLayout(0, 1));
  x.values()(0) = 1.0;
  try {
    eval_F(p, make_trajectory(x, TimeGrid(4), 1, 1.0));
    FAIL("expected EvaluationError");
  } catch (const EvaluationError& e) {
    CHECK(e.node() == 0);
  }
}

TEST_CASE("linear linearization blocks are the coefficient matrices") {
  Eigen::MatrixXd A(2, 2);
  A << 3.0, 0.0, 0.0, -1.0;
  const auto p = linear_first_order(A);
  std::mt19937_64 rng(2);
  const auto lin = eval_linearization(p, make_trajectory(random_coeffs(2, 2, 1.0, rng), TimeGrid(16), 1, 1.0));
  for (Index m = 0; m < 16; ++m) {
    CHECK((lin.block(0, m) - A).norm() < 1e-7);
    CHECK((lin.block(1, m) - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-7);
  }
  CHECK(lin.period_direction.size() == 0);
}

TEST_CASE("mass-spring linearization at rest") {
  const auto p = build_mass_spring_2d();
  const auto lin = eval_linearization(p, make_trajectory(CoefficientVector(HarmonicLayout(1, 2)), TimeGrid(8), 2, 6.0));
  for (Index m = 0; m < 8; ++m) {
    CHECK((lin.block(0, m) - mass_spring_stiffness()).norm() == 0.0);
    CHECK(lin.block(1, m).norm() == 0.0);
    CHECK((lin.block(2, m) - Eigen::MatrixXd::Identity(2, 2)).norm() == 0.0);
  }
  CHECK(lin.period_direction.norm() == 0.0);
}

TEST_CASE("finite-difference partials agree with analytic circuit partials") {
  const auto p = build_circuit_3d();
  std::mt19937_64 rng(4);
  const auto traj = make_trajectory(random_coeffs(3, 3, 0.3, rng), TimeGrid(32), 1, 1.0);
  const auto exact = eval_linearization(p, traj, false);
  const auto fd = eval_linearization(p, traj, true);
  double worst = 0.0;
  for (std::size_t j = 0; j < exact.blocks.size(); ++j)
    worst = std::max(worst, (exact.blocks[j] - fd.blocks[j]).lpNorm<Eigen::Infinity>());
  CHECK(worst < 1e-6);

  // First-order convergence in the step: error shrinks with h until roundoff.
  std::vector<Eigen::VectorXd> args{traj.derivatives[0].row(3).transpose(), traj.derivatives[1].row(3).transpose()};
  const auto ref = p.partials(args, 0.3);
  const double e1 = (p.fd_partials(args, 0.3, 1e-2)[0] - ref[0]).norm();
  const double e2 = (p.fd_partials(args, 0.3, 1e-3)[0] - ref[0]).norm();
  CHECK(e2 < e1);
}

TEST_CASE("autonomous period direction matches central differences in tau") {
  const auto p = build_mass_spring_2d();
  std::mt19937_64 rng(6);
  const auto x = random_coeffs(3, 2, 0.5, rng);
  const TimeGrid g(32);
  const double tau = 5.5, h = 1e-5;
  const auto traj = make_trajectory(x, g, 2, tau);
  const auto lin = eval_linearization(p, traj);
  const Eigen::MatrixXd fd =
      (eval_F(p, make_trajectory(x, g, 2, tau + h)) - eval_F(p, make_trajectory(x, g, 2, tau - h))) / (2 * h);
  CHECK((lin.period_direction - fd).lpNorm<Eigen::Infinity>() < 1e-6 * std::max(1.0, fd.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("energy") {
  CHECK(energy_2d(Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()) == 0.0);
  CHECK(energy_2d(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d::Zero()) == doctest::Approx(1.125));
  CHECK(energy_2d(Eigen::Vector2d::Zero(), Eigen::Vector2d(1.0, 2.0)) == doctest::Approx(2.5));
}
