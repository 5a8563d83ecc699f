#include "doctest.h"

#include <cmath>
#include <numbers>

#include "hbm/continuation.hpp"
#include "hbm/experiment.hpp"
#include "hbm/problems.hpp"

using namespace hbm;

namespace {

constexpr double kDamping = 0.2;

// u'' + c u' + u = cos(s t), period 2 pi / s.
DaeProblem forced_oscillator(double s) {
  DaeProblem::Definition def;
  def.name = "forced_oscillator";
  def.order = 2;
  def.state_dim = 1;
  def.period_mode = KnownPeriod{2.0 * std::numbers::pi / s};
  def.residual = [s](StateStack a, double t) {
    Eigen::VectorXd g(1);
    g(0) = a[2](0) + kDamping * a[1](0) + a[0](0) - std::cos(s * t);
    return g;
  };
  return DaeProblem(std::move(def));
}

// Cosine and sine amplitudes of the exact response.
std::pair<double, double> oscillator_response(double s) {
  Eigen::Matrix2d A;
  A << 1.0 - s * s, kDamping * s, -kDamping * s, 1.0 - s * s;
  const Eigen::Vector2d ab = A.partialPivLu().solve(Eigen::Vector2d(1.0, 0.0));
  return {ab(0), ab(1)};
}

using State = Eigen::Vector4d;  // (u, u')

State mass_spring_rhs(const State& y) {
  const Eigen::Matrix2d K = mass_spring_stiffness();
  Eigen::Vector2d acc = -K * y.head<2>();
  acc(0) -= 0.5 * std::pow(y(0), 3);
  State d;
  d << y.tail<2>(), acc;
  return d;
}

State rk4_flow(State y, double T, int steps) {
  const double h = T / steps;
  for (int i = 0; i < steps; ++i) {
    const State k1 = mass_spring_rhs(y);
    const State k2 = mass_spring_rhs(y + 0.5 * h * k1);
    const State k3 = mass_spring_rhs(y + 0.5 * h * k2);
    const State k4 = mass_spring_rhs(y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

double physical_energy(const State& y) {
  const Eigen::Vector2d u = y.head<2>(), v = y.tail<2>();
  return 0.5 * v.squaredNorm() + 0.5 * u.dot(mass_spring_stiffness() * u) + std::pow(u(0), 4) / 8.0;
}

}  // namespace

TEST_CASE("eigen initial guess") {
  const auto b1 = eigen_initial_guess(1, 1e-3);
  const auto b2 = eigen_initial_guess(2, 1e-3);
  CHECK(b1.tau == doctest::Approx(2.0 * std::numbers::pi).epsilon(1e-14));
  CHECK(b2.tau == doctest::Approx(2.0 * std::numbers::pi / std::sqrt(3.0)).epsilon(1e-14));
  // One cosine coefficient equal to 1e-3 times the unit eigenvector.
  const auto& x = b1.x;
  const Index c1 = HarmonicLayout::cos_block(1);
  CHECK(x.block(c1).norm() == doctest::Approx(1e-3));
  CHECK(std::abs(x.block(c1)(0)) == doctest::Approx(std::abs(x.block(c1)(1))));
  CHECK(x.values().norm() == doctest::Approx(x.block(c1).norm()));
  CHECK_THROWS_AS(eigen_initial_guess(3, 1e-3), UsageError);
}

TEST_CASE("eigen guess residual is cubic in the amplitude") {
  for (int branch : {1, 2}) {
    const auto g1 = eigen_initial_guess(branch, 1e-2, 3);
    const auto g2 = eigen_initial_guess(branch, 2e-2, 3);
    const HbSystem sys(build_mass_spring_2d(g1.tau), 3, HbSystem::Options{0, JacobianMode::AnalyticAft, PhaseCondition(g1.x)});
    const double r1 = residual(sys, g1.x, g1.tau).values().norm();
    const double r2 = residual(sys, g2.x, g2.tau).values().norm();
    CHECK(r2 / r1 == doctest::Approx(8.0).epsilon(1e-6));
  }
}

TEST_CASE("forced linear branch matches the exact response") {
  ForcingBranch::Options opt;
  opt.derivative = forcing_frequency_derivative();
  ForcingBranch branch(forced_oscillator, 3, 0.5, opt);
  const HbSystem start_sys = branch.system_at(0.5);
  const auto start = solve(start_sys, CoefficientVector(start_sys.layout()), start_sys.problem().nominal_period());
  REQUIRE(start.converged());

  ContinuationSettings cs;
  cs.initial_step = 0.05;
  cs.max_step = 0.1;
  cs.stop = StopTarget{"s", 1.5};
  const Branch b = continue_branch(branch, BranchPoint{start.x, start.tau, 0.5, {}}, cs);
  REQUIRE(b.termination == BranchTermination::TargetReached);
  CHECK(*b.points.back().param == doctest::Approx(1.5).epsilon(1e-12));
  double previous = 0.0;
  for (const auto& p : b.points) {
    const double s = *p.param;
    CHECK(s > previous);
    previous = s;
    const auto [a, bs] = oscillator_response(s);
    CHECK(std::sqrt(2.0) * p.x.block(HarmonicLayout::cos_block(1))(0) == doctest::Approx(a).epsilon(1e-10));
    CHECK(std::sqrt(2.0) * p.x.block(HarmonicLayout::sin_block(1))(0) == doctest::Approx(bs).epsilon(1e-10));
    CHECK(p.monitors.at("tau") == doctest::Approx(2.0 * std::numbers::pi / s));
  }

  // Central differences in s give the same branch.
  ForcingBranch fd(forced_oscillator, 3, 0.5, ForcingBranch::Options{});
  const Eigen::VectorXd y = branch.pack(b.points[2]);
  CHECK((fd.jacobian(y) - branch.jacobian(y)).norm() < 1e-6 * branch.jacobian(y).norm());
}

TEST_CASE("tangent spans the null space and follows the orientation") {
  ForcingBranch::Options opt;
  opt.derivative = forcing_frequency_derivative();
  ForcingBranch branch(forced_oscillator, 2, 0.8, opt);
  const HbSystem sys = branch.system_at(0.8);
  const auto r = solve(sys, CoefficientVector(sys.layout()), sys.problem().nominal_period());
  REQUIRE(r.converged());
  const Eigen::VectorXd y = branch.pack(BranchPoint{r.x, r.tau, 0.8, {}});
  const Eigen::VectorXd t = branch_tangent(branch, y, Eigen::VectorXd());
  CHECK((branch.jacobian(y) * t).norm() < 1e-12);
  CHECK((branch.weights().asDiagonal() * t).norm() == doctest::Approx(1.0));
  CHECK(t.dot(branch.orientation(y)) > 0.0);
  const Eigen::VectorXd flipped = branch_tangent(branch, y, -t);
  CHECK((flipped + t).norm() < 1e-12);
  CHECK(smallest_singular_value(bordered_jacobian(branch, y, t)) > 1e-3);
}

TEST_CASE("mass-spring branch 1 is monotone in energy and periodic under RK4") {
  MassSpringRunSettings s;
  s.branch = 1;
  s.newton.abs_tol = 1e-14;
  s.continuation.corrector = s.newton;
  s.continuation.corrector.max_iters = 12;
  s.continuation.max_step = 0.25;
  const MassSpringRun run = run_mass_spring_continuation(s);
  REQUIRE(run.failure.empty());
  REQUIRE(run.branch.points.size() >= 3);
  CHECK(run.branch.points.back().monitors.at("H") == doctest::Approx(10.0).epsilon(1e-10));

  // Physical energy increases along the branch.
  const HbSystem sys2(build_mass_spring_2d(), 2, HbSystem::Options{0, JacobianMode::AnalyticAft, PhaseCondition(run.start.x)});
  const EnergyFunction Hp = mass_spring_energy(EnergyClock::Physical);
  double previous = -1.0;
  for (const auto& p : run.branch.points) {
    const double H = mean_energy(sys2, Hp, p.x, p.tau);
    CHECK(H > previous);
    previous = H;
  }

  // Refine at the end point, then integrate the ODE over one period.
  SweepSettings sw;
  sw.harmonics = {12};
  sw.newton = s.newton;
  const SweepResult r = run_energy_sweep(build_mass_spring_2d(run.branch.points.back().tau),
                                         mass_spring_energy(EnergyClock::Rescaled), 10.0, run.branch.points.back(), sw);
  REQUIRE(r.records.front().converged());
  const auto& rec = r.records.front();
  State y0;
  y0 << evaluate(rec.x, 0.0), evaluate(differentiate(rec.x, 1), 0.0) / rec.tau;
  const State y1 = rk4_flow(y0, rec.tau, 20000);
  CHECK((y1 - y0).norm() < 1e-6 * y0.norm());
  CHECK(physical_energy(y1) == doctest::Approx(physical_energy(y0)).epsilon(1e-10));

  // Physical energy is constant along the refined orbit.
  const HbSystem sys12(build_mass_spring_2d(), 12, HbSystem::Options{0, JacobianMode::AnalyticAft, PhaseCondition(rec.x)});
  const auto traj = sys12.trajectory(rec.x, rec.tau);
  double lo = 1e300, hi = -1e300;
  for (Index m = 0; m < traj.samples(); ++m) {
    State y;
    y << traj.derivatives[0].row(m).transpose(), traj.derivatives[1].row(m).transpose() / rec.tau;
    lo = std::min(lo, physical_energy(y));
    hi = std::max(hi, physical_energy(y));
  }
  CHECK(hi - lo < 1e-6 * hi);
}
