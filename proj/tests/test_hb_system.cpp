#include "doctest.h"

#include <cmath>
#include <random>

#include "hbm/hb_system.hpp"
#include "hbm/problems.hpp"

using namespace hbm;

namespace {

constexpr double kPi = 3.14159265358979323846;

CoefficientVector random_coeffs(Index N, Index n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, scale);
  CoefficientVector x(HarmonicLayout(N, n));
  for (Index i = 0; i < x.size(); ++i) x.values()(i) = d(rng) / (1.0 + static_cast<double>(i / n));
  return x;
}

// Oracle: analysis * blockdiag(sum_p tau^-p A_{p+1}(t_m)) * (synthesis of D^p e_c), column by column.
Eigen::MatrixXd composed_jacobian(const HbSystem& sys, const CoefficientVector& x, double tau) {
  const auto traj = sys.trajectory(x, tau);
  const auto lin = eval_linearization(sys.problem(), traj);
  const Index S = sys.grid().size(), n = x.state_dim(), m = x.size();
  Eigen::MatrixXd J(m, m);
  for (Index c = 0; c < m; ++c) {
    CoefficientVector e(x.layout());
    e.values()(c) = 1.0;
    Eigen::MatrixXd samples = Eigen::MatrixXd::Zero(S, n);
    for (std::size_t p = 0; p < lin.blocks.size(); ++p) {
      const Eigen::MatrixXd ep = synthesize(differentiate(e, static_cast<int>(p)), sys.grid());
      for (Index k = 0; k < S; ++k)
        samples.row(k) += std::pow(traj.period, -static_cast<double>(p)) *
                          (lin.block(p, k) * ep.row(k).transpose()).transpose();
    }
    J.col(c) = analyze(samples, x.layout()).values();
  }
  return J;
}

HbSystem mass_spring_system(Index N, const CoefficientVector& anchor) {
  HbSystem::Options o;
  o.phase = PhaseCondition(anchor);
  return HbSystem(build_mass_spring_2d(), N, o);
}

// G = u' + A u - b cos(2 pi t), b = (1, ..., 1).
DaeProblem linear_problem(const Eigen::MatrixXd& A) {
  DaeProblem::Definition def;
  def.name = "linear";
  def.order = 1;
  def.state_dim = A.rows();
  def.residual = [A](StateStack a, double t) {
    return Eigen::VectorXd(a[1] + A * a[0] - Eigen::VectorXd::Constant(A.rows(), std::cos(2 * kPi * t)));
  };
  def.partials = [A](StateStack, double) {
    return std::vector<Eigen::MatrixXd>{A, Eigen::MatrixXd::Identity(A.rows(), A.rows())};
  };
  return DaeProblem(std::move(def));
}

}  // namespace

TEST_CASE("system validation") {
  CHECK_THROWS_AS(HbSystem(build_mass_spring_2d(), 2), UsageError);
  HbSystem::Options o;
  o.phase = PhaseCondition(CoefficientVector(HarmonicLayout(1, 3)));
  CHECK_THROWS_AS(HbSystem(build_circuit_3d(), 2, o), UsageError);
  o.sample_count = 5;
  o.phase.reset();
  CHECK_THROWS_AS(HbSystem(build_circuit_3d(), 2, o), UsageError);
  const HbSystem sys(build_circuit_3d(), 2);
  CHECK(sys.grid().size() == 32);
  CHECK_THROWS_AS(residual(sys, CoefficientVector(HarmonicLayout(3, 3)), 1.0), UsageError);
  CHECK(sys.with_harmonics(4).grid().size() == 64);
}

TEST_CASE("scalar linear residual at the hand-solved coefficients") {
  const double den = 1.0 + 4.0 * kPi * kPi;
  CoefficientVector x(HarmonicLayout(1, 1));
  x.values() << 0.0, 2 * kPi / den / std::sqrt(2.0), 1.0 / den / std::sqrt(2.0);
  const HbSystem sys(build_linear_scalar(), 1);
  CHECK(residual(sys, x, 1.0).norm() < 1e-12);
}

TEST_CASE("mass-spring residual at rest") {
  const CoefficientVector zero(HarmonicLayout(3, 2));
  const auto sys = mass_spring_system(3, zero);
  for (double tau : {1.0, 6.0}) CHECK(residual(sys, zero, tau).norm() == 0.0);
}

TEST_CASE("coefficient residual is bounded by the L2 norm of F") {
  std::mt19937_64 rng(21);
  const HbSystem sys(build_circuit_3d(), 3);
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = random_coeffs(3, 3, 0.3, rng);
    const double l2 = std::sqrt(integrate_scalar([&](double t) { return eval_F_at(sys.problem(), x, 1.0, t).squaredNorm(); },
                                                 0.0, 1.0, QuadratureTolerance{1e-15, 1e-13, 20000, 8}));
    CHECK(residual(sys, x, 1.0).norm() <= l2 + 1e-9);
  }
}

TEST_CASE("fast Jacobian equals the direct composition") {
  std::mt19937_64 rng(22);
  {
    const HbSystem sys(build_circuit_3d(), 4);
    const auto x = random_coeffs(4, 3, 0.3, rng);
    CHECK((jacobian_x(sys, x, 1.0) - composed_jacobian(sys, x, 1.0)).lpNorm<Eigen::Infinity>() < 1e-11);
  }
  {
    const auto x = random_coeffs(3, 2, 0.5, rng);
    const auto sys = mass_spring_system(3, x);
    const Eigen::MatrixXd J = jacobian_x(sys, x, 5.0);
    CHECK((J - composed_jacobian(sys, x, 5.0)).lpNorm<Eigen::Infinity>() < 1e-11 * J.lpNorm<Eigen::Infinity>());
  }
}

TEST_CASE("constant-coefficient Jacobian is block diagonal by harmonic") {
  Eigen::MatrixXd A = Eigen::Vector2d(2.0, -0.5).asDiagonal();
  const Index N = 3;
  const HbSystem sys(linear_problem(A), N);
  std::mt19937_64 rng(23);
  const Eigen::MatrixXd J = jacobian_x(sys, random_coeffs(N, 2, 1.0, rng), 1.0);
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(J.rows(), J.cols());
  want.topLeftCorner(2, 2) = A;
  for (Index j = 1; j <= N; ++j) {
    const double w = 2 * kPi * j;
    const Index s = 2 * HarmonicLayout::sin_block(j), c = 2 * HarmonicLayout::cos_block(j);
    // residual sin-block = A s - w c, cos-block = A c + w s
    want.block(s, s, 2, 2) = A;
    want.block(c, c, 2, 2) = A;
    want.block(s, c, 2, 2) = -w * Eigen::Matrix2d::Identity();
    want.block(c, s, 2, 2) = w * Eigen::Matrix2d::Identity();
  }
  CHECK((J - want).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((harmonic_block_diagonal(J, HarmonicLayout(N, 2)) - J).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("analytic and finite-difference Jacobians agree on the circuit") {
  std::mt19937_64 rng(24);
  const HbSystem sys(build_circuit_3d(), 4);
  HbSystem::Options o;
  o.jacobian = JacobianMode::FiniteDifference;
  const HbSystem fd(build_circuit_3d(), 4, o);
  const auto x = random_coeffs(4, 3, 0.3, rng);
  CHECK((jacobian_x(sys, x, 1.0) - jacobian_x(fd, x, 1.0)).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("Jacobian-vector products match directional differences and the dense Jacobian") {
  std::mt19937_64 rng(25);
  const HbSystem sys(build_circuit_3d(), 5);
  const auto x = random_coeffs(5, 3, 0.3, rng);
  const Eigen::MatrixXd J = jacobian_x(sys, x, 1.0);
  for (int trial = 0; trial < 4; ++trial) {
    const auto v = random_coeffs(5, 3, 1.0, rng);
    const auto jv = jacobian_x_apply(sys, x, 1.0, v);
    CHECK((jv.values() - J * v.values()).norm() < 1e-12 * jv.norm());
    const double h = 1e-6;
    const Eigen::VectorXd fd =
        (residual(sys, x + h * v, 1.0).values() - residual(sys, x - h * v, 1.0).values()) / (2 * h);
    CHECK((fd - jv.values()).norm() < 1e-5 * jv.norm());
  }
}

TEST_CASE("period column") {
  // u' - A u with A_2 = I: the column is -tau^-2 D x.
  DaeProblem::Definition def;
  def.name = "linear_autonomous";
  def.order = 1;
  def.state_dim = 2;
  def.period_mode = UnknownPeriod{2.0};
  def.time_dependence = TimeDependence::Autonomous;
  Eigen::Matrix2d A;
  A << 0.0, 1.0, -1.0, 0.0;
  def.residual = [A](StateStack a, double) { return Eigen::VectorXd(a[1] - A * a[0]); };
  std::mt19937_64 rng(26);
  const auto x = random_coeffs(3, 2, 1.0, rng);
  HbSystem::Options o;
  o.phase = PhaseCondition(x);
  const HbSystem sys(DaeProblem(def), 3, o);
  const double tau = 2.0;
  const auto col = jacobian_tau(sys, x, tau);
  CHECK((col.values() + differentiate(x, 1).values() / (tau * tau)).norm() < 1e-7 * col.norm());
  CHECK(jacobian_tau(sys, CoefficientVector(x.layout()), tau).norm() == 0.0);
  CHECK_THROWS_AS(jacobian_tau(HbSystem(build_circuit_3d(), 2), CoefficientVector(HarmonicLayout(2, 3)), 1.0),
                  UsageError);

  const auto y = random_coeffs(3, 2, 0.6, rng);
  const auto ms = mass_spring_system(3, y);
  const double h = 1e-5, t2 = 5.0;
  const Eigen::VectorXd fd = (residual(ms, y, t2 + h).values() - residual(ms, y, t2 - h).values()) / (2 * h);
  const auto an = jacobian_tau(ms, y, t2);
  CHECK((an.values() - fd).norm() <= 1e-6 * an.norm());
}

TEST_CASE("phase condition closed form against quadrature") {
  std::mt19937_64 rng(27);
  const auto anchor = random_coeffs(2, 2, 1.0, rng);
  const PhaseCondition pc(anchor);
  CHECK(std::abs(pc.evaluate(anchor)) < 1e-14);
  const auto x = random_coeffs(3, 2, 1.0, rng);  // different N: anchor is zero-padded
  const auto a1 = differentiate(anchor, 1), a2 = differentiate(anchor, 2), x1 = differentiate(x, 1);
  const double quad = integrate_scalar(
      [&](double t) {
        return (evaluate(x, t) - evaluate(anchor, t)).dot(evaluate(a1, t)) +
               (evaluate(x1, t) - evaluate(a1, t)).dot(evaluate(a2, t));
      },
      0.0, 1.0, QuadratureTolerance{1e-15, 1e-15, 20000, 16});
  CHECK(std::abs(pc.evaluate(x) - quad) < 1e-12 * std::max(1.0, std::abs(quad)));
  const auto v = random_coeffs(3, 2, 1.0, rng);
  CHECK(std::abs(pc.evaluate(x + v) - pc.evaluate(x) - pc.gradient(x.layout()).dot(v.values())) <
        1e-10 * std::max(1.0, std::abs(pc.evaluate(x))));
}

TEST_CASE("augmented system") {
  std::mt19937_64 rng(28);
  const auto x = random_coeffs(2, 2, 0.5, rng);
  const auto sys = mass_spring_system(2, x);
  const auto r = residual_augmented(sys, x, 6.0);
  CHECK(std::abs(r.phase) < 1e-14);
  CHECK(r.stacked().size() == x.size() + 1);
  const Eigen::MatrixXd J = jacobian_augmented(sys, x, 6.0);
  CHECK(J.rows() == x.size() + 1);
  CHECK(J(x.size(), x.size()) == 0.0);
  HbSystem::Options o;
  o.phase = PhaseCondition(x);
  o.jacobian = JacobianMode::FiniteDifference;
  const HbSystem fd(build_mass_spring_2d(), 2, o);
  CHECK((J - jacobian_augmented(fd, x, 6.0)).lpNorm<Eigen::Infinity>() < 1e-5 * J.lpNorm<Eigen::Infinity>());
  CHECK_THROWS_AS(residual_augmented(HbSystem(build_circuit_3d(), 2), CoefficientVector(HarmonicLayout(2, 3)), 1.0),
                  UsageError);
}

TEST_CASE("AFT matches quadrature on the circuit") {
  std::mt19937_64 rng(29);
  const HbSystem sys(build_circuit_3d(), 4);
  const auto x = random_coeffs(4, 3, 0.3, rng);
  CHECK((residual(sys, x, 1.0).values() - residual_quadrature(sys, x, 1.0).values()).lpNorm<Eigen::Infinity>() <
        1e-10);
}

TEST_CASE("cubic nonlinearity is exactly de-aliased") {
  std::mt19937_64 rng(30);
  const Index N = 3;
  const auto x = random_coeffs(N, 2, 0.5, rng);
  HbSystem::Options o;
  o.phase = PhaseCondition(x);
  o.sample_count = 2 * 3 * N + 2;
  const HbSystem sys(build_mass_spring_2d(), N, o);
  const auto aft = residual(sys, x, 5.0);
  CHECK((aft.values() - residual_quadrature(sys, x, 5.0).values()).lpNorm<Eigen::Infinity>() < 1e-13 * std::max(1.0, aft.norm()));
}

TEST_CASE("multiplication operator against explicit products") {
  std::mt19937_64 rng(31);
  const Index N = 3, n = 2, S = 32;
  const TimeGrid g(S);
  const auto a = random_coeffs(2, n * n, 1.0, rng);
  const Eigen::MatrixXd samples = synthesize(a, g).transpose();  // n^2 x S
  const Eigen::MatrixXd T = multiplication_operator(samples, n, N);
  const auto v = random_coeffs(N, n, 1.0, rng);
  const Eigen::MatrixXd vs = synthesize(v, g);
  Eigen::MatrixXd prod(S, n);
  for (Index m = 0; m < S; ++m)
    prod.row(m) = (Eigen::Map<const Eigen::MatrixXd>(samples.col(m).data(), n, n) * vs.row(m).transpose()).transpose();
  CHECK((T * v.values() - analyze(prod, v.layout()).values()).norm() < 1e-12);
}
