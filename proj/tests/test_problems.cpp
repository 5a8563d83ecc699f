#include "doctest.h"

#include <Eigen/Cholesky>

#include <cmath>

#include "hbm/problems.hpp"

using namespace hbm;

namespace {

std::vector<Eigen::VectorXd> zeros(Index n, int order) {
  return std::vector<Eigen::VectorXd>(order + 1, Eigen::VectorXd::Zero(n));
}

}  // namespace

TEST_CASE("circuit partials at the origin") {
  const auto p = build_circuit_3d();
  const auto a = zeros(3, 1);
  CHECK(p.residual(a, 0.0).norm() == 0.0);
  const auto d = p.partials(a, 0.0);
  Eigen::Matrix3d want;
  want << 2, 0, 1, 0, 1, 1, 1, 1, 3;
  CHECK((d[0] - want).norm() == 0.0);
  CHECK((d[1] - Eigen::Vector3d(1, 1, 0).asDiagonal().toDenseMatrix()).norm() == 0.0);
}

TEST_CASE("circuit analytic partials at a generic point") {
  const auto p = build_circuit_3d();
  std::vector<Eigen::VectorXd> a{Eigen::Vector3d(0.3, -0.2, 0.1), Eigen::Vector3d(0.5, 1.0, -2.0)};
  const auto d = p.partials(a, 0.17);
  const auto fd = p.fd_partials(a, 0.17);
  CHECK((d[0] - fd[0]).norm() < 1e-7);
  CHECK((d[1] - fd[1]).norm() < 1e-7);
}

TEST_CASE("mass-spring definition") {
  const auto p = build_mass_spring_2d();
  CHECK((mass_spring_stiffness().rowwise().sum() - Eigen::Vector2d(1, 1)).norm() == 0.0);
  std::vector<Eigen::VectorXd> a{Eigen::Vector2d(0.7, -0.4), Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(-1, 2)};
  Eigen::Matrix2d want = mass_spring_stiffness();
  want(0, 0) += 1.5 * 0.49;
  CHECK((p.partials(a, 0.0)[0] - want).norm() < 1e-15);
  CHECK((p.residual(a, 0.0) - p.residual(a, 123.4)).norm() == 0.0);
  CHECK_FALSE(p.known_period());
}

TEST_CASE("beam element matrices") {
  const double E = 2.05e11, A = 0.014 * 0.014, I = std::pow(0.014, 4) / 12, L = 0.70 / 19, rho = 7800;
  const auto k = beam_element_stiffness(E, A, I, L);
  const auto m = beam_element_mass(rho, A, I, L);
  CHECK(k(1, 1) == doctest::Approx(12 * E * I / (L * L * L)).epsilon(1e-14));
  CHECK(m(1, 1) == doctest::Approx(156 * rho * A * L / 420).epsilon(1e-14));
  CHECK(k(0, 0) == doctest::Approx(E * A / L).epsilon(1e-14));
  // Rigid translation carries no strain energy; total mass is rho A L in each direction.
  Eigen::Matrix<double, 6, 1> tw;
  tw << 0, 1, 0, 0, 1, 0;
  CHECK((k * tw).norm() < 1e-6 * k.norm());
  CHECK(tw.dot(m * tw) == doctest::Approx(rho * A * L).epsilon(1e-13));
}

TEST_CASE("assembled beam") {
  const auto model = build_beam_model();
  CHECK(model.dofs() == 57);
  CHECK(model.tip_dof == 55);
  CHECK((model.mass - model.mass.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((model.stiffness - model.stiffness.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(Eigen::LLT<Eigen::MatrixXd>(model.mass).info() == Eigen::Success);
  CHECK(Eigen::LLT<Eigen::MatrixXd>(model.stiffness).info() == Eigen::Success);
  CHECK((model.damping - 1e-4 * model.stiffness).norm() == 0.0);

  const double textbook = 1.8751 * 1.8751 * std::sqrt(2.05e11 * model.second_moment() / (7800 * model.area())) / (0.7 * 0.7);
  const double w1 = model.first_natural_frequency();
  CHECK(std::abs(w1 - textbook) < 0.01 * textbook);

  BeamConfig fine;
  fine.elements = 38;
  const double w1f = build_beam_model(fine).first_natural_frequency();
  CHECK(std::abs(w1f - w1) < 0.005 * w1);
}

TEST_CASE("beam residual") {
  auto model = std::make_shared<const BeamModel>(build_beam_model());
  const double s = 150.0;
  const auto p = build_beam(model, s);
  CHECK(p.known_period());
  CHECK(p.nominal_period() == doctest::Approx(2 * 3.14159265358979323846 / s));
  auto a = zeros(57, 2);
  a[0](55) = 1e-3;
  const Eigen::VectorXd g = p.residual(a, 0.0);
  Eigen::VectorXd want = model->stiffness * a[0];
  want(55) += 6e9 * 1e-9 - model->config.forcing_amplitude;
  CHECK((g - want).norm() < 1e-9 * want.norm());
  const auto d = p.partials(a, 0.0);
  CHECK(d[0](55, 55) == doctest::Approx(model->stiffness(55, 55) + 3 * 6e9 * 1e-6));

  BeamConfig bad;
  bad.rayleigh_stiffness = -1.0;
  CHECK_THROWS_AS(build_beam_model(bad), UsageError);
  bad = {};
  bad.forcing_dof = 57;
  CHECK_THROWS_AS(build_beam_model(bad), UsageError);
  CHECK_THROWS_AS(build_beam(model, 0.0), UsageError);
}
