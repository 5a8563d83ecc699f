#include "hbm/problems.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

#include "hbm/errors.hpp"

namespace hbm {

DaeProblem build_circuit_3d() {
  DaeProblem::Definition def;
  def.name = "circuit3d";
  def.order = 1;
  def.state_dim = 3;
  def.period_mode = KnownPeriod{1.0};
  def.time_dependence = TimeDependence::Periodic;
  def.residual = [](StateStack a, double t) {
    const auto& u = a[0];
    const auto& du = a[1];
    const double e13 = std::exp(-u(0) - u(2));
    const double src = std::sin(2.0 * std::numbers::pi * t);
    Eigen::VectorXd g(3);
    g(0) = du(0) + u(0) - (e13 - 1.0);
    g(1) = du(1) + u(1) + u(2) + src;
    g(2) = u(1) + u(2) + src + std::exp(u(2)) - e13;
    return g;
  };
  def.partials = [](StateStack a, double) {
    const auto& u = a[0];
    const double e13 = std::exp(-u(0) - u(2));
    const double e3 = std::exp(u(2));
    Eigen::MatrixXd du(3, 3);
    du << 1.0 + e13, 0.0, e13,
          0.0, 1.0, 1.0,
          e13, 1.0, 1.0 + e3 + e13;
    Eigen::MatrixXd ddu = Eigen::MatrixXd::Zero(3, 3);
    ddu(0, 0) = 1.0;
    ddu(1, 1) = 1.0;
    return std::vector<Eigen::MatrixXd>{du, ddu};
  };
  return DaeProblem(std::move(def));
}

Eigen::Matrix2d mass_spring_stiffness() {
  Eigen::Matrix2d K;
  K << 2.0, -1.0, -1.0, 2.0;
  return K;
}

DaeProblem build_mass_spring_2d(double period_guess) {
  DaeProblem::Definition def;
  def.name = "mass_spring2d";
  def.order = 2;
  def.state_dim = 2;
  def.period_mode = UnknownPeriod{period_guess};
  def.time_dependence = TimeDependence::Autonomous;
  const Eigen::Matrix2d K = mass_spring_stiffness();
  def.residual = [K](StateStack a, double) {
    Eigen::VectorXd g = a[2] + K * a[0];
    g(0) += 0.5 * std::pow(a[0](0), 3);
    return g;
  };
  def.partials = [K](StateStack a, double) {
    Eigen::MatrixXd d0 = K;
    d0(0, 0) += 1.5 * a[0](0) * a[0](0);
    return std::vector<Eigen::MatrixXd>{d0, Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  };
  return DaeProblem(std::move(def));
}

DaeProblem build_linear_scalar() {
  DaeProblem::Definition def;
  def.name = "linear_scalar";
  def.order = 1;
  def.state_dim = 1;
  def.period_mode = KnownPeriod{1.0};
  def.residual = [](StateStack a, double t) {
    Eigen::VectorXd g(1);
    g(0) = a[1](0) + a[0](0) - std::cos(2.0 * std::numbers::pi * t);
    return g;
  };
  def.partials = [](StateStack, double) {
    return std::vector<Eigen::MatrixXd>{Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1)};
  };
  return DaeProblem(std::move(def));
}

Eigen::Matrix<double, 6, 6> beam_element_stiffness(double E, double A, double I, double L) {
  Eigen::Matrix<double, 6, 6> k = Eigen::Matrix<double, 6, 6>::Zero();
  const double ea = E * A / L;
  k(0, 0) = ea;
  k(0, 3) = -ea;
  k(3, 0) = -ea;
  k(3, 3) = ea;
  const double c = E * I / (L * L * L);
  const int w[4] = {1, 2, 4, 5};
  const double kb[4][4] = {{12.0, 6.0 * L, -12.0, 6.0 * L},
                           {6.0 * L, 4.0 * L * L, -6.0 * L, 2.0 * L * L},
                           {-12.0, -6.0 * L, 12.0, -6.0 * L},
                           {6.0 * L, 2.0 * L * L, -6.0 * L, 4.0 * L * L}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) k(w[i], w[j]) = c * kb[i][j];
  return k;
}

Eigen::Matrix<double, 6, 6> beam_element_mass(double rho, double A, double /*I*/, double L) {
  // Consistent mass: linear axial shape functions, cubic Hermite bending.
  Eigen::Matrix<double, 6, 6> m = Eigen::Matrix<double, 6, 6>::Zero();
  const double ma = rho * A * L / 6.0;
  m(0, 0) = 2.0 * ma;
  m(0, 3) = ma;
  m(3, 0) = ma;
  m(3, 3) = 2.0 * ma;
  const double c = rho * A * L / 420.0;
  const int w[4] = {1, 2, 4, 5};
  const double mb[4][4] = {{156.0, 22.0 * L, 54.0, -13.0 * L},
                           {22.0 * L, 4.0 * L * L, 13.0 * L, -3.0 * L * L},
                           {54.0, 13.0 * L, 156.0, -22.0 * L},
                           {-13.0 * L, -3.0 * L * L, -22.0 * L, 4.0 * L * L}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(w[i], w[j]) = c * mb[i][j];
  return m;
}

BeamModel build_beam_model(const BeamConfig& config) {
  if (config.elements < 1) throw UsageError("beam: need at least one element");
  if (!(config.length > 0.0 && config.youngs_modulus > 0.0 && config.density > 0.0 && config.section_side > 0.0))
    throw UsageError("beam: geometry and material parameters must be positive");
  if (config.cubic_stiffness < 0.0 || config.rayleigh_mass < 0.0 || config.rayleigh_stiffness < 0.0)
    throw UsageError("beam: spring and damping coefficients must be non-negative");

  BeamModel model;
  model.config = config;
  const Index nodes = config.elements + 1;
  const Index all = 3 * nodes;
  const double L = model.element_length();
  const double A = model.area();
  const double I = model.second_moment();
  const auto ke = beam_element_stiffness(config.youngs_modulus, A, I, L);
  const auto me = beam_element_mass(config.density, A, I, L);

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(all, all);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(all, all);
  for (int e = 0; e < config.elements; ++e) {
    const Index base = 3 * e;
    K.block(base, base, 6, 6) += ke;
    M.block(base, base, 6, 6) += me;
  }
  // Clamp node 0.
  const Index free = all - 3;
  model.stiffness = K.bottomRightCorner(free, free);
  model.mass = M.bottomRightCorner(free, free);
  model.damping = config.rayleigh_mass * model.mass + config.rayleigh_stiffness * model.stiffness;
  model.tip_dof = free - 2;  // transverse DOF of the last node
  model.forcing_dof = config.forcing_dof < 0 ? model.tip_dof : config.forcing_dof;
  if (model.forcing_dof >= free) throw UsageError("beam: forcing DOF out of range");
  return model;
}

double BeamModel::first_natural_frequency() const {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(stiffness, mass, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw UsageError("beam: generalized eigenproblem failed");
  return std::sqrt(eig.eigenvalues().minCoeff());
}

DaeProblem build_beam(std::shared_ptr<const BeamModel> model, double s) {
  if (!model) throw UsageError("beam: null model");
  if (!(s > 0.0)) throw UsageError("beam: forcing frequency must be positive");
  DaeProblem::Definition def;
  def.name = "beam";
  def.order = 2;
  def.state_dim = model->dofs();
  def.period_mode = KnownPeriod{2.0 * std::numbers::pi / s};
  def.time_dependence = TimeDependence::Periodic;
  def.residual = [model, s](StateStack a, double t) {
    Eigen::VectorXd g = model->mass * a[2] + model->damping * a[1] + model->stiffness * a[0];
    g(model->tip_dof) += model->config.cubic_stiffness * std::pow(a[0](model->tip_dof), 3);
    g(model->forcing_dof) -= model->config.forcing_amplitude * std::cos(s * t);
    return g;
  };
  def.partials = [model](StateStack a, double) {
    Eigen::MatrixXd k = model->stiffness;
    const double u = a[0](model->tip_dof);
    k(model->tip_dof, model->tip_dof) += 3.0 * model->config.cubic_stiffness * u * u;
    return std::vector<Eigen::MatrixXd>{k, model->damping, model->mass};
  };
  return DaeProblem(std::move(def));
}

DaeProblem build_beam(const BeamConfig& config, double s) {
  return build_beam(std::make_shared<const BeamModel>(build_beam_model(config)), s);
}

}  // namespace hbm
