#pragma once

// Benchmark DAEs: a 3D nonlinear circuit, a 2D conservative mass-spring
// system, and a 57-DOF clamped Euler-Bernoulli beam with a cubic tip spring.

#include <Eigen/Dense>

#include <memory>

#include "hbm/dae.hpp"

namespace hbm {

/// k = 1, n = 3, 1-periodic forcing, known period T = 1.
DaeProblem build_circuit_3d();

/// k = 2, n = 2, autonomous, unknown period: u'' + K u + (u_1^3 / 2, 0) = 0.
DaeProblem build_mass_spring_2d(double period_guess = 2.0 * 3.14159265358979323846);

/// Stiffness matrix shared by the mass-spring problem and its energy.
Eigen::Matrix2d mass_spring_stiffness();

/// u' + u = cos(2 pi t); k = 1, n = 1, known period T = 1.
DaeProblem build_linear_scalar();

struct BeamConfig {
  int elements = 19;
  double length = 0.70;          // m
  double youngs_modulus = 2.05e11;  // Pa
  double density = 7800.0;       // kg / m^3
  double section_side = 0.014;   // m, square section
  double cubic_stiffness = 6e9;  // N / m^3, grounded spring on the tip transverse DOF
  double rayleigh_mass = 0.0;    // C = a M + b K
  double rayleigh_stiffness = 1e-4;
  double forcing_amplitude = 0.05;  // N
  /// Free-DOF index receiving the forcing; -1 selects the tip transverse DOF.
  int forcing_dof = -1;
};

/// Assembled clamped beam. Free DOFs are ordered node-major (node 1..E),
/// each node contributing (axial u, transverse w, rotation theta).
struct BeamModel {
  BeamConfig config;
  Eigen::MatrixXd mass;
  Eigen::MatrixXd damping;
  Eigen::MatrixXd stiffness;
  Index tip_dof = 0;
  Index forcing_dof = 0;

  Index dofs() const { return mass.rows(); }
  double element_length() const { return config.length / config.elements; }
  double area() const { return config.section_side * config.section_side; }
  double second_moment() const { return std::pow(config.section_side, 4) / 12.0; }
  /// Smallest natural frequency (rad/s) of the undamped linear beam.
  double first_natural_frequency() const;
};

/// 6 x 6 element matrices in local order (u1, w1, theta1, u2, w2, theta2).
Eigen::Matrix<double, 6, 6> beam_element_stiffness(double E, double A, double I, double L);
Eigen::Matrix<double, 6, 6> beam_element_mass(double rho, double A, double I, double L);

BeamModel build_beam_model(const BeamConfig& config = {});

/// M u'' + C u' + K u + f_nl(u) - F0 cos(s t) e_f = 0, known period 2 pi / s.
DaeProblem build_beam(std::shared_ptr<const BeamModel> model, double forcing_frequency);
DaeProblem build_beam(const BeamConfig& config, double forcing_frequency);

}  // namespace hbm
