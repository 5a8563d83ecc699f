#include "hbm/checks.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>
#include <random>

#include <fmt/format.h>

#include "hbm/config.hpp"
#include "hbm/experiment.hpp"
#include "hbm/problems.hpp"

namespace hbm {
namespace {

CoefficientVector random_coefficients(Index N, Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CoefficientVector x{HarmonicLayout(N, n)};
  for (Index i = 0; i < x.size(); ++i) x.values()(i) = g(rng);
  return x;
}

CheckOutcome fourier_round_trip(std::mt19937_64& rng) {
  double iso = 0.0, trip = 0.0;
  for (Index N : {0, 1, 4, 8}) {
    const auto x = random_coefficients(N, 3, rng);
    const TimeGrid grid(default_sample_count(N));
    const auto q = synthesize(x, grid);
    iso = std::max(iso, std::abs(discrete_l2_norm(q) - x.norm()) / x.norm());
    trip = std::max(trip, (analyze(q, x.layout()) - x).norm() / x.norm());
  }
  return {"fourier isometry and round trip", iso < 1e-12 && trip < 1e-12,
          fmt::format("isometry {:.2e}, round trip {:.2e}", iso, trip)};
}

CheckOutcome bessel_bound(std::mt19937_64& rng) {
  const HbSystem sys(build_circuit_3d(), 4);
  auto x = random_coefficients(4, 3, rng);
  x *= 0.3;
  const double E = compute_E(sys, x, 1.0);
  const double R = residual(sys, x, 1.0).norm();
  return {"E(N) dominates the coefficient residual", E >= R - 1e-9, fmt::format("E {:.6e}, |R| {:.6e}", E, R)};
}

CheckOutcome jacobian_consistency(std::mt19937_64& rng) {
  auto x = random_coefficients(4, 3, rng);
  x *= 0.3;
  const HbSystem analytic(build_circuit_3d(), 4);
  HbSystem::Options fd;
  fd.jacobian = JacobianMode::FiniteDifference;
  const HbSystem numeric(build_circuit_3d(), 4, fd);
  const Eigen::MatrixXd Ja = jacobian_x(analytic, x, 1.0);
  const Eigen::MatrixXd Jf = jacobian_x(numeric, x, 1.0);
  const double rel = (Ja - Jf).norm() / Ja.norm();
  return {"AFT Jacobian matches finite differences", rel < 1e-5, fmt::format("relative difference {:.2e}", rel)};
}

CheckOutcome beam_matrices() {
  const BeamModel m = build_beam_model();
  const double asym = std::max((m.mass - m.mass.transpose()).cwiseAbs().maxCoeff(),
                               (m.stiffness - m.stiffness.transpose()).cwiseAbs().maxCoeff());
  const bool spd = Eigen::LLT<Eigen::MatrixXd>(m.mass).info() == Eigen::Success &&
                   Eigen::LLT<Eigen::MatrixXd>(m.stiffness).info() == Eigen::Success;
  return {"beam M and K symmetric positive definite", asym == 0.0 && spd,
          fmt::format("asymmetry {:.1e}, cholesky {}", asym, spd ? "ok" : "failed")};
}

CheckOutcome autonomy() {
  const DaeProblem p = build_mass_spring_2d();
  std::vector<Eigen::VectorXd> args = {Eigen::Vector2d(0.3, -0.2), Eigen::Vector2d(0.1, 0.5), Eigen::Vector2d(-1, 2)};
  const double diff = (p.residual(args, 0.0) - p.residual(args, 1.2345)).norm();
  return {"mass-spring residual independent of t", diff == 0.0, fmt::format("difference {:.1e}", diff)};
}

CheckOutcome solution_round_trip(std::mt19937_64& rng) {
  SolutionFile s;
  s.problem = "circuit";
  s.order = 1;
  s.tau = 1.0 / 3.0;
  s.x = random_coefficients(3, 3, rng);
  const SolutionFile r = parse_solution(format_solution(s));
  const bool same = r.x.layout() == s.x.layout() && r.x.values() == s.x.values() && r.tau == s.tau;
  return {"solution file round trip is exact", same, same ? "bitwise equal" : "values differ"};
}

CheckOutcome default_configs() {
  std::string bad;
  for (auto id : {ProblemId::Linear, ProblemId::Circuit, ProblemId::MassSpring, ProblemId::Beam}) {
    try {
      const auto c = default_config(id);
      c.newton.validate();
      c.continuation.validate();
    } catch (const std::exception& e) {
      bad += to_string(id) + ": " + e.what() + "; ";
    }
  }
  return {"default configurations validate", bad.empty(), bad.empty() ? "all problems" : bad};
}

}  // namespace

std::vector<CheckOutcome> run_invariant_checks() {
  std::mt19937_64 rng(7);
  std::vector<CheckOutcome> out;
  const std::vector<std::function<CheckOutcome()>> checks = {
      [&] { return fourier_round_trip(rng); }, [&] { return bessel_bound(rng); },
      [&] { return jacobian_consistency(rng); }, beam_matrices, autonomy,
      [&] { return solution_round_trip(rng); }, default_configs};
  for (const auto& c : checks) {
    try {
      out.push_back(c());
    } catch (const std::exception& e) {
      out.push_back({"check raised", false, e.what()});
    }
  }
  return out;
}

}  // namespace hbm
