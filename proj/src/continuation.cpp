#include "hbm/continuation.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "hbm/errors.hpp"
#include "hbm/problems.hpp"

namespace hbm {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Eigen::VectorXd unit(Index dim, Index k) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  e(k) = 1.0;
  return e;
}

double peak_abs(const HbSystem& sys, const CoefficientVector& x, Index component) {
  const Eigen::MatrixXd q = sys.synthesis_table() * x.as_matrix().transpose();
  return component < 0 ? q.cwiseAbs().maxCoeff() : q.col(component).cwiseAbs().maxCoeff();
}

double weighted_norm(const Eigen::VectorXd& v, const Eigen::VectorXd& w) { return v.cwiseProduct(w).norm(); }

}  // namespace

ScalarConstraint BranchSystem::constraint(const std::string& monitor, const Eigen::VectorXd&) const {
  throw UsageError("branch has no constraint form for monitor '" + monitor + "'");
}

// ---------------------------------------------------------------------------

EnergyFunction mass_spring_energy(EnergyClock clock) {
  const Eigen::Matrix2d K = mass_spring_stiffness();
  EnergyFunction H;
  H.value = [](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    return energy_2d(Eigen::Vector2d(u), Eigen::Vector2d(v));
  };
  H.grad_u = [K](const Eigen::VectorXd& u, const Eigen::VectorXd&) {
    Eigen::VectorXd g = K * u;
    g(0) += 0.5 * u(0) * u(0) * u(0);
    return g;
  };
  H.grad_v = [](const Eigen::VectorXd&, const Eigen::VectorXd& v) { return v; };
  H.clock = clock;
  return H;
}

namespace {

struct EnergySamples {
  Eigen::MatrixXd u, v;
};

// Velocity scale: 1/tau on the physical clock, 1 on the rescaled one.
double velocity_scale(const EnergyFunction& H, double tau) { return H.clock == EnergyClock::Physical ? 1.0 / tau : 1.0; }

EnergySamples energy_samples(const HbSystem& sys, const CoefficientVector& x, double scale) {
  return {sys.synthesis_table() * x.as_matrix().transpose(),
          sys.synthesis_table() * differentiate(x, 1).as_matrix().transpose() * scale};
}

}  // namespace

double mean_energy(const HbSystem& sys, const EnergyFunction& H, const CoefficientVector& x, double tau) {
  sys.check(x, tau);
  const auto s = energy_samples(sys, x, velocity_scale(H, tau));
  double sum = 0.0;
  for (Index m = 0; m < s.u.rows(); ++m) sum += H.value(s.u.row(m).transpose(), s.v.row(m).transpose());
  return sum / static_cast<double>(s.u.rows());
}

// ---------------------------------------------------------------------------

PeriodBranch::PeriodBranch(HbSystem sys, std::optional<EnergyFunction> energy)
    : sys_(std::move(sys)), energy_(std::move(energy)) {
  if (!sys_.unknown_period()) throw UsageError("PeriodBranch: the system must have an unknown period");
}

Eigen::VectorXd PeriodBranch::residual(const Eigen::VectorXd& y) const {
  CoefficientVector x;
  double tau;
  unpack(sys_, y, x, tau);
  if (!(tau > 0.0)) throw EvaluationError("non-positive period on the branch", -1);
  return residual_augmented(sys_, x, tau).stacked();
}

Eigen::MatrixXd PeriodBranch::jacobian(const Eigen::VectorXd& y) const {
  CoefficientVector x;
  double tau;
  unpack(sys_, y, x, tau);
  return jacobian_augmented(sys_, x, tau);
}

void PeriodBranch::accept(const Eigen::VectorXd& y) {
  CoefficientVector x;
  double tau;
  unpack(sys_, y, x, tau);
  sys_ = sys_.with_phase(PhaseCondition(x));
}

Eigen::VectorXd PeriodBranch::pack(const BranchPoint& p) const { return hbm::pack(sys_, p.x, p.tau); }

BranchPoint PeriodBranch::make_point(const Eigen::VectorXd& y) const {
  BranchPoint p;
  unpack(sys_, y, p.x, p.tau);
  p.monitors["tau"] = p.tau;
  p.monitors["amplitude"] = peak_abs(sys_, p.x, -1);
  p.monitors["residual"] = residual(y).norm();
  if (energy_) p.monitors["H"] = mean_energy(sys_, *energy_, p.x, p.tau);
  return p;
}

Eigen::VectorXd PeriodBranch::orientation(const Eigen::VectorXd& y) const {
  Eigen::VectorXd d = y;
  d(d.size() - 1) = 0.0;
  return d;
}

ScalarConstraint PeriodBranch::constraint(const std::string& monitor, const Eigen::VectorXd& y) const {
  const Index last = dimension() - 1;
  if (monitor == "tau") return {y(last), unit(dimension(), last)};
  if (monitor != "H" || !energy_) return BranchSystem::constraint(monitor, y);
  CoefficientVector x;
  double tau;
  unpack(sys_, y, x, tau);
  const double vs = velocity_scale(*energy_, tau);
  const auto s = energy_samples(sys_, x, vs);
  const bool physical = energy_->clock == EnergyClock::Physical;
  const Index S = s.u.rows(), n = x.state_dim();
  Eigen::MatrixXd gu(S, n), gv(S, n);
  double sum = 0.0, dtau = 0.0;
  for (Index m = 0; m < S; ++m) {
    const Eigen::VectorXd u = s.u.row(m).transpose(), v = s.v.row(m).transpose();
    sum += energy_->value(u, v);
    gu.row(m) = energy_->grad_u(u, v).transpose();
    gv.row(m) = energy_->grad_v(u, v).transpose();
    if (physical) dtau -= gv.row(m).dot(s.v.row(m)) / tau;
  }
  // v = vs B D x and D is skew, so d/dx <gv, B D x> = -D (B^T gv).
  CoefficientVector cu(x.layout()), cv(x.layout());
  cu.as_matrix() = (sys_.analysis_table() * gu).transpose();
  cv.as_matrix() = (sys_.analysis_table() * gv).transpose();
  ScalarConstraint c;
  c.value = sum / static_cast<double>(S);
  c.gradient.resize(dimension());
  c.gradient.head(last) = cu.values() - vs * differentiate(cv, 1).values();
  c.gradient(last) = dtau / static_cast<double>(S);
  return c;
}

// ---------------------------------------------------------------------------

ParameterDerivative forcing_frequency_derivative() {
  return [](const HbSystem& sys, const CoefficientVector& x, double s) {
    CoefficientVector d = period_sensitivity_coefficients(sys, x, kTwoPi / s);
    d *= -kTwoPi / (s * s);
    return d;
  };
}

ForcingBranch::ForcingBranch(ProblemFactory factory, Index harmonics, double reference_param, Options options)
    : factory_(std::move(factory)), harmonics_(harmonics), options_(std::move(options)) {
  if (!factory_) throw UsageError("ForcingBranch: problem factory is empty");
  if (!(options_.state_scale > 0.0 && options_.param_scale > 0.0))
    throw UsageError("ForcingBranch: scales must be positive");
  if (options_.system.phase) throw UsageError("ForcingBranch: forced problems take no phase condition");
  state_dim_ = factory_(reference_param).state_dim();
}

HbSystem ForcingBranch::system_at(double s) const {
  if (!(s > 0.0)) throw EvaluationError("non-positive forcing parameter on the branch", -1);
  DaeProblem p = factory_(s);
  if (!p.known_period()) throw UsageError("ForcingBranch: the problem family must have a known period");
  if (p.state_dim() != state_dim_) throw UsageError("ForcingBranch: problem family changed its state dimension");
  return HbSystem(std::move(p), harmonics_, options_.system);
}

namespace {

void split(const Eigen::VectorXd& y, const HarmonicLayout& layout, CoefficientVector& x, double& s) {
  if (y.size() != layout.size() + 1) throw UsageError("ForcingBranch: unknown vector has the wrong size");
  x = CoefficientVector(layout, y.head(layout.size()));
  s = y(layout.size());
}

}  // namespace

Eigen::VectorXd ForcingBranch::residual(const Eigen::VectorXd& y) const {
  const HbSystem sys = system_at(y(y.size() - 1));
  CoefficientVector x;
  double s;
  split(y, sys.layout(), x, s);
  return hbm::residual(sys, x, sys.problem().nominal_period()).values();
}

Eigen::MatrixXd ForcingBranch::jacobian(const Eigen::VectorXd& y) const {
  const double s = y(y.size() - 1);
  const HbSystem sys = system_at(s);
  CoefficientVector x;
  double s_unused;
  split(y, sys.layout(), x, s_unused);
  const Index m = x.size();
  Eigen::MatrixXd J(m, m + 1);
  J.leftCols(m) = jacobian_x(sys, x, sys.problem().nominal_period());
  if (options_.derivative) {
    J.col(m) = options_.derivative(sys, x, s).values();
  } else {
    const double h = 1e-6 * std::max(1.0, std::abs(s));
    const HbSystem up = system_at(s + h), down = system_at(s - h);
    J.col(m) = (hbm::residual(up, x, up.problem().nominal_period()).values() -
                hbm::residual(down, x, down.problem().nominal_period()).values()) /
               (2.0 * h);
  }
  return J;
}

Eigen::VectorXd ForcingBranch::pack(const BranchPoint& p) const {
  if (!p.param) throw UsageError("ForcingBranch: branch point has no parameter value");
  if (p.x.harmonics() != harmonics_) throw UsageError("ForcingBranch: branch point has the wrong harmonic count");
  Eigen::VectorXd y(p.x.size() + 1);
  y << p.x.values(), *p.param;
  return y;
}

BranchPoint ForcingBranch::make_point(const Eigen::VectorXd& y) const {
  const double s = y(y.size() - 1);
  const HbSystem sys = system_at(s);
  BranchPoint p;
  double s_unused;
  split(y, sys.layout(), p.x, s_unused);
  p.param = s;
  p.tau = sys.problem().nominal_period();
  p.monitors["s"] = s;
  p.monitors["tau"] = p.tau;
  p.monitors["amplitude"] = peak_abs(sys, p.x, -1);
  if (options_.peak_component >= 0) p.monitors["peak"] = peak_abs(sys, p.x, options_.peak_component);
  p.monitors["residual"] = residual(y).norm();
  return p;
}

Eigen::VectorXd ForcingBranch::weights() const {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(dimension(), 1.0 / options_.state_scale);
  w(w.size() - 1) = 1.0 / options_.param_scale;
  return w;
}

Eigen::VectorXd ForcingBranch::orientation(const Eigen::VectorXd&) const { return unit(dimension(), dimension() - 1); }

ScalarConstraint ForcingBranch::constraint(const std::string& monitor, const Eigen::VectorXd& y) const {
  if (monitor == "s") return {y(y.size() - 1), unit(dimension(), dimension() - 1)};
  return BranchSystem::constraint(monitor, y);
}

std::function<LinearOperator(const Eigen::VectorXd&, const Eigen::MatrixXd&)> ForcingBranch::preconditioner() const {
  const HarmonicLayout layout(harmonics_, state_dim_);
  return [layout](const Eigen::VectorXd&, const Eigen::MatrixXd& J) {
    return block_diagonal_preconditioner(J, layout);
  };
}

// ---------------------------------------------------------------------------

NewtonSettings ContinuationSettings::default_corrector() {
  NewtonSettings s;
  s.abs_tol = 1e-12;
  s.rel_tol = 1e-15;
  s.max_iters = 12;
  return s;
}

void ContinuationSettings::validate() const {
  if (!(0.0 < min_step && min_step <= initial_step && initial_step <= max_step))
    throw UsageError("ContinuationSettings: need 0 < min_step <= initial_step <= max_step");
  if (max_steps < 1 || fast_iterations < 0) throw UsageError("ContinuationSettings: invalid step limits");
  if (!(growth >= 1.0) || !(shrink > 0.0 && shrink < 1.0)) throw UsageError("ContinuationSettings: invalid adaptation factors");
  corrector.validate();
}

std::pair<Eigen::VectorXd, NewtonReport> solve_pinned(const BranchSystem& branch, const Eigen::VectorXd& y0,
                                                      const std::string& monitor, double value,
                                                      const NewtonSettings& settings) {
  NonlinearFunction f;
  f.residual = [&](const Eigen::VectorXd& y) {
    const Eigen::VectorXd r = branch.residual(y);
    Eigen::VectorXd out(r.size() + 1);
    out << r, branch.constraint(monitor, y).value - value;
    return out;
  };
  f.jacobian = [&](const Eigen::VectorXd& y) {
    const Eigen::MatrixXd J = branch.jacobian(y);
    Eigen::MatrixXd out(J.rows() + 1, J.cols());
    out << J, branch.constraint(monitor, y).gradient.transpose();
    return out;
  };
  f.preconditioner = branch.preconditioner();
  NewtonReport report = newton_iterate(f, y0, settings);
  return {report.y, std::move(report)};
}

Eigen::VectorXd branch_tangent(const BranchSystem& branch, const Eigen::VectorXd& y, const Eigen::VectorXd& previous) {
  const Eigen::VectorXd w = branch.weights();
  const Eigen::VectorXd p = previous.size() ? previous : branch.orientation(y);
  const Eigen::MatrixXd J = branch.jacobian(y);
  Eigen::MatrixXd A(J.rows() + 1, J.cols());
  A << J, p.cwiseProduct(w).cwiseProduct(w).transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(A.rows());
  rhs(J.rows()) = 1.0;
  Eigen::VectorXd t = A.colPivHouseholderQr().solve(rhs);
  const double nt = weighted_norm(t, w);
  if (!(nt > 0.0) || !t.allFinite()) throw UsageError("branch_tangent: tangent direction is undetermined");
  t /= nt;
  if (t.cwiseProduct(w).dot(p.cwiseProduct(w)) < 0.0) t = -t;
  return t;
}

Eigen::MatrixXd bordered_jacobian(const BranchSystem& branch, const Eigen::VectorXd& y, const Eigen::VectorXd& tangent) {
  const Eigen::VectorXd w = branch.weights();
  const Eigen::MatrixXd J = branch.jacobian(y);
  Eigen::MatrixXd A(J.rows() + 1, J.cols());
  A << J, tangent.cwiseProduct(w).cwiseProduct(w).transpose();
  return A;
}

double smallest_singular_value(const Eigen::MatrixXd& A) {
  if (A.size() == 0) throw UsageError("smallest_singular_value: empty matrix");
  if (std::min(A.rows(), A.cols()) <= 600) {
    const auto sv = Eigen::BDCSVD<Eigen::MatrixXd>(A).singularValues();
    return sv(sv.size() - 1);
  }
  // sigma(A) = sigma(R) for A = QR with A tall; inverse iteration on R^T R.
  const Eigen::MatrixXd R = A.rows() >= A.cols()
                                ? Eigen::MatrixXd(A.householderQr().matrixQR().topRows(A.cols()).triangularView<Eigen::Upper>())
                                : Eigen::MatrixXd(A.transpose().householderQr().matrixQR().topRows(A.rows()).triangularView<Eigen::Upper>());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(R.cols()) / std::sqrt(static_cast<double>(R.cols()));
  double lambda = 0.0;
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd z = R.triangularView<Eigen::Upper>().transpose().solve(v);
    z = R.triangularView<Eigen::Upper>().solve(z);
    const double nz = z.norm();
    if (!(nz > 0.0) || !std::isfinite(nz)) return 0.0;
    const double prev = lambda;
    lambda = nz;
    v = z / nz;
    if (it > 3 && std::abs(lambda - prev) <= 1e-10 * lambda) break;
  }
  return 1.0 / std::sqrt(lambda);
}

Branch continue_branch(BranchSystem& branch, const BranchPoint& start, const ContinuationSettings& settings) {
  settings.validate();
  const Eigen::VectorXd w = branch.weights();
  const NewtonSettings& corr = settings.corrector;

  Eigen::VectorXd y = branch.pack(start);
  const double r0 = branch.residual(y).norm();
  if (r0 > std::max(corr.abs_tol, 1e-12))
    throw UsageError(fmt::format("continue_branch: start point residual {:.3e} exceeds the corrector tolerance", r0));

  Branch out;
  branch.accept(y);
  Eigen::VectorXd t = branch_tangent(branch, y, Eigen::VectorXd());

  auto record = [&](const Eigen::VectorXd& yy, const Eigen::VectorXd& tt, int iterations) {
    BranchPoint p = branch.make_point(yy);
    if (settings.monitor_singular_value)
      p.monitors["min_singular_value"] = smallest_singular_value(bordered_jacobian(branch, yy, tt));
    out.points.push_back(std::move(p));
    out.tangents.push_back(tt);
    out.corrector_iterations.push_back(iterations);
  };
  record(y, t, 0);

  auto stop_gap = [&](const Eigen::VectorXd& yy) {
    return branch.constraint(settings.stop->monitor, yy).value - settings.stop->value;
  };

  double ds = settings.initial_step;
  std::optional<Eigen::VectorXd> y_prev;
  for (int step = 0; step < settings.max_steps; ++step) {
    Eigen::VectorXd d = t;
    if (y_prev) {
      d = y - *y_prev;
      d /= weighted_norm(d, w);
    }
    const Eigen::VectorXd wd = d.cwiseProduct(w).cwiseProduct(w);

    bool accepted = false;
    Eigen::VectorXd z, t_new;
    int iterations = 0;
    while (!accepted) {
      const Eigen::VectorXd y_pred = y + ds * d;
      NonlinearFunction f;
      f.residual = [&](const Eigen::VectorXd& v) {
        const Eigen::VectorXd r = branch.residual(v);
        Eigen::VectorXd o(r.size() + 1);
        o << r, wd.dot(v - y_pred);
        return o;
      };
      f.jacobian = [&](const Eigen::VectorXd& v) {
        const Eigen::MatrixXd J = branch.jacobian(v);
        Eigen::MatrixXd o(J.rows() + 1, J.cols());
        o << J, wd.transpose();
        return o;
      };
      f.preconditioner = branch.preconditioner();
      try {
        const NewtonReport rep = newton_iterate(f, y_pred, corr);
        if (rep.converged()) {
          z = rep.y;
          iterations = rep.iterations();
          const Eigen::VectorXd jump = z - y;
          // Reject corrector jumps to another sheet or back along the branch.
          accepted = weighted_norm(jump, w) <= 2.0 * ds && jump.cwiseProduct(w).dot(d.cwiseProduct(w)) > 0.0;
          if (accepted) t_new = branch_tangent(branch, z, t);
        }
      } catch (const SolverError&) {
      } catch (const EvaluationError&) {
      }
      if (!accepted) {
        ++out.rejected_steps;
        ds *= settings.shrink;
        if (ds < settings.min_step)
          throw ContinuationError(fmt::format("continue_branch: step size fell below {:g} after {} points",
                                              settings.min_step, out.points.size()),
                                  out);
      }
    }

    if (settings.stop) {
      const double g0 = stop_gap(y), g1 = stop_gap(z);
      if (g1 == 0.0 || (g0 < 0.0) != (g1 < 0.0)) {
        const Eigen::VectorXd guess = y + (z - y) * (g0 / (g0 - g1));
        auto [ys, rep] = solve_pinned(branch, guess, settings.stop->monitor, settings.stop->value, corr);
        if (!rep.converged())
          throw ContinuationError("continue_branch: could not refine onto the stop target", out);
        branch.accept(ys);
        record(ys, branch_tangent(branch, ys, t), rep.iterations());
        out.termination = BranchTermination::TargetReached;
        return out;
      }
    }

    branch.accept(z);
    record(z, t_new, iterations);
    if (iterations <= settings.fast_iterations) ds = std::min(ds * settings.growth, settings.max_step);
    y_prev = y;
    y = z;
    t = t_new;
  }
  out.termination = BranchTermination::MaxSteps;
  return out;
}

BranchPoint eigen_initial_guess(int branch, double amplitude, Index harmonics) {
  if (branch != 1 && branch != 2) throw UsageError("eigen_initial_guess: branch must be 1 or 2");
  if (!(amplitude > 0.0)) throw UsageError("eigen_initial_guess: amplitude must be positive");
  if (harmonics < 1) throw UsageError("eigen_initial_guess: need at least one harmonic");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(mass_spring_stiffness());
  const Index k = branch - 1;  // eigenvalues ascend
  Eigen::Vector2d v = eig.eigenvectors().col(k);
  if (v(0) < 0.0) v = -v;
  BranchPoint p;
  p.x = CoefficientVector(HarmonicLayout(harmonics, 2));
  p.x.block(HarmonicLayout::cos_block(1)) = amplitude * v;
  p.tau = kTwoPi / std::sqrt(eig.eigenvalues()(k));
  return p;
}

}  // namespace hbm
