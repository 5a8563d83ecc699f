#include "hbm/hb_system.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace hbm {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Order-p derivative restricted to harmonic h, acting on (sin, cos) pairs.
Eigen::Matrix2d derivative_block(Index h, int p) {
  Eigen::Matrix2d rot;
  rot << 0.0, -1.0, 1.0, 0.0;
  Eigen::Matrix2d out = Eigen::Matrix2d::Identity();
  for (int i = 0; i < p; ++i) out = out * rot;
  return std::pow(kTwoPi * static_cast<double>(h), p) * out;
}

// J += weight * T * (D^p kron I_n), exploiting the per-harmonic structure of D^p.
void accumulate_times_derivative(Eigen::MatrixXd& J, const Eigen::MatrixXd& T, double weight, int p,
                                 const HarmonicLayout& layout) {
  const Index n = layout.state_dim;
  if (p == 0) {
    J.noalias() += weight * T;
    return;
  }
  // The constant block is annihilated by any derivative.
  for (Index h = 1; h <= layout.harmonics; ++h) {
    const Eigen::Matrix2d d = derivative_block(h, p);
    const Index s = HarmonicLayout::sin_block(h) * n;
    const Index c = HarmonicLayout::cos_block(h) * n;
    const auto Ts = T.middleCols(s, n);
    const auto Tc = T.middleCols(c, n);
    J.middleCols(s, n) += weight * (d(0, 0) * Ts + d(1, 0) * Tc);
    J.middleCols(c, n) += weight * (d(0, 1) * Ts + d(1, 1) * Tc);
  }
}

CoefficientVector coefficients_from_samples(const HbSystem& sys, const Eigen::MatrixXd& samples) {
  CoefficientVector out(sys.layout());
  out.as_matrix() = (sys.analysis_table() * samples).transpose();
  return out;
}

void require_unknown_mode(const HbSystem& sys, const char* what) {
  if (!sys.unknown_period()) throw UsageError(std::string(what) + ": only defined for an unknown period");
}

void require_phase(const HbSystem& sys, const char* what) {
  require_unknown_mode(sys, what);
  if (!sys.phase()) throw UsageError(std::string(what) + ": system has no phase condition");
}

Eigen::MatrixXd fd_jacobian(const HbSystem& sys, const CoefficientVector& x, double tau) {
  const Index m = x.size();
  const CoefficientVector r0 = residual(sys, x, tau);
  Eigen::MatrixXd J(m, m);
  CoefficientVector xp = x;
  constexpr double root_eps = 1.4901161193847656e-08;
  for (Index c = 0; c < m; ++c) {
    const double h = root_eps * std::max(1.0, std::abs(x.values()(c)));
    xp.values()(c) = x.values()(c) + h;
    J.col(c) = (residual(sys, xp, tau).values() - r0.values()) / h;
    xp.values()(c) = x.values()(c);
  }
  return J;
}

}  // namespace

// ---------------------------------------------------------------------------

PhaseCondition::PhaseCondition(CoefficientVector anchor)
    : anchor_(std::move(anchor)),
      d1_(differentiate(anchor_, 1)),
      d2_(differentiate(anchor_, 2)),
      d3_(differentiate(anchor_, 3)) {}

double PhaseCondition::evaluate(const CoefficientVector& x) const {
  if (x.state_dim() != anchor_.state_dim()) throw UsageError("PhaseCondition: state dimension mismatch");
  const Index L = std::max(x.harmonics(), anchor_.harmonics());
  const CoefficientVector diff = resize(x, L) - resize(anchor_, L);
  const CoefficientVector ddiff = differentiate(diff, 1);
  return diff.values().dot(resize(d1_, L).values()) + ddiff.values().dot(resize(d2_, L).values());
}

Eigen::VectorXd PhaseCondition::gradient(const HarmonicLayout& layout) const {
  if (layout.state_dim != anchor_.state_dim()) throw UsageError("PhaseCondition: state dimension mismatch");
  // <D v, a''> = -<v, a'''> because D is skew in coefficient space.
  return resize(d1_ - d3_, layout.harmonics).values();
}

// ---------------------------------------------------------------------------

HbSystem::HbSystem(DaeProblem problem, Index harmonics) : HbSystem(std::move(problem), harmonics, Options{}) {}

HbSystem::HbSystem(DaeProblem problem, Index harmonics, Options options)
    : problem_(std::move(problem)),
      layout_(harmonics, problem_.state_dim()),
      options_(std::move(options)),
      grid_(options_.sample_count > 0 ? options_.sample_count : default_sample_count(harmonics)) {
  if (grid_.size() < 2 * harmonics + 2)
    throw UsageError("HbSystem: " + std::to_string(grid_.size()) + " samples cannot resolve " +
                     std::to_string(harmonics) + " harmonics");
  if (unknown_period() && !options_.phase)
    throw UsageError("HbSystem: an unknown period requires a phase condition");
  if (!unknown_period() && options_.phase)
    throw UsageError("HbSystem: a phase condition is only used when the period is unknown");
  if (options_.phase && options_.phase->anchor().state_dim() != layout_.state_dim)
    throw UsageError("HbSystem: phase anchor has the wrong state dimension");
  synthesis_ = basis_matrix(harmonics, grid_);
  analysis_ = synthesis_.transpose() / static_cast<double>(grid_.size());
}

HbSystem HbSystem::with_phase(PhaseCondition phase) const {
  Options o = options_;
  o.phase = std::move(phase);
  return HbSystem(problem_, layout_.harmonics, std::move(o));
}

HbSystem HbSystem::with_harmonics(Index harmonics) const {
  return HbSystem(problem_, harmonics, options_);
}

HbSystem HbSystem::with_problem(DaeProblem problem) const {
  return HbSystem(std::move(problem), layout_.harmonics, options_);
}

double HbSystem::effective_period(double tau) const {
  return unknown_period() ? tau : problem_.nominal_period();
}

void HbSystem::check(const CoefficientVector& x, double tau) const {
  if (!(x.layout() == layout_))
    throw UsageError("HbSystem: coefficient layout (N=" + std::to_string(x.harmonics()) + ", n=" +
                     std::to_string(x.state_dim()) + ") does not match the system");
  if (!(effective_period(tau) > 0.0)) throw UsageError("HbSystem: period must be positive");
}

TrajectorySamples HbSystem::trajectory(const CoefficientVector& x, double tau) const {
  check(x, tau);
  TrajectorySamples traj;
  traj.grid = grid_;
  traj.period = effective_period(tau);
  traj.derivatives.reserve(problem_.order() + 1);
  for (int j = 0; j <= problem_.order(); ++j)
    traj.derivatives.push_back(synthesis_ * differentiate(x, j).as_matrix().transpose());
  return traj;
}

// ---------------------------------------------------------------------------

CoefficientVector residual(const HbSystem& sys, const CoefficientVector& x, double tau) {
  const auto traj = sys.trajectory(x, tau);
  return coefficients_from_samples(sys, eval_F(sys.problem(), traj));
}

Eigen::MatrixXd multiplication_operator(const Eigen::MatrixXd& samples, Index n, Index N) {
  const Index S = samples.cols();
  if (samples.rows() != n * n) throw UsageError("multiplication_operator: samples must be n^2 x S");
  const Index top = 2 * N;  // highest product harmonic
  Eigen::MatrixXd cos_tab(S, top + 1), sin_tab(S, top + 1);
  for (Index m = 0; m < S; ++m)
    for (Index h = 0; h <= top; ++h) {
      cos_tab(m, h) = detail::grid_cos<double>(h * m, S);
      sin_tab(m, h) = detail::grid_sin<double>(h * m, S);
    }
  const Eigen::MatrixXd C = samples * cos_tab / static_cast<double>(S);  // n^2 x (2N+1)
  const Eigen::MatrixXd Sn = samples * sin_tab / static_cast<double>(S);
  auto Cm = [&](Index h) { return Eigen::Map<const Eigen::MatrixXd>(C.col(h).data(), n, n); };
  auto Sm = [&](Index h) { return Eigen::Map<const Eigen::MatrixXd>(Sn.col(h).data(), n, n); };

  const Index H = 2 * N + 1;
  const double r2 = std::sqrt(2.0);
  Eigen::MatrixXd T(H * n, H * n);
  for (Index a = 0; a < H; ++a) {
    const Index p = HarmonicLayout::harmonic_of(a);
    const bool a_cos = (a % 2 == 0);
    for (Index b = 0; b < H; ++b) {
      const Index q = HarmonicLayout::harmonic_of(b);
      const bool b_cos = (b % 2 == 0);
      auto blk = T.block(a * n, b * n, n, n);
      if (a == 0 && b == 0) {
        blk = Cm(0);
      } else if (a == 0) {
        blk = r2 * (b_cos ? Cm(q) : Sm(q));
      } else if (b == 0) {
        blk = r2 * (a_cos ? Cm(p) : Sm(p));
      } else {
        const Index diff = p > q ? p - q : q - p;
        if (a_cos && b_cos) {
          blk = Cm(diff) + Cm(p + q);
        } else if (!a_cos && !b_cos) {
          blk = Cm(diff) - Cm(p + q);
        } else if (a_cos) {
          // 2 cos(p) sin(q) = sin(q + p) + sin(q - p)
          blk = Sm(p + q);
          if (q > p) blk += Sm(diff);
          if (q < p) blk -= Sm(diff);
        } else {
          // 2 sin(p) cos(q) = sin(p + q) + sin(p - q)
          blk = Sm(p + q);
          if (p > q) blk += Sm(diff);
          if (p < q) blk -= Sm(diff);
        }
      }
    }
  }
  return T;
}

Eigen::MatrixXd jacobian_x(const HbSystem& sys, const CoefficientVector& x, double tau) {
  sys.check(x, tau);
  if (x.size() > kMaxDenseUnknowns)
    throw UsageError("jacobian_x: " + std::to_string(x.size()) +
                     " unknowns exceed the dense limit; use jacobian_x_apply");
  if (sys.jacobian_mode() == JacobianMode::FiniteDifference) return fd_jacobian(sys, x, tau);

  const auto traj = sys.trajectory(x, tau);
  const auto lin = eval_linearization(sys.problem(), traj);
  const Index m = x.size();
  const double period = traj.period;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t p = 0; p < lin.blocks.size(); ++p) {
    if (lin.blocks[p].isZero(0.0)) continue;
    const Eigen::MatrixXd T = multiplication_operator(lin.blocks[p], x.state_dim(), x.harmonics());
    accumulate_times_derivative(J, T, std::pow(period, -static_cast<double>(p)), static_cast<int>(p), x.layout());
  }
  return J;
}

CoefficientVector jacobian_x_apply(const HbSystem& sys, const CoefficientVector& x, double tau,
                                   const CoefficientVector& v) {
  sys.check(x, tau);
  if (!(v.layout() == x.layout())) throw UsageError("jacobian_x_apply: direction layout mismatch");
  if (sys.jacobian_mode() == JacobianMode::FiniteDifference) {
    const double vn = v.norm();
    if (vn == 0.0) return CoefficientVector(x.layout());
    const double h = 1.4901161193847656e-08 * std::max(1.0, x.norm()) / vn;
    CoefficientVector out = residual(sys, x + h * v, tau) - residual(sys, x, tau);
    out *= 1.0 / h;
    return out;
  }
  const auto traj = sys.trajectory(x, tau);
  const auto lin = eval_linearization(sys.problem(), traj);
  const Index S = sys.grid().size();
  Eigen::MatrixXd samples = Eigen::MatrixXd::Zero(S, x.state_dim());
  for (std::size_t p = 0; p < lin.blocks.size(); ++p) {
    const Eigen::MatrixXd vp = sys.synthesis_table() * differentiate(v, static_cast<int>(p)).as_matrix().transpose();
    const double w = std::pow(traj.period, -static_cast<double>(p));
    for (Index mth = 0; mth < S; ++mth) samples.row(mth) += w * (lin.block(p, mth) * vp.row(mth).transpose()).transpose();
  }
  return coefficients_from_samples(sys, samples);
}

CoefficientVector period_sensitivity_coefficients(const HbSystem& sys, const CoefficientVector& x, double tau) {
  const auto traj = sys.trajectory(x, tau);
  const auto lin = eval_linearization(sys.problem(), traj);
  return coefficients_from_samples(sys, period_sensitivity(traj, lin));
}

CoefficientVector jacobian_tau(const HbSystem& sys, const CoefficientVector& x, double tau) {
  require_unknown_mode(sys, "jacobian_tau");
  return period_sensitivity_coefficients(sys, x, tau);
}

Eigen::VectorXd AugmentedResidual::stacked() const {
  Eigen::VectorXd out(residual.size() + 1);
  out << residual.values(), phase;
  return out;
}

AugmentedResidual residual_augmented(const HbSystem& sys, const CoefficientVector& x, double tau) {
  require_phase(sys, "residual_augmented");
  return AugmentedResidual{residual(sys, x, tau), sys.phase()->evaluate(x)};
}

Eigen::MatrixXd jacobian_augmented(const HbSystem& sys, const CoefficientVector& x, double tau) {
  require_phase(sys, "residual_augmented");
  const Index m = x.size();
  Eigen::MatrixXd J(m + 1, m + 1);
  J.topLeftCorner(m, m) = jacobian_x(sys, x, tau);
  if (sys.jacobian_mode() == JacobianMode::FiniteDifference) {
    const double h = 1.4901161193847656e-08 * std::max(1.0, std::abs(tau));
    J.col(m).head(m) = (residual(sys, x, tau + h).values() - residual(sys, x, tau).values()) / h;
  } else {
    J.col(m).head(m) = jacobian_tau(sys, x, tau).values();
  }
  J.row(m).head(m) = sys.phase()->gradient(x.layout()).transpose();
  J(m, m) = 0.0;
  return J;
}

CoefficientVector residual_quadrature(const HbSystem& sys, const CoefficientVector& x, double tau,
                                      const QuadratureTolerance& tol) {
  sys.check(x, tau);
  const double period = sys.effective_period(tau);
  const DaeProblem& problem = sys.problem();
  const Index n = x.state_dim();
  const Index H = x.layout().blocks();
  std::vector<Eigen::MatrixXd> derivs;
  for (int j = 0; j <= problem.order(); ++j)
    derivs.push_back(differentiate(x, j).as_matrix() * std::pow(period, -static_cast<double>(j)));

  auto integrand = [&](double t) {
    const Eigen::RowVectorXd phi = basis_row(x.harmonics(), t);
    std::vector<Eigen::VectorXd> args;
    args.reserve(derivs.size());
    for (const auto& d : derivs) args.push_back(d * phi.transpose());
    const Eigen::VectorXd g = problem.residual(args, period * t);
    Eigen::VectorXd out(n * H);
    for (Index b = 0; b < H; ++b) out.segment(b * n, n) = g * phi(b);
    return out;
  };
  QuadratureTolerance local = tol;
  local.initial_panels = std::max<int>(tol.initial_panels, static_cast<int>(2 * x.harmonics() + 2));
  return CoefficientVector(x.layout(), integrate(integrand, 0.0, 1.0, local).value);
}

Eigen::MatrixXd harmonic_block_diagonal(const Eigen::MatrixXd& J, const HarmonicLayout& layout) {
  const Index n = layout.state_dim;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(J.rows(), J.cols());
  out.topLeftCorner(n, n) = J.topLeftCorner(n, n);
  for (Index h = 1; h <= layout.harmonics; ++h) {
    const Index s = HarmonicLayout::sin_block(h) * n;
    out.block(s, s, 2 * n, 2 * n) = J.block(s, s, 2 * n, 2 * n);
  }
  return out;
}

}  // namespace hbm
