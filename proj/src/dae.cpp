#include "hbm/dae.hpp"

#include <cmath>

namespace hbm {
namespace {

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

// Scaled argument stack (q, q'/tau, ..., q^(k)/tau^k) at node m.
std::vector<Eigen::VectorXd> scaled_stack(const TrajectorySamples& traj, Index m) {
  std::vector<Eigen::VectorXd> args(traj.derivatives.size());
  double scale = 1.0;
  for (std::size_t j = 0; j < traj.derivatives.size(); ++j) {
    args[j] = traj.derivatives[j].row(m).transpose() * scale;
    scale /= traj.period;
  }
  return args;
}

void check_trajectory(const DaeProblem& problem, const TrajectorySamples& traj) {
  if (!(traj.period > 0.0)) throw UsageError("trajectory period must be positive");
  if (traj.derivatives.size() != static_cast<std::size_t>(problem.order() + 1))
    throw UsageError("trajectory derivative stack depth " + std::to_string(traj.derivatives.size()) +
                     " does not match DAE order " + std::to_string(problem.order()) + " + 1");
  for (const auto& d : traj.derivatives)
    if (d.rows() != traj.grid.size() || d.cols() != problem.state_dim())
      throw UsageError("trajectory samples have the wrong shape");
}

}  // namespace

DaeProblem::DaeProblem(Definition def) : def_(std::move(def)) {
  if (def_.order < 1) throw UsageError("DaeProblem: order must be at least 1");
  if (def_.state_dim < 1) throw UsageError("DaeProblem: state dimension must be positive");
  if (!def_.residual) throw UsageError("DaeProblem: residual evaluator is required");
  if (!(def_.fd_step_scale > 0.0)) throw UsageError("DaeProblem: finite-difference step must be positive");
  if (std::holds_alternative<UnknownPeriod>(def_.period_mode) &&
      def_.time_dependence != TimeDependence::Autonomous)
    throw UsageError("DaeProblem: an unknown period requires an autonomous DAE");
  if (!(nominal_period() > 0.0)) throw UsageError("DaeProblem: period must be positive");
}

double DaeProblem::nominal_period() const {
  return std::visit(
      [](const auto& m) {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, KnownPeriod>)
          return m.period;
        else
          return m.guess;
      },
      def_.period_mode);
}

void DaeProblem::check_args(StateStack args) const {
  if (args.size() != static_cast<std::size_t>(def_.order + 1))
    throw UsageError("DaeProblem: expected " + std::to_string(def_.order + 1) + " arguments, got " +
                     std::to_string(args.size()));
  for (const auto& a : args)
    if (a.size() != def_.state_dim) throw UsageError("DaeProblem: argument has the wrong dimension");
}

Eigen::VectorXd DaeProblem::residual(StateStack args, double t) const {
  check_args(args);
  Eigen::VectorXd g = def_.residual(args, t);
  if (g.size() != def_.state_dim) throw UsageError("DaeProblem: residual evaluator returned the wrong size");
  if (!all_finite(g)) throw EvaluationError("non-finite DAE residual in " + def_.name, -1);
  return g;
}

std::vector<Eigen::MatrixXd> DaeProblem::partials(StateStack args, double t) const {
  if (!def_.partials) return fd_partials(args, t);
  check_args(args);
  auto p = def_.partials(args, t);
  if (p.size() != static_cast<std::size_t>(def_.order + 1))
    throw UsageError("DaeProblem: partials evaluator returned the wrong count");
  for (const auto& m : p) {
    if (m.rows() != def_.state_dim || m.cols() != def_.state_dim)
      throw UsageError("DaeProblem: partial has the wrong shape");
    if (!all_finite(m)) throw EvaluationError("non-finite DAE partial in " + def_.name, -1);
  }
  return p;
}

std::vector<Eigen::MatrixXd> DaeProblem::fd_partials(StateStack args, double t) const {
  return fd_partials(args, t, def_.fd_step_scale);
}

std::vector<Eigen::MatrixXd> DaeProblem::fd_partials(StateStack args, double t, double step_scale) const {
  check_args(args);
  const Index n = def_.state_dim;
  std::vector<Eigen::VectorXd> work(args.begin(), args.end());
  std::vector<Eigen::MatrixXd> out(args.size(), Eigen::MatrixXd(n, n));
  for (std::size_t j = 0; j < args.size(); ++j) {
    const double h = step_scale * std::max(1.0, args[j].norm());
    for (Index i = 0; i < n; ++i) {
      const double saved = work[j](i);
      work[j](i) = saved + h;
      const Eigen::VectorXd gp = residual(work, t);
      work[j](i) = saved - h;
      const Eigen::VectorXd gm = residual(work, t);
      work[j](i) = saved;
      out[j].col(i) = (gp - gm) / (2.0 * h);
    }
  }
  return out;
}

DaeProblem DaeProblem::with_period_mode(PeriodMode mode) const {
  Definition d = def_;
  d.period_mode = mode;
  return DaeProblem(std::move(d));
}

TrajectorySamples make_trajectory(const CoefficientVector& x, const TimeGrid& grid, int order, double period) {
  TrajectorySamples traj;
  traj.grid = grid;
  traj.period = period;
  const auto B = basis_matrix(x.harmonics(), grid);
  traj.derivatives.reserve(order + 1);
  for (int j = 0; j <= order; ++j) traj.derivatives.push_back(B * differentiate(x, j).as_matrix().transpose());
  return traj;
}

Eigen::MatrixXd eval_F(const DaeProblem& problem, const TrajectorySamples& traj) {
  check_trajectory(problem, traj);
  const Index S = traj.samples();
  Eigen::MatrixXd out(S, problem.state_dim());
  for (Index m = 0; m < S; ++m) {
    const auto args = scaled_stack(traj, m);
    try {
      out.row(m) = problem.residual(args, traj.period * traj.grid.node(m)).transpose();
    } catch (const EvaluationError&) {
      throw EvaluationError("non-finite DAE residual in " + problem.name(), static_cast<long>(m));
    }
  }
  return out;
}

Eigen::VectorXd eval_F_at(const DaeProblem& problem, const CoefficientVector& x, double tau, double t) {
  if (!(tau > 0.0)) throw UsageError("eval_F_at: period must be positive");
  std::vector<Eigen::VectorXd> args;
  args.reserve(problem.order() + 1);
  const auto row = basis_row(x.harmonics(), t);
  double scale = 1.0;
  for (int j = 0; j <= problem.order(); ++j) {
    args.push_back(differentiate(x, j).as_matrix() * row.transpose() * scale);
    scale /= tau;
  }
  return problem.residual(args, tau * t);
}

LinearizationSamples eval_linearization(const DaeProblem& problem, const TrajectorySamples& traj) {
  return eval_linearization(problem, traj, !problem.has_analytic_partials());
}

LinearizationSamples eval_linearization(const DaeProblem& problem, const TrajectorySamples& traj,
                                        bool use_finite_differences) {
  check_trajectory(problem, traj);
  const Index S = traj.samples();
  const Index n = problem.state_dim();
  LinearizationSamples lin;
  lin.grid = traj.grid;
  lin.state_dim = n;
  lin.blocks.assign(problem.order() + 1, Eigen::MatrixXd(n * n, S));
  for (Index m = 0; m < S; ++m) {
    const auto args = scaled_stack(traj, m);
    std::vector<Eigen::MatrixXd> parts;
    try {
      const double t = traj.period * traj.grid.node(m);
      parts = use_finite_differences ? problem.fd_partials(args, t) : problem.partials(args, t);
    } catch (const EvaluationError&) {
      throw EvaluationError("non-finite DAE partial in " + problem.name(), static_cast<long>(m));
    }
    for (std::size_t j = 0; j < parts.size(); ++j)
      lin.blocks[j].col(m) = Eigen::Map<const Eigen::VectorXd>(parts[j].data(), n * n);
  }
  if (!problem.known_period()) lin.period_direction = period_sensitivity(traj, lin);
  return lin;
}

Eigen::MatrixXd period_sensitivity(const TrajectorySamples& traj, const LinearizationSamples& lin) {
  const Index S = traj.samples();
  const Index n = lin.state_dim;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(S, n);
  // Block index jj = j - 1 carries the factor (j - 1) tau^{-j}.
  for (std::size_t jj = 1; jj < lin.blocks.size(); ++jj) {
    const double factor = static_cast<double>(jj) * std::pow(traj.period, -static_cast<double>(jj + 1));
    for (Index m = 0; m < S; ++m)
      out.row(m) -= factor * (lin.block(jj, m) * traj.derivatives[jj].row(m).transpose()).transpose();
  }
  return out;
}

double energy_2d(const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
  Eigen::Matrix2d K;
  K << 2.0, -1.0, -1.0, 2.0;
  return 0.5 * v.squaredNorm() + 0.5 * u.dot(K * u) + std::pow(u(0), 4) / 8.0;
}

}  // namespace hbm
