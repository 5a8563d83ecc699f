#pragma once

// k-th order DAEs G(u, u', ..., u^(k), t) = 0 on R^n and their rescaled
// residual F(q, tau)(t) = G(q(t), q'(t)/tau, ..., q^(k)(t)/tau^k, tau t)
// along 1-periodic trajectories.

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hbm/fourier.hpp"

namespace hbm {

/// Arguments (u, u', ..., u^(k)) of G, each an n-vector.
using StateStack = std::span<const Eigen::VectorXd>;
using ResidualFn = std::function<Eigen::VectorXd(StateStack, double t)>;
/// Returns the k+1 partials d_1 G, ..., d_{k+1} G (w.r.t. u, u', ..., u^(k)).
using PartialsFn = std::function<std::vector<Eigen::MatrixXd>(StateStack, double t)>;

struct KnownPeriod {
  double period = 1.0;
};
struct UnknownPeriod {
  double guess = 1.0;
};
using PeriodMode = std::variant<KnownPeriod, UnknownPeriod>;

enum class TimeDependence { Periodic, Autonomous };

class DaeProblem {
 public:
  struct Definition {
    std::string name;
    int order = 1;
    Index state_dim = 1;
    ResidualFn residual;
    PartialsFn partials;  // optional; central differences when empty
    PeriodMode period_mode = KnownPeriod{};
    TimeDependence time_dependence = TimeDependence::Periodic;
    /// Relative step for finite-difference partials, h = scale * max(1, |arg|).
    double fd_step_scale = 1.4901161193847656e-08;  // sqrt(machine epsilon)
  };

  explicit DaeProblem(Definition def);

  const std::string& name() const { return def_.name; }
  int order() const { return def_.order; }
  Index state_dim() const { return def_.state_dim; }
  const PeriodMode& period_mode() const { return def_.period_mode; }
  TimeDependence time_dependence() const { return def_.time_dependence; }
  bool known_period() const { return std::holds_alternative<KnownPeriod>(def_.period_mode); }
  /// Known period, or the initial guess in Unknown mode.
  double nominal_period() const;
  bool has_analytic_partials() const { return static_cast<bool>(def_.partials); }
  double fd_step_scale() const { return def_.fd_step_scale; }

  /// G at one point. Throws EvaluationError (node -1) on non-finite output.
  Eigen::VectorXd residual(StateStack args, double t) const;
  /// Analytic partials when provided, else central differences.
  std::vector<Eigen::MatrixXd> partials(StateStack args, double t) const;
  /// Central-difference partials regardless of analytic availability.
  std::vector<Eigen::MatrixXd> fd_partials(StateStack args, double t) const;
  std::vector<Eigen::MatrixXd> fd_partials(StateStack args, double t, double step_scale) const;

  /// Copy with a different period mode (e.g. another forcing period).
  DaeProblem with_period_mode(PeriodMode mode) const;

 private:
  void check_args(StateStack args) const;

  Definition def_;
};

/// q, q', ..., q^(k) sampled on a grid, plus the period tau.
struct TrajectorySamples {
  TimeGrid grid;
  std::vector<Eigen::MatrixXd> derivatives;  // k+1 entries, each S x n
  double period = 1.0;

  Index samples() const { return grid.size(); }
};

TrajectorySamples make_trajectory(const CoefficientVector& x, const TimeGrid& grid, int order, double period);

/// Sampled linearization: block j (j = 1..k+1 maps to index j-1) holds
/// A_j(t_m) = d_j G(...) at every node; column m is the column-major vec of the
/// n x n matrix at node m.
struct LinearizationSamples {
  TimeGrid grid;
  Index state_dim = 1;
  std::vector<Eigen::MatrixXd> blocks;  // k+1 entries, each n^2 x S
  /// A_{k+2}(t_m) in Unknown mode (S x n); empty otherwise.
  Eigen::MatrixXd period_direction;

  Eigen::Map<const Eigen::MatrixXd> block(std::size_t j, Index m) const {
    return Eigen::Map<const Eigen::MatrixXd>(blocks[j].col(m).data(), state_dim, state_dim);
  }
};

/// F(q, tau) at every node, S x n. Throws EvaluationError carrying the node.
Eigen::MatrixXd eval_F(const DaeProblem& problem, const TrajectorySamples& traj);

/// F(q, tau)(t) at one (rescaled) time from coefficient data.
Eigen::VectorXd eval_F_at(const DaeProblem& problem, const CoefficientVector& x, double tau, double t);

LinearizationSamples eval_linearization(const DaeProblem& problem, const TrajectorySamples& traj);
LinearizationSamples eval_linearization(const DaeProblem& problem, const TrajectorySamples& traj,
                                        bool use_finite_differences);

/// -sum_j (j-1) tau^{-j} A_j q^{(j-1)} at every node (S x n): the tau-derivative
/// of F with the time argument tau t held fixed. For autonomous problems this
/// is A_{k+2}.
Eigen::MatrixXd period_sensitivity(const TrajectorySamples& traj, const LinearizationSamples& lin);

/// H(u, v) = v'v/2 + u'Ku/2 + u_1^4/8 with K = [[2, -1], [-1, 2]].
double energy_2d(const Eigen::Vector2d& u, const Eigen::Vector2d& v);

}  // namespace hbm
