#include "hbm/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include <fmt/format.h>

#include "hbm/errors.hpp"

namespace hbm {
namespace {

// Kronrod abscissae on [-1, 1] (positive half); odd indices are the Gauss nodes.
constexpr std::array<double, 8> kNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a = 0.0;
  double b = 0.0;
  Eigen::VectorXd value;
  double error = 0.0;
  bool final = false;  // cannot be improved by subdivision
};

Panel evaluate_panel(const VectorIntegrand& f, double a, double b, int& evaluations) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const Eigen::VectorXd fc = f(center);
  const Index dim = fc.size();

  Eigen::VectorXd kronrod = kKronrodWeights[7] * fc;
  Eigen::VectorXd gauss = kGaussWeights[3] * fc;
  Eigen::VectorXd absolute = kKronrodWeights[7] * fc.cwiseAbs();
  std::array<Eigen::VectorXd, 14> samples;
  for (int i = 0; i < 7; ++i) {
    const double dx = half * kNodes[i];
    samples[2 * i] = f(center - dx);
    samples[2 * i + 1] = f(center + dx);
    if (samples[2 * i].size() != dim || samples[2 * i + 1].size() != dim)
      throw UsageError("integrate: integrand changed its output dimension");
    const Eigen::VectorXd pair = samples[2 * i] + samples[2 * i + 1];
    kronrod += kKronrodWeights[i] * pair;
    absolute += kKronrodWeights[i] * (samples[2 * i].cwiseAbs() + samples[2 * i + 1].cwiseAbs());
    if (i % 2 == 1) gauss += kGaussWeights[i / 2] * pair;
  }
  evaluations += 15;

  // Spread about the mean, used by the QUADPACK error scaling.
  const Eigen::VectorXd mean = 0.5 * kronrod;
  Eigen::VectorXd spread = kKronrodWeights[7] * (fc - mean).cwiseAbs();
  for (int i = 0; i < 7; ++i)
    spread += kKronrodWeights[i] * ((samples[2 * i] - mean).cwiseAbs() + (samples[2 * i + 1] - mean).cwiseAbs());

  Panel p;
  p.a = a;
  p.b = b;
  p.value = half * kronrod;
  double err = 0.0;
  double abs_max = 0.0;
  for (Index c = 0; c < dim; ++c) {
    double e = std::abs(half * (kronrod(c) - gauss(c)));
    const double asc = std::abs(half) * spread(c);
    if (asc != 0.0 && e != 0.0) e = asc * std::min(1.0, std::pow(200.0 * e / asc, 1.5));
    const double resabs = std::abs(half) * absolute(c);
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) e = std::max(50.0 * eps * resabs, e);
    err = std::max(err, e);
    abs_max = std::max(abs_max, resabs);
  }
  p.error = err;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  p.final = err <= 50.0 * eps * abs_max || std::abs(b - a) < 1e-13;
  return p;
}

}  // namespace

QuadratureResult integrate(const VectorIntegrand& f, double a, double b, const QuadratureTolerance& tol) {
  QuadratureResult result;
  const int initial = std::max(1, tol.initial_panels);
  std::vector<Panel> panels;
  auto worse = [&panels](std::size_t l, std::size_t r) { return panels[l].error < panels[r].error; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(worse)> open(worse);

  Eigen::VectorXd running;
  double open_error = 0.0;
  double closed_error = 0.0;
  auto add = [&](Panel p) {
    if (running.size() == 0) running = Eigen::VectorXd::Zero(p.value.size());
    running += p.value;
    if (p.final) {
      result.roundoff_limited = result.roundoff_limited || p.error > 0.0;
      closed_error += p.error;
    } else {
      open_error += p.error;
    }
    panels.push_back(std::move(p));
    if (!panels.back().final) open.push(panels.size() - 1);
  };

  for (int i = 0; i < initial; ++i) {
    const double pa = a + (b - a) * i / initial;
    const double pb = (i + 1 == initial) ? b : a + (b - a) * (i + 1) / initial;
    add(evaluate_panel(f, pa, pb, result.evaluations));
  }

  int subdivisions = 0;
  while (!open.empty()) {
    const double target = std::max(tol.absolute, tol.relative * running.cwiseAbs().maxCoeff());
    if (open_error + closed_error <= target) break;
    if (open_error <= target) {
      // The excess comes from panels already at the rounding level.
      result.roundoff_limited = true;
      break;
    }
    if (subdivisions >= tol.max_subdivisions)
      throw QuadratureError(fmt::format("integrate: subdivision limit reached with error estimate {:.3e} above target {:.3e}",
                                        open_error + closed_error, target));
    const std::size_t worst = open.top();
    open.pop();
    const double pa = panels[worst].a;
    const double pb = panels[worst].b;
    const double mid = 0.5 * (pa + pb);
    running -= panels[worst].value;
    open_error -= panels[worst].error;
    panels[worst].value.setZero();
    panels[worst].error = 0.0;
    add(evaluate_panel(f, pa, mid, result.evaluations));
    add(evaluate_panel(f, mid, pb, result.evaluations));
    ++subdivisions;
  }

  // Exact re-summation of the surviving panels.
  result.value = Eigen::VectorXd::Zero(running.size());
  result.error_estimate = 0.0;
  for (const auto& p : panels) {
    if (p.error == 0.0 && p.value.isZero(0.0) && !p.final) continue;
    result.value += p.value;
    result.error_estimate += p.error;
    ++result.panels;
  }
  return result;
}

double integrate_scalar(const std::function<double(double)>& f, double a, double b, const QuadratureTolerance& tol) {
  const auto r = integrate([&](double t) { return Eigen::VectorXd::Constant(1, f(t)); }, a, b, tol);
  return r.value(0);
}

}  // namespace hbm
