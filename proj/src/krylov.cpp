#include "hbm/krylov.hpp"

#include <cmath>

#include "hbm/errors.hpp"

namespace hbm {

GmresResult gmres(const LinearOperator& A, const Eigen::VectorXd& b, const GmresSettings& settings,
                  const LinearOperator& right_preconditioner) {
  if (!A) throw UsageError("gmres: operator is empty");
  if (!(settings.tolerance >= 0.0 && settings.tolerance < 1.0)) throw UsageError("gmres: tolerance must be in [0, 1)");
  if (settings.restart < 1 || settings.max_iterations < 1) throw UsageError("gmres: restart and iteration limits must be positive");

  const Eigen::Index n = b.size();
  auto precondition = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return right_preconditioner ? right_preconditioner(v) : v;
  };

  GmresResult out;
  out.solution = Eigen::VectorXd::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }

  const int m = static_cast<int>(std::min<Eigen::Index>(settings.restart, n));
  Eigen::MatrixXd V(n, m + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
  Eigen::VectorXd cs(m), sn(m), g(m + 1);

  Eigen::VectorXd r = b;
  double rnorm = bnorm;
  while (out.iterations < settings.max_iterations) {
    V.col(0) = r / rnorm;
    g.setZero();
    g(0) = rnorm;
    H.setZero();
    int k = 0;
    for (; k < m && out.iterations < settings.max_iterations; ++k) {
      ++out.iterations;
      Eigen::VectorXd w = A(precondition(V.col(k)));
      // Modified Gram-Schmidt with one reorthogonalization pass.
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= k; ++i) {
          const double h = V.col(i).dot(w);
          H(i, k) += h;
          w -= h * V.col(i);
        }
      H(k + 1, k) = w.norm();
      if (H(k + 1, k) > 0.0) V.col(k + 1) = w / H(k + 1, k);
      for (int i = 0; i < k; ++i) {
        const double t = cs(i) * H(i, k) + sn(i) * H(i + 1, k);
        H(i + 1, k) = -sn(i) * H(i, k) + cs(i) * H(i + 1, k);
        H(i, k) = t;
      }
      const double denom = std::hypot(H(k, k), H(k + 1, k));
      cs(k) = denom == 0.0 ? 1.0 : H(k, k) / denom;
      sn(k) = denom == 0.0 ? 0.0 : H(k + 1, k) / denom;
      H(k, k) = denom;
      H(k + 1, k) = 0.0;
      g(k + 1) = -sn(k) * g(k);
      g(k) = cs(k) * g(k);
      if (std::abs(g(k + 1)) <= settings.tolerance * bnorm || H(k, k) == 0.0) {
        ++k;
        break;
      }
    }
    const Eigen::VectorXd y =
        H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    out.solution += precondition(V.leftCols(k) * y);
    r = b - A(out.solution);
    rnorm = r.norm();
    out.relative_residual = rnorm / bnorm;
    if (out.relative_residual <= settings.tolerance) {
      out.converged = true;
      return out;
    }
    if (rnorm == 0.0) break;
  }
  return out;
}

}  // namespace hbm
