#pragma once

// Real-form Fourier coefficient algebra for n-vector valued, 1-periodic
// trigonometric polynomials.
//
// A signal with N harmonics is stored as 2N+1 blocks of n values each:
//
//   block 0        constant term
//   block 2j-1     sin(2 pi j t) coefficient
//   block 2j       cos(2 pi j t) coefficient
//
// and synthesized as
//
//   q(t) = x_0 + sum_j sqrt(2) x_{2j} cos(2 pi j t) + sqrt(2) x_{2j-1} sin(2 pi j t).
//
// The sqrt(2) lives in the coefficients, so the Euclidean norm of the flat
// coefficient array equals the L2(0,1) norm of the signal.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "hbm/errors.hpp"

namespace hbm {

using Index = Eigen::Index;

struct HarmonicLayout {
  Index harmonics = 0;  // N
  Index state_dim = 1;  // n

  HarmonicLayout() = default;
  HarmonicLayout(Index n_harmonics, Index dim) : harmonics(n_harmonics), state_dim(dim) {
    if (n_harmonics < 0) throw UsageError("HarmonicLayout: negative harmonic count");
    if (dim <= 0) throw UsageError("HarmonicLayout: state dimension must be positive");
  }

  Index blocks() const { return 2 * harmonics + 1; }
  Index size() const { return state_dim * blocks(); }

  static constexpr Index cos_block(Index j) { return 2 * j; }
  static constexpr Index sin_block(Index j) { return 2 * j - 1; }
  /// Harmonic number carried by block b.
  static constexpr Index harmonic_of(Index b) { return (b + 1) / 2; }

  friend bool operator==(const HarmonicLayout&, const HarmonicLayout&) = default;
};

/// Uniform nodes t_m = m / S on [0, 1).
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(Index sample_count) : samples_(sample_count) {
    if (sample_count <= 0) throw UsageError("TimeGrid: sample count must be positive");
  }

  Index size() const { return samples_; }
  double spacing() const { return 1.0 / static_cast<double>(samples_); }
  double node(Index m) const { return static_cast<double>(m) / static_cast<double>(samples_); }

 private:
  Index samples_ = 1;
};

/// Smallest power of two >= 4(2N+1); exactly de-aliases cubic nonlinearities.
inline Index default_sample_count(Index harmonics) {
  const Index want = 4 * (2 * harmonics + 1);
  Index s = 1;
  while (s < want) s *= 2;
  return s;
}

template <typename Scalar>
class CoefficientVectorT {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  CoefficientVectorT() : CoefficientVectorT(HarmonicLayout{}) {}
  explicit CoefficientVectorT(const HarmonicLayout& layout)
      : layout_(layout), values_(Vector::Zero(layout.size())) {}
  CoefficientVectorT(const HarmonicLayout& layout, Vector values)
      : layout_(layout), values_(std::move(values)) {
    if (values_.size() != layout_.size())
      throw UsageError("CoefficientVector: value count " + std::to_string(values_.size()) +
                       " does not match layout size " + std::to_string(layout_.size()));
  }

  const HarmonicLayout& layout() const { return layout_; }
  Index harmonics() const { return layout_.harmonics; }
  Index state_dim() const { return layout_.state_dim; }
  Index size() const { return values_.size(); }

  const Vector& values() const { return values_; }
  Vector& values() { return values_; }

  auto block(Index b) const { return values_.segment(b * layout_.state_dim, layout_.state_dim); }
  auto block(Index b) { return values_.segment(b * layout_.state_dim, layout_.state_dim); }

  /// n x (2N+1) view, column b is block b.
  Eigen::Map<const Matrix> as_matrix() const {
    return Eigen::Map<const Matrix>(values_.data(), layout_.state_dim, layout_.blocks());
  }
  Eigen::Map<Matrix> as_matrix() {
    return Eigen::Map<Matrix>(values_.data(), layout_.state_dim, layout_.blocks());
  }

  Scalar norm() const { return values_.norm(); }

  CoefficientVectorT& operator+=(const CoefficientVectorT& o) {
    require_same_layout(o);
    values_ += o.values_;
    return *this;
  }
  CoefficientVectorT& operator-=(const CoefficientVectorT& o) {
    require_same_layout(o);
    values_ -= o.values_;
    return *this;
  }
  CoefficientVectorT& operator*=(Scalar a) {
    values_ *= a;
    return *this;
  }
  friend CoefficientVectorT operator+(CoefficientVectorT a, const CoefficientVectorT& b) { return a += b; }
  friend CoefficientVectorT operator-(CoefficientVectorT a, const CoefficientVectorT& b) { return a -= b; }
  friend CoefficientVectorT operator*(Scalar s, CoefficientVectorT a) { return a *= s; }

 private:
  void require_same_layout(const CoefficientVectorT& o) const {
    if (!(o.layout_ == layout_)) throw UsageError("CoefficientVector: layout mismatch");
  }

  HarmonicLayout layout_;
  Vector values_;
};

using CoefficientVector = CoefficientVectorT<double>;

namespace detail {

// cos/sin of 2 pi k / S with the argument reduced mod S before scaling.
template <typename Scalar>
Scalar grid_cos(Index k, Index samples) {
  return std::cos(Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(k % samples) / Scalar(samples));
}
template <typename Scalar>
Scalar grid_sin(Index k, Index samples) {
  return std::sin(Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(k % samples) / Scalar(samples));
}

}  // namespace detail

/// S x (2N+1) table of basis functions phi_b(t_m), sqrt(2) included.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> basis_matrix(Index harmonics, const TimeGrid& grid) {
  const Index S = grid.size();
  const Scalar r2 = std::sqrt(Scalar(2));
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> B(S, 2 * harmonics + 1);
  for (Index m = 0; m < S; ++m) {
    B(m, 0) = Scalar(1);
    for (Index j = 1; j <= harmonics; ++j) {
      B(m, HarmonicLayout::sin_block(j)) = r2 * detail::grid_sin<Scalar>(j * m, S);
      B(m, HarmonicLayout::cos_block(j)) = r2 * detail::grid_cos<Scalar>(j * m, S);
    }
  }
  return B;
}

/// Row vector of basis values phi_b(t) at an arbitrary time.
template <typename Scalar = double>
Eigen::Matrix<Scalar, 1, Eigen::Dynamic> basis_row(Index harmonics, Scalar t) {
  const Scalar r2 = std::sqrt(Scalar(2));
  const Scalar w = Scalar(2) * std::numbers::pi_v<Scalar> * t;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> row(2 * harmonics + 1);
  row(0) = Scalar(1);
  for (Index j = 1; j <= harmonics; ++j) {
    row(HarmonicLayout::sin_block(j)) = r2 * std::sin(w * Scalar(j));
    row(HarmonicLayout::cos_block(j)) = r2 * std::cos(w * Scalar(j));
  }
  return row;
}

/// Q_N(x) sampled on the grid; S x n.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> synthesize(const CoefficientVectorT<Scalar>& x,
                                                                 const TimeGrid& grid) {
  if (grid.size() < x.layout().blocks())
    throw UsageError("synthesize: grid with " + std::to_string(grid.size()) +
                     " samples cannot represent " + std::to_string(x.harmonics()) + " harmonics");
  return basis_matrix<Scalar>(x.harmonics(), grid) * x.as_matrix().transpose();
}

/// Q_N(x)(t) at a single time; an n-vector.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> evaluate(const CoefficientVectorT<Scalar>& x, Scalar t) {
  return x.as_matrix() * basis_row<Scalar>(x.harmonics(), t).transpose();
}

/// Trapezoidal-rule projection of S x n samples onto N harmonics.
template <typename Derived>
CoefficientVectorT<typename Derived::Scalar> analyze(const Eigen::MatrixBase<Derived>& signal,
                                                     const HarmonicLayout& layout) {
  using Scalar = typename Derived::Scalar;
  const Index S = signal.rows();
  if (signal.cols() != layout.state_dim)
    throw UsageError("analyze: signal has " + std::to_string(signal.cols()) +
                     " columns, layout expects " + std::to_string(layout.state_dim));
  if (S < 2 * layout.harmonics + 2)
    throw UsageError("analyze: " + std::to_string(S) + " samples are too few for " +
                     std::to_string(layout.harmonics) + " harmonics (need 2N+2)");
  const auto B = basis_matrix<Scalar>(layout.harmonics, TimeGrid(S));
  CoefficientVectorT<Scalar> out(layout);
  out.as_matrix() = (signal.transpose() * B) / Scalar(S);
  return out;
}

/// Exact j-th time derivative in coefficient space.
template <typename Scalar>
CoefficientVectorT<Scalar> differentiate(const CoefficientVectorT<Scalar>& x, int order) {
  if (order < 0) throw UsageError("differentiate: negative order");
  CoefficientVectorT<Scalar> out(x.layout());
  if (order == 0) return x;
  // One derivative maps (c, s) -> (w s, -w c); order p applies the rotation p times.
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  for (Index j = 1; j <= x.harmonics(); ++j) {
    const Scalar w = std::pow(two_pi * Scalar(j), order);
    const auto c = x.block(HarmonicLayout::cos_block(j));
    const auto s = x.block(HarmonicLayout::sin_block(j));
    switch (order % 4) {
      case 0:
        out.block(HarmonicLayout::cos_block(j)) = w * c;
        out.block(HarmonicLayout::sin_block(j)) = w * s;
        break;
      case 1:
        out.block(HarmonicLayout::cos_block(j)) = w * s;
        out.block(HarmonicLayout::sin_block(j)) = -w * c;
        break;
      case 2:
        out.block(HarmonicLayout::cos_block(j)) = -w * c;
        out.block(HarmonicLayout::sin_block(j)) = -w * s;
        break;
      default:
        out.block(HarmonicLayout::cos_block(j)) = -w * s;
        out.block(HarmonicLayout::sin_block(j)) = w * c;
        break;
    }
  }
  return out;
}

/// Zero-pad or truncate to a new harmonic count.
template <typename Scalar>
CoefficientVectorT<Scalar> resize(const CoefficientVectorT<Scalar>& x, Index new_harmonics) {
  CoefficientVectorT<Scalar> out(HarmonicLayout(new_harmonics, x.state_dim()));
  const Index keep = std::min(out.size(), x.size());
  out.values().head(keep) = x.values().head(keep);
  return out;
}

/// Conventional amplitudes q(t) = a_0 + sum a_j cos + b_j sin.
/// Column j of `cos_amp`/`sin_amp` is harmonic j; column 0 of `cos_amp` is a_0
/// and column 0 of `sin_amp` is zero.
template <typename Scalar>
struct AmplitudesT {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cos_amp;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> sin_amp;
};
using Amplitudes = AmplitudesT<double>;

template <typename Scalar>
AmplitudesT<Scalar> to_amplitudes(const CoefficientVectorT<Scalar>& x) {
  const Scalar r2 = std::sqrt(Scalar(2));
  AmplitudesT<Scalar> a;
  a.cos_amp.setZero(x.state_dim(), x.harmonics() + 1);
  a.sin_amp.setZero(x.state_dim(), x.harmonics() + 1);
  a.cos_amp.col(0) = x.block(0);
  for (Index j = 1; j <= x.harmonics(); ++j) {
    a.cos_amp.col(j) = r2 * x.block(HarmonicLayout::cos_block(j));
    a.sin_amp.col(j) = r2 * x.block(HarmonicLayout::sin_block(j));
  }
  return a;
}

template <typename Scalar>
CoefficientVectorT<Scalar> from_amplitudes(const AmplitudesT<Scalar>& a) {
  if (a.cos_amp.rows() != a.sin_amp.rows() || a.cos_amp.cols() != a.sin_amp.cols() || a.cos_amp.cols() < 1)
    throw UsageError("from_amplitudes: inconsistent amplitude tables");
  const Scalar r2 = std::sqrt(Scalar(2));
  CoefficientVectorT<Scalar> x(HarmonicLayout(a.cos_amp.cols() - 1, a.cos_amp.rows()));
  x.block(0) = a.cos_amp.col(0);
  for (Index j = 1; j <= x.harmonics(); ++j) {
    x.block(HarmonicLayout::cos_block(j)) = a.cos_amp.col(j) / r2;
    x.block(HarmonicLayout::sin_block(j)) = a.sin_amp.col(j) / r2;
  }
  return x;
}

/// sqrt(mean over the grid of |row|^2): the trapezoidal L2(0,1) norm of samples.
template <typename Derived>
typename Derived::Scalar discrete_l2_norm(const Eigen::MatrixBase<Derived>& samples) {
  using Scalar = typename Derived::Scalar;
  return std::sqrt(samples.squaredNorm() / Scalar(samples.rows()));
}

}  // namespace hbm
