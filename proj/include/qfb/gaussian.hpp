#pragma once

// Phase-space primitives for Gaussian states of N bosonic modes.
//
// Conventions: quadratures are ordered x = (q1, p1, ..., qN, pN) with
// [q, p] = i (hbar = 1), so the vacuum covariance matrix is I/2. All
// entropies and entanglement measures are reported in bits.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "qfb/core.hpp"

namespace qfb {

/// Real symmetric 2N x 2N matrix of symmetrized quadrature second moments.
class CovarianceMatrix {
 public:
  /// Symmetrizes `data`; throws InputError unless it is square, of even
  /// dimension and finite.
  explicit CovarianceMatrix(Matrix data) : data_(std::move(data)) {
    detail::require_square(data_, "covariance matrix");
    detail::require(data_.rows() > 0 && data_.rows() % 2 == 0,
                    "covariance matrix dimension must be even and positive");
    detail::require(detail::all_finite(data_), "covariance matrix has non-finite entries");
    data_ = detail::symmetrized(data_);
  }

  static CovarianceMatrix vacuum(int n_modes) {
    detail::require(n_modes >= 1, "n_modes must be >= 1");
    return CovarianceMatrix(0.5 * Matrix::Identity(2 * n_modes, 2 * n_modes));
  }

  [[nodiscard]] int n_modes() const noexcept { return static_cast<int>(data_.rows() / 2); }
  [[nodiscard]] int dim() const noexcept { return static_cast<int>(data_.rows()); }
  [[nodiscard]] const Matrix& matrix() const noexcept { return data_; }
  [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return data_(i, j); }

 private:
  Matrix data_;
};

/// The 2x2 blocks of a two-mode covariance matrix [[gamma1, sigma], [sigma^T, gamma2]].
struct TwoModeBlocks {
  Eigen::Matrix2d gamma1;
  Eigen::Matrix2d gamma2;
  Eigen::Matrix2d sigma;

  [[nodiscard]] CovarianceMatrix assemble() const {
    Matrix v(4, 4);
    v << gamma1, sigma, sigma.transpose(), gamma2;
    return CovarianceMatrix(v);
  }
};

/// Symplectic eigenvalues, one per mode, in descending order.
struct SymplecticSpectrum {
  std::vector<double> values;

  [[nodiscard]] double smallest() const { return values.back(); }
  [[nodiscard]] double largest() const { return values.front(); }
};

/// Block-diagonal direct sum of N copies of [[0, 1], [-1, 0]].
inline Matrix symplectic_form(int n_modes) {
  detail::require(n_modes >= 1, "symplectic_form: n_modes must be >= 1");
  Matrix sigma = Matrix::Zero(2 * n_modes, 2 * n_modes);
  for (int k = 0; k < n_modes; ++k) {
    sigma(2 * k, 2 * k + 1) = 1.0;
    sigma(2 * k + 1, 2 * k) = -1.0;
  }
  return sigma;
}

/// Smallest eigenvalue of the Hermitian matrix V + i Sigma / 2. A state is
/// physical iff this is nonnegative.
inline double uncertainty_margin(const Matrix& v) {
  detail::require_square(v, "uncertainty_margin");
  detail::require(v.rows() % 2 == 0, "uncertainty_margin: dimension must be even");
  const Matrix sigma = symplectic_form(static_cast<int>(v.rows() / 2));
  CMatrix h = v.cast<Complex>() + Complex(0.0, 0.5) * sigma.cast<Complex>();
  h = 0.5 * (h + h.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline bool is_physical(const CovarianceMatrix& v, double tol = 1e-9) {
  return uncertainty_margin(v.matrix()) >= -tol;
}

/// Moduli of the eigenvalues of i Sigma V. Each modulus appears twice (as a
/// +nu / -nu pair); the pairs are checked and collapsed.
inline SymplecticSpectrum symplectic_eigenvalues(const CovarianceMatrix& v) {
  const int n = v.n_modes();
  const Matrix sigma = symplectic_form(n);
  const CMatrix m = Complex(0.0, 1.0) * (sigma * v.matrix()).cast<Complex>();
  Eigen::ComplexEigenSolver<CMatrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw NumericalError("symplectic_eigenvalues: eigensolver failed");

  std::vector<Complex> ev(es.eigenvalues().begin(), es.eigenvalues().end());
  std::sort(ev.begin(), ev.end(), [](Complex a, Complex b) { return a.real() < b.real(); });

  constexpr double kPairTol = 1e-8;
  const double scale = std::max(1.0, std::abs(ev.back().real()));
  SymplecticSpectrum out;
  out.values.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const Complex lo = ev[static_cast<std::size_t>(k)];
    const Complex hi = ev[static_cast<std::size_t>(2 * n - 1 - k)];
    if (std::abs(lo.imag()) > kPairTol * scale || std::abs(hi.imag()) > kPairTol * scale ||
        std::abs(lo.real() + hi.real()) > kPairTol * scale) {
      throw NumericalError("symplectic_eigenvalues: spectrum of i*Sigma*V is not paired (+nu, -nu)");
    }
    out.values.push_back(0.5 * (hi.real() - lo.real()));
  }
  // Pairing the most negative with the most positive yields descending order.
  return out;
}

/// Momentum reflection p -> -p on one mode (0-based index).
inline CovarianceMatrix partial_transpose(const CovarianceMatrix& v, int mode) {
  detail::require(mode >= 0 && mode < v.n_modes(), "partial_transpose: mode index out of range");
  Matrix out = v.matrix();
  const Eigen::Index p = 2 * mode + 1;
  out.row(p) *= -1.0;
  out.col(p) *= -1.0;
  return CovarianceMatrix(std::move(out));
}

/// Two-mode log-negativity, max(0, -log2(2 nu~)) with nu~ the smallest
/// symplectic eigenvalue of the partially transposed state. 2 nu~ within
/// 1e-12 of 1 counts as separable so eigensolver rounding does not show up
/// as entanglement.
inline double log_negativity(const CovarianceMatrix& v) {
  detail::require(v.n_modes() == 2, "log_negativity: two-mode state required");
  const double nu = symplectic_eigenvalues(partial_transpose(v, 1)).smallest();
  if (!(nu > 0.0)) throw NumericalError("log_negativity: non-positive symplectic eigenvalue");
  if (2.0 * nu >= 1.0 - 1e-12) return 0.0;
  return -std::log2(2.0 * nu);
}

/// g(x) = (x + 1/2) log2(x + 1/2) - (x - 1/2) log2(x - 1/2), g(1/2) = 0.
inline double entropy_function(double nu) {
  constexpr double kClamp = 1e-9;
  if (nu < 0.5 - kClamp) throw InputError("entropy_function: symplectic eigenvalue below 1/2 (unphysical)");
  const double plus = std::max(nu, 0.5) + 0.5;
  const double minus = std::max(nu, 0.5) - 0.5;
  const double t_minus = minus > 0.0 ? minus * std::log2(minus) : 0.0;
  return plus * std::log2(plus) - t_minus;
}

inline double von_neumann_entropy(const CovarianceMatrix& v) {
  double s = 0.0;
  for (double nu : symplectic_eigenvalues(v).values) s += entropy_function(nu);
  return s;
}

/// Variance of x1(theta) + x2(pi - theta), x_j(theta) = cos(theta) q_j + sin(theta) p_j.
/// The vacuum gives 1.
inline double epr_variance(const CovarianceMatrix& v, double theta) {
  detail::require(v.n_modes() == 2, "epr_variance: two-mode state required");
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Eigen::Vector4d w(c, s, std::cos(std::numbers::pi - theta), std::sin(std::numbers::pi - theta));
  return w.dot(v.matrix() * w);
}

inline TwoModeBlocks two_mode_blocks(const CovarianceMatrix& v) {
  detail::require(v.n_modes() == 2, "two_mode_blocks: two-mode state required");
  const Matrix& m = v.matrix();
  return TwoModeBlocks{m.block<2, 2>(0, 0), m.block<2, 2>(2, 2), m.block<2, 2>(0, 2)};
}

/// Symplectic eigenvalues of a two-mode state from its local invariants,
/// nu^2 = (Delta +- sqrt(Delta^2 - 4 det V)) / 2 with
/// Delta = det(gamma1) + det(gamma2) + 2 det(sigma). Independent of the
/// i*Sigma*V route; the two must agree.
inline std::array<double, 2> two_mode_symplectic_invariants(const TwoModeBlocks& b) {
  const double delta = b.gamma1.determinant() + b.gamma2.determinant() + 2.0 * b.sigma.determinant();
  const double det_v = b.assemble().matrix().determinant();
  const double disc = std::sqrt(std::max(0.0, delta * delta - 4.0 * det_v));
  return {std::sqrt(std::max(0.0, 0.5 * (delta + disc))), std::sqrt(std::max(0.0, 0.5 * (delta - disc)))};
}

/// Same invariants after partial transposition: det(sigma) flips sign.
inline double two_mode_partial_transposed_smallest(const TwoModeBlocks& b) {
  const double delta = b.gamma1.determinant() + b.gamma2.determinant() - 2.0 * b.sigma.determinant();
  const double det_v = b.assemble().matrix().determinant();
  const double disc = std::sqrt(std::max(0.0, delta * delta - 4.0 * det_v));
  return std::sqrt(std::max(0.0, 0.5 * (delta - disc)));
}

}  // namespace qfb
