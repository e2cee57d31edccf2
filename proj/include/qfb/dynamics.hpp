#pragma once

// Linear open-system dynamics: the plant (H = x^T G x / 2 - x^T Sigma B u,
// c = C~ x), its drift/diffusion pair, and the unconditional moment
// equation dV/dt = A V + V A^T + D.

#include <cmath>
#include <string>

#include "qfb/core.hpp"
#include "qfb/gaussian.hpp"

namespace qfb {

struct PlantModel {
  Matrix G;        ///< 2N x 2N real symmetric Hamiltonian form
  CMatrix ctilde;  ///< L x 2N bath coupling
  Matrix B;        ///< 2N x M control input

  [[nodiscard]] int n_modes() const noexcept { return static_cast<int>(G.rows() / 2); }
  [[nodiscard]] int n_channels() const noexcept { return static_cast<int>(ctilde.rows()); }

  void validate() const {
    detail::require_square(G, "G");
    detail::require(G.rows() > 0 && G.rows() % 2 == 0, "G dimension must be even and positive");
    detail::require((G - G.transpose()).cwiseAbs().maxCoeff() <= 1e-12, "G must be symmetric");
    detail::require(ctilde.cols() == G.rows(), "C~ must have 2N columns");
    detail::require(B.rows() == G.rows(), "B must have 2N rows");
  }
};

struct DriftDiffusion {
  Matrix A;
  Matrix D;
};

/// A = Sigma (G + Im[C~^dag C~]).
inline Matrix drift_matrix(const PlantModel& plant) {
  plant.validate();
  const CMatrix cc = plant.ctilde.adjoint() * plant.ctilde;
  return symplectic_form(plant.n_modes()) * (plant.G + cc.imag());
}

/// D = Sigma Re[C~^dag C~] Sigma^T, symmetrized.
inline Matrix diffusion_matrix(const PlantModel& plant) {
  plant.validate();
  const CMatrix cc = plant.ctilde.adjoint() * plant.ctilde;
  const Matrix sigma = symplectic_form(plant.n_modes());
  return detail::symmetrized(sigma * cc.real() * sigma.transpose());
}

inline DriftDiffusion drift_diffusion(const PlantModel& plant) {
  return {drift_matrix(plant), diffusion_matrix(plant)};
}

inline double spectral_abscissa(const Matrix& a) {
  detail::require_square(a, "spectral_abscissa");
  Eigen::EigenSolver<Matrix> es(a, false);
  if (es.info() != Eigen::Success) throw NumericalError("spectral_abscissa: eigensolver failed");
  return es.eigenvalues().real().maxCoeff();
}

inline bool is_hurwitz(const Matrix& a, double tol = 1e-9) { return spectral_abscissa(a) < -tol; }

/// Residual A V + V A^T + D.
inline Matrix lyapunov_residual(const Matrix& a, const Matrix& d, const Matrix& v) {
  return a * v + v * a.transpose() + d;
}

/// Unique V with A V + V A^T + D = 0 for Hurwitz A, by solving the
/// Kronecker-sum system (I (x) A + A (x) I) vec(V) = -vec(D).
inline CovarianceMatrix lyapunov_steady(const Matrix& a, const Matrix& d) {
  detail::require_square(a, "A");
  detail::require(d.rows() == a.rows() && d.cols() == a.cols(), "lyapunov_steady: A and D dimensions differ");
  if (!is_hurwitz(a)) throw StabilityError("lyapunov_steady: A is not Hurwitz, no stable steady state");

  const Eigen::Index n = a.rows();
  Matrix k = Matrix::Zero(n * n, n * n);
  // Column-major vec: vec(A V) = (I (x) A) vec(V), vec(V A^T) = (A (x) I) vec(V).
  for (Eigen::Index j = 0; j < n; ++j) {
    k.block(j * n, j * n, n, n) += a;
    for (Eigen::Index l = 0; l < n; ++l) {
      k.block(j * n, l * n, n, n).diagonal().array() += a(j, l);
    }
  }
  const Eigen::PartialPivLU<Matrix> lu(k);
  const Vector rhs = -Eigen::Map<const Vector>(d.data(), n * n);
  Vector x = lu.solve(rhs);
  x += lu.solve(rhs - k * x);  // one step of iterative refinement

  Matrix v = detail::symmetrized(Eigen::Map<const Matrix>(x.data(), n, n));
  const double res = detail::max_abs(lyapunov_residual(a, d, v));
  const double scale = std::max(detail::max_abs(d), detail::max_abs(a) * detail::max_abs(v));
  if (!(res <= 1e-10 * scale)) {
    throw NumericalError("lyapunov_steady: residual " + std::to_string(res) + " exceeds tolerance");
  }
  return CovarianceMatrix(std::move(v));
}

/// Classical fourth-order Runge-Kutta for dV/dt = A V + V A^T + D.
/// The step is adjusted so that an integer number of steps lands on t_final.
inline CovarianceMatrix integrate_moments(const Matrix& a, const Matrix& d, const CovarianceMatrix& v0,
                                          double dt, double t_final) {
  detail::require(dt > 0.0 && t_final > 0.0 && dt <= t_final, "integrate_moments: need 0 < dt <= t_final");
  detail::require(a.rows() == v0.dim() && d.rows() == v0.dim(), "integrate_moments: dimension mismatch");
  const auto steps = static_cast<long>(std::ceil(t_final / dt - 1e-9));
  const double h = t_final / static_cast<double>(steps);
  auto rhs = [&](const Matrix& v) -> Matrix { return a * v + v * a.transpose() + d; };

  Matrix v = v0.matrix();
  for (long s = 0; s < steps; ++s) {
    const Matrix k1 = rhs(v);
    const Matrix k2 = rhs(v + 0.5 * h * k1);
    const Matrix k3 = rhs(v + 0.5 * h * k2);
    const Matrix k4 = rhs(v + h * k3);
    v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    v = detail::symmetrized(v);
    if (!detail::all_finite(v)) {
      throw NumericalError("integrate_moments: diverged at step " + std::to_string(s));
    }
  }
  return CovarianceMatrix(std::move(v));
}

}  // namespace qfb
