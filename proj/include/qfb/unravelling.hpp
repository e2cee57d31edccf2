#pragma once

// Continuous measurement unravellings of a linear plant: the unravelling
// matrix U built from the complex symmetric Upsilon, the real measurement
// model (C, Gamma), the conditional-covariance Riccati equation and its
// steady state W_U, the pair of LMIs characterizing attainable W_U, and the
// inverse problem of finding an unravelling that produces a given W_U.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qfb/core.hpp"
#include "qfb/dynamics.hpp"
#include "qfb/gaussian.hpp"

namespace qfb {

/// Complex symmetric L x L matrix with dz dz^T = Upsilon dt (unit efficiency).
class Unravelling {
 public:
  explicit Unravelling(CMatrix upsilon) : upsilon_(std::move(upsilon)) {
    detail::require(upsilon_.rows() == upsilon_.cols() && upsilon_.rows() > 0,
                    "Upsilon must be square and non-empty");
    detail::require(upsilon_.allFinite(), "Upsilon has non-finite entries");
    detail::require((upsilon_ - upsilon_.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
                    "Upsilon must be (complex) symmetric");
    upsilon_ = (0.5 * (upsilon_ + upsilon_.transpose())).eval();
  }

  /// Upsilon = I: homodyne detection of the q quadrature of every channel.
  static Unravelling homodyne(int channels) {
    return Unravelling(CMatrix::Identity(channels, channels));
  }

  /// Upsilon = 0: heterodyne detection, both quadratures at efficiency 1/2.
  static Unravelling heterodyne(int channels) { return Unravelling(CMatrix::Zero(channels, channels)); }

  [[nodiscard]] const CMatrix& upsilon() const noexcept { return upsilon_; }
  [[nodiscard]] int n_channels() const noexcept { return static_cast<int>(upsilon_.rows()); }

 private:
  CMatrix upsilon_;
};

/// Symmetric square root through the eigendecomposition. Eigenvalues in
/// [-1e-10, 1e-12 * max(1, largest)] are treated as zero, so rounding noise
/// on a projector does not leak through the square root.
inline Matrix psd_sqrt(const Matrix& m) {
  detail::require_square(m, "psd_sqrt");
  Eigen::SelfAdjointEigenSolver<Matrix> es(detail::symmetrized(m));
  if (es.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigensolver failed");
  if (es.eigenvalues().size() > 0 && es.eigenvalues().minCoeff() < -1e-10) {
    throw InputError("psd_sqrt: matrix is not positive semidefinite (min eigenvalue " +
                     std::to_string(es.eigenvalues().minCoeff()) + ")");
  }
  const double floor = 1e-12 * std::max(1.0, es.eigenvalues().size() > 0 ? es.eigenvalues().maxCoeff() : 0.0);
  const Vector root = es.eigenvalues().unaryExpr([floor](double x) { return x <= floor ? 0.0 : std::sqrt(x); });
  return detail::symmetrized(es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose());
}

/// U = 1/2 [[I + Re Upsilon, Im Upsilon], [Im Upsilon, I - Re Upsilon]].
/// Throws InvalidUnravelling if U is indefinite beyond 1e-9.
inline Matrix u_matrix(const Unravelling& u) {
  const int l = u.n_channels();
  const Matrix id = Matrix::Identity(l, l);
  const Matrix re = u.upsilon().real();
  const Matrix im = u.upsilon().imag();
  Matrix out(2 * l, 2 * l);
  out << id + re, im, im, id - re;
  out *= 0.5;
  Eigen::SelfAdjointEigenSolver<Matrix> es(out, Eigen::EigenvaluesOnly);
  const double lowest = es.eigenvalues().minCoeff();
  if (lowest < -1e-9) {
    throw InvalidUnravelling("unravelling matrix U is indefinite (min eigenvalue " + std::to_string(lowest) + ")");
  }
  return out;
}

/// Real-part rows stacked over imaginary-part rows of C~.
inline Matrix cbar(const CMatrix& ctilde) {
  Matrix out(2 * ctilde.rows(), ctilde.cols());
  out << ctilde.real(), ctilde.imag();
  return out;
}

/// S = [[0, I], [-I, 0]] acting on (Re, Im) current components.
inline Matrix signature_matrix(int channels) {
  const Eigen::Index l = channels;
  Matrix s = Matrix::Zero(2 * l, 2 * l);
  s.topRightCorner(l, l) = Matrix::Identity(l, l);
  s.bottomLeftCorner(l, l) = -Matrix::Identity(l, l);
  return s;
}

/// y dt = C <x> dt + dw with C = 2 U^{1/2} Cbar, and Gamma = -U^{1/2} S Cbar Sigma^T.
struct MeasurementModel {
  Matrix C;
  Matrix Gamma;
  Matrix U_sqrt;
  Matrix Cbar;
};

inline MeasurementModel measurement_model(const PlantModel& plant, const Unravelling& u) {
  plant.validate();
  detail::require(u.n_channels() == plant.n_channels(), "measurement_model: Upsilon size must match the bath channels");
  const Matrix root = psd_sqrt(u_matrix(u));
  const Matrix cb = cbar(plant.ctilde);
  const Matrix sigma = symplectic_form(plant.n_modes());
  return MeasurementModel{2.0 * root * cb, -root * signature_matrix(u.n_channels()) * cb * sigma.transpose(), root,
                          cb};
}

/// dV_c/dt = A V + V A^T + D - (V C^T + Gamma^T)(C V + Gamma).
inline Matrix riccati_rhs(const DriftDiffusion& dd, const MeasurementModel& meas, const Matrix& v) {
  const Matrix gain = v * meas.C.transpose() + meas.Gamma.transpose();
  return dd.A * v + v * dd.A.transpose() + dd.D - gain * gain.transpose();
}

/// Omega = Sigma [G - Cbar^T S (2U - I) Cbar], which equals A - Gamma^T C.
inline Matrix hamiltonian_drift(const PlantModel& plant, const Unravelling& u) {
  const Matrix uu = u_matrix(u);
  const Matrix cb = cbar(plant.ctilde);
  const Matrix inner = 2.0 * uu - Matrix::Identity(uu.rows(), uu.cols());
  return symplectic_form(plant.n_modes()) * (plant.G - cb.transpose() * signature_matrix(u.n_channels()) * inner * cb);
}

/// E = Sigma C^T / 2, the measurement back-action noise.
inline Matrix backaction_noise(const MeasurementModel& meas, int n_modes) {
  return 0.5 * symplectic_form(n_modes) * meas.C.transpose();
}

/// Omega W + W Omega^T - W C^T C W + E E^T.
inline Matrix algebraic_riccati_residual(const PlantModel& plant, const Unravelling& u, const Matrix& w) {
  const MeasurementModel meas = measurement_model(plant, u);
  const Matrix omega = hamiltonian_drift(plant, u);
  const Matrix e = backaction_noise(meas, plant.n_modes());
  return omega * w + w * omega.transpose() - w * meas.C.transpose() * meas.C * w + e * e.transpose();
}

struct RiccatiOptions {
  double dt = 1e-2;             ///< RK4 relaxation step
  double rate_tol = 1e-12;      ///< stop when max |dV_c/dt| falls below this
  long max_steps = 10'000'000;
  double residual_tol = 1e-9;   ///< algebraic residual accepted after relaxation
};

/// Relaxes the conditional-covariance ODE from `v0` to its stabilizing
/// fixed point.
inline CovarianceMatrix riccati_steady(const DriftDiffusion& dd, const MeasurementModel& meas, const Matrix& v0,
                                       const RiccatiOptions& opts = {}) {
  detail::require(dd.A.rows() == v0.rows() && meas.C.cols() == v0.rows(), "riccati_steady: dimension mismatch");
  const double h = opts.dt;
  Matrix v = v0;
  for (long step = 0; step < opts.max_steps; ++step) {
    const Matrix k1 = riccati_rhs(dd, meas, v);
    if (detail::max_abs(k1) <= opts.rate_tol) return CovarianceMatrix(v);
    const Matrix k2 = riccati_rhs(dd, meas, v + 0.5 * h * k1);
    const Matrix k3 = riccati_rhs(dd, meas, v + 0.5 * h * k2);
    const Matrix k4 = riccati_rhs(dd, meas, v + h * k3);
    v = detail::symmetrized(v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (!detail::all_finite(v)) throw StabilityError("riccati_steady: relaxation diverged");
  }
  throw StabilityError("riccati_steady: no stabilizing solution reached within " + std::to_string(opts.max_steps) +
                       " steps");
}

/// Stabilizing W_U for plant and unravelling. Starts from the open-loop
/// steady state (vacuum if the plant has none) and cross-checks the
/// converged matrix against the Omega/E form of the algebraic equation.
inline CovarianceMatrix riccati_steady(const PlantModel& plant, const Unravelling& u, const RiccatiOptions& opts = {}) {
  const DriftDiffusion dd = drift_diffusion(plant);
  const MeasurementModel meas = measurement_model(plant, u);
  const Matrix v0 = is_hurwitz(dd.A) ? lyapunov_steady(dd.A, dd.D).matrix()
                                     : CovarianceMatrix::vacuum(plant.n_modes()).matrix();
  CovarianceMatrix w = riccati_steady(dd, meas, v0, opts);
  const double res = detail::max_abs(algebraic_riccati_residual(plant, u, w.matrix()));
  if (!(res <= opts.residual_tol)) {
    throw NumericalError("riccati_steady: algebraic residual " + std::to_string(res) +
                         " inconsistent with the relaxed solution");
  }
  return w;
}

struct LmiReport {
  bool feasible = false;
  double physical_margin = 0.0;     ///< min eig(W + i Sigma / 2)
  double dissipation_margin = 0.0;  ///< min eig(D + A W + W A^T)
};

/// Tests W + i Sigma/2 >= 0 and D + A W + W A^T >= 0.
inline LmiReport lmi_feasible(const CovarianceMatrix& w, const PlantModel& plant, double tol = 1e-9) {
  const DriftDiffusion dd = drift_diffusion(plant);
  detail::require(w.dim() == dd.A.rows(), "lmi_feasible: dimension mismatch");
  LmiReport r;
  r.physical_margin = uncertainty_margin(w.matrix());
  const Matrix m = detail::symmetrized(dd.D + dd.A * w.matrix() + w.matrix() * dd.A.transpose());
  r.dissipation_margin = Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  r.feasible = r.physical_margin >= -tol && r.dissipation_margin >= -tol;
  return r;
}

struct Recovery {
  Unravelling unravelling;
  Matrix U;
  double residual;
};

/// Finds an unravelling whose Riccati solution is `w` by solving
/// R^T U R = D + A W + W A^T, R = 2 Cbar W + S Cbar Sigma, over the affine
/// family of valid U matrices (unknowns Re Upsilon and Im Upsilon). The
/// minimum-norm least-squares solution is taken when R is rank deficient.
inline Recovery recover_unravelling(const CovarianceMatrix& w, const PlantModel& plant, double residual_tol = 1e-8) {
  const LmiReport lmi = lmi_feasible(w, plant, 1e-8);
  if (!lmi.feasible) {
    throw InputError("recover_unravelling: W violates the LMIs (margins " + std::to_string(lmi.physical_margin) + ", " +
                     std::to_string(lmi.dissipation_margin) + ")");
  }
  const DriftDiffusion dd = drift_diffusion(plant);
  const int l = plant.n_channels();
  const Matrix cb = cbar(plant.ctilde);
  const Matrix s = signature_matrix(l);
  const Matrix r = 2.0 * cb * w.matrix() + s * cb * symplectic_form(plant.n_modes());
  const Matrix target = detail::symmetrized(dd.D + dd.A * w.matrix() + w.matrix() * dd.A.transpose());

  // U = I/2 + sum_k theta_k B_k; first the Re Upsilon generators, then Im.
  std::vector<Matrix> basis;
  std::vector<std::pair<int, int>> index;
  for (int i = 0; i < l; ++i) {
    for (int j = i; j < l; ++j) {
      Matrix e = Matrix::Zero(l, l);
      e(i, j) = e(j, i) = 1.0;
      Matrix b = Matrix::Zero(2 * l, 2 * l);
      b.topLeftCorner(l, l) = 0.5 * e;
      b.bottomRightCorner(l, l) = -0.5 * e;
      basis.push_back(b);
      index.emplace_back(i, j);
    }
  }
  const auto n_re = static_cast<Eigen::Index>(basis.size());
  for (int k = 0; k < n_re; ++k) {
    const auto [i, j] = index[static_cast<std::size_t>(k)];
    Matrix e = Matrix::Zero(l, l);
    e(i, j) = e(j, i) = 1.0;
    Matrix b = Matrix::Zero(2 * l, 2 * l);
    b.topRightCorner(l, l) = 0.5 * e;
    b.bottomLeftCorner(l, l) = 0.5 * e;
    basis.push_back(b);
  }

  const Matrix u0 = 0.5 * Matrix::Identity(2 * l, 2 * l);
  const Eigen::Index n = target.rows();
  Matrix design(n * n, static_cast<Eigen::Index>(basis.size()));
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const Matrix col = r.transpose() * basis[k] * r;
    design.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Vector>(col.data(), n * n);
  }
  const Matrix rhs_m = target - r.transpose() * u0 * r;
  const Vector rhs = Eigen::Map<const Vector>(rhs_m.data(), n * n);

  Eigen::JacobiSVD<Matrix> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cutoff = 1e-10 * std::max(1.0, sv.size() > 0 ? sv(0) : 0.0);
  Vector theta = Vector::Zero(design.cols());
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv(k) > cutoff) theta += svd.matrixV().col(k) * (svd.matrixU().col(k).dot(rhs) / sv(k));
  }

  CMatrix upsilon = CMatrix::Zero(l, l);
  for (Eigen::Index k = 0; k < n_re; ++k) {
    const auto [i, j] = index[static_cast<std::size_t>(k)];
    upsilon(i, j) = upsilon(j, i) = Complex(theta(k), theta(n_re + k));
  }
  Unravelling recovered(upsilon);
  Matrix uu = u_matrix(recovered);  // throws InvalidUnravelling when indefinite
  const double residual = detail::max_abs(r.transpose() * uu * r - target);
  if (!(residual <= residual_tol)) {
    throw RecoveryError("recover_unravelling: residual " + std::to_string(residual) + " exceeds " +
                        std::to_string(residual_tol));
  }
  return Recovery{std::move(recovered), std::move(uu), residual};
}

}  // namespace qfb
