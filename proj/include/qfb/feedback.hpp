#pragma once

// Markovian feedback u = F y. Gains are carried as the product BF.

#include <cmath>
#include <numbers>

#include "qfb/core.hpp"
#include "qfb/dynamics.hpp"
#include "qfb/unravelling.hpp"

namespace qfb {

struct FeedbackGain {
  Matrix BF;  ///< 2N x 2L, acts on the real current y

  static FeedbackGain zero(Eigen::Index state_dim, Eigen::Index current_dim) {
    return {Matrix::Zero(state_dim, current_dim)};
  }
};

struct ClosedLoop {
  Matrix A_prime;
  Matrix D_prime;
};

/// A' = A + BF C,  D' = D + BF BF^T + BF Gamma + Gamma^T BF^T.
inline ClosedLoop closed_loop(const Matrix& a, const Matrix& d, const FeedbackGain& gain, const MeasurementModel& meas) {
  detail::require(gain.BF.rows() == a.rows() && gain.BF.cols() == meas.C.rows(),
                  "closed_loop: gain dimensions do not match plant and measurement");
  detail::require(gain.BF.allFinite(), "closed_loop: gain has non-finite entries");
  const Matrix& bf = gain.BF;
  const Matrix cross = bf * meas.Gamma;
  return ClosedLoop{a + bf * meas.C,
                    detail::symmetrized(d + bf * bf.transpose() + cross + cross.transpose())};
}

inline ClosedLoop closed_loop(const DriftDiffusion& dd, const FeedbackGain& gain, const MeasurementModel& meas) {
  return closed_loop(dd.A, dd.D, gain, meas);
}

/// BF = -W C^T - Gamma^T. Cancels the innovation term in the conditional
/// mean, so the unconditional steady state coincides with W.
inline FeedbackGain optimal_gain(const CovarianceMatrix& w, const MeasurementModel& meas) {
  detail::require(meas.C.cols() == w.dim(), "optimal_gain: dimension mismatch");
  return {-(w.matrix() * meas.C.transpose() + meas.Gamma.transpose())};
}

/// Two-mode homodyne feedback (q1, q2 measured) driving p1 -+ p2 with
/// strengths lambda_-/lambda_+.
inline FeedbackGain homodyne_gain(double lambda_plus, double lambda_minus) {
  Matrix bf = Matrix::Zero(4, 4);
  const double sum = (lambda_plus + lambda_minus) / std::numbers::sqrt2;
  const double diff = (lambda_plus - lambda_minus) / std::numbers::sqrt2;
  bf(0, 0) = sum;
  bf(0, 1) = diff;
  bf(2, 0) = diff;
  bf(2, 1) = sum;
  return {bf};
}

/// Two-mode heterodyne feedback mimicking the parametric interaction.
inline FeedbackGain heterodyne_gain(double mu) {
  Matrix bf = Matrix::Zero(4, 4);
  bf(0, 1) = mu;
  bf(1, 3) = -mu;
  bf(2, 0) = mu;
  bf(3, 2) = -mu;
  return {bf};
}

// Analytic stability windows of the two-mode closed loops.

inline bool homodyne_stable(double chi, double lambda_plus, double lambda_minus) {
  return lambda_plus < 0.25 - 0.5 * chi && lambda_minus < 0.25 + 0.5 * chi;
}

inline bool heterodyne_stable(double chi, double mu) { return -0.5 - chi < mu && mu < 0.5 - chi; }

}  // namespace qfb
