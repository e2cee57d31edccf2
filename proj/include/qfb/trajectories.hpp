#pragma once

// Monte-Carlo simulation of the conditional moments under continuous
// measurement and Markovian feedback:
//
//   d<x>  = (A <x> + B u) dt + (V_c C^T + Gamma^T) dw,   B u dt = BF y dt,
//   y dt  = C <x> dt + dw,
//   dV_c/dt = A V_c + V_c A^T + D - (V_c C^T + Gamma^T)(C V_c + Gamma).
//
// V_c is deterministic and shared by all trajectories (RK4); the means are
// stepped with Euler-Maruyama. The filter starts in the open-loop
// stationary state: V_c(0) = unconditional steady state, <x>(0) = 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "qfb/core.hpp"
#include "qfb/dynamics.hpp"
#include "qfb/feedback.hpp"
#include "qfb/unravelling.hpp"

namespace qfb {

struct SimConfig {
  double dt = 1e-3;
  double t_final = 20.0;
  std::size_t n_traj = 1000;
  std::uint64_t seed = 0;
  double burn_in = 0.5;  ///< fraction of t_final discarded before averaging

  void validate() const {
    detail::require(dt > 0.0 && dt <= 1e-2, "SimConfig: dt must lie in (0, 1e-2]");
    detail::require(t_final >= dt, "SimConfig: t_final must be >= dt");
    detail::require(n_traj >= 1, "SimConfig: n_traj must be >= 1");
    detail::require(burn_in >= 0.0 && burn_in < 1.0, "SimConfig: burn_in must lie in [0, 1)");
  }

  [[nodiscard]] long steps() const { return std::max(1L, std::lround(t_final / dt)); }
  [[nodiscard]] long burn_steps() const { return static_cast<long>(std::floor(burn_in * static_cast<double>(steps()))); }
};

struct TrajectoryStats {
  CovarianceMatrix v_c_final;
  Matrix v_c_window;      ///< V_c averaged over the sampling window
  Matrix mean_outer;      ///< time-and-ensemble average of <x><x>^T after burn-in
  Matrix mean_outer_se;   ///< across-trajectory standard error of mean_outer
  Vector mean_x;          ///< time-and-ensemble average of <x> after burn-in
  Vector mean_x_se;
  Matrix v_unconditional; ///< v_c_final + mean_outer
  std::vector<Matrix> trajectory_outer;  ///< per-trajectory time averages of <x><x>^T
  long n_steps = 0;
  long window_steps = 0;
  std::vector<std::string> warnings;
};

namespace detail {

/// SplitMix64 finalizer; decorrelates per-trajectory seeds drawn from one master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

struct TrajectoryAccumulator {
  Matrix outer;
  Vector mean;
};

template <int N, int M>
TrajectoryAccumulator run_trajectory(const Matrix& a_dyn, const Matrix& c_dyn, const Matrix& bf_dyn,
                                     const std::vector<Matrix>& gains, const SimConfig& cfg, std::size_t index) {
  using StateVec = Eigen::Matrix<double, N, 1>;
  using CurrentVec = Eigen::Matrix<double, M, 1>;
  const Eigen::Matrix<double, N, N> a = a_dyn;
  const Eigen::Matrix<double, M, N> c = c_dyn;
  const Eigen::Matrix<double, N, M> bf = bf_dyn;
  const Eigen::Index n = a_dyn.rows();
  const Eigen::Index m = c_dyn.rows();

  std::mt19937_64 rng(stream_seed(cfg.seed, index));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double dt = cfg.dt;
  const double sqrt_dt = std::sqrt(dt);
  const long steps = cfg.steps();
  const long burn = cfg.burn_steps();

  StateVec x = StateVec::Zero(n);
  CurrentVec dw(m);
  CurrentVec ydt(m);
  Eigen::Matrix<double, N, N> outer = Eigen::Matrix<double, N, N>::Zero(n, n);
  StateVec sum = StateVec::Zero(n);
  for (long s = 0; s < steps; ++s) {
    for (Eigen::Index k = 0; k < m; ++k) dw(k) = sqrt_dt * normal(rng);
    ydt.noalias() = c * x * dt;
    ydt += dw;
    const Eigen::Matrix<double, N, M> gain = gains[static_cast<std::size_t>(s)];
    StateVec dx = a * x * dt;
    dx.noalias() += bf * ydt;
    dx.noalias() += gain * dw;
    x += dx;
    if (!(x.norm() <= 1e6)) {
      throw DivergenceError("trajectory " + std::to_string(index) + " diverged at step " + std::to_string(s), index);
    }
    if (s + 1 > burn) {
      outer.noalias() += x * x.transpose();
      sum += x;
    }
  }
  const double count = static_cast<double>(steps - burn);
  return {Matrix(outer / count), Vector(sum / count)};
}

}  // namespace detail

/// Initial conditional covariance: the unconditional steady state of the
/// plant, or the vacuum if the plant has none.
inline Matrix initial_conditional_covariance(const DriftDiffusion& dd) {
  if (is_hurwitz(dd.A)) return lyapunov_steady(dd.A, dd.D).matrix();
  return Matrix::Identity(dd.A.rows(), dd.A.cols()) * 0.5;
}

inline TrajectoryStats simulate_conditional(const PlantModel& plant, const Unravelling& u, const FeedbackGain& gain,
                                            const SimConfig& cfg) {
  cfg.validate();
  const DriftDiffusion dd = drift_diffusion(plant);
  const MeasurementModel meas = measurement_model(plant, u);
  const ClosedLoop cl = closed_loop(dd, gain, meas);
  const double abscissa = spectral_abscissa(cl.A_prime);
  if (!(abscissa < 0.0)) throw InputError("simulate_conditional: closed loop is not stable");

  TrajectoryStats stats{CovarianceMatrix(initial_conditional_covariance(dd))};
  const double tau = -1.0 / abscissa;
  if (cfg.t_final < 10.0 * tau) {
    stats.warnings.push_back("t_final " + std::to_string(cfg.t_final) + " is shorter than 10 closed-loop time constants (" +
                             std::to_string(10.0 * tau) + ")");
  }

  const long steps = cfg.steps();
  const long burn = cfg.burn_steps();
  const double h = cfg.dt;
  const Eigen::Index n = dd.A.rows();

  // Deterministic V_c path and the innovation gains it induces.
  std::vector<Matrix> gains;
  gains.reserve(static_cast<std::size_t>(steps));
  Matrix v = stats.v_c_final.matrix();
  Matrix v_window = Matrix::Zero(n, n);
  auto rhs = [&](const Matrix& x) { return riccati_rhs(dd, meas, x); };
  for (long s = 0; s < steps; ++s) {
    gains.push_back(v * meas.C.transpose() + meas.Gamma.transpose());
    const Matrix k1 = rhs(v);
    const Matrix k2 = rhs(v + 0.5 * h * k1);
    const Matrix k3 = rhs(v + 0.5 * h * k2);
    const Matrix k4 = rhs(v + h * k3);
    v = detail::symmetrized(v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (s + 1 > burn) v_window += v;
  }
  stats.v_c_final = CovarianceMatrix(v);
  stats.n_steps = steps;
  stats.window_steps = steps - burn;
  stats.v_c_window = v_window / static_cast<double>(steps - burn);

  const std::size_t n_traj = cfg.n_traj;
  std::vector<detail::TrajectoryAccumulator> acc(n_traj);
  std::vector<std::exception_ptr> errors(n_traj);
  const bool fixed4 = n == 4 && meas.C.rows() == 4;
  const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, n_traj);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < n_traj; k += workers) {
          try {
            acc[k] = fixed4 ? detail::run_trajectory<4, 4>(dd.A, meas.C, gain.BF, gains, cfg, k)
                            : detail::run_trajectory<Eigen::Dynamic, Eigen::Dynamic>(dd.A, meas.C, gain.BF, gains,
                                                                                    cfg, k);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);  // lowest failing trajectory index
  }

  // Fixed-order reduction: results do not depend on the worker count.
  Matrix sum_o = Matrix::Zero(n, n);
  Matrix sum_o2 = Matrix::Zero(n, n);
  Vector sum_x = Vector::Zero(n);
  Vector sum_x2 = Vector::Zero(n);
  for (const auto& a : acc) {
    sum_o += a.outer;
    sum_x += a.mean;
  }
  const double count = static_cast<double>(n_traj);
  stats.mean_outer = sum_o / count;
  stats.mean_x = sum_x / count;
  for (const auto& a : acc) {
    sum_o2 += (a.outer - stats.mean_outer).cwiseAbs2();
    sum_x2 += (a.mean - stats.mean_x).cwiseAbs2();
  }
  if (n_traj > 1) {
    stats.mean_outer_se = (sum_o2 / (count - 1.0) / count).cwiseSqrt();
    stats.mean_x_se = (sum_x2 / (count - 1.0) / count).cwiseSqrt();
  } else {
    stats.mean_outer_se = Matrix::Zero(n, n);
    stats.mean_x_se = Vector::Zero(n);
  }
  stats.v_unconditional = stats.v_c_final.matrix() + stats.mean_outer;
  stats.trajectory_outer.reserve(n_traj);
  for (auto& a : acc) stats.trajectory_outer.push_back(std::move(a.outer));
  return stats;
}

/// tr[P v_unconditional]; under the optimal gain this estimates tr[P W].
inline double regulation_cost(const TrajectoryStats& stats, const Matrix& p) {
  detail::require(p.rows() == stats.v_unconditional.rows() && p.cols() == stats.v_unconditional.cols(),
                  "regulation_cost: dimension mismatch");
  return (p * stats.v_unconditional).trace();
}

/// Across-trajectory standard error of regulation_cost.
inline double regulation_cost_standard_error(const TrajectoryStats& stats, const Matrix& p) {
  const auto n = stats.trajectory_outer.size();
  if (n < 2) return 0.0;
  std::vector<double> c;
  c.reserve(n);
  for (const auto& o : stats.trajectory_outer) c.push_back((p * o).trace());
  double mean = 0.0;
  for (double x : c) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : c) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

/// Exact unconditional covariance of the closed loop, V' solving
/// dV'/dt = A' V' + V' A'^T + D' from the simulator's initial state,
/// averaged over the same sampling window as TrajectoryStats. With
/// v_c_window it gives the exact expectation of mean_outer:
/// E[mean_outer] = window_average - v_c_window (up to the O(dt) Euler bias).
inline Matrix unconditional_window_average(const PlantModel& plant, const Unravelling& u, const FeedbackGain& gain,
                                           const SimConfig& cfg) {
  cfg.validate();
  const DriftDiffusion dd = drift_diffusion(plant);
  const ClosedLoop cl = closed_loop(dd, gain, measurement_model(plant, u));
  const long steps = cfg.steps();
  const long burn = cfg.burn_steps();
  const double h = cfg.dt;
  Matrix v = initial_conditional_covariance(dd);
  Matrix avg = Matrix::Zero(v.rows(), v.cols());
  auto rhs = [&](const Matrix& x) -> Matrix { return cl.A_prime * x + x * cl.A_prime.transpose() + cl.D_prime; };
  for (long s = 0; s < steps; ++s) {
    const Matrix k1 = rhs(v);
    const Matrix k2 = rhs(v + 0.5 * h * k1);
    const Matrix k3 = rhs(v + 0.5 * h * k2);
    const Matrix k4 = rhs(v + h * k3);
    v = detail::symmetrized(v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (s + 1 > burn) avg += v;
  }
  return avg / static_cast<double>(steps - burn);
}

}  // namespace qfb
