#pragma once

// The non-degenerate parametric oscillator: two damped modes coupled by
// H = chi (q1 p2 + q2 p1). Plant matrices, closed-form stationary states,
// the optimal nonlocal measurement/feedback scheme and the local
// homodyne/heterodyne schemes.

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "qfb/core.hpp"
#include "qfb/dynamics.hpp"
#include "qfb/feedback.hpp"
#include "qfb/gaussian.hpp"
#include "qfb/optimize.hpp"
#include "qfb/unravelling.hpp"

namespace qfb::nopo {

/// Largest admissible coupling; the oscillator threshold is chi = 1/2.
inline constexpr double kChiMax = 0.5 - 1e-6;

class NopoParams {
 public:
  explicit NopoParams(double chi) : chi_(chi) {
    if (!(chi >= 0.0 && chi <= kChiMax)) {
      throw InputError("chi must lie in [0, 1/2 - 1e-6], got " + std::to_string(chi));
    }
  }
  [[nodiscard]] double chi() const noexcept { return chi_; }

 private:
  double chi_;
};

enum class SchemeId { none, nonlocal_optimal, local_i, local_ii, local_iii, local_iv, heterodyne_v };

inline constexpr std::array<SchemeId, 7> kAllSchemes = {
    SchemeId::none,     SchemeId::nonlocal_optimal, SchemeId::local_i,     SchemeId::local_ii,
    SchemeId::local_iii, SchemeId::local_iv,        SchemeId::heterodyne_v};

/// The five curves of the entanglement figure: nonlocal, iii, iv, heterodyne, none.
inline constexpr std::array<SchemeId, 5> kFigureSchemes = {SchemeId::nonlocal_optimal, SchemeId::local_iii,
                                                           SchemeId::local_iv, SchemeId::heterodyne_v, SchemeId::none};

inline std::string_view scheme_name(SchemeId s) {
  switch (s) {
    case SchemeId::none: return "none";
    case SchemeId::nonlocal_optimal: return "nonlocal";
    case SchemeId::local_i: return "local-i";
    case SchemeId::local_ii: return "local-ii";
    case SchemeId::local_iii: return "local-iii";
    case SchemeId::local_iv: return "local-iv";
    case SchemeId::heterodyne_v: return "heterodyne";
  }
  return "unknown";
}

inline std::optional<SchemeId> parse_scheme(std::string_view name) {
  for (SchemeId s : kAllSchemes) {
    if (scheme_name(s) == name) return s;
  }
  return std::nullopt;
}

struct NamedValue {
  std::string name;
  double value;
};

struct SchemeResult {
  SchemeId scheme;
  double chi;
  std::vector<NamedValue> params;
  CovarianceMatrix V;
  double L;                        ///< log-negativity, bits
  double S;                        ///< von Neumann entropy, bits
  double m;                        ///< tr[P V], the EPR cost of the stationary state
  bool at_boundary = false;        ///< optimizer stopped on the stability window edge
  double stability_margin = 0.0;   ///< -max Re eig(A') of the closed loop
  std::optional<Matrix> U;         ///< unravelling matrix (nonlocal scheme)
  std::optional<Matrix> C;         ///< measurement matrix (nonlocal scheme)
};

inline PlantModel build_plant(const NopoParams& p) {
  const double chi = p.chi();
  Matrix g = Matrix::Zero(4, 4);
  g(0, 3) = g(3, 0) = chi;
  g(1, 2) = g(2, 1) = chi;
  CMatrix ct = CMatrix::Zero(2, 4);
  const double r = 1.0 / std::numbers::sqrt2;
  ct(0, 0) = r;
  ct(0, 1) = Complex(0.0, r);
  ct(1, 2) = r;
  ct(1, 3) = Complex(0.0, r);
  return PlantModel{g, ct, Matrix::Identity(4, 4)};
}

/// Symmetric two-mode matrix [[a, 0, s, 0], [0, a', 0, s'], ...] with
/// gamma = diag(gqq, gpp), sigma = diag(sqq, spp).
inline CovarianceMatrix symmetric_family(double gqq, double gpp, double sqq, double spp) {
  Matrix v(4, 4);
  v << gqq, 0, sqq, 0,  //
      0, gpp, 0, spp,   //
      sqq, 0, gqq, 0,   //
      0, spp, 0, gpp;
  return CovarianceMatrix(v);
}

inline CovarianceMatrix open_loop_V(const NopoParams& p) {
  const double chi = p.chi();
  const double den = 1.0 - 4.0 * chi * chi;
  return symmetric_family(0.5 / den, 0.5 / den, chi / den, -chi / den);
}

/// Quadratic form of <(q1 - q2)^2>/2 + <(p1 + p2)^2>/2.
inline Matrix cost_matrix() {
  Matrix p(4, 4);
  p << 1, 0, -1, 0,  //
      0, 1, 0, 1,    //
      -1, 0, 1, 0,   //
      0, 1, 0, 1;
  return 0.5 * p;
}

inline double cost(const CovarianceMatrix& v) { return (cost_matrix() * v.matrix()).trace(); }

struct NonlocalParameters {
  double alpha;
  double beta;
};

/// beta = chi (1 - chi) / (1 - 2 chi), alpha = sqrt(1 + 4 beta^2) / 2.
inline NonlocalParameters nonlocal_closed_form(const NopoParams& p) {
  const double chi = p.chi();
  const double beta = chi * (1.0 - chi) / (1.0 - 2.0 * chi);
  return {0.5 * std::sqrt(1.0 + 4.0 * beta * beta), beta};
}

inline CovarianceMatrix nonlocal_W(double alpha, double beta) { return symmetric_family(alpha, alpha, beta, -beta); }

inline SchemeResult optimal_nonlocal(const NopoParams& p) {
  const PlantModel plant = build_plant(p);
  const auto [alpha, beta] = nonlocal_closed_form(p);
  CovarianceMatrix w = nonlocal_W(alpha, beta);
  const Recovery rec = recover_unravelling(w, plant);
  const MeasurementModel meas = measurement_model(plant, rec.unravelling);
  const ClosedLoop cl = closed_loop(drift_diffusion(plant), optimal_gain(w, meas), meas);

  SchemeResult r{SchemeId::nonlocal_optimal, p.chi(), {{"alpha", alpha}, {"beta", beta}}, w,
                 log_negativity(w), von_neumann_entropy(w), 2.0 * (alpha - beta)};
  r.stability_margin = -spectral_abscissa(cl.A_prime);
  r.U = rec.U;
  r.C = meas.C;
  return r;
}

struct NonlocalOptimumReport {
  double alpha_numeric;
  double beta_numeric;
  double alpha_closed;
  double beta_closed;
  double max_deviation;
  bool monotone_on_boundary;  ///< m decreases with beta along alpha = sqrt(1+4 beta^2)/2
};

/// Constraints of the (alpha, beta) family: W + i Sigma/2 >= 0 and
/// D + A W + W A^T >= 0 written out entrywise.
inline bool nonlocal_feasible(double chi, double alpha, double beta, double slack = 0.0) {
  return alpha - 0.5 * std::sqrt(1.0 + 4.0 * beta * beta) >= -slack &&
         0.5 - (alpha + beta) * (1.0 - 2.0 * chi) >= -slack && 0.5 - (alpha - beta) * (1.0 + 2.0 * chi) >= -slack;
}

/// Brute-force minimization of alpha - beta over the constrained family by
/// successively halved 2-D grids, compared against the closed form. Each
/// round accepts points within about one grid spacing of the feasible set
/// (at chi = 0 that set is a single point); the slack is scaled by 1 - 2 chi
/// because the dissipation constraints carry that factor. Near chi = 1/2 the
/// objective is nearly flat along the boundary, so grid = 400 resolves the
/// corner only up to chi ~ 0.47; larger chi needs a finer grid.
inline NonlocalOptimumReport verify_nonlocal_optimum(const NopoParams& p, int grid = 400, double tolerance = 1e-6) {
  detail::require(grid >= 10, "verify_nonlocal_optimum: grid must be >= 10");
  const double chi = p.chi();
  // alpha <= 1/(2(1-2chi)) bounds the feasible set; beta <= alpha.
  const double alpha_hi = 0.5 / (1.0 - 2.0 * chi) + 1e-3;
  double ca = 0.5 * (0.5 + alpha_hi);
  double cb = 0.5 * alpha_hi;
  double h = 0.5 * alpha_hi + 1e-3;

  double best_a = NAN;
  double best_b = NAN;
  for (int round = 0; round < 200; ++round) {
    double best = INFINITY;
    const double d = 2.0 * h / (grid - 1);
    for (int i = 0; i < grid; ++i) {
      const double a = ca - h + d * i;
      for (int j = 0; j < grid; ++j) {
        const double b = cb - h + d * j;
        if (!nonlocal_feasible(chi, a, b, d * (1.0 - 2.0 * chi))) continue;
        if (a - b < best) {
          best = a - b;
          best_a = a;
          best_b = b;
        }
      }
    }
    if (!std::isfinite(best)) throw OptimalityViolation("verify_nonlocal_optimum: no feasible grid point");
    ca = best_a;
    cb = best_b;
    // Halving keeps the true corner well inside the window: the accepted
    // violation is a few spacings, far below h / 2.
    h *= 0.5;
    if (d < 1e-11) break;
  }

  const auto closed = nonlocal_closed_form(p);
  NonlocalOptimumReport rep{best_a, best_b, closed.alpha, closed.beta,
                            std::max(std::abs(best_a - closed.alpha), std::abs(best_b - closed.beta)), true};
  double prev = INFINITY;
  for (int k = 0; k <= 200; ++k) {
    const double b = closed.beta * k / 200.0;
    const double m = std::sqrt(1.0 + 4.0 * b * b) - 2.0 * b;
    if (m > prev) rep.monotone_on_boundary = false;
    prev = m;
  }
  if (rep.max_deviation > tolerance || !rep.monotone_on_boundary) {
    throw OptimalityViolation("verify_nonlocal_optimum: numeric optimum deviates from the closed form by " +
                              std::to_string(rep.max_deviation));
  }
  return rep;
}

inline CovarianceMatrix homodyne_closed_form_V(const NopoParams& p, double lp, double lm) {
  const double chi = p.chi();
  if (!homodyne_stable(chi, lp, lm)) throw StabilityError("homodyne feedback outside its stability window");
  const double den = (1.0 + 2.0 * chi - 4.0 * lm) * (-1.0 + 2.0 * chi + 4.0 * lp);
  const double gqq = (-1.0 + 4.0 * (1.0 + chi) * lp - 2.0 * (1.0 + 2.0 * chi) * lp * lp +
                      lm * lm * (-2.0 + 4.0 * chi + 8.0 * lp) - 4.0 * lm * (-1.0 + chi + 4.0 * lp - 2.0 * lp * lp)) /
                     (2.0 * den);
  const double sqq = (lm * lm * (1.0 - 4.0 * lp) - lp * lp + 4.0 * lm * lp * lp +
                      chi * (-1.0 + 2.0 * lm - 2.0 * lm * lm + 2.0 * lp - 2.0 * lp * lp)) /
                     den;
  const double d = 1.0 - 4.0 * chi * chi;
  return symmetric_family(gqq, 0.5 / d, sqq, -chi / d);
}

inline CovarianceMatrix heterodyne_closed_form_V(const NopoParams& p, double mu) {
  const double chi = p.chi();
  if (!heterodyne_stable(chi, mu)) throw StabilityError("heterodyne feedback outside its stability window");
  const double den = -1.0 + 4.0 * (chi + mu) * (chi + mu);
  const double g = (-1.0 + 4.0 * chi * mu + 2.0 * mu * mu) / (2.0 * den);
  const double s = -(chi + 2.0 * chi * mu * mu + 2.0 * mu * mu * mu) / den;
  return symmetric_family(g, g, s, -s);
}

/// mu* = (-1 - 2 chi + sqrt(1 + 4 chi^2)) / 2.
inline double heterodyne_optimal_mu(double chi) { return 0.5 * (-1.0 - 2.0 * chi + std::sqrt(1.0 + 4.0 * chi * chi)); }

/// Measurement and feedback realizing a scheme.
struct SchemeController {
  Unravelling unravelling;
  FeedbackGain gain;
};

/// (lambda_+, lambda_-) of the one-parameter homodyne families.
inline std::pair<double, double> homodyne_lambdas(SchemeId s, double lambda) {
  switch (s) {
    case SchemeId::local_i: return {lambda, lambda};
    case SchemeId::local_ii: return {lambda, 0.0};
    case SchemeId::local_iii: return {0.0, lambda};
    case SchemeId::local_iv: return {lambda, -lambda};
    default: throw InputError("homodyne_lambdas: not a homodyne scheme");
  }
}

inline bool is_homodyne(SchemeId s) {
  return s == SchemeId::local_i || s == SchemeId::local_ii || s == SchemeId::local_iii || s == SchemeId::local_iv;
}

/// Lower end of the scanned range for parameters whose stability window is
/// unbounded below.
inline constexpr double kSearchFloor = -0.5;
/// Distance kept from an open stability-window edge.
inline constexpr double kEdgeMargin = 1e-6;

/// Search interval for a scheme's scalar parameter, inside its stability window.
inline std::pair<double, double> parameter_window(SchemeId s, double chi) {
  switch (s) {
    case SchemeId::local_i:
    case SchemeId::local_ii: return {kSearchFloor, 0.25 - 0.5 * chi - kEdgeMargin};
    case SchemeId::local_iii: return {kSearchFloor, 0.25 + 0.5 * chi - kEdgeMargin};
    case SchemeId::local_iv: return {-0.25 - 0.5 * chi + kEdgeMargin, 0.25 - 0.5 * chi - kEdgeMargin};
    case SchemeId::heterodyne_v: return {-0.5 - chi + kEdgeMargin, 0.5 - chi - kEdgeMargin};
    default: throw InputError("parameter_window: scheme has no scalar parameter");
  }
}

inline SchemeController scheme_controller(SchemeId s, double param) {
  if (is_homodyne(s)) {
    const auto [lp, lm] = homodyne_lambdas(s, param);
    return {Unravelling::homodyne(2), homodyne_gain(lp, lm)};
  }
  if (s == SchemeId::heterodyne_v) return {Unravelling::heterodyne(2), heterodyne_gain(param)};
  if (s == SchemeId::none) return {Unravelling::homodyne(2), FeedbackGain::zero(4, 4)};
  throw InputError("scheme_controller: the nonlocal scheme is built from its Riccati solution");
}

/// Controller for an optimized result (any scheme, including nonlocal).
inline SchemeController scheme_controller(const NopoParams& p, const SchemeResult& r) {
  if (r.scheme == SchemeId::nonlocal_optimal) {
    const PlantModel plant = build_plant(p);
    Recovery rec = recover_unravelling(r.V, plant);
    const MeasurementModel meas = measurement_model(plant, rec.unravelling);
    return {std::move(rec.unravelling), optimal_gain(r.V, meas)};
  }
  return scheme_controller(r.scheme, r.params.empty() ? 0.0 : r.params.front().value);
}

/// Closed loop of a one-parameter scheme, from the general feedback formulas.
inline ClosedLoop scheme_closed_loop(const NopoParams& p, SchemeId s, double param) {
  const PlantModel plant = build_plant(p);
  const SchemeController ctl = scheme_controller(s, param);
  return closed_loop(drift_diffusion(plant), ctl.gain, measurement_model(plant, ctl.unravelling));
}

inline CovarianceMatrix scheme_steady_state(const NopoParams& p, SchemeId s, double param) {
  const ClosedLoop cl = scheme_closed_loop(p, s, param);
  return lyapunov_steady(cl.A_prime, cl.D_prime);
}

inline SchemeResult make_result(const NopoParams& p, SchemeId s, std::vector<NamedValue> params, double param) {
  const ClosedLoop cl = scheme_closed_loop(p, s, param);
  CovarianceMatrix v = lyapunov_steady(cl.A_prime, cl.D_prime);
  SchemeResult r{s, p.chi(), std::move(params), v, log_negativity(v), von_neumann_entropy(v), cost(v)};
  r.stability_margin = -spectral_abscissa(cl.A_prime);
  return r;
}

/// Maximizes the log-negativity over the scheme's feedback parameter.
/// When the no-feedback point is as good as the maximizer (within 1e-9)
/// it is preferred, so flat objectives report zero feedback.
inline SchemeResult optimize_scheme(const NopoParams& p, SchemeId s) {
  if (s == SchemeId::nonlocal_optimal) return optimal_nonlocal(p);
  if (s == SchemeId::none) return make_result(p, s, {}, 0.0);

  const auto [lo, hi] = parameter_window(s, p.chi());
  auto objective = [&](double x) { return log_negativity(scheme_steady_state(p, s, x)); };
  ScalarOptimum opt = maximize_scalar(objective, lo, hi, 200, 1e-9);
  if (lo < 0.0 && 0.0 < hi && objective(0.0) >= opt.value - 1e-9) {
    opt = ScalarOptimum{0.0, objective(0.0), false};
  }
  const char* name = s == SchemeId::heterodyne_v ? "mu" : "lambda";
  SchemeResult r = make_result(p, s, {{name, opt.x}}, opt.x);
  r.at_boundary = opt.at_boundary;
  return r;
}

/// One row per (chi, scheme), chi ascending on a uniform grid, schemes in
/// the order given. Grid points are evaluated concurrently.
inline std::vector<SchemeResult> scheme_curves(double chi_min, double chi_max, int steps,
                                               const std::vector<SchemeId>& schemes) {
  detail::require(steps >= 1, "scheme_curves: steps must be >= 1");
  detail::require(chi_min >= 0.0 && chi_max <= kChiMax && (chi_min < chi_max || steps == 1),
                  "scheme_curves: need 0 <= chi_min < chi_max < 1/2");
  std::vector<double> grid(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    grid[static_cast<std::size_t>(k)] = steps == 1 ? chi_min : chi_min + (chi_max - chi_min) * k / (steps - 1);
  }

  std::vector<std::vector<SchemeResult>> rows(grid.size());
  std::vector<std::exception_ptr> errors(grid.size());
  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, std::max<std::size_t>(grid.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < grid.size(); i += workers) {
          try {
            const NopoParams p(grid[i]);
            for (SchemeId s : schemes) rows[i].push_back(optimize_scheme(p, s));
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<SchemeResult> out;
  out.reserve(grid.size() * schemes.size());
  for (auto& r : rows) {
    for (auto& x : r) out.push_back(std::move(x));
  }
  return out;
}

}  // namespace qfb::nopo
