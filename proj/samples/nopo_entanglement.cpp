// Optimal entanglement of the parametric oscillator under measurement and
// Markovian feedback, compared with the open-loop state.

#include <cstdio>

#include "qfb/qfb.hpp"

int main() {
  using namespace qfb;
  for (double chi : {0.1, 0.25, 0.4}) {
    const nopo::NopoParams p(chi);
    const auto open = nopo::optimize_scheme(p, nopo::SchemeId::none);
    const auto best = nopo::optimize_scheme(p, nopo::SchemeId::nonlocal_optimal);
    const auto ctl = nopo::scheme_controller(p, best);

    // The recovered measurement plus the optimal gain pins the
    // unconditional state to the conditional one.
    const PlantModel plant = nopo::build_plant(p);
    const MeasurementModel meas = measurement_model(plant, ctl.unravelling);
    const ClosedLoop cl = closed_loop(drift_diffusion(plant), ctl.gain, meas);
    const CovarianceMatrix v = lyapunov_steady(cl.A_prime, cl.D_prime);

    std::printf("chi=%.2f  L_open=%.6f  L_fb=%.6f  S_fb=%.2e  |V'-W|=%.1e\n", chi, open.L, best.L,
                von_neumann_entropy(v), detail::max_abs(v.matrix() - best.V.matrix()));
  }
}
