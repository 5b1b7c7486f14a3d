#pragma once
#include <span>

namespace pairforge {

// Second-harmonic conversion model for the pump characterization:
//   P_shg = c^2 * P * tanh^2( sqrt(eta_bk * c * P) )
// with P the fundamental peak power in W, c a dimensionless coupling and
// eta_bk the nonlinear strength in 1/W.
struct ShgParams {
    double c = 0.7;          // coupling, dimensionless
    double eta_bk = 1.0;     // nonlinear strength, 1/W
};

double shg_power_w(double p_peak_w, const ShgParams &params);

// Average -> peak power for a pulsed pump: P_peak = P_avg / (rate * fwhm)
double peak_from_average_w(double p_avg_w, double rep_rate_hz, double pulse_fwhm_s);

struct ShgFitResult {
    ShgParams params;
    double rss = 0.0;        // residual sum of squares, W^2
    int iterations = 0;
    bool converged = false;
};

// Unweighted least squares, Levenberg-Marquardt with the analytic Jacobian.
// Needs at least two distinct fundamental powers and a non-degenerate
// response; throws std::invalid_argument otherwise.
ShgFitResult fit_shg(std::span<const double> p_peak_w, std::span<const double> p_shg_w,
                     ShgParams initial = {});

} // namespace pairforge
