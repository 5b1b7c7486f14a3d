#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "pairforge/spectral.hpp"

namespace pairforge {

// Value with a first-order propagated standard deviation. `valid` is false
// when the inputs were insufficient (zero coincidences, zero live time, ...):
// reports carry the flag instead of NaNs.
struct Estimate {
    double value = 0.0;
    double sigma = 0.0;
    bool valid = true;
};

// First-order uncertainty arithmetic for independent quantities; counts enter
// as poisson(N) with variance N. Keeps the estimator formulas below readable
// and the propagation uniform.
struct Meas {
    double v = 0.0;
    double var = 0.0;

    static Meas exact(double x) { return {x, 0.0}; }
    static Meas poisson(double n) { return {n, n}; }

    friend Meas operator+(Meas a, Meas b) { return {a.v + b.v, a.var + b.var}; }
    friend Meas operator-(Meas a, Meas b) { return {a.v - b.v, a.var + b.var}; }
    friend Meas operator*(Meas a, Meas b) {
        return {a.v * b.v, a.var * b.v * b.v + b.var * a.v * a.v};
    }
    friend Meas operator/(Meas a, Meas b) {
        double q = a.v / b.v;
        return {q, (a.var + q * q * b.var) / (b.v * b.v)};
    }
    friend Meas operator*(double s, Meas a) { return {s * a.v, s * s * a.var}; }

    Estimate estimate() const;
};

// Counts coming out of the tag analysis of one detector pair.
struct CountSummary {
    std::uint64_t n1_raw = 0, n2_raw = 0; // clicks before post-selection
    std::uint64_t n1 = 0, n2 = 0;         // post-selected singles (per-stream scan)
    double t1_ready_s = 0.0, t2_ready_s = 0.0;
    std::uint64_t n1_cc = 0, n2_cc = 0;   // singles surviving the pair post-selection
    std::uint64_t c12 = 0;                // prompt-window coincidences (post-selected)
    std::uint64_t acc12 = 0;              // shifted-window accidental estimate
    double t_cc_ready_s = 0.0;            // live time of the pair-post-selection scan
    double total_time_s = 0.0;
};

// Heralding (Klyshko) efficiency of one arm: eta = C12 / (eta_det * N_other),
// with N_other the dark-corrected herald counts and eta_det the detection
// efficiency of the heralded arm's own detector.
Estimate heralding_efficiency(Meas c12_counts, Meas n_other_counts, double eta_det);

// Source brightness from raw singles/coincidence counts, per second, mW of
// pump and nm of bandwidth: B = N1*N2 / (C12 * P * t * dl). Rates in, counts
// are reconstructed internally via t so the Poisson sigmas are right.
Estimate brightness_simple(double r1_hz, double r2_hz, double c12_hz, double pump_mw,
                           double t_s, double delta_lambda_nm);

// Generated pair rate (pairs/s) from post-selected counts:
//   mu_rate = gamma * (eta_pair/(eta_s eta_i))
//           * (N1/T1 - r1) (N2/T2 - r2) * T_cc / N_mu
// with N_mu = C12 - accidentals. Per-detector ready times feed the two rate
// factors, the pair-scan ready time feeds the coincidence term.
Estimate mu_generated_rate(const CountSummary &counts, double gamma,
                           const OverlapFactors &overlap, double r1_hz, double r2_hz);

// Same, per pulse: mu_rate / repetition rate.
Estimate mu_generated_per_pulse(const CountSummary &counts, double gamma,
                                const OverlapFactors &overlap, double r1_hz, double r2_hz,
                                double rep_rate_hz);

// Pump photons per pulse from average power and pump wavelength.
double pump_photons_per_pulse(double pump_avg_w, double rep_rate_hz,
                              double pump_wavelength_nm);

// eta_conv = mu_per_pulse / N_pump
Estimate conversion_efficiency(Estimate mu_per_pulse, double pump_photons_per_pulse);

// eta_nu = eta_conv / bandwidth, per THz
Estimate spectral_conversion_efficiency(Estimate eta_conv, double bandwidth_thz);

// Brightness implied by the conversion efficiency route:
//   B = mu_rate / (P * dl)   [pairs/(s mW nm)]
Estimate brightness_from_mu(Estimate mu_rate_hz, double pump_mw, double delta_lambda_nm);

// Dark/accidental-corrected triple-coincidence inputs for the heralded g2.
struct G2Counts {
    Meas c13, c23, c123, n3;
};

// g2_h(0) = C123 * N3 / (C13 * C23)
Estimate g2_heralded(const G2Counts &counts);

struct G2Prediction {
    double exact = 0.0;  // mu * (2 eta_s eta_i / eta_pair - eta_s * T_s)
    double approx = 0.0; // 2 mu * eta_s eta_i / eta_pair
};

// T_s: transmission of a herald-side photon to its detector (losses incl.
// detection efficiency); the correction term vanishes in the lossy limit.
G2Prediction g2_predicted(double mu, const OverlapFactors &overlap, double t_s);

// Unheralded g2 of one thermal-ish arm with K Schmidt modes: 1 + 1/K.
double g2_unheralded(double schmidt_k);

// Inverse-variance weighted mean. Entries with sigma == 0 are rejected
// (std::invalid_argument) unless there is exactly one entry.
Estimate weighted_average(std::span<const Estimate> estimates);

} // namespace pairforge
