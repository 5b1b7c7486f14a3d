#include "pairforge/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace pairforge {

namespace {
constexpr double kPlanckJs = 6.62607015e-34;
constexpr double kLightMps = 299792458.0;
} // namespace

Estimate Meas::estimate() const {
    Estimate e{v, var > 0.0 ? std::sqrt(var) : 0.0, true};
    e.valid = std::isfinite(e.value) && std::isfinite(e.sigma);
    return e;
}

Estimate heralding_efficiency(Meas c12_counts, Meas n_other_counts, double eta_det) {
    if (!(eta_det > 0.0)) throw std::invalid_argument("detector efficiency must be > 0");
    if (!(n_other_counts.v > 0.0)) return {0.0, 0.0, false};
    return ((1.0 / eta_det) * (c12_counts / n_other_counts)).estimate();
}

Estimate brightness_simple(double r1_hz, double r2_hz, double c12_hz, double pump_mw,
                           double t_s, double delta_lambda_nm) {
    if (!(pump_mw > 0.0) || !(delta_lambda_nm > 0.0))
        throw std::invalid_argument("brightness needs positive pump power and bandwidth");
    if (!(t_s > 0.0) || !(c12_hz > 0.0)) return {0.0, 0.0, false};
    Meas n1 = Meas::poisson(r1_hz * t_s);
    Meas n2 = Meas::poisson(r2_hz * t_s);
    Meas c12 = Meas::poisson(c12_hz * t_s);
    Meas denom = c12 * Meas::exact(pump_mw * t_s * delta_lambda_nm);
    return (n1 * n2 / denom).estimate();
}

Estimate mu_generated_rate(const CountSummary &counts, double gamma,
                           const OverlapFactors &overlap, double r1_hz, double r2_hz) {
    if (!(gamma > 0.0)) throw std::invalid_argument("splitting factor must be > 0");
    if (!(overlap.eta_s > 0.0 && overlap.eta_i > 0.0 && overlap.eta_pair > 0.0))
        throw std::invalid_argument("overlap factors must be > 0");
    if (!(counts.t1_ready_s > 0.0 && counts.t2_ready_s > 0.0 && counts.t_cc_ready_s > 0.0))
        return {0.0, 0.0, false};

    Meas rate1 = Meas::poisson(static_cast<double>(counts.n1)) /
                     Meas::exact(counts.t1_ready_s) -
                 Meas::exact(r1_hz);
    Meas rate2 = Meas::poisson(static_cast<double>(counts.n2)) /
                     Meas::exact(counts.t2_ready_s) -
                 Meas::exact(r2_hz);
    Meas n_mu = Meas::poisson(static_cast<double>(counts.c12)) -
                Meas::poisson(static_cast<double>(counts.acc12));
    if (!(n_mu.v > 0.0) || !(rate1.v > 0.0) || !(rate2.v > 0.0)) return {0.0, 0.0, false};

    double prefactor = gamma * overlap.eta_pair / (overlap.eta_s * overlap.eta_i);
    Meas mu = prefactor * (rate1 * rate2 * Meas::exact(counts.t_cc_ready_s) / n_mu);
    return mu.estimate();
}

Estimate mu_generated_per_pulse(const CountSummary &counts, double gamma,
                                const OverlapFactors &overlap, double r1_hz, double r2_hz,
                                double rep_rate_hz) {
    if (!(rep_rate_hz > 0.0)) throw std::invalid_argument("repetition rate must be > 0");
    Estimate rate = mu_generated_rate(counts, gamma, overlap, r1_hz, r2_hz);
    return {rate.value / rep_rate_hz, rate.sigma / rep_rate_hz, rate.valid};
}

double pump_photons_per_pulse(double pump_avg_w, double rep_rate_hz,
                              double pump_wavelength_nm) {
    if (!(rep_rate_hz > 0.0) || !(pump_wavelength_nm > 0.0))
        throw std::invalid_argument("pump photon count needs positive rate and wavelength");
    double pulse_energy_j = pump_avg_w / rep_rate_hz;
    double photon_energy_j = kPlanckJs * kLightMps / (pump_wavelength_nm * 1e-9);
    return pulse_energy_j / photon_energy_j;
}

Estimate conversion_efficiency(Estimate mu_per_pulse, double pump_photons) {
    if (!(pump_photons > 0.0)) throw std::invalid_argument("pump photons must be > 0");
    return {mu_per_pulse.value / pump_photons, mu_per_pulse.sigma / pump_photons,
            mu_per_pulse.valid};
}

Estimate spectral_conversion_efficiency(Estimate eta_conv, double bandwidth_thz) {
    if (!(bandwidth_thz > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
    return {eta_conv.value / bandwidth_thz, eta_conv.sigma / bandwidth_thz, eta_conv.valid};
}

Estimate brightness_from_mu(Estimate mu_rate_hz, double pump_mw, double delta_lambda_nm) {
    if (!(pump_mw > 0.0) || !(delta_lambda_nm > 0.0))
        throw std::invalid_argument("brightness needs positive pump power and bandwidth");
    double s = 1.0 / (pump_mw * delta_lambda_nm);
    return {mu_rate_hz.value * s, mu_rate_hz.sigma * s, mu_rate_hz.valid};
}

Estimate g2_heralded(const G2Counts &counts) {
    if (!(counts.c13.v > 0.0) || !(counts.c23.v > 0.0) || !(counts.n3.v > 0.0))
        return {0.0, 0.0, false};
    return (counts.c123 * counts.n3 / (counts.c13 * counts.c23)).estimate();
}

G2Prediction g2_predicted(double mu, const OverlapFactors &overlap, double t_s) {
    if (!(overlap.eta_pair > 0.0))
        throw std::invalid_argument("overlap factors must be > 0");
    G2Prediction p;
    p.approx = 2.0 * mu * overlap.eta_s * overlap.eta_i / overlap.eta_pair;
    p.exact = p.approx - mu * overlap.eta_s * t_s;
    return p;
}

double g2_unheralded(double schmidt_k) {
    if (!(schmidt_k >= 1.0))
        throw std::invalid_argument("Schmidt number must be >= 1");
    return 1.0 + 1.0 / schmidt_k;
}

Estimate weighted_average(std::span<const Estimate> estimates) {
    std::vector<Estimate> usable;
    for (const Estimate &e : estimates)
        if (e.valid) usable.push_back(e);
    if (usable.empty()) return {0.0, 0.0, false};
    if (usable.size() == 1) return usable.front();
    double sw = 0.0, swx = 0.0;
    for (const Estimate &e : usable) {
        if (!(e.sigma > 0.0))
            throw std::invalid_argument(
                "weighted average needs a nonzero uncertainty on every input");
        double w = 1.0 / (e.sigma * e.sigma);
        sw += w;
        swx += w * e.value;
    }
    return {swx / sw, std::sqrt(1.0 / sw), true};
}

} // namespace pairforge
