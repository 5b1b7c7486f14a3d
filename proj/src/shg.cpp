#include "pairforge/shg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pairforge {

double shg_power_w(double p_peak_w, const ShgParams &params) {
    if (p_peak_w < 0.0) throw std::invalid_argument("fundamental power must be >= 0");
    double x = std::sqrt(params.eta_bk * params.c * p_peak_w);
    double t = std::tanh(x);
    return params.c * params.c * p_peak_w * t * t;
}

double peak_from_average_w(double p_avg_w, double rep_rate_hz, double pulse_fwhm_s) {
    if (!(rep_rate_hz > 0.0) || !(pulse_fwhm_s > 0.0))
        throw std::invalid_argument("repetition rate and pulse width must be > 0");
    double duty = rep_rate_hz * pulse_fwhm_s;
    if (duty >= 1.0) throw std::invalid_argument("duty cycle >= 1, not a pulsed pump");
    return p_avg_w / duty;
}

namespace {

// residual and analytic Jacobian rows of the tanh model
void model_row(double p, const ShgParams &th, double &f, double &dc, double &de) {
    double x = std::sqrt(th.eta_bk * th.c * p);
    double t = std::tanh(x);
    double s2 = 1.0 - t * t; // sech^2
    f = th.c * th.c * p * t * t;
    // d/dc: 2cPt^2 + c^2 P * 2 t s2 * dx/dc, dx/dc = x/(2c)
    dc = 2.0 * th.c * p * t * t + (x > 0 ? th.c * th.c * p * t * s2 * x / th.c : 0.0);
    // d/deta: c^2 P * 2 t s2 * x/(2 eta)
    de = x > 0 ? th.c * th.c * p * t * s2 * x / th.eta_bk : 0.0;
}

} // namespace

ShgFitResult fit_shg(std::span<const double> p_peak_w, std::span<const double> p_shg_w,
                     ShgParams initial) {
    if (p_peak_w.size() != p_shg_w.size())
        throw std::invalid_argument("power/signal arrays differ in length");
    if (p_peak_w.size() < 2) throw std::invalid_argument("need at least two data points");
    double pmin = *std::min_element(p_peak_w.begin(), p_peak_w.end());
    double pmax = *std::max_element(p_peak_w.begin(), p_peak_w.end());
    if (!(pmin >= 0.0) || pmax == pmin)
        throw std::invalid_argument("need at least two distinct nonnegative powers");
    if (*std::max_element(p_shg_w.begin(), p_shg_w.end()) <= 0.0)
        throw std::invalid_argument("SHG response is identically zero");
    if (!(initial.c > 0.0) || !(initial.eta_bk > 0.0))
        throw std::invalid_argument("initial parameters must be positive");

    auto rss_of = [&](const ShgParams &th) {
        double s = 0.0;
        for (std::size_t i = 0; i < p_peak_w.size(); ++i) {
            double d = shg_power_w(p_peak_w[i], th) - p_shg_w[i];
            s += d * d;
        }
        return s;
    };

    ShgParams th = initial;
    double rss = rss_of(th);
    double lm = 1e-3; // Levenberg damping
    int it = 0;
    bool converged = false;
    for (; it < 200; ++it) {
        // normal equations J^T J dx = -J^T r (2x2)
        double a11 = 0, a12 = 0, a22 = 0, g1 = 0, g2 = 0;
        for (std::size_t i = 0; i < p_peak_w.size(); ++i) {
            double f, dc, de;
            model_row(p_peak_w[i], th, f, dc, de);
            double r = f - p_shg_w[i];
            a11 += dc * dc;
            a12 += dc * de;
            a22 += de * de;
            g1 += dc * r;
            g2 += de * r;
        }
        bool stepped = false;
        for (int tries = 0; tries < 40; ++tries) {
            double b11 = a11 * (1.0 + lm), b22 = a22 * (1.0 + lm);
            double det = b11 * b22 - a12 * a12;
            if (det == 0.0) {
                lm *= 10.0;
                continue;
            }
            double sc = (-g1 * b22 + g2 * a12) / det;
            double se = (-g2 * b11 + g1 * a12) / det;
            ShgParams cand{th.c + sc, th.eta_bk + se};
            if (!(cand.c > 0.0) || !(cand.eta_bk > 0.0) || !std::isfinite(cand.c) ||
                !std::isfinite(cand.eta_bk)) {
                lm *= 10.0;
                continue;
            }
            double cand_rss = rss_of(cand);
            if (cand_rss <= rss) {
                double rel = std::max(std::abs(sc) / th.c, std::abs(se) / th.eta_bk);
                th = cand;
                bool tiny = rss - cand_rss <= 1e-30 + 1e-14 * rss;
                rss = cand_rss;
                lm = std::max(lm * 0.3, 1e-12);
                stepped = true;
                if (rel < 1e-13 || tiny) converged = true;
                break;
            }
            lm *= 10.0;
        }
        if (!stepped) {
            converged = true; // damping exhausted at a (local) minimum
            break;
        }
        if (converged) break;
    }
    return {th, rss, it + 1, converged};
}

} // namespace pairforge
