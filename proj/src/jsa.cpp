#include "pairforge/jsa.hpp"

#include <lapacke.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>

namespace pairforge {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kLn2 = 0.69314718055994530942;
// Gaussian time-bandwidth product (intensity FWHM x intensity FWHM)
constexpr double kGaussTbp = 2.0 * kLn2 / kPi;

double sinc(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}
} // namespace

Profile gaussian_pump_from_duration(double fwhm_ps) {
    if (!(fwhm_ps > 0.0)) throw std::invalid_argument("pulse duration must be > 0");
    double dnu_thz = kGaussTbp / fwhm_ps; // spectral intensity FWHM
    double c = 2.0 * kLn2 / (dnu_thz * dnu_thz);
    return [c](double f) { return std::exp(-c * f * f); };
}

Profile pump_from_spectrum(SpectralFunction spectrum, double two_nu0_thz) {
    return [spec = std::move(spectrum), two_nu0_thz](double f) {
        double nu = two_nu0_thz + f;
        return spec.covers(nu) ? spec.at(nu) : 0.0;
    };
}

Profile pump_from_temporal_intensity(const std::vector<double> &t_ps,
                                     const std::vector<double> &intensity,
                                     std::size_t n_freq) {
    if (t_ps.size() != intensity.size() || t_ps.size() < 4)
        throw std::invalid_argument("temporal profile needs >= 4 matching samples");
    if (n_freq < 16) throw std::invalid_argument("frequency table too small");
    std::size_t n = t_ps.size();
    for (std::size_t i = 1; i < n; ++i)
        if (!(t_ps[i] > t_ps[i - 1]))
            throw std::invalid_argument("temporal samples must be strictly increasing");

    std::vector<double> amp(n);
    double peak = 0.0;
    std::size_t ipeak = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (intensity[i] < 0.0)
            throw std::invalid_argument("temporal intensity must be >= 0");
        amp[i] = std::sqrt(intensity[i]);
        if (intensity[i] > peak) {
            peak = intensity[i];
            ipeak = i;
        }
    }
    if (!(peak > 0.0)) throw std::invalid_argument("temporal intensity is identically zero");

    // intensity FWHM from the samples fixes the span of the spectral table
    auto crossing = [&](bool left) {
        double half = 0.5 * peak;
        if (left) {
            for (std::size_t i = ipeak; i-- > 0;)
                if (intensity[i] <= half)
                    return t_ps[i] + (t_ps[i + 1] - t_ps[i]) * (half - intensity[i]) /
                                         (intensity[i + 1] - intensity[i]);
            return t_ps.front();
        }
        for (std::size_t i = ipeak + 1; i < n; ++i)
            if (intensity[i] <= half)
                return t_ps[i - 1] + (t_ps[i] - t_ps[i - 1]) * (intensity[i - 1] - half) /
                                         (intensity[i - 1] - intensity[i]);
        return t_ps.back();
    };
    double fwhm_ps = std::max(crossing(false) - crossing(true),
                              (t_ps.back() - t_ps.front()) / static_cast<double>(n));
    double f_max = 8.0 * kGaussTbp / fwhm_ps; // generous tail coverage

    // trapezoid quadrature weights for the (possibly nonuniform) time grid
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        double left = i == 0 ? t_ps[0] : t_ps[i - 1];
        double right = i + 1 == n ? t_ps[n - 1] : t_ps[i + 1];
        w[i] = 0.5 * (right - left);
    }

    auto table = std::make_shared<std::vector<double>>(n_freq);
    double df = 2.0 * f_max / static_cast<double>(n_freq - 1);
    double t0 = t_ps[ipeak]; // remove the linear phase of the peak position
    for (std::size_t k = 0; k < n_freq; ++k) {
        double f = -f_max + df * static_cast<double>(k);
        std::complex<double> s{0.0, 0.0};
        for (std::size_t i = 0; i < n; ++i) {
            double ph = 2.0 * kPi * f * (t_ps[i] - t0);
            s += w[i] * amp[i] * std::complex<double>(std::cos(ph), std::sin(ph));
        }
        (*table)[k] = std::abs(s);
    }
    double tmax = *std::max_element(table->begin(), table->end());
    if (tmax > 0.0)
        for (double &x : *table) x /= tmax;

    return [table, f_max, df](double f) {
        if (f <= -f_max || f >= f_max) return 0.0;
        double u = (f + f_max) / df;
        auto k = static_cast<std::size_t>(u);
        if (k + 1 >= table->size()) return table->back();
        double frac = u - static_cast<double>(k);
        return (*table)[k] * (1.0 - frac) + (*table)[k + 1] * frac;
    };
}

Profile sinc_phase_matching(double first_zero_thz, SincConvention conv) {
    if (!(first_zero_thz > 0.0)) throw std::invalid_argument("first zero must be > 0");
    double scale = kPi / first_zero_thz;
    if (conv == SincConvention::amplitude)
        return [scale](double d) { return sinc(scale * d); };
    return [scale](double d) {
        double s = sinc(scale * d);
        return s * s;
    };
}

double sinc_first_zero_from_length(double length_mm, double dk_slope_rad_per_mm_thz) {
    if (!(length_mm > 0.0) || !(dk_slope_rad_per_mm_thz > 0.0))
        throw std::invalid_argument("crystal length and mismatch slope must be > 0");
    return 2.0 * kPi / (dk_slope_rad_per_mm_thz * length_mm);
}

double sinc_first_zero_from_intensity_fwhm(double fwhm_thz, SincConvention conv) {
    if (!(fwhm_thz > 0.0)) throw std::invalid_argument("FWHM must be > 0");
    // measured intensity is sinc^2 (amplitude convention) or sinc^4 (intensity
    // convention); find the half-max argument by bisection on (0, pi)
    double target = conv == SincConvention::amplitude ? 0.5 : std::sqrt(0.5);
    double lo = 1e-9, hi = kPi - 1e-9;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double s = sinc(mid);
        (s * s > target ? lo : hi) = mid;
    }
    double x_half = 0.5 * (lo + hi);
    return kPi * fwhm_thz / (2.0 * x_half);
}

JsaMatrix build_jsa(const Profile &pump_alpha, const Profile &pm_phi, double nu0_thz,
                    const FrequencyGrid &signal, const FrequencyGrid &idler, Exec exec) {
    if (signal.n_points < 2 || idler.n_points < 2)
        throw std::invalid_argument("joint amplitude grids need >= 2 points per axis");
    JsaMatrix jsa{signal, idler, {}};
    std::size_t ns = signal.n_points, ni = idler.n_points;
    jsa.a.assign(ns * ni, 0.0);
    double two_nu0 = 2.0 * nu0_thz;

    auto fill_row = [&](std::size_t i) {
        double ws = signal.point(i);
        double *row = jsa.a.data() + i * ni;
        for (std::size_t j = 0; j < ni; ++j) {
            double wi = idler.point(j);
            row[j] = pump_alpha(ws + wi - two_nu0) * pm_phi(ws - wi);
        }
    };
    if (exec == Exec::openmp) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(ns); ++i)
            fill_row(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < ns; ++i) fill_row(i);
    }

    double ss = 0.0;
    for (double x : jsa.a) {
        if (!std::isfinite(x)) throw std::runtime_error("joint amplitude is not finite");
        ss += x * x;
    }
    if (!(ss > 0.0)) throw std::runtime_error("joint amplitude is identically zero");
    double inv = 1.0 / std::sqrt(ss);
    for (double &x : jsa.a) x *= inv;
    return jsa;
}

namespace {

// Eigenvalues of the Gram matrix W^T W for a row-major m x n matrix W. When
// every column of W has narrow row-support the Gram matrix is banded and a
// band eigensolver makes large grids cheap; otherwise a dense solver runs.
std::vector<double> gram_eigenvalues(const double *w, std::size_t m, std::size_t n) {
    double max_abs = 0.0;
    for (std::size_t i = 0; i < m * n; ++i) max_abs = std::max(max_abs, std::abs(w[i]));
    double threshold = max_abs * 1e-16;

    // per-column row-support [lo, hi]
    std::vector<std::size_t> lo(n, m), hi(n, 0);
    std::vector<bool> any(n, false);
    for (std::size_t i = 0; i < m; ++i) {
        const double *row = w + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(row[j]) > threshold) {
                if (!any[j]) lo[j] = i;
                any[j] = true;
                hi[j] = i;
            }
        }
    }
    // G[p][q] can be nonzero only when the supports of columns p and q share
    // rows; the half bandwidth is the widest such separation
    std::size_t kd = 0;
    for (std::size_t p = 0; p < n; ++p) {
        if (!any[p]) continue;
        for (std::size_t q = p + (kd ? kd : 1); q < n; ++q) {
            if (!any[q]) continue;
            if (lo[q] <= hi[p] && lo[p] <= hi[q]) kd = std::max(kd, q - p);
        }
    }

    auto col_dot = [&](std::size_t p, std::size_t q) {
        if (!any[p] || !any[q]) return 0.0;
        std::size_t a = std::max(lo[p], lo[q]);
        std::size_t b = std::min(hi[p], hi[q]);
        double s = 0.0;
        for (std::size_t i = a; i <= b; ++i) s += w[i * n + p] * w[i * n + q];
        return s;
    };

    std::vector<double> eig(n, 0.0);
    lapack_int info = 0;
    if (n > 512 && (kd + 1) * 8 < n) {
        // lower band storage, column major: ab[(q - p) + p * ldab] = G(q, p)
        auto ldab = static_cast<std::size_t>(kd + 1);
        std::vector<double> ab(ldab * n, 0.0);
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p; q <= std::min(p + kd, n - 1); ++q)
                ab[(q - p) + p * ldab] = col_dot(p, q);
        std::vector<double> z(1, 0.0);
        info = LAPACKE_dsbevd(LAPACK_COL_MAJOR, 'N', 'L', static_cast<lapack_int>(n),
                              static_cast<lapack_int>(kd), ab.data(),
                              static_cast<lapack_int>(ldab), eig.data(), z.data(), 1);
    } else {
        std::vector<double> g(n * n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const double *row = w + i * n;
            for (std::size_t p = 0; p < n; ++p) {
                double wip = row[p];
                if (std::abs(wip) <= threshold) continue;
                double *gp = g.data() + p * n;
                for (std::size_t q = p; q < n; ++q) gp[q] += wip * row[q];
            }
        }
        info = LAPACKE_dsyevd(LAPACK_ROW_MAJOR, 'N', 'U', static_cast<lapack_int>(n),
                              g.data(), static_cast<lapack_int>(n), eig.data());
    }
    if (info != 0)
        throw std::runtime_error("eigensolver failed with status " + std::to_string(info));
    return eig;
}

} // namespace

SchmidtSpectrum schmidt_decompose(const JsaMatrix &jsa) {
    std::size_t ns = jsa.signal.n_points, ni = jsa.idler.n_points;
    if (jsa.a.size() != ns * ni)
        throw std::invalid_argument("joint amplitude storage size mismatch");

    std::vector<double> eig;
    if (ni <= ns) {
        eig = gram_eigenvalues(jsa.a.data(), ns, ni);
    } else {
        std::vector<double> wt(ni * ns); // transpose so the Gram side is the small one
        for (std::size_t i = 0; i < ns; ++i)
            for (std::size_t j = 0; j < ni; ++j) wt[j * ns + i] = jsa.a[i * ni + j];
        eig = gram_eigenvalues(wt.data(), ni, ns);
    }

    SchmidtSpectrum out;
    out.lambda.reserve(eig.size());
    double sum = 0.0;
    for (double v : eig) {
        double lam = std::max(v, 0.0);
        out.lambda.push_back(lam);
        sum += lam;
    }
    if (!(sum > 0.0)) throw std::runtime_error("Schmidt spectrum is empty");
    std::sort(out.lambda.begin(), out.lambda.end(), std::greater<>());
    double sum_sq = 0.0;
    for (double &lam : out.lambda) {
        lam /= sum;
        sum_sq += lam * lam;
    }
    out.k = 1.0 / sum_sq;
    return out;
}

} // namespace pairforge
