#pragma once
#include <cstddef>
#include <functional>
#include <vector>

#include "pairforge/source.hpp"
#include "pairforge/spectral.hpp"

namespace pairforge {

// Real amplitude on a uniform (signal x idler) frequency grid, Frobenius
// normalized. Row-major: a[i*ni + j] = psi(ws_i, wi_j).
struct JsaMatrix {
    FrequencyGrid signal;
    FrequencyGrid idler;
    std::vector<double> a;

    double at(std::size_t i, std::size_t j) const { return a[i * idler.n_points + j]; }
};

// 1-D amplitude profiles entering psi(ws, wi) = alpha(ws + wi) * phi(ws - wi).
using Profile = std::function<double(double)>;

// Transform-limited Gaussian pump pulse of the given intensity-FWHM duration:
// amplitude spectrum vs pump detuning (ws + wi - 2*nu0), THz.
Profile gaussian_pump_from_duration(double fwhm_ps);

// Pump amplitude from a sampled spectrum (values >= 0 are amplitudes).
Profile pump_from_spectrum(SpectralFunction spectrum, double two_nu0_thz);

// Pump amplitude from a sampled temporal intensity profile |E(t)|^2 of a
// transform-limited pulse: amplitude = sqrt(intensity), then a direct DFT.
Profile pump_from_temporal_intensity(const std::vector<double> &t_ps,
                                     const std::vector<double> &intensity,
                                     std::size_t n_freq = 2048);

enum class SincConvention {
    amplitude, // phi = sinc(x), default
    intensity  // phi = sinc^2(x)
};

// Phase matching vs the signal-idler difference frequency d = ws - wi:
// phi(d) = sinc(pi * d / first_zero) (or its square). The first zero is where
// dk*L/2 = pi, so first_zero scales as 1/L.
Profile sinc_phase_matching(double first_zero_thz,
                            SincConvention conv = SincConvention::amplitude);

// first_zero for a crystal of length L with linear phase mismatch slope
// dk/dd [rad / (mm THz)]: dk*L/2 = pi at d0 = 2*pi / (slope * L).
double sinc_first_zero_from_length(double length_mm, double dk_slope_rad_per_mm_thz);

// first_zero such that the *measured intensity spectrum* along the difference
// axis has the given FWHM under the chosen convention.
double sinc_first_zero_from_intensity_fwhm(double fwhm_thz, SincConvention conv);

// psi[i,j] = alpha(ws_i + wi_j - 2 nu0) * phi(ws_i - wi_j), then Frobenius
// normalization. OpenMP fills rows in parallel; bit-identical to serial.
JsaMatrix build_jsa(const Profile &pump_alpha, const Profile &pm_phi, double nu0_thz,
                    const FrequencyGrid &signal, const FrequencyGrid &idler,
                    Exec exec = Exec::openmp);

struct SchmidtSpectrum {
    std::vector<double> lambda; // descending, sums to 1
    double k = 0.0;             // 1 / sum(lambda^2)
};

// Schmidt coefficients = normalized squared singular values of the amplitude
// matrix, computed as eigenvalues of the Gram matrix psi^T psi (LAPACK; a
// banded solver kicks in automatically when the pump ridge is narrow, which
// is what makes strongly multimode grids tractable). Throws
// std::runtime_error if the eigensolver fails.
SchmidtSpectrum schmidt_decompose(const JsaMatrix &jsa);

} // namespace pairforge
