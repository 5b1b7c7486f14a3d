#pragma once
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pairforge {

// Uniform frequency axis. All frequencies in THz.
struct FrequencyGrid {
    double center_thz = 0.0;
    double span_thz = 0.0;
    std::size_t n_points = 0;

    double lo() const { return center_thz - 0.5 * span_thz; }
    double hi() const { return center_thz + 0.5 * span_thz; }
    double step() const {
        return n_points > 1 ? span_thz / static_cast<double>(n_points - 1) : 0.0;
    }
    double point(std::size_t i) const { return lo() + step() * static_cast<double>(i); }
};

// Nonnegative sampled function of frequency on a uniform grid (filter
// transmission, spectral density, ...). Evaluation is linear interpolation;
// querying outside the grid is a hard error, never extrapolation.
class SpectralFunction {
  public:
    SpectralFunction() = default;
    SpectralFunction(FrequencyGrid grid, std::vector<double> values);

    static SpectralFunction flat(FrequencyGrid grid, double value);
    template <typename F> static SpectralFunction tabulate(FrequencyGrid grid, F &&f) {
        std::vector<double> v(grid.n_points);
        for (std::size_t i = 0; i < grid.n_points; ++i) v[i] = f(grid.point(i));
        return SpectralFunction(grid, std::move(v));
    }

    const FrequencyGrid &grid() const { return grid_; }
    const std::vector<double> &values() const { return values_; }

    bool covers(double f_thz) const;
    double at(double f_thz) const; // throws std::domain_error outside the grid

    // trapezoid over the full grid
    double integral() const;

    double max_value() const;

  private:
    FrequencyGrid grid_;
    std::vector<double> values_;
};

// Two-column text file "frequency_thz value" (comma or whitespace separated,
// '#' comments). Non-uniform input is resampled onto a uniform grid spanning
// the same range with the same point count.
SpectralFunction load_spectral_function(const std::filesystem::path &file);

enum class SpectralRole { signal, idler };

// Single-photon passage factor: the interval-averaged transmission seen by
// the signal (nu0 + f) or idler (nu0 - f) photon while the pair offset f
// sweeps the interval.
//   eta = (1/dF) Int_F p(nu0 +/- f) df
double eta_single(const SpectralFunction &p, const FrequencyGrid &interval,
                  SpectralRole role, double nu0_thz);

// Pair passage factor with the idler at the conjugate frequency:
//   eta_pair = (1/dF) Int_F p_s(nu0 + f) p_i(nu0 - f) df
double eta_pair(const SpectralFunction &p_signal, const SpectralFunction &p_idler,
                const FrequencyGrid &interval, double nu0_thz);

struct OverlapFactors {
    double eta_s = 1.0;
    double eta_i = 1.0;
    double eta_pair = 1.0;

    // eta_s*eta_i/eta_pair, the factor relating heralded g2 to mu
    double ratio() const { return eta_s * eta_i / eta_pair; }
};

OverlapFactors overlap_factors(const SpectralFunction &p_signal,
                               const SpectralFunction &p_idler,
                               const FrequencyGrid &interval, double nu0_thz);

} // namespace pairforge
