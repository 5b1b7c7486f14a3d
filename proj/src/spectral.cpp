#include "pairforge/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pairforge/errors.hpp"

namespace pairforge {

SpectralFunction::SpectralFunction(FrequencyGrid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
    if (grid_.n_points < 2) throw std::invalid_argument("spectral grid needs >= 2 points");
    if (values_.size() != grid_.n_points)
        throw std::invalid_argument("spectral grid/value size mismatch");
    if (!(grid_.span_thz > 0.0))
        throw std::invalid_argument("spectral grid span must be positive");
    for (double v : values_)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("spectral values must be finite and >= 0");
}

SpectralFunction SpectralFunction::flat(FrequencyGrid grid, double value) {
    return SpectralFunction(grid, std::vector<double>(grid.n_points, value));
}

bool SpectralFunction::covers(double f_thz) const {
    // half-step slack absorbs roundoff at the grid edges
    double eps = 0.5 * grid_.step() * 1e-9 + 1e-12;
    return f_thz >= grid_.lo() - eps && f_thz <= grid_.hi() + eps;
}

double SpectralFunction::at(double f_thz) const {
    if (!covers(f_thz)) {
        std::ostringstream os;
        os << "frequency " << f_thz << " THz outside sampled range [" << grid_.lo() << ", "
           << grid_.hi() << "]; refusing to extrapolate";
        throw std::domain_error(os.str());
    }
    double x = (f_thz - grid_.lo()) / grid_.step();
    if (x <= 0.0) return values_.front();
    auto i = static_cast<std::size_t>(x);
    if (i >= grid_.n_points - 1) return values_.back();
    double w = x - static_cast<double>(i);
    return values_[i] * (1.0 - w) + values_[i + 1] * w;
}

double SpectralFunction::integral() const {
    double s = 0.5 * (values_.front() + values_.back());
    for (std::size_t i = 1; i + 1 < values_.size(); ++i) s += values_[i];
    return s * grid_.step();
}

double SpectralFunction::max_value() const {
    return *std::max_element(values_.begin(), values_.end());
}

SpectralFunction load_spectral_function(const std::filesystem::path &file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open spectral file: " + file.string());
    std::vector<double> fs, vs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        for (char &c : line)
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        std::istringstream ls(line);
        double f, v;
        if (!(ls >> f)) continue; // blank / comment-only
        if (!(ls >> v))
            throw IoError(file.string() + ":" + std::to_string(lineno) +
                          ": expected 'frequency value'");
        if (!fs.empty() && f <= fs.back())
            throw IoError(file.string() + ":" + std::to_string(lineno) +
                          ": frequencies must be strictly increasing");
        fs.push_back(f);
        vs.push_back(v);
    }
    if (fs.size() < 2)
        throw IoError(file.string() + ": needs at least two samples");

    // resample onto a uniform grid covering the same range
    FrequencyGrid grid{0.5 * (fs.front() + fs.back()), fs.back() - fs.front(), fs.size()};
    std::vector<double> out(grid.n_points);
    std::size_t k = 0;
    for (std::size_t i = 0; i < grid.n_points; ++i) {
        double f = grid.point(i);
        while (k + 2 < fs.size() && fs[k + 1] < f) ++k;
        double w = (f - fs[k]) / (fs[k + 1] - fs[k]);
        w = std::clamp(w, 0.0, 1.0);
        out[i] = vs[k] * (1.0 - w) + vs[k + 1] * w;
    }
    return SpectralFunction(grid, std::move(out));
}

namespace {

// trapezoid of g(f) over the interval's own points, divided by the width
template <typename G>
double interval_average(const FrequencyGrid &interval, G &&g) {
    if (interval.n_points < 2)
        throw std::invalid_argument("overlap interval needs >= 2 points");
    if (!(interval.span_thz > 0.0))
        throw std::invalid_argument("overlap interval span must be positive");
    double s = 0.5 * (g(interval.point(0)) + g(interval.point(interval.n_points - 1)));
    for (std::size_t i = 1; i + 1 < interval.n_points; ++i) s += g(interval.point(i));
    return s * interval.step() / interval.span_thz;
}

} // namespace

double eta_single(const SpectralFunction &p, const FrequencyGrid &interval,
                  SpectralRole role, double nu0_thz) {
    double sign = role == SpectralRole::signal ? 1.0 : -1.0;
    return interval_average(interval, [&](double f) { return p.at(nu0_thz + sign * f); });
}

double eta_pair(const SpectralFunction &p_signal, const SpectralFunction &p_idler,
                const FrequencyGrid &interval, double nu0_thz) {
    return interval_average(interval, [&](double f) {
        return p_signal.at(nu0_thz + f) * p_idler.at(nu0_thz - f);
    });
}

OverlapFactors overlap_factors(const SpectralFunction &p_signal,
                               const SpectralFunction &p_idler,
                               const FrequencyGrid &interval, double nu0_thz) {
    OverlapFactors out;
    out.eta_s = eta_single(p_signal, interval, SpectralRole::signal, nu0_thz);
    out.eta_i = eta_single(p_idler, interval, SpectralRole::idler, nu0_thz);
    out.eta_pair = eta_pair(p_signal, p_idler, interval, nu0_thz);
    if (!(out.eta_pair > 0.0))
        throw std::domain_error("eta_pair is zero over the interval; channels do not overlap");
    return out;
}

} // namespace pairforge
