#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "pairforge/errors.hpp"
#include "pairforge/spectral.hpp"

using namespace pairforge;

namespace {

std::filesystem::path temp_file(const char *name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("frequency grid geometry") {
    FrequencyGrid g{193.55, 1.0, 5};
    CHECK(g.lo() == doctest::Approx(193.05));
    CHECK(g.hi() == doctest::Approx(194.05));
    CHECK(g.step() == doctest::Approx(0.25));
    CHECK(g.point(0) == doctest::Approx(193.05));
    CHECK(g.point(4) == doctest::Approx(194.05));
}

TEST_CASE("evaluation interpolates linearly and refuses extrapolation") {
    FrequencyGrid g{0.0, 4.0, 5}; // points -2,-1,0,1,2
    SpectralFunction f(g, {0.0, 1.0, 4.0, 9.0, 16.0});
    CHECK(f.at(-1.0) == doctest::Approx(1.0));
    CHECK(f.at(0.5) == doctest::Approx(6.5));   // midpoint of 4 and 9
    CHECK(f.at(-1.5) == doctest::Approx(0.5));  // midpoint of 0 and 1
    CHECK(f.covers(2.0));
    CHECK_FALSE(f.covers(2.0001));
    CHECK_THROWS_AS((void)f.at(2.1), std::domain_error);
    CHECK_THROWS_AS((void)f.at(-2.1), std::domain_error);
}

TEST_CASE("constructor validation") {
    FrequencyGrid g{0.0, 1.0, 3};
    CHECK_THROWS_AS(SpectralFunction(g, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(SpectralFunction(g, {1.0, -0.5, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(SpectralFunction(FrequencyGrid{0, 1, 1}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(SpectralFunction(FrequencyGrid{0, 0, 4}, {1, 1, 1, 1}),
                    std::invalid_argument);
}

TEST_CASE("trapezoid integral is exact for linear data and converges otherwise") {
    // linear: trapezoid rule is exact
    FrequencyGrid g{5.0, 2.0, 9};
    auto lin = SpectralFunction::tabulate(g, [](double f) { return 3.0 * f + 1.0; });
    // integral of 3f+1 over [4,6] = 3*(36-16)/2 + 2 = 32
    CHECK(lin.integral() == doctest::Approx(32.0).epsilon(1e-12));

    // quadratic: O(h^2) error, halving the step quarters it
    auto quad_err = [](std::size_t n) {
        FrequencyGrid gq{0.0, 2.0, n};
        auto q = SpectralFunction::tabulate(gq, [](double f) { return f * f; });
        return std::abs(q.integral() - 2.0 / 3.0);
    };
    double e1 = quad_err(17), e2 = quad_err(33);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("flat conjugate filters pass everything") {
    FrequencyGrid fg{193.55, 2.0, 64};
    auto flat = SpectralFunction::flat(fg, 1.0);
    FrequencyGrid interval{0.2, 0.13, 65};
    auto fac = overlap_factors(flat, flat, interval, 193.55);
    CHECK(fac.eta_s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fac.eta_i == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fac.eta_pair == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fac.ratio() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("eighth-order supergaussian filters against the closed-form integrals") {
    // transmission exp(-ln2 (2(v-c)/w)^8), w = 81 GHz, centered on the channel;
    // expected values are the analytic interval averages of p and p^2
    const double fwhm = 0.081, nu0 = 193.55;
    auto shape = [&](double center) {
        return [=](double v) {
            double u = 2.0 * (v - center) / fwhm;
            double u2 = u * u, u4 = u2 * u2;
            return std::exp(-std::numbers::ln2 * u4 * u4);
        };
    };
    FrequencyGrid sgrid{193.75, 0.26, 2001};
    FrequencyGrid igrid{193.35, 0.26, 2001};
    auto ps = SpectralFunction::tabulate(sgrid, shape(193.75));
    auto pi = SpectralFunction::tabulate(igrid, shape(193.35));
    FrequencyGrid interval{0.2, 0.13, 2001};

    auto fac = overlap_factors(ps, pi, interval, nu0);
    CHECK(fac.eta_s == doctest::Approx(0.6142861820763074).epsilon(1e-4));
    CHECK(fac.eta_i == doctest::Approx(0.6142861820763074).epsilon(1e-4));
    CHECK(fac.eta_pair == doctest::Approx(0.5633029126487008).epsilon(1e-4));
    CHECK(fac.ratio() == doctest::Approx(0.6698838316236719).epsilon(1e-4));

    // role asymmetry: the signal filter is evaluated at nu0+f, the idler
    // filter at nu0-f, so swapping one filter onto the wrong side must fail
    // the coverage check
    CHECK_THROWS(eta_single(ps, interval, SpectralRole::idler, nu0));
}

TEST_CASE("pair factor never exceeds either single factor for physical filters") {
    std::mt19937 gen(99);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    FrequencyGrid interval{0.2, 0.1, 101};
    for (int trial = 0; trial < 20; ++trial) {
        FrequencyGrid sg{193.75, 0.3, 41}, ig{193.35, 0.3, 41};
        std::vector<double> vs(41), vi(41);
        for (auto &v : vs) v = U(gen);
        for (auto &v : vi) v = U(gen);
        SpectralFunction ps(sg, vs), pi(ig, vi);
        auto fac = overlap_factors(ps, pi, interval, 193.55);
        CHECK(fac.eta_pair <= fac.eta_s + 1e-12);
        CHECK(fac.eta_pair <= fac.eta_i + 1e-12);
        CHECK(fac.ratio() >= fac.eta_s * fac.eta_i - 1e-12); // since eta_pair <= 1
    }
}

TEST_CASE("refining the interval grid leaves the smooth factors unchanged") {
    auto gauss = [](double v) {
        double u = (v - 193.75) / 0.05;
        return std::exp(-u * u);
    };
    FrequencyGrid sg{193.75, 0.4, 801}, ig{193.35, 0.4, 801};
    auto ps = SpectralFunction::tabulate(sg, gauss);
    auto pi = SpectralFunction::tabulate(ig, [&](double v) { return gauss(v + 0.4); });
    FrequencyGrid coarse{0.2, 0.15, 201}, fine{0.2, 0.15, 801};
    auto a = overlap_factors(ps, pi, coarse, 193.55);
    auto b = overlap_factors(ps, pi, fine, 193.55);
    CHECK(a.eta_s == doctest::Approx(b.eta_s).epsilon(2e-5));
    CHECK(a.eta_pair == doctest::Approx(b.eta_pair).epsilon(2e-5));
}

TEST_CASE("spectral file loader resamples onto a uniform grid") {
    auto path = temp_file("pf_spectral_ok.txt");
    {
        std::ofstream out(path);
        out << "# transmission table\n";
        out << "193.0, 0.0\n";
        out << "193.5  0.5   # inline comment\n";
        out << "194.0\t1.0\n";
        out << "194.5 0.0\n";
    }
    // uniform input: values survive the resampling unchanged
    auto f = load_spectral_function(path);
    CHECK(f.grid().n_points == 4);
    CHECK(f.grid().lo() == doctest::Approx(193.0));
    CHECK(f.grid().hi() == doctest::Approx(194.5));
    CHECK(f.at(193.0) == doctest::Approx(0.0));
    CHECK(f.at(194.0) == doctest::Approx(1.0));
    CHECK(f.at(194.25) == doctest::Approx(0.5)); // linear between 1.0 and 0.0
    CHECK(f.max_value() == doctest::Approx(1.0));

    // non-uniform input is interpolated onto the uniform grid
    {
        std::ofstream out(path);
        out << "193.0 0.0\n193.5 0.5\n194.0 1.0\n195.0 0.0\n";
    }
    auto g = load_spectral_function(path);
    CHECK(g.grid().n_points == 4); // nodes 193, 193:40, 194:20, 195
    CHECK(g.at(193.0) == doctest::Approx(0.0));
    CHECK(g.at(195.0) == doctest::Approx(0.0));
    // interior nodes read off the piecewise-linear input
    CHECK(g.at(193.0 + 2.0 / 3.0) == doctest::Approx(0.5 + (1.0 / 6.0) / 0.5 * 0.5));
    CHECK(g.at(193.0 + 4.0 / 3.0) == doctest::Approx(1.0 - 1.0 / 3.0));
    std::filesystem::remove(path);
}

TEST_CASE("spectral file loader failure modes are I/O errors") {
    CHECK_THROWS_AS((void)load_spectral_function("/nonexistent/dir/f.txt"), IoError);

    auto path = temp_file("pf_spectral_bad.txt");
    {
        std::ofstream out(path);
        out << "193.0 1.0\n192.0 1.0\n"; // decreasing frequency
    }
    CHECK_THROWS_AS((void)load_spectral_function(path), IoError);
    {
        std::ofstream out(path);
        out << "193.0 1.0\n"; // single sample
    }
    CHECK_THROWS_AS((void)load_spectral_function(path), IoError);
    {
        std::ofstream out(path);
        out << "193.0 oops\n193.5 1\n";
    }
    CHECK_THROWS_AS((void)load_spectral_function(path), IoError);
    std::filesystem::remove(path);
}

TEST_CASE("disjoint channels make the pair factor a hard error") {
    FrequencyGrid sg{193.75, 0.1, 11}, ig{193.35, 0.1, 11};
    auto ps = SpectralFunction::flat(sg, 1.0);
    std::vector<double> zero(11, 0.0);
    SpectralFunction pi(ig, zero);
    FrequencyGrid interval{0.2, 0.05, 11};
    CHECK_THROWS_AS((void)overlap_factors(ps, pi, interval, 193.55), std::domain_error);
}
