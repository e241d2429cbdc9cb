#include <catch2/catch_amalgamated.hpp>

#include "biphoton/fft.hpp"
#include "biphoton/modes.hpp"
#include "biphoton/spdc.hpp"

using namespace biphoton;

TEST_CASE("thin crystal state is the half-waist pump") {
    GridSpec g{256, 0.04};
    const double w = 1.2;
    BiphotonState st = thin_crystal_state(evaluate_mode(ModeSpec::lg(0, 1, w), g), w);
    CHECK(norm_sq(st.psi) == Catch::Approx(1.0));
    ComplexField half = evaluate_mode(ModeSpec::lg(0, 1, w / 2.0), g);
    CHECK(field_fidelity(st.psi, half) > 1.0 - 1e-6);
    CHECK(st.pump_waist == w);
}

TEST_CASE("cos(3 phi) pump gives six alternating 0/pi phase sectors") {
    GridSpec g{256, 0.055};
    const double w = 1.2;
    auto sup = ModeSpec::superposition({{1.0, ModeSpec::lg(1, 3, w)}, {1.0, ModeSpec::lg(1, -3, w)}}, w);
    BiphotonState st = thin_crystal_state(evaluate_mode(sup, g), w);
    // ring inside the radial node of L_1^3, where the radial part is positive
    const double r = 0.4;
    int flips = 0;
    double prev = 0.0;
    for (int k = 0; k < 360; ++k) {
        const double phi = 2.0 * kPi * k / 360.0;
        const int i = static_cast<int>(std::lround(r * std::cos(phi) / g.pitch)) + g.n / 2;
        const int j = static_cast<int>(std::lround(r * std::sin(phi) / g.pitch)) + g.n / 2;
        const cplx v = st.psi.at(i, j);
        if (std::abs(v) < 1e-6) continue;
        // phase is 0 or pi up to numerical noise
        const double ph = std::arg(v);
        CHECK((std::abs(ph) < 1e-6 || std::abs(std::abs(ph) - kPi) < 1e-6));
        const double sign = std::cos(ph);
        if (k > 0 && sign * prev < 0.0) ++flips;
        prev = sign;
    }
    CHECK(flips == 6);
}

TEST_CASE("under-resolved pump is rejected") {
    GridSpec g{64, 0.1};
    ComplexField pump = evaluate_mode(ModeSpec::lg(0, 0, 0.21), g); // half-waist ~ 1 px
    CHECK_THROWS_AS(thin_crystal_state(pump), std::runtime_error);
}

TEST_CASE("reference field") {
    GridSpec g{128, 0.055};

    SECTION("untilted limit is a plain Gaussian") {
        ReferenceSpec ref{2.0, std::numeric_limits<double>::infinity(), 1.0};
        ComplexField f = reference_field(ref, g);
        for (int i = 30; i < 100; i += 10)
            for (int j = 30; j < 100; j += 10) {
                CHECK(f.at(i, j).imag() == 0.0);
                const double r2 = f.x(i) * f.x(i) + f.y(j) * f.y(j);
                CHECK(f.at(i, j).real() == Catch::Approx(std::exp(-r2 / 4.0)));
            }
    }

    SECTION("carrier phase advances 2 pi pitch / Lambda per pixel") {
        ReferenceSpec ref{6.0, 0.44, 1.0};
        ComplexField f = reference_field(ref, g);
        const double expected = 2.0 * kPi * g.pitch / ref.lambda;
        for (int i = 50; i < 70; ++i) {
            double d = std::arg(f.at(i + 1, 64)) - std::arg(f.at(i, 64));
            while (d > kPi) d -= 2.0 * kPi;
            while (d < -kPi) d += 2.0 * kPi;
            CHECK(d == Catch::Approx(expected).margin(1e-9));
        }
    }

    SECTION("spectrum peaks at the carrier wavevector") {
        ReferenceSpec ref{6.0, 0.44, 1.0};
        ComplexField F = fourier_transform(reference_field(ref, g), FtDirection::Forward);
        int bi = 0, bj = 0;
        double best = -1.0;
        for (int i = 0; i < g.n; ++i)
            for (int j = 0; j < g.n; ++j)
                if (std::abs(F.at(i, j)) > best) { best = std::abs(F.at(i, j)); bi = i; bj = j; }
        const double dq = F.grid.pitch;
        CHECK(F.x(bi) == Catch::Approx(2.0 * kPi / ref.lambda).margin(dq));
        CHECK(F.y(bj) == Catch::Approx(2.0 * kPi / ref.lambda).margin(dq));
    }

    SECTION("aliased carrier is rejected") {
        ReferenceSpec ref{6.0, 0.1, 1.0}; // Lambda < 2 pitch
        CHECK_THROWS_AS(reference_field(ref, g), std::invalid_argument);
    }
}

TEST_CASE("coincidence_diagonal") {
    GridSpec g{128, 0.05};
    const double w = 1.0;
    ComplexField pump = evaluate_mode(ModeSpec::lg(0, 0, w), g);

    SECTION("pump-only image equals |psi|^2 up to scale") {
        CoincidenceImage img = coincidence_diagonal(pump);
        BiphotonState st = thin_crystal_state(pump, w);
        // proportionality: img / |psi|^2 constant where psi is non-negligible
        double ratio = 0.0;
        for (std::size_t k = 0; k < img.counts.size(); ++k) {
            const double p2 = std::norm(st.psi.values[k]);
            if (p2 < 1e-8) continue;
            const double r = img.counts[k] / p2;
            if (ratio == 0.0) ratio = r;
            CHECK(r == Catch::Approx(ratio).epsilon(1e-9));
        }
    }

    SECTION("ref equal to pump quadruples the image") {
        CoincidenceImage solo = coincidence_diagonal(pump);
        CoincidenceImage both = coincidence_diagonal(pump, &pump);
        for (std::size_t k = 0; k < solo.counts.size(); ++k)
            CHECK(both.counts[k] == Catch::Approx(4.0 * solo.counts[k]).margin(1e-15));
    }

    SECTION("tilted reference makes fringes of period Lambda/2") {
        ReferenceSpec rs{6.0, 8.0 * g.pitch, 1.0};
        ComplexField ref = reference_field(rs, g);
        CoincidenceImage img = coincidence_diagonal(pump, &ref);
        // fringe maxima along x inside the pump spot (the half-waist state
        // confines the cross term to the grid center)
        std::vector<int> peaks;
        for (int i = 52; i <= 76; ++i)
            if (img.at(i, 64) > img.at(i - 1, 64) && img.at(i, 64) > img.at(i + 1, 64))
                peaks.push_back(i);
        REQUIRE(peaks.size() >= 3);
        const double period_px = static_cast<double>(peaks.back() - peaks.front()) / (peaks.size() - 1);
        CHECK(period_px * g.pitch == Catch::Approx(rs.lambda / 2.0).epsilon(0.05));
    }

    SECTION("total count scaling") {
        CoincidenceImage img = coincidence_diagonal(pump, nullptr, 12345.0);
        CHECK(img.total() == Catch::Approx(12345.0));
    }

    SECTION("interference bound holds pointwise") {
        ReferenceSpec rs{6.0, 0.44, 0.7};
        ComplexField ref = reference_field(rs, g);
        ComplexField pump2 = evaluate_mode(ModeSpec::lg(1, 2, w), g);
        CoincidenceImage img = coincidence_diagonal(pump2, &ref);
        const ComplexField p2 = resample_scaled(pump2, 2.0);
        const ComplexField r2 = resample_scaled(ref, 2.0);
        for (std::size_t k = 0; k < img.counts.size(); ++k) {
            const double a = std::abs(p2.values[k]), b = std::abs(r2.values[k]);
            CHECK(img.counts[k] >= (a - b) * (a - b) - 1e-12);
            CHECK(img.counts[k] <= (a + b) * (a + b) + 1e-12);
        }
    }

    SECTION("grid mismatch") {
        GridSpec g2{128, 0.06};
        ComplexField ref(g2);
        CHECK_THROWS_AS(coincidence_diagonal(pump, &ref), std::invalid_argument);
    }
}

TEST_CASE("phase matching amplitude") {
    PhaseMatchingParams pm{93.0, 9.1e-6, 0.0};
    CHECK(phase_matching_amplitude(3.0, 4.0, 3.0, 4.0, pm) == Catch::Approx(93.0));

    // first zero: alpha |dq|^2 + zeta = pi
    const double dq = std::sqrt(kPi / pm.alpha);
    CHECK(phase_matching_amplitude(dq, 0.0, 0.0, 0.0, pm) == Catch::Approx(0.0).margin(1e-9));

    PhaseMatchingParams paper{93.0, 9.1e-6, 0.30};
    CHECK(phase_matching_amplitude(0.0, 0.0, 0.0, 0.0, paper) ==
          Catch::Approx(93.0 * std::sin(0.3) / 0.3));
    CHECK_THROWS_AS(phase_matching_amplitude(0, 0, 0, 0, PhaseMatchingParams{93.0, -1.0, 0.0}),
                    std::invalid_argument);
}

TEST_CASE("far-field singles") {
    PhaseMatchingParams pm{93.0, 9.1e-6, 0.0};
    GridSpec qg{256, 4.0};

    SECTION("center value is A for zeta = 0") {
        CoincidenceImage img = far_field_singles(pm, qg);
        CHECK(img.at(128, 128) == Catch::Approx(93.0));
        CHECK(img.plane == ImagePlane::FarField);
    }

    SECTION("ring of zeros at the first sinc root") {
        PhaseMatchingParams p2{93.0, 9.1e-6, 0.30};
        CoincidenceImage img = far_field_singles(p2, qg, PhaseMatchingModel::Sinc);
        const double q0 = std::sqrt((kPi - p2.zeta) / (4.0 * p2.alpha));
        // sample the model near the root along +x
        int closest = 0;
        double bestd = 1e18;
        for (int i = 128; i < 256; ++i)
            if (std::abs(qg.coord(i) - q0) < bestd) { bestd = std::abs(qg.coord(i) - q0); closest = i; }
        CHECK(std::abs(img.at(closest, 128)) < 93.0 * 0.03);
    }

    SECTION("exact 90-degree rotation symmetry") {
        CoincidenceImage img = far_field_singles(pm, qg, PhaseMatchingModel::SincSquared);
        for (int i = 1; i < qg.n; i += 17)
            for (int j = 1; j < qg.n; j += 13)
                CHECK(img.at(i, j) == img.at(qg.n - j, i));
    }

    SECTION("sinc model is the signed amplitude") {
        PhaseMatchingParams p2{10.0, 9.1e-6, 0.0};
        CoincidenceImage img = far_field_singles(p2, qg, PhaseMatchingModel::Sinc);
        double most_negative = 0.0;
        for (double v : img.counts) most_negative = std::min(most_negative, v);
        CHECK(most_negative < -0.5); // first sinc lobe dips to about -0.217 A
        CoincidenceImage img2 = far_field_singles(p2, qg, PhaseMatchingModel::SincSquared);
        for (double v : img2.counts) CHECK(v >= 0.0);
    }
}

TEST_CASE("poisson noise") {
    GridSpec g{16, 1.0};

    SECTION("zero image stays zero, zero set preserved") {
        CoincidenceImage img(g, ImagePlane::Image);
        img.at(3, 3) = 50.0;
        CoincidenceImage noisy = add_poisson_noise(img, 1);
        for (int i = 0; i < g.n; ++i)
            for (int j = 0; j < g.n; ++j)
                if (i != 3 || j != 3) CHECK(noisy.at(i, j) == 0.0);
    }

    SECTION("deterministic per seed") {
        CoincidenceImage img(g, ImagePlane::Image);
        for (double& v : img.counts) v = 7.5;
        CoincidenceImage a = add_poisson_noise(img, 42);
        CoincidenceImage b = add_poisson_noise(img, 42);
        CoincidenceImage c = add_poisson_noise(img, 43);
        CHECK(a.counts == b.counts);
        CHECK(a.counts != c.counts);
    }

    SECTION("total of a 1e6-count image stays within 4 sigma") {
        GridSpec g2{64, 1.0};
        CoincidenceImage img(g2, ImagePlane::Image);
        for (double& v : img.counts) v = 1e6 / img.counts.size();
        const double total = add_poisson_noise(img, 7).total();
        CHECK(std::abs(total - 1e6) < 4.0 * std::sqrt(1e6));
    }

    SECTION("per-pixel sample variance matches the mean within 5%") {
        CoincidenceImage img(g, ImagePlane::Image);
        img.at(2, 2) = 3.7;
        img.at(5, 9) = 12.4;
        img.at(10, 4) = 40.0;
        const int n_seeds = 10000;
        std::vector<std::pair<int, int>> px = {{2, 2}, {5, 9}, {10, 4}};
        for (auto [i, j] : px) {
            double sum = 0.0, sum2 = 0.0;
            for (int s = 0; s < n_seeds; ++s) {
                const double v = add_poisson_noise(img, 1000 + s).at(i, j);
                sum += v;
                sum2 += v * v;
            }
            const double mean = sum / n_seeds;
            const double var = sum2 / n_seeds - mean * mean;
            CHECK(var == Catch::Approx(img.at(i, j)).epsilon(0.05));
        }
    }
}
