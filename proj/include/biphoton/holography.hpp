// Off-axis holographic recovery of the biphoton wavefunction from coincidence
// images: Fourier-domain sideband extraction for the phase, square root of the
// pump-only image for the amplitude, and their combination.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "biphoton/fft.hpp"
#include "biphoton/grid.hpp"
#include "biphoton/spdc.hpp"

namespace biphoton {

struct carrier_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SidebandFilter {
    enum class Window { Hard, RaisedCosine };

    std::array<double, 2> carrier{0.0, 0.0}; // rad/mm; nominal, refined by peak search
    double radius = 0.0;                     // rad/mm; 0 = auto (half carrier-to-DC distance)
    Window window = Window::RaisedCosine;

    // Nominal filter for an interferogram in the crystal plane: the 2 rho
    // argument doubles the reference tilt, so fringes sit at 4 pi / Lambda.
    static SidebandFilter nominal(const ReferenceSpec& ref, const GridSpec& grid) {
        SidebandFilter f;
        if (!std::isfinite(ref.lambda))
            throw std::invalid_argument("SidebandFilter: untilted reference has no carrier");
        f.carrier = {2.0 * 2.0 * kPi / ref.lambda, 2.0 * 2.0 * kPi / ref.lambda};
        f.radius = 0.0;
        (void)grid;
        return f;
    }

    void validate() const {
        const double c = std::hypot(carrier[0], carrier[1]);
        if (!(c > 0.0)) throw std::invalid_argument("SidebandFilter: zero carrier");
        if (radius < 0.0) throw std::invalid_argument("SidebandFilter: negative radius");
        if (radius > 0.0 && !(radius < 0.5 * c))
            throw std::invalid_argument("SidebandFilter: radius must be < |carrier|/2");
    }
};

struct HologramDiagnostics {
    std::array<double, 2> carrier_found{0.0, 0.0}; // rad/mm
    double peak_to_floor = 0.0;                    // peak / median over the search half-plane
    double radius_used = 0.0;                      // rad/mm
    double sideband_energy_total = 0.0;            // |F|^2 over the search half-plane
    double sideband_energy_kept = 0.0;             // |w F|^2 inside the filter
    double clipped_fraction = 0.0;
};

namespace detail {

// Window the lobe around an integer-bin center, recenter it to zero frequency
// and inverse transform. Tukey-style raised cosine: flat out to radius/2, then
// a cosine rolloff (suppresses ringing without attenuating the passband).
inline ComplexField extract_lobe(const ComplexField& spec, int pi, int pj, double radius,
                                 SidebandFilter::Window window, double* kept_energy) {
    const int n = spec.grid.n;
    const double qpx = spec.grid.coord(pi), qpy = spec.grid.coord(pj);
    ComplexField shifted(spec.grid);
    double kept = 0.0;
    const int oi = pi - n / 2, oj = pj - n / 2;
    for (int i = 0; i < n; ++i) {
        const int si = i + oi;
        if (si < 0 || si >= n) continue;
        for (int j = 0; j < n; ++j) {
            const int sj = j + oj;
            if (sj < 0 || sj >= n) continue;
            const double d = std::hypot(spec.grid.coord(si) - qpx, spec.grid.coord(sj) - qpy);
            if (d > radius) continue;
            double wt = 1.0;
            if (window == SidebandFilter::Window::RaisedCosine && d > 0.5 * radius)
                wt = 0.5 * (1.0 + std::cos(kPi * (d / radius - 0.5) / 0.5));
            shifted.at(i, j) = spec.at(si, sj) * wt;
            kept += wt * wt * std::norm(spec.at(si, sj));
        }
    }
    if (kept_energy) *kept_energy = kept;
    return fourier_transform(shifted, FtDirection::Inverse);
}

} // namespace detail

// Recovers the complex field ~ E_p(2 rho) from an interference coincidence
// image: FT, locate the sideband in the half-plane around the nominal carrier
// (power centroid of the lobe, then integer-bin refinement from the residual
// phase ramp), window it, recenter, inverse FT and divide out the reference
// envelope (floored at 1e-3 of its peak). The output is NOT normalized; its
// scale follows the input.
inline ComplexField reconstruct_offaxis(const CoincidenceImage& interferogram,
                                        const ReferenceSpec& ref,
                                        const SidebandFilter& filter,
                                        HologramDiagnostics* diag = nullptr,
                                        WarningList* warnings = nullptr) {
    filter.validate();
    if (!(ref.amplitude > 0.0))
        throw std::invalid_argument("reconstruct_offaxis: reference amplitude must be > 0");
    const GridSpec& g = interferogram.grid;
    g.validate();
    const int n = g.n;

    ComplexField img(g);
    for (std::size_t k = 0; k < img.values.size(); ++k)
        img.values[k] = cplx(interferogram.counts[k], 0.0);
    const ComplexField spec = fourier_transform(img, FtDirection::Forward);
    const double dq = spec.grid.pitch;

    // search the half-plane past the midpoint toward the nominal carrier
    const double cnorm = std::hypot(filter.carrier[0], filter.carrier[1]);
    const double cx = filter.carrier[0] / cnorm, cy = filter.carrier[1] / cnorm;
    const double boundary = 0.5 * cnorm;

    double peak = -1.0, global_peak = 0.0;
    std::vector<double> floor_samples;
    floor_samples.reserve(g.size() / 2);
    for (int i = 0; i < n; ++i) {
        const double qx = spec.grid.coord(i);
        for (int j = 0; j < n; ++j) {
            const double a = std::abs(spec.at(i, j));
            global_peak = std::max(global_peak, a);
            if (qx * cx + spec.grid.coord(j) * cy < boundary) continue;
            floor_samples.push_back(a);
            peak = std::max(peak, a);
        }
    }
    if (floor_samples.empty())
        throw carrier_error("reconstruct_offaxis: carrier search region is empty");
    const std::size_t mid = floor_samples.size() / 2;
    std::nth_element(floor_samples.begin(), floor_samples.begin() + mid, floor_samples.end());
    const double floor = floor_samples[mid];
    // the sideband must stand out of its own region AND carry a non-trivial
    // fraction of the spectrum; a signal-free interferogram leaves only an
    // FFT roundoff floor whose peak/median ratio is meaningless
    if (!(peak > 3.0 * floor) || !(peak > 1e-10 * global_peak))
        throw carrier_error("reconstruct_offaxis: no detectable carrier peak (peak/floor = " +
                            std::to_string(floor > 0.0 ? peak / floor : 0.0) + ")");

    // power centroid of the lobe; an argmax would land on the ring of
    // vortex-pump sidebands instead of the carrier
    double wsum = 0.0, cix = 0.0, cjy = 0.0;
    const double threshold = 0.1 * peak;
    for (int i = 0; i < n; ++i) {
        const double qx = spec.grid.coord(i);
        for (int j = 0; j < n; ++j) {
            const double qy = spec.grid.coord(j);
            if (qx * cx + qy * cy < boundary) continue;
            const double a = std::abs(spec.at(i, j));
            if (a < threshold) continue;
            const double e = a * a;
            wsum += e;
            cix += e * i;
            cjy += e * j;
        }
    }
    int pi = static_cast<int>(std::lround(cix / wsum));
    int pj = static_cast<int>(std::lround(cjy / wsum));

    // refine to the exact carrier bin: a residual offset shows up as a uniform
    // phase ramp across the extracted field
    ComplexField field;
    double e_kept = 0.0, radius = 0.0;
    for (int pass = 0; pass < 4; ++pass) {
        const double dist = std::hypot(spec.grid.coord(pi), spec.grid.coord(pj));
        radius = filter.radius > 0.0 ? filter.radius : std::max(dq, 0.5 * dist - dq);
        field = detail::extract_lobe(spec, pi, pj, radius, filter.window, &e_kept);
        cplx sx(0.0, 0.0), sy(0.0, 0.0);
        for (int i = 0; i + 1 < n; ++i)
            for (int j = 0; j + 1 < n; ++j) {
                sx += std::conj(field.at(i, j)) * field.at(i + 1, j);
                sy += std::conj(field.at(i, j)) * field.at(i, j + 1);
            }
        const int di = static_cast<int>(std::lround(std::arg(sx) * n / (2.0 * kPi)));
        const int dj = static_cast<int>(std::lround(std::arg(sy) * n / (2.0 * kPi)));
        if (di == 0 && dj == 0) break;
        pi = std::clamp(pi + di, 0, n - 1);
        pj = std::clamp(pj + dj, 0, n - 1);
    }

    double e_total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double qx = spec.grid.coord(i);
        for (int j = 0; j < n; ++j)
            if (qx * cx + spec.grid.coord(j) * cy >= boundary) e_total += std::norm(spec.at(i, j));
    }
    const double clipped = e_total > 0.0 ? 1.0 - e_kept / e_total : 0.0;
    if (clipped > 0.05)
        push_warning(warnings, "reconstruct_offaxis: filter clips " +
                               std::to_string(clipped * 100.0) + "% of the sideband energy");
    if (diag) {
        diag->carrier_found = {spec.grid.coord(pi), spec.grid.coord(pj)};
        diag->peak_to_floor = floor > 0.0 ? peak / floor : 0.0;
        diag->radius_used = radius;
        diag->sideband_energy_total = e_total;
        diag->sideband_energy_kept = e_kept;
        diag->clipped_fraction = clipped;
    }

    // Under the e^{-i q rho} forward convention the +1 lobe carries
    // conj(E_p) * envelope; conjugate and divide out the crystal-plane
    // envelope a exp(-(2 rho)^2 / w_r^2) where it exceeds 1e-3 of its peak.
    const double floor_env = 1e-3 * ref.amplitude;
    for (int i = 0; i < n; ++i) {
        const double x = field.x(i);
        for (int j = 0; j < n; ++j) {
            const double y = field.y(j);
            const double env = ref.amplitude *
                std::exp(-4.0 * (x * x + y * y) / (ref.waist * ref.waist));
            field.at(i, j) = env >= floor_env ? std::conj(field.at(i, j)) / env : cplx(0.0, 0.0);
        }
    }
    return field;
}

// Pixelwise sqrt of a counts image, unit norm.
inline ComplexField amplitude_from_counts(const CoincidenceImage& pump_only) {
    ComplexField amp(pump_only.grid);
    double total = 0.0;
    for (std::size_t k = 0; k < amp.values.size(); ++k) {
        const double c = std::max(0.0, pump_only.counts[k]);
        total += c;
        amp.values[k] = cplx(std::sqrt(c), 0.0);
    }
    if (!(total > 0.0)) throw std::invalid_argument("amplitude_from_counts: all-zero image");
    return normalized(std::move(amp));
}

// amp * exp(i arg(phase_source)), normalized; zero amplitude pixels stay zero.
inline ComplexField combine_amplitude_phase(const ComplexField& amp, const ComplexField& phase_source) {
    require_same_grid(amp.grid, phase_source.grid, "combine_amplitude_phase");
    ComplexField out(amp.grid);
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        const double a = std::abs(amp.values[k]);
        if (a == 0.0) continue;
        const cplx ph = phase_source.values[k];
        out.values[k] = (ph == cplx(0.0, 0.0)) ? cplx(a, 0.0) : a * ph / std::abs(ph);
    }
    return normalized(std::move(out));
}

// The paper's recommended pipeline: amplitude from the pump-only image, phase
// from the interference hologram. Pass pump_only = nullptr for hologram-only
// mode (amplitude and phase both from the sideband).
inline ComplexField reconstruct_biphoton(const CoincidenceImage& interferogram,
                                         const CoincidenceImage* pump_only,
                                         const ReferenceSpec& ref,
                                         const SidebandFilter& filter,
                                         HologramDiagnostics* diag = nullptr,
                                         WarningList* warnings = nullptr) {
    const ComplexField holo = reconstruct_offaxis(interferogram, ref, filter, diag, warnings);
    if (!pump_only) return normalized(holo);
    require_same_grid(interferogram.grid, pump_only->grid, "reconstruct_biphoton");
    return combine_amplitude_phase(amplitude_from_counts(*pump_only), holo);
}

} // namespace biphoton
