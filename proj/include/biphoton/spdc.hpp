// Thin-crystal biphoton states and coincidence-image synthesis.
//
// The diagonal wavefunction of the position-correlated pair state is the pump
// field with its argument doubled, psi(rho) ~ E_p(2 rho); interference images
// add a tilted Gaussian reference to the pump before the doubling. The far
// field is governed by the phase-matching envelope A sinc(alpha |q_i - q_s|^2
// + zeta).

#pragma once

#include <cmath>
#include <optional>
#include <random>

#include "biphoton/grid.hpp"

namespace biphoton {

enum class ImagePlane { Image, FarField };

inline const char* plane_name(ImagePlane p) {
    return p == ImagePlane::Image ? "image" : "farfield";
}

// Counts on a square grid: expected rates (reals) or Poisson samples
// (integer-valued). Coincidence data is nonnegative; the signed sinc
// *amplitude* model surface from far_field_singles is the one exception.
struct CoincidenceImage {
    GridSpec grid;
    ImagePlane plane = ImagePlane::Image;
    std::vector<double> counts;

    CoincidenceImage() = default;
    CoincidenceImage(const GridSpec& g, ImagePlane pl)
        : grid(g), plane(pl), counts(g.size(), 0.0) {}

    double& at(int ix, int iy) { return counts[static_cast<std::size_t>(ix) * grid.n + iy]; }
    const double& at(int ix, int iy) const { return counts[static_cast<std::size_t>(ix) * grid.n + iy]; }

    double total() const {
        double t = 0.0;
        for (double v : counts) t += v;
        return t;
    }
};

struct BiphotonState {
    ComplexField psi;        // unit norm, crystal plane, psi ~ E_p(2 rho)
    double pump_waist = 0.0; // mm, 0 when unknown
};

struct PhaseMatchingParams {
    double amplitude = 93.0;  // counts
    double alpha = 9.1e-6;    // mm^2
    double zeta = 0.30;       // longitudinal mismatch

    void validate() const {
        if (!(amplitude > 0.0)) throw std::invalid_argument("PhaseMatchingParams: amplitude must be > 0");
        if (!(alpha > 0.0)) throw std::invalid_argument("PhaseMatchingParams: alpha must be > 0");
    }
};

enum class PhaseMatchingModel { Sinc, SincSquared };

inline const char* model_name(PhaseMatchingModel m) {
    return m == PhaseMatchingModel::Sinc ? "sinc" : "sinc2";
}

// Tilted-wavefront Gaussian reference, E_ref = a exp(-r^2/w_r^2) exp(i 2 pi (x+y)/Lambda).
// The amplitude ratio a is relative to the pump peak; scaling by that peak is
// the simulation layer's job.
struct ReferenceSpec {
    double waist = 6.0;      // w_r, mm
    double lambda = 0.44;    // carrier fringe period, mm (infinity = untilted)
    double amplitude = 1.0;  // a, relative to pump peak

    void validate(const GridSpec& grid) const {
        if (!(waist > 0.0)) throw std::invalid_argument("ReferenceSpec: waist must be > 0");
        if (amplitude < 0.0) throw std::invalid_argument("ReferenceSpec: amplitude must be >= 0");
        if (!(lambda > 2.0 * grid.pitch))
            throw std::invalid_argument("ReferenceSpec: carrier period " + std::to_string(lambda) +
                                        " mm is aliased on pitch " + std::to_string(grid.pitch) + " mm");
    }
};

inline double sinc(double x) {
    if (std::abs(x) < 1e-4) {
        const double x2 = x * x;
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
    }
    return std::sin(x) / x;
}

// d/dx sinc
inline double sinc_prime(double x) {
    if (std::abs(x) < 1e-4) {
        const double x2 = x * x;
        return -x / 3.0 + x * x2 / 30.0;
    }
    return (x * std::cos(x) - std::sin(x)) / (x * x);
}

// psi = normalize(pump(2 rho)). Throws when the energy balance of the rescale
// is off by more than 1%: an exact rescale carries 1/4 of the pump energy, and
// an under-resolved pump breaks that budget in either direction (subsampling
// can just as well overweight a narrow peak as miss it).
inline BiphotonState thin_crystal_state(const ComplexField& pump, double pump_waist = 0.0) {
    const double in2 = norm_sq(pump);
    if (!(in2 > 0.0)) throw std::invalid_argument("thin_crystal_state: pump has zero norm");
    ComplexField scaled = resample_scaled(pump, 2.0);
    const double captured = 4.0 * norm_sq(scaled) / in2;
    if (std::abs(captured - 1.0) > 0.01)
        throw std::runtime_error("thin_crystal_state: pump under-resolved, rescaled energy is " +
                                 std::to_string(captured * 100.0) + "% of the exact budget");
    return BiphotonState{normalized(std::move(scaled)), pump_waist};
}

inline ComplexField reference_field(const ReferenceSpec& ref, const GridSpec& grid) {
    grid.validate();
    ref.validate(grid);
    ComplexField f(grid);
    const bool tilted = std::isfinite(ref.lambda);
    for (int i = 0; i < grid.n; ++i) {
        const double x = f.x(i);
        for (int j = 0; j < grid.n; ++j) {
            const double y = f.y(j);
            const double env = ref.amplitude * std::exp(-(x * x + y * y) / (ref.waist * ref.waist));
            const double ph = tilted ? 2.0 * kPi * (x + y) / ref.lambda : 0.0;
            f.at(i, j) = std::polar(env, ph);
        }
    }
    return f;
}

// Diagonal coincidence rate C(rho, rho) ~ |E_p(2 rho) + E_ref(2 rho)|^2.
// Pass ref = nullptr for the pump-only image; when total_counts is given the
// image is rescaled to that total.
inline CoincidenceImage coincidence_diagonal(const ComplexField& pump,
                                             const ComplexField* ref = nullptr,
                                             std::optional<double> total_counts = std::nullopt) {
    ComplexField sum = pump;
    if (ref) {
        require_same_grid(pump.grid, ref->grid, "coincidence_diagonal");
        for (std::size_t k = 0; k < sum.values.size(); ++k) sum.values[k] += ref->values[k];
    }
    const ComplexField on_diag = resample_scaled(sum, 2.0);
    CoincidenceImage img(pump.grid, ImagePlane::Image);
    for (std::size_t k = 0; k < img.counts.size(); ++k)
        img.counts[k] = std::norm(on_diag.values[k]);
    if (total_counts) {
        const double t = img.total();
        if (!(t > 0.0)) throw std::runtime_error("coincidence_diagonal: cannot rescale an all-zero image");
        const double s = *total_counts / t;
        for (double& v : img.counts) v *= s;
    }
    return img;
}

inline double phase_matching_amplitude(double qix, double qiy, double qsx, double qsy,
                                       const PhaseMatchingParams& pm) {
    pm.validate();
    const double dx = qix - qsx, dy = qiy - qsy;
    return pm.amplitude * sinc(pm.alpha * (dx * dx + dy * dy) + pm.zeta);
}

// Far-field singles under a wide Gaussian pump (q_s = -q_i):
// I(q) = A f(4 alpha |q|^2 + zeta). The grid pitch is in rad/mm.
inline CoincidenceImage far_field_singles(const PhaseMatchingParams& pm, const GridSpec& grid,
                                          PhaseMatchingModel model = PhaseMatchingModel::SincSquared) {
    pm.validate();
    grid.validate();
    CoincidenceImage img(grid, ImagePlane::FarField);
    for (int i = 0; i < grid.n; ++i) {
        const double qx = grid.coord(i);
        for (int j = 0; j < grid.n; ++j) {
            const double qy = grid.coord(j);
            const double s = sinc(4.0 * pm.alpha * (qx * qx + qy * qy) + pm.zeta);
            img.at(i, j) = pm.amplitude * (model == PhaseMatchingModel::Sinc ? s : s * s);
        }
    }
    return img;
}

// Independent per-pixel Poisson sampling at the pixel's mean; deterministic
// per seed, zero means stay exactly zero. Negative means are treated as zero.
inline CoincidenceImage add_poisson_noise(const CoincidenceImage& image, std::uint64_t seed) {
    CoincidenceImage out = image;
    std::mt19937_64 rng(seed);
    for (double& v : out.counts) {
        if (!(v > 0.0)) { v = 0.0; continue; }
        v = static_cast<double>(std::poisson_distribution<long long>(v)(rng));
    }
    return out;
}

} // namespace biphoton
