// Analytic spatial modes sampled at pixel centers: Laguerre-Gauss, Hermite-
// Gauss, OAM-carrying Gaussians, weighted superpositions and raster images.
// Every evaluated mode is returned with unit norm on its grid; physical count
// scales belong to the simulation layer.

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/grid.hpp"
#include "biphoton/io.hpp"

namespace biphoton {

struct ModeSpec {
    enum class Kind { LG, HG, OAMGauss, Superposition, Raster };

    Kind kind = Kind::LG;
    double waist = 1.0; // mm
    int p = 0, l = 0;   // LG(p, l) / OAMGauss(l)
    int m = 0, n = 0;   // HG(m, n)
    std::vector<std::pair<cplx, ModeSpec>> parts;  // Superposition
    std::string amplitude_path, phase_path;        // Raster

    static ModeSpec lg(int p, int l, double waist) {
        ModeSpec s; s.kind = Kind::LG; s.p = p; s.l = l; s.waist = waist; return s;
    }
    static ModeSpec hg(int m, int n, double waist) {
        ModeSpec s; s.kind = Kind::HG; s.m = m; s.n = n; s.waist = waist; return s;
    }
    static ModeSpec oam_gauss(int l, double waist) {
        ModeSpec s; s.kind = Kind::OAMGauss; s.l = l; s.waist = waist; return s;
    }
    static ModeSpec superposition(std::vector<std::pair<cplx, ModeSpec>> parts, double waist) {
        ModeSpec s; s.kind = Kind::Superposition; s.parts = std::move(parts); s.waist = waist; return s;
    }
    static ModeSpec raster(std::string amplitude, std::string phase, double waist) {
        ModeSpec s; s.kind = Kind::Raster; s.amplitude_path = std::move(amplitude);
        s.phase_path = std::move(phase); s.waist = waist; return s;
    }

    void validate() const {
        if (!(waist > 0.0) || !std::isfinite(waist))
            throw std::invalid_argument("ModeSpec: waist must be positive");
        switch (kind) {
            case Kind::LG:
                if (p < 0) throw std::invalid_argument("ModeSpec: LG radial index p must be >= 0");
                break;
            case Kind::HG:
                if (m < 0 || n < 0) throw std::invalid_argument("ModeSpec: HG orders must be >= 0");
                break;
            case Kind::OAMGauss:
                break;
            case Kind::Superposition: {
                if (parts.empty()) throw std::invalid_argument("ModeSpec: empty superposition");
                double wsum = 0.0;
                for (const auto& [wgt, part] : parts) {
                    wsum += std::abs(wgt);
                    part.validate();
                }
                if (!(wsum > 0.0)) throw std::invalid_argument("ModeSpec: superposition weights are all zero");
                break;
            }
            case Kind::Raster:
                if (amplitude_path.empty()) throw std::invalid_argument("ModeSpec: raster amplitude file missing");
                break;
        }
    }

    std::string describe() const {
        switch (kind) {
            case Kind::LG: return "LG(p=" + std::to_string(p) + ",l=" + std::to_string(l) + ")";
            case Kind::HG: return "HG(m=" + std::to_string(m) + ",n=" + std::to_string(n) + ")";
            case Kind::OAMGauss: return "OAM(l=" + std::to_string(l) + ")";
            case Kind::Superposition: {
                std::string s = "Superposition(";
                for (std::size_t k = 0; k < parts.size(); ++k)
                    s += (k ? " + " : "") + parts[k].second.describe();
                return s + ")";
            }
            case Kind::Raster: return "Raster(" + amplitude_path + ")";
        }
        return "?";
    }
};

namespace detail {

// Unit-norm LG_{p,l}(r, phi) against the d^2r measure,
//   N (r/w)^|l| L_p^|l|(2 r^2/w^2) exp(-r^2/w^2) exp(i l phi).
inline cplx lg_value(int p, int l, double waist, double x, double y) {
    const int la = std::abs(l);
    const double r2 = x * x + y * y;
    const double u = 2.0 * r2 / (waist * waist);
    const double norm = std::sqrt(std::pow(2.0, la + 1) / kPi *
                                  std::exp(std::lgamma(p + 1.0) - std::lgamma(p + la + 1.0))) / waist;
    double radial = norm * std::assoc_laguerre(p, la, u) * std::exp(-r2 / (waist * waist));
    if (la > 0) radial *= std::pow(std::sqrt(r2) / waist, la);
    const double phi = (l != 0) ? std::atan2(y, x) : 0.0;
    return std::polar(radial, l * phi);
}

// Unit-norm HG_{m,n}(x, y) = N H_m(sqrt2 x/w) H_n(sqrt2 y/w) exp(-(x^2+y^2)/w^2).
inline double hg_value(int m, int n, double waist, double x, double y) {
    const double norm = std::sqrt(2.0 / kPi) / waist /
                        std::sqrt(std::pow(2.0, m + n) * std::exp(std::lgamma(m + 1.0) + std::lgamma(n + 1.0)));
    const double s = std::sqrt(2.0) / waist;
    return norm * std::hermite(static_cast<unsigned>(m), s * x) *
           std::hermite(static_cast<unsigned>(n), s * y) *
           std::exp(-(x * x + y * y) / (waist * waist));
}

inline cplx oam_gauss_value(int l, double waist, double x, double y) {
    const double r2 = x * x + y * y;
    // undefined azimuth at the phase singularity: use the pixel's angular
    // average of e^{i l phi}, which is 0 for l != 0
    if (l != 0 && r2 == 0.0) return cplx(0.0, 0.0);
    const double norm = std::sqrt(2.0 / kPi) / waist;
    const double phi = (l != 0) ? std::atan2(y, x) : 0.0;
    return std::polar(norm * std::exp(-r2 / (waist * waist)), l * phi);
}

} // namespace detail

// Samples the mode at pixel centers and normalizes to unit norm. Warns when
// less than 99% of the analytic mode energy falls inside the grid.
inline ComplexField evaluate_mode(const ModeSpec& mode, const GridSpec& grid,
                                  WarningList* warnings = nullptr) {
    grid.validate();
    mode.validate();
    if (mode.kind != ModeSpec::Kind::Raster && mode.waist < 2.0 * grid.pitch)
        throw std::invalid_argument("evaluate_mode: grid too coarse for waist " +
                                    std::to_string(mode.waist) + " mm (pitch " +
                                    std::to_string(grid.pitch) + " mm)");

    ComplexField f(grid);
    switch (mode.kind) {
        case ModeSpec::Kind::LG:
            for (int i = 0; i < grid.n; ++i)
                for (int j = 0; j < grid.n; ++j)
                    f.at(i, j) = detail::lg_value(mode.p, mode.l, mode.waist, f.x(i), f.y(j));
            break;
        case ModeSpec::Kind::HG:
            for (int i = 0; i < grid.n; ++i)
                for (int j = 0; j < grid.n; ++j)
                    f.at(i, j) = detail::hg_value(mode.m, mode.n, mode.waist, f.x(i), f.y(j));
            break;
        case ModeSpec::Kind::OAMGauss:
            for (int i = 0; i < grid.n; ++i)
                for (int j = 0; j < grid.n; ++j)
                    f.at(i, j) = detail::oam_gauss_value(mode.l, mode.waist, f.x(i), f.y(j));
            break;
        case ModeSpec::Kind::Superposition: {
            for (const auto& [wgt, part] : mode.parts) {
                if (wgt == cplx(0.0, 0.0)) continue;
                ComplexField g = evaluate_mode(part, grid, warnings);
                for (std::size_t k = 0; k < f.values.size(); ++k)
                    f.values[k] += wgt * g.values[k];
            }
            return normalized(std::move(f));
        }
        case ModeSpec::Kind::Raster: {
            const GrayImage amp = read_pgm(mode.amplitude_path);
            if (amp.width != grid.n || amp.height != grid.n)
                throw io_error("raster amplitude size " + std::to_string(amp.width) + "x" +
                               std::to_string(amp.height) + " does not match grid n=" +
                               std::to_string(grid.n));
            GrayImage phase;
            if (!mode.phase_path.empty()) {
                phase = read_pgm(mode.phase_path);
                if (phase.width != grid.n || phase.height != grid.n)
                    throw io_error("raster phase size does not match grid");
            }
            for (int j = 0; j < grid.n; ++j)
                for (int i = 0; i < grid.n; ++i) {
                    const std::size_t k = static_cast<std::size_t>(j) * grid.n + i;
                    const double a = static_cast<double>(amp.pixels[k]) / amp.maxval;
                    const double ph = phase.pixels.empty()
                        ? 0.0
                        : 2.0 * kPi * phase.pixels[k] / (phase.maxval + 1.0);
                    f.at(i, j) = std::polar(a, ph);
                }
            return normalized(std::move(f));
        }
    }

    // analytic modes are unit norm, so the pre-normalization grid norm is the
    // captured energy fraction
    const double captured = norm_sq(f);
    if (captured < 0.99)
        push_warning(warnings, "evaluate_mode: grid captures only " + std::to_string(captured * 100.0) +
                               "% of " + mode.describe() + " energy");
    return normalized(std::move(f));
}

} // namespace biphoton
