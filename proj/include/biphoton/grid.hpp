// Complex scalar fields on uniform square grids with physical pixel pitch.
//
// Conventions used throughout the toolkit:
//   - grids are n x n, n even, pixel (i, j) sits at ((i - n/2)*pitch, (j - n/2)*pitch)
//   - fields are stored row-major with i (the x index) as the slow index
//   - inner products and norms carry the pitch^2 quadrature weight, so a
//     "unit norm" field integrates |f|^2 to 1 in mm^2 units

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace biphoton {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Collects non-fatal diagnostics (grid too small for a mode, filter clipping,
// truncation losses). Pass nullptr to ignore.
using WarningList = std::vector<std::string>;

inline void push_warning(WarningList* warnings, std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
}

struct GridSpec {
    int n = 256;          // pixels per side, even, >= 8
    double pitch = 0.055; // mm per pixel (rad/mm for far-field grids)

    void validate() const {
        if (n < 8 || n % 2 != 0)
            throw std::invalid_argument("GridSpec: n must be even and >= 8, got " + std::to_string(n));
        if (!(pitch > 0.0) || !std::isfinite(pitch))
            throw std::invalid_argument("GridSpec: pitch must be positive and finite");
    }

    // physical coordinate of index i along either axis
    double coord(int i) const { return (i - n / 2) * pitch; }
    double extent() const { return n * pitch; }
    std::size_t size() const { return static_cast<std::size_t>(n) * static_cast<std::size_t>(n); }

    bool operator==(const GridSpec& o) const { return n == o.n && pitch == o.pitch; }
    bool operator!=(const GridSpec& o) const { return !(*this == o); }
};

struct ComplexField {
    GridSpec grid;
    std::vector<cplx> values; // size n*n, index (ix, iy) -> ix*n + iy

    ComplexField() = default;
    explicit ComplexField(const GridSpec& g) : grid(g), values(g.size(), cplx(0.0, 0.0)) {
        grid.validate();
    }

    cplx& at(int ix, int iy) { return values[static_cast<std::size_t>(ix) * grid.n + iy]; }
    const cplx& at(int ix, int iy) const { return values[static_cast<std::size_t>(ix) * grid.n + iy]; }

    double x(int ix) const { return grid.coord(ix); }
    double y(int iy) const { return grid.coord(iy); }
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* who) {
    if (a != b)
        throw std::invalid_argument(std::string(who) + ": grid mismatch (" +
                                    std::to_string(a.n) + " @ " + std::to_string(a.pitch) + " vs " +
                                    std::to_string(b.n) + " @ " + std::to_string(b.pitch) + ")");
}

// <f|g> = sum conj(f) * g * pitch^2
inline cplx inner_product(const ComplexField& f, const ComplexField& g) {
    require_same_grid(f.grid, g.grid, "inner_product");
    cplx acc(0.0, 0.0);
    for (std::size_t k = 0; k < f.values.size(); ++k)
        acc += std::conj(f.values[k]) * g.values[k];
    return acc * (f.grid.pitch * f.grid.pitch);
}

inline double norm_sq(const ComplexField& f) {
    double acc = 0.0;
    for (const cplx& v : f.values) acc += std::norm(v);
    return acc * (f.grid.pitch * f.grid.pitch);
}

inline ComplexField normalized(ComplexField f) {
    const double n2 = norm_sq(f);
    if (!(n2 > 0.0) || !std::isfinite(n2))
        throw std::runtime_error("normalized: field has zero or non-finite norm");
    const double s = 1.0 / std::sqrt(n2);
    for (cplx& v : f.values) v *= s;
    return f;
}

// |<a|b>|^2 / (<a|a><b|b>), invariant under global phase and scale of either field
inline double field_fidelity(const ComplexField& a, const ComplexField& b) {
    const double na = norm_sq(a), nb = norm_sq(b);
    if (!(na > 0.0) || !(nb > 0.0))
        throw std::runtime_error("field_fidelity: zero-norm field");
    return std::norm(inner_product(a, b)) / (na * nb);
}

// output(rho) = input(scale * rho), bilinear interpolation, zero outside the
// input support. The mapping is done in index space so scale = 1 is exact.
inline ComplexField resample_scaled(const ComplexField& f, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw std::invalid_argument("resample_scaled: scale must be positive");
    const int n = f.grid.n;
    ComplexField out(f.grid);
    const double half = n / 2;
    for (int i = 0; i < n; ++i) {
        const double si = scale * (i - half) + half;
        for (int j = 0; j < n; ++j) {
            const double sj = scale * (j - half) + half;
            if (si < 0.0 || si > n - 1 || sj < 0.0 || sj > n - 1) continue;
            int i0 = static_cast<int>(std::floor(si));
            int j0 = static_cast<int>(std::floor(sj));
            if (i0 == n - 1) --i0; // keep the 2x2 stencil inside
            if (j0 == n - 1) --j0;
            const double fi = si - i0;
            const double fj = sj - j0;
            const cplx v00 = f.at(i0, j0), v01 = f.at(i0, j0 + 1);
            const cplx v10 = f.at(i0 + 1, j0), v11 = f.at(i0 + 1, j0 + 1);
            out.at(i, j) = (1.0 - fi) * ((1.0 - fj) * v00 + fj * v01) +
                           fi * ((1.0 - fj) * v10 + fj * v11);
        }
    }
    return out;
}

} // namespace biphoton
