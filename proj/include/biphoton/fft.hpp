// Centered unitary 2-D discrete Fourier transforms, backed by FFTW.
//
// Zero frequency sits at the grid center on both sides. The transform is
// unitary with respect to the physical quadrature weights: Parseval holds as
//   sum |f|^2 pitch^2 = sum |F|^2 dq^2,   dq = 2*pi / (n * pitch).
// Forward applied twice gives the parity-inverted field f(-rho).

#pragma once

#include <fftw3.h>

#include <mutex>
#include <vector>

#include "biphoton/grid.hpp"

namespace biphoton {

enum class FtDirection { Forward, Inverse };

namespace detail {

// FFTW planning is not thread-safe; execution is.
inline std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

// quadrant swap; self-inverse for even n
inline void fftshift2(const std::vector<cplx>& src, std::vector<cplx>& dst, int n) {
    const int h = n / 2;
    for (int i = 0; i < n; ++i) {
        const int is = (i + h) % n;
        for (int j = 0; j < n; ++j)
            dst[static_cast<std::size_t>(is) * n + ((j + h) % n)] =
                src[static_cast<std::size_t>(i) * n + j];
    }
}

} // namespace detail

inline ComplexField fourier_transform(const ComplexField& f, FtDirection dir) {
    f.grid.validate();
    const int n = f.grid.n;
    const std::size_t sz = f.grid.size();

    std::vector<cplx> buf(sz);
    detail::fftshift2(f.values, buf, n);

    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
        // FFTW_ESTIMATE plans do not touch the buffers at plan time, so the
        // shifted input survives planning.
        plan = fftw_plan_dft_2d(
            n, n,
            reinterpret_cast<fftw_complex*>(buf.data()),
            reinterpret_cast<fftw_complex*>(buf.data()),
            dir == FtDirection::Forward ? FFTW_FORWARD : FFTW_BACKWARD,
            FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
        fftw_destroy_plan(plan);
    }

    ComplexField out;
    out.grid.n = n;
    out.grid.pitch = 2.0 * kPi / (n * f.grid.pitch);
    out.values.resize(sz);
    detail::fftshift2(buf, out.values, n);

    const double scale = f.grid.pitch * f.grid.pitch / (2.0 * kPi);
    for (cplx& v : out.values) v *= scale;
    return out;
}

} // namespace biphoton
