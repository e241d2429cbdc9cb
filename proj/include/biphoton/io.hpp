// File formats:
//   .cfield     text, header "n pitch_mm", then n*n lines "re im" in row-major
//               order (i = x index slow, j = y index fast)
//   image CSV   n rows by n columns of counts, comma separated, plus a sidecar
//               <name>.hdr holding "n pitch_mm plane={image|farfield}"
//   PGM / PPM   8/16-bit grayscale rasters (P2/P5) for inputs, 16-bit PGM and
//               HSV-mapped PPM heatmaps for outputs. File row r is the y index,
//               column c is the x index.

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "biphoton/grid.hpp"

namespace biphoton {

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

// shortest exact decimal representation, deterministic across runs
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw io_error("cannot open for reading: " + path);
    return in;
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw io_error("cannot open for writing: " + path);
    return out;
}

} // namespace detail

// ---------------------------------------------------------------- .cfield --

inline void write_cfield(const std::string& path, const ComplexField& f) {
    auto out = detail::open_out(path);
    out << f.grid.n << ' ' << detail::fmt_double(f.grid.pitch) << '\n';
    for (const cplx& v : f.values)
        out << detail::fmt_double(v.real()) << ' ' << detail::fmt_double(v.imag()) << '\n';
    if (!out) throw io_error("write failed: " + path);
}

inline ComplexField read_cfield(const std::string& path) {
    auto in = detail::open_in(path);
    GridSpec g;
    if (!(in >> g.n >> g.pitch)) throw io_error("malformed .cfield header: " + path);
    g.validate();
    ComplexField f(g);
    for (std::size_t k = 0; k < g.size(); ++k) {
        double re, im;
        if (!(in >> re >> im)) throw io_error("truncated .cfield data: " + path);
        f.values[k] = cplx(re, im);
    }
    return f;
}

// ------------------------------------------------------------- PGM rasters --

struct GrayImage {
    int width = 0;
    int height = 0;
    int maxval = 255;
    std::vector<std::uint16_t> pixels; // row-major, row = y
};

inline GrayImage read_pgm(const std::string& path) {
    auto in = detail::open_in(path, std::ios::in | std::ios::binary);
    std::string magic;
    in >> magic;
    if (magic != "P2" && magic != "P5") throw io_error("not a PGM (P2/P5) file: " + path);

    auto next_token = [&in, &path]() -> long {
        // skips whitespace and '#' comment lines
        while (true) {
            int c = in.peek();
            if (c == EOF) throw io_error("truncated PGM header: " + path);
            if (std::isspace(c)) { in.get(); continue; }
            if (c == '#') { std::string line; std::getline(in, line); continue; }
            long v;
            if (!(in >> v)) throw io_error("malformed PGM header: " + path);
            return v;
        }
    };

    GrayImage img;
    img.width = static_cast<int>(next_token());
    img.height = static_cast<int>(next_token());
    img.maxval = static_cast<int>(next_token());
    if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 65535)
        throw io_error("unsupported PGM dimensions/maxval: " + path);
    const std::size_t count = static_cast<std::size_t>(img.width) * img.height;
    img.pixels.resize(count);

    if (magic == "P2") {
        for (std::size_t k = 0; k < count; ++k) {
            long v;
            if (!(in >> v)) throw io_error("truncated PGM data: " + path);
            img.pixels[k] = static_cast<std::uint16_t>(v);
        }
    } else {
        in.get(); // single whitespace after maxval
        const int bytes = img.maxval > 255 ? 2 : 1;
        std::vector<unsigned char> raw(count * bytes);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size())
            throw io_error("truncated PGM data: " + path);
        for (std::size_t k = 0; k < count; ++k)
            img.pixels[k] = bytes == 2
                ? static_cast<std::uint16_t>((raw[2 * k] << 8) | raw[2 * k + 1]) // big-endian
                : raw[k];
    }
    return img;
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
    auto out = detail::open_out(path, std::ios::out | std::ios::binary);
    out << "P5\n" << img.width << ' ' << img.height << '\n' << img.maxval << '\n';
    const int bytes = img.maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw;
    raw.reserve(img.pixels.size() * bytes);
    for (std::uint16_t v : img.pixels) {
        if (bytes == 2) raw.push_back(static_cast<unsigned char>(v >> 8));
        raw.push_back(static_cast<unsigned char>(v & 0xff));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw io_error("write failed: " + path);
}

// 16-bit grayscale heatmap of a nonnegative scalar matrix (row-major, row = x
// index), scaled to its peak
inline void write_heatmap_pgm(const std::string& path, int rows, int cols,
                              const std::vector<double>& data) {
    double peak = 0.0;
    for (double v : data) peak = std::max(peak, v);
    GrayImage img;
    img.width = rows;
    img.height = cols;
    img.maxval = 65535;
    img.pixels.resize(data.size());
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) {
            const double v = data[static_cast<std::size_t>(i) * cols + j];
            img.pixels[static_cast<std::size_t>(j) * rows + i] =
                peak > 0.0 ? static_cast<std::uint16_t>(std::lround(std::max(0.0, v) / peak * 65535.0)) : 0;
        }
    write_pgm(path, img);
}

inline void write_heatmap_pgm(const std::string& path, const GridSpec& grid,
                              const std::vector<double>& data) {
    write_heatmap_pgm(path, grid.n, grid.n, data);
}

// Phase heatmap: hue = arg(v), brightness = |v| / max|v| (HSV-style mapping).
inline void write_phase_ppm(const std::string& path, const ComplexField& f) {
    const int n = f.grid.n;
    double peak = 0.0;
    for (const cplx& v : f.values) peak = std::max(peak, std::abs(v));
    auto out = detail::open_out(path, std::ios::out | std::ios::binary);
    out << "P6\n" << n << ' ' << n << "\n255\n";
    std::vector<unsigned char> raw;
    raw.reserve(f.grid.size() * 3);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const cplx v = f.at(i, j);
            const double val = peak > 0.0 ? std::abs(v) / peak : 0.0;
            const double hue = (std::arg(v) + kPi) / (2.0 * kPi) * 6.0; // [0,6)
            const int sector = std::min(5, static_cast<int>(hue));
            const double frac = hue - sector;
            const double q = 1.0 - frac, t = frac;
            double r = 0, g = 0, b = 0;
            switch (sector) {
                case 0: r = 1; g = t; b = 0; break;
                case 1: r = q; g = 1; b = 0; break;
                case 2: r = 0; g = 1; b = t; break;
                case 3: r = 0; g = q; b = 1; break;
                case 4: r = t; g = 0; b = 1; break;
                default: r = 1; g = 0; b = q; break;
            }
            raw.push_back(static_cast<unsigned char>(std::lround(r * val * 255.0)));
            raw.push_back(static_cast<unsigned char>(std::lround(g * val * 255.0)));
            raw.push_back(static_cast<unsigned char>(std::lround(b * val * 255.0)));
        }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw io_error("write failed: " + path);
}

// --------------------------------------------------- CSV matrix + sidecar --

inline void write_matrix_csv(const std::string& path, const GridSpec& grid,
                             const std::vector<double>& data, const std::string& plane) {
    auto out = detail::open_out(path);
    for (int i = 0; i < grid.n; ++i) {
        for (int j = 0; j < grid.n; ++j) {
            if (j) out << ',';
            out << detail::fmt_double(data[static_cast<std::size_t>(i) * grid.n + j]);
        }
        out << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
    auto hdr = detail::open_out(path + ".hdr");
    hdr << grid.n << ' ' << detail::fmt_double(grid.pitch) << " plane=" << plane << '\n';
    if (!hdr) throw io_error("write failed: " + path + ".hdr");
}

inline std::vector<double> read_matrix_csv(const std::string& path, GridSpec& grid,
                                           std::string& plane) {
    {
        auto hdr = detail::open_in(path + ".hdr");
        std::string tag;
        if (!(hdr >> grid.n >> grid.pitch >> tag) || tag.rfind("plane=", 0) != 0)
            throw io_error("malformed sidecar header: " + path + ".hdr");
        plane = tag.substr(6);
        grid.validate();
    }
    auto in = detail::open_in(path);
    std::vector<double> data(grid.size());
    std::string line;
    for (int i = 0; i < grid.n; ++i) {
        if (!std::getline(in, line)) throw io_error("truncated CSV matrix: " + path);
        std::stringstream ss(line);
        std::string cell;
        for (int j = 0; j < grid.n; ++j) {
            if (!std::getline(ss, cell, ',')) throw io_error("short CSV row in: " + path);
            data[static_cast<std::size_t>(i) * grid.n + j] = std::stod(cell);
        }
    }
    return data;
}

// -------------------------------------------------------------- manifests --

// FNV-1a 64-bit over the file bytes; good enough to detect output drift.
inline std::uint64_t fnv1a_file(const std::string& path) {
    auto in = detail::open_in(path, std::ios::in | std::ios::binary);
    std::uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize k = 0; k < got; ++k) {
            h ^= static_cast<unsigned char>(buf[k]);
            h *= 1099511628211ull;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    return h;
}

} // namespace biphoton
