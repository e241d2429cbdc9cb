#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "biphoton/io.hpp"
#include "biphoton/modes.hpp"

using namespace biphoton;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("biphoton_io_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("cfield round trip is exact") {
    TempDir tmp;
    GridSpec g{32, 0.0625};
    ComplexField f(g);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (cplx& v : f.values) v = cplx(u(rng), u(rng));

    write_cfield(tmp / "f.cfield", f);
    ComplexField r = read_cfield(tmp / "f.cfield");
    REQUIRE(r.grid == f.grid);
    for (std::size_t k = 0; k < f.values.size(); ++k) REQUIRE(r.values[k] == f.values[k]);
}

TEST_CASE("cfield errors") {
    TempDir tmp;
    CHECK_THROWS_AS(read_cfield(tmp / "missing.cfield"), io_error);
    {
        std::ofstream out(tmp / "bad.cfield");
        out << "16 0.05\n1 2\n"; // truncated
    }
    CHECK_THROWS_AS(read_cfield(tmp / "bad.cfield"), io_error);
}

TEST_CASE("PGM round trips in 8 and 16 bit") {
    TempDir tmp;
    for (int maxval : {255, 65535}) {
        GrayImage img;
        img.width = 12;
        img.height = 9;
        img.maxval = maxval;
        img.pixels.resize(12 * 9);
        std::mt19937 rng(maxval);
        for (auto& p : img.pixels) p = static_cast<std::uint16_t>(rng() % (maxval + 1));
        write_pgm(tmp / "img.pgm", img);
        GrayImage r = read_pgm(tmp / "img.pgm");
        REQUIRE(r.width == img.width);
        REQUIRE(r.height == img.height);
        REQUIRE(r.maxval == img.maxval);
        REQUIRE(r.pixels == img.pixels);
    }
}

TEST_CASE("ASCII PGM with comments parses") {
    TempDir tmp;
    {
        std::ofstream out(tmp / "a.pgm");
        out << "P2\n# a comment\n2 2\n255\n0 128\n255 64\n";
    }
    GrayImage img = read_pgm(tmp / "a.pgm");
    REQUIRE(img.pixels == std::vector<std::uint16_t>{0, 128, 255, 64});
}

TEST_CASE("raster mode loads amplitude and phase") {
    TempDir tmp;
    GridSpec g{16, 0.1};
    GrayImage amp, ph;
    amp.width = amp.height = ph.width = ph.height = 16;
    amp.maxval = ph.maxval = 255;
    amp.pixels.assign(256, 0);
    ph.pixels.assign(256, 0);
    // a bright square with a known phase value
    for (int j = 4; j < 12; ++j)
        for (int i = 4; i < 12; ++i) {
            amp.pixels[j * 16 + i] = 200;
            ph.pixels[j * 16 + i] = 64; // -> 2 pi 64/256 = pi/2
        }
    write_pgm(tmp / "amp.pgm", amp);
    write_pgm(tmp / "ph.pgm", ph);

    ComplexField f = evaluate_mode(ModeSpec::raster(tmp / "amp.pgm", tmp / "ph.pgm", 1.0), g);
    CHECK(norm_sq(f) == Catch::Approx(1.0));
    CHECK(std::arg(f.at(8, 8)) == Catch::Approx(kPi / 2.0));
    CHECK(std::abs(f.at(0, 0)) == 0.0);

    // mismatched size
    GridSpec g2{32, 0.1};
    CHECK_THROWS_AS(evaluate_mode(ModeSpec::raster(tmp / "amp.pgm", tmp / "ph.pgm", 1.0), g2), io_error);
}

TEST_CASE("matrix CSV with sidecar header round trips") {
    TempDir tmp;
    GridSpec g{16, 0.25};
    std::vector<double> data(g.size());
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1000.0);
    for (auto& v : data) v = u(rng);

    write_matrix_csv(tmp / "img.csv", g, data, "farfield");
    GridSpec rg;
    std::string plane;
    std::vector<double> r = read_matrix_csv(tmp / "img.csv", rg, plane);
    REQUIRE(rg == g);
    REQUIRE(plane == "farfield");
    REQUIRE(r == data);

    fs::remove(tmp / "img.csv.hdr");
    CHECK_THROWS_AS(read_matrix_csv(tmp / "img.csv", rg, plane), io_error);
}

TEST_CASE("heatmaps are written with sane headers") {
    TempDir tmp;
    GridSpec g{16, 0.1};
    std::vector<double> data(g.size(), 0.0);
    data[5 * 16 + 7] = 3.0;
    write_heatmap_pgm(tmp / "h.pgm", g, data);
    GrayImage img = read_pgm(tmp / "h.pgm");
    REQUIRE(img.maxval == 65535);
    CHECK(img.pixels[7 * 16 + 5] == 65535); // row = y index

    ComplexField f(g);
    f.at(3, 3) = cplx(0.0, 1.0);
    write_phase_ppm(tmp / "p.ppm", f);
    std::ifstream in(tmp / "p.ppm", std::ios::binary);
    std::string magic;
    in >> magic;
    CHECK(magic == "P6");
}

TEST_CASE("file hashing is stable and content sensitive") {
    TempDir tmp;
    {
        std::ofstream out(tmp / "a.txt");
        out << "hello";
    }
    {
        std::ofstream out(tmp / "b.txt");
        out << "hellp";
    }
    CHECK(fnv1a_file(tmp / "a.txt") == fnv1a_file(tmp / "a.txt"));
    CHECK(fnv1a_file(tmp / "a.txt") != fnv1a_file(tmp / "b.txt"));
}
