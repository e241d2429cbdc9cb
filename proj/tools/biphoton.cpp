// biphoton: simulate / reconstruct / decompose / fit-pm / events / report
//
// Configuration-driven front end for the toolkit. Every subcommand is a pure
// function of (config, inputs, seed): repeated runs produce byte-identical
// outputs, every output file is listed with a content hash in the run
// manifest, and the resolved configuration is echoed into every JSON report.
//
// Exit codes: 0 success, 2 usage/config, 3 I/O, 4 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "biphoton/biphoton.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace biphoton;

namespace {

struct config_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ------------------------------------------------------------- json helpers --

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw config_error("invalid JSON in " + path + ": " + e.what());
    }
}

double get_num(const json& j, const std::string& key, std::optional<double> def = std::nullopt) {
    if (!j.contains(key)) {
        if (def) return *def;
        throw config_error("missing config field '" + key + "'");
    }
    if (!j[key].is_number()) throw config_error("config field '" + key + "' must be a number");
    return j[key].get<double>();
}

int get_int(const json& j, const std::string& key, std::optional<int> def = std::nullopt) {
    if (!j.contains(key)) {
        if (def) return *def;
        throw config_error("missing config field '" + key + "'");
    }
    if (!j[key].is_number_integer()) throw config_error("config field '" + key + "' must be an integer");
    return j[key].get<int>();
}

std::string hash_hex(const std::string& path) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a_file(path)));
    return buf;
}

// manifest of written files with content hashes
struct OutputSet {
    fs::path dir;
    json entries = json::array();

    std::string path(const std::string& name) const { return (dir / name).string(); }
    void record(const std::string& name) {
        entries.push_back({{"file", name}, {"hash", hash_hex(path(name))}});
        std::cout << "wrote " << path(name) << '\n';
    }
};

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw io_error("write failed: " + path);
}

// ------------------------------------------------------- config translation --

GridSpec grid_from_config(const json& cfg) {
    GridSpec g;
    if (cfg.contains("grid")) {
        g.n = get_int(cfg["grid"], "n", 256);
        g.pitch = get_num(cfg["grid"], "pitch_mm", 0.055);
    }
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
    return g;
}

ModeSpec mode_from_config(const json& j) {
    if (!j.is_object() || !j.contains("kind")) throw config_error("pump: missing 'kind'");
    const std::string kind = j["kind"].get<std::string>();
    const double waist = get_num(j, "waist_mm", 1.2);
    if (kind == "lg") return ModeSpec::lg(get_int(j, "p", 0), get_int(j, "l", 0), waist);
    if (kind == "hg") return ModeSpec::hg(get_int(j, "m", 0), get_int(j, "n", 0), waist);
    if (kind == "oam") return ModeSpec::oam_gauss(get_int(j, "l", 0), waist);
    if (kind == "superposition") {
        if (!j.contains("parts") || !j["parts"].is_array() || j["parts"].empty())
            throw config_error("pump: superposition needs a non-empty 'parts' array");
        std::vector<std::pair<cplx, ModeSpec>> parts;
        for (const json& p : j["parts"])
            parts.emplace_back(cplx(get_num(p, "re", 1.0), get_num(p, "im", 0.0)),
                               mode_from_config(p.contains("mode") ? p["mode"] : p));
        return ModeSpec::superposition(std::move(parts), waist);
    }
    if (kind == "raster") {
        if (!j.contains("amplitude")) throw config_error("pump: raster needs 'amplitude' (PGM path)");
        return ModeSpec::raster(j["amplitude"].get<std::string>(),
                                j.value("phase", std::string()), waist);
    }
    throw config_error("pump: unknown kind '" + kind + "'");
}

json mode_to_json(const ModeSpec& m) {
    json j;
    switch (m.kind) {
        case ModeSpec::Kind::LG: j = {{"kind", "lg"}, {"p", m.p}, {"l", m.l}}; break;
        case ModeSpec::Kind::HG: j = {{"kind", "hg"}, {"m", m.m}, {"n", m.n}}; break;
        case ModeSpec::Kind::OAMGauss: j = {{"kind", "oam"}, {"l", m.l}}; break;
        case ModeSpec::Kind::Superposition: {
            j["kind"] = "superposition";
            j["parts"] = json::array();
            for (const auto& [w, part] : m.parts) {
                json p = {{"re", w.real()}, {"im", w.imag()}, {"mode", mode_to_json(part)}};
                j["parts"].push_back(p);
            }
            break;
        }
        case ModeSpec::Kind::Raster:
            j = {{"kind", "raster"}, {"amplitude", m.amplitude_path}, {"phase", m.phase_path}};
            break;
    }
    j["waist_mm"] = m.waist;
    return j;
}

std::optional<ReferenceSpec> reference_from_config(const json& cfg) {
    if (!cfg.contains("reference") || cfg["reference"].is_null()) return std::nullopt;
    const json& r = cfg["reference"];
    ReferenceSpec ref;
    ref.waist = get_num(r, "waist_mm", 6.0);
    ref.lambda = get_num(r, "lambda_mm", 0.44);
    ref.amplitude = get_num(r, "amplitude", 1.0);
    return ref;
}

std::optional<std::uint64_t> env_seed() {
    if (const char* s = std::getenv("BIPHOTON_SEED")) {
        try {
            return std::stoull(s);
        } catch (...) {
            throw config_error("BIPHOTON_SEED is not an unsigned integer");
        }
    }
    return std::nullopt;
}

std::uint64_t subseed(std::uint64_t seed, std::uint64_t stream) {
    return seed ^ (0x9e3779b97f4a7c15ull * (stream + 1));
}

PixelRect rect_from_string(const std::string& s) {
    PixelRect r;
    char trailing;
    if (std::sscanf(s.c_str(), "%d,%d,%d,%d %c", &r.x0, &r.y0, &r.width, &r.height, &trailing) != 4)
        throw config_error("region must be 'x0,y0,w,h', got '" + s + "'");
    return r;
}

json reference_to_json(const std::optional<ReferenceSpec>& ref) {
    if (!ref) return nullptr;
    return {{"waist_mm", ref->waist}, {"lambda_mm", ref->lambda}, {"amplitude", ref->amplitude}};
}

CoincidenceImage read_image(const std::string& path) {
    GridSpec g;
    std::string plane;
    std::vector<double> data = read_matrix_csv(path, g, plane);
    CoincidenceImage img(g, plane == "farfield" ? ImagePlane::FarField : ImagePlane::Image);
    img.counts = std::move(data);
    return img;
}

std::vector<double> abs2(const ComplexField& f) {
    std::vector<double> a(f.values.size());
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = std::norm(f.values[k]);
    return a;
}

// --------------------------------------------------------------- simulate --

struct SimulateArgs {
    std::string config_path;
    std::string outdir_override;
    std::optional<std::uint64_t> seed_override;
    bool force_events = false;
};

int cmd_simulate(const SimulateArgs& args) {
    const json cfg = load_json(args.config_path);
    const GridSpec grid = grid_from_config(cfg);
    if (!cfg.contains("pump")) throw config_error("config needs a 'pump' section");
    const ModeSpec pump_spec = mode_from_config(cfg["pump"]);
    const auto ref = reference_from_config(cfg);

    std::optional<double> total_counts;
    std::optional<std::uint64_t> seed = args.seed_override;
    if (cfg.contains("noise") && !cfg["noise"].is_null()) {
        const json& nz = cfg["noise"];
        if (nz.contains("total_counts") && !nz["total_counts"].is_null())
            total_counts = get_num(nz, "total_counts");
        if (!seed) {
            if (nz.contains("seed") && !nz["seed"].is_null())
                seed = static_cast<std::uint64_t>(get_num(nz, "seed"));
            else if (nz.contains("seed"))
                seed = env_seed(); // "seed": null defers to the environment
        }
    }
    const bool sample = total_counts.has_value() && seed.has_value();

    OutputSet out;
    out.dir = args.outdir_override.empty()
        ? fs::path(cfg.contains("io") ? cfg["io"].value("outdir", "out") : "out")
        : fs::path(args.outdir_override);
    std::error_code ec;
    fs::create_directories(out.dir, ec);
    if (ec) throw io_error("cannot create output directory " + out.dir.string());

    WarningList warnings;
    ComplexField pump = evaluate_mode(pump_spec, grid, &warnings);
    BiphotonState state = thin_crystal_state(pump, pump_spec.waist);

    write_cfield(out.path("pump.cfield"), pump);
    out.record("pump.cfield");
    write_cfield(out.path("state.cfield"), state.psi);
    out.record("state.cfield");
    write_heatmap_pgm(out.path("state_amplitude.pgm"), grid, abs2(state.psi));
    out.record("state_amplitude.pgm");
    write_phase_ppm(out.path("state_phase.ppm"), state.psi);
    out.record("state_phase.ppm");

    CoincidenceImage pump_only = coincidence_diagonal(pump, nullptr, total_counts);
    CoincidenceImage pump_only_out = sample ? add_poisson_noise(pump_only, subseed(*seed, 0))
                                            : pump_only;
    write_matrix_csv(out.path("pump_only.csv"), grid, pump_only_out.counts, plane_name(pump_only.plane));
    out.record("pump_only.csv");
    out.record("pump_only.csv.hdr");

    if (ref) {
        ComplexField ref_field_raw = reference_field(*ref, grid);
        double pump_peak = 0.0;
        for (const cplx& v : pump.values) pump_peak = std::max(pump_peak, std::abs(v));
        for (cplx& v : ref_field_raw.values) v *= pump_peak; // 'amplitude' is relative to the pump peak
        CoincidenceImage interference = coincidence_diagonal(pump, &ref_field_raw, total_counts);
        if (sample) interference = add_poisson_noise(interference, subseed(*seed, 1));
        write_matrix_csv(out.path("interference.csv"), grid, interference.counts, "image");
        out.record("interference.csv");
        out.record("interference.csv.hdr");
        write_heatmap_pgm(out.path("interference.pgm"), grid, interference.counts);
        out.record("interference.pgm");
    }

    if (cfg.contains("events") || args.force_events) {
        if (!cfg.contains("events")) throw config_error("--events requires an 'events' config section");
        const json& ev = cfg["events"];
        RegionLayout layout;
        layout.region_a = rect_from_string(ev.value("region_a", std::string("0,0,128,128")));
        layout.region_b = rect_from_string(ev.value("region_b", std::string("128,0,128,128")));
        layout.pitch_mm = grid.pitch;
        if (layout.region_a.width != grid.n)
            throw config_error("events: region width " + std::to_string(layout.region_a.width) +
                               " must equal grid n " + std::to_string(grid.n));
        std::optional<std::uint64_t> ev_seed = args.seed_override;
        if (!ev_seed && ev.contains("seed") && !ev["seed"].is_null())
            ev_seed = static_cast<std::uint64_t>(get_num(ev, "seed"));
        if (!ev_seed) ev_seed = env_seed();
        if (!ev_seed) throw config_error("events: no seed given (events.seed, --seed or BIPHOTON_SEED)");
        const auto events = synthesize_event_stream(
            pump_only, layout, get_num(ev, "pair_rate_hz", 1e4), get_num(ev, "duration_s", 1.0),
            get_num(ev, "jitter_ns", 1.5), get_num(ev, "background_rate_hz", 0.0), *ev_seed);
        write_events_file(out.path("events.csv"), events);
        out.record("events.csv");
    }

    json manifest;
    manifest["command"] = "simulate";
    manifest["config"] = {{"grid", {{"n", grid.n}, {"pitch_mm", grid.pitch}}},
                          {"pump", mode_to_json(pump_spec)},
                          {"reference", reference_to_json(ref)},
                          {"noise", sample ? json{{"total_counts", *total_counts}, {"seed", *seed}}
                                           : (total_counts ? json{{"total_counts", *total_counts}}
                                                           : json(nullptr))}};
    manifest["warnings"] = warnings;
    manifest["outputs"] = out.entries;
    write_json_file(out.path("manifest.json"), manifest);
    std::cout << "manifest " << out.path("manifest.json") << '\n';
    return 0;
}

// ------------------------------------------------------------- reconstruct --

struct ReconstructArgs {
    std::string interference_path;
    std::string pump_only_path;
    std::string config_path;
    std::string truth_path;
    std::string outdir = "out";
    double filter_radius = 0.0; // rad/mm, 0 = auto
    std::string window = "raised-cosine";
};

int cmd_reconstruct(const ReconstructArgs& args) {
    const json cfg = load_json(args.config_path);
    const auto ref = reference_from_config(cfg);
    if (!ref) throw config_error("reconstruct needs a 'reference' config section");

    const CoincidenceImage interference = read_image(args.interference_path);
    std::optional<CoincidenceImage> pump_only;
    bool hologram_only = false;
    if (args.pump_only_path.empty()) {
        hologram_only = true;
    } else if (!fs::exists(args.pump_only_path)) {
        hologram_only = true;
        std::cerr << "warning: pump-only image " << args.pump_only_path
                  << " not found, falling back to hologram-only mode\n";
    } else {
        pump_only = read_image(args.pump_only_path);
        require_same_grid(interference.grid, pump_only->grid, "reconstruct");
    }

    SidebandFilter filter = SidebandFilter::nominal(*ref, interference.grid);
    filter.radius = args.filter_radius;
    if (args.window == "hard") filter.window = SidebandFilter::Window::Hard;
    else if (args.window != "raised-cosine") throw config_error("unknown window '" + args.window + "'");

    OutputSet out;
    out.dir = args.outdir;
    std::error_code ec;
    fs::create_directories(out.dir, ec);
    if (ec) throw io_error("cannot create output directory " + out.dir.string());

    HologramDiagnostics diag;
    WarningList warnings;
    const ComplexField rec = reconstruct_biphoton(interference, pump_only ? &*pump_only : nullptr,
                                                  *ref, filter, &diag, &warnings);

    write_cfield(out.path("reconstructed.cfield"), rec);
    out.record("reconstructed.cfield");
    write_heatmap_pgm(out.path("reconstructed_amplitude.pgm"), rec.grid, abs2(rec));
    out.record("reconstructed_amplitude.pgm");
    write_phase_ppm(out.path("reconstructed_phase.ppm"), rec);
    out.record("reconstructed_phase.ppm");

    json summary;
    summary["command"] = "reconstruct";
    summary["config"] = {{"reference", reference_to_json(ref)},
                         {"filter", {{"radius", diag.radius_used}, {"window", args.window}}}};
    summary["hologram_only"] = hologram_only;
    summary["carrier_found_rad_per_mm"] = {diag.carrier_found[0], diag.carrier_found[1]};
    summary["peak_to_floor"] = diag.peak_to_floor;
    summary["sideband_energy_total"] = diag.sideband_energy_total;
    summary["sideband_energy_kept"] = diag.sideband_energy_kept;
    summary["sideband_energy_discarded"] = diag.sideband_energy_total - diag.sideband_energy_kept;
    summary["clipped_fraction"] = diag.clipped_fraction;
    if (!args.truth_path.empty()) {
        const ComplexField truth = read_cfield(args.truth_path);
        summary["fidelity_vs_truth"] = field_fidelity(rec, truth);
    }
    summary["warnings"] = warnings;
    summary["outputs"] = out.entries;
    write_json_file(out.path("reconstruct_summary.json"), summary);
    std::cout << "summary " << out.path("reconstruct_summary.json") << '\n';
    if (summary.contains("fidelity_vs_truth"))
        std::cout << "fidelity_vs_truth " << summary["fidelity_vs_truth"].get<double>() << '\n';
    return 0;
}

// --------------------------------------------------------------- decompose --

struct DecomposeArgs {
    std::string state_path;
    std::string config_path;
    std::vector<std::string> bases;
    double waist = 0.0;
    int L = 5, p_max = 10, l_min = -5, l_max = 5, n_max = 6;
    std::optional<int> pump_l, pump_m, pump_n;
    std::optional<int> fix_li, fix_ls;
    bool bell = false;
    std::string counts_path;
    int resamples = 20;
    std::optional<std::uint64_t> seed;
    std::string outdir = "out";
};

void write_coeffs_csv(const std::string& path, const ModalCoefficients& mc) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    switch (mc.basis) {
        case ModalBasis::OAM: out << "li,ls,re,im\n"; break;
        case ModalBasis::LG: out << "pi,li,ps,ls,re,im\n"; break;
        case ModalBasis::HG: out << "mi,ni,ms,ns,re,im\n"; break;
    }
    const int K = mc.mode_count();
    for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b) {
            const auto la = mc.mode_label(a), lb = mc.mode_label(b);
            const cplx c = mc.coeff(a, b);
            if (mc.basis == ModalBasis::OAM)
                out << la[0] << ',' << lb[0];
            else
                out << la[0] << ',' << la[1] << ',' << lb[0] << ',' << lb[1];
            out << ',' << detail::fmt_double(c.real()) << ',' << detail::fmt_double(c.imag()) << '\n';
        }
    if (!out) throw io_error("write failed: " + path);
}

void write_corr_csv(const std::string& path, const CorrelationMatrix& corr) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    for (int r = 0; r < corr.rows; ++r) {
        for (int c = 0; c < corr.cols; ++c) {
            if (c) out << ',';
            out << detail::fmt_double(corr.at(r, c));
        }
        out << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
}

int cmd_decompose(const DecomposeArgs& args) {
    json cfg;
    std::optional<ModeSpec> pump_spec;
    if (!args.config_path.empty()) {
        cfg = load_json(args.config_path);
        if (cfg.contains("pump")) pump_spec = mode_from_config(cfg["pump"]);
    }

    ComplexField psi = read_cfield(args.state_path);
    double waist = args.waist;
    if (waist <= 0.0 && pump_spec) waist = pump_spec->waist;
    if (waist <= 0.0)
        throw config_error("decompose: no decomposition waist (--waist or config pump.waist_mm)");
    BiphotonState state{normalized(std::move(psi)), waist};

    // pump indices for the conservation laws, from flags or the config pump
    std::optional<int> pump_l = args.pump_l, pump_m = args.pump_m, pump_n = args.pump_n;
    if (pump_spec) {
        if (!pump_l && (pump_spec->kind == ModeSpec::Kind::LG || pump_spec->kind == ModeSpec::Kind::OAMGauss))
            pump_l = pump_spec->l;
        if (pump_spec->kind == ModeSpec::Kind::HG) {
            if (!pump_m) pump_m = pump_spec->m;
            if (!pump_n) pump_n = pump_spec->n;
        }
    }

    std::optional<BiphotonState> theory;
    if (pump_spec && pump_spec->kind != ModeSpec::Kind::Raster) {
        ComplexField tp = evaluate_mode(*pump_spec, state.psi.grid);
        theory = thin_crystal_state(std::move(tp), pump_spec->waist);
    }

    std::optional<CoincidenceImage> counts;
    if (!args.counts_path.empty()) counts = read_image(args.counts_path);
    std::optional<std::uint64_t> seed = args.seed ? args.seed : env_seed();

    OutputSet out;
    out.dir = args.outdir;
    std::error_code ec;
    fs::create_directories(out.dir, ec);
    if (ec) throw io_error("cannot create output directory " + out.dir.string());

    json report;
    report["command"] = "decompose";
    report["config"] = {{"state", args.state_path},
                        {"waist_mm", waist},
                        {"truncation", {{"L", args.L}, {"pmax", args.p_max}, {"lmin", args.l_min},
                                        {"lmax", args.l_max}, {"nmax", args.n_max}}},
                        {"pump", pump_spec ? mode_to_json(*pump_spec) : json(nullptr)}};
    report["bases"] = json::object();

    for (const std::string& basis : args.bases) {
        WarningList warnings;
        ModalCoefficients mc;
        if (basis == "oam") mc = oam_coefficients(state, waist, args.L, &warnings);
        else if (basis == "lg") mc = lg_decompose(state, waist, args.p_max, args.l_min, args.l_max, &warnings);
        else if (basis == "hg") mc = hg_decompose(state, waist, args.n_max, &warnings);
        else throw config_error("unknown basis '" + basis + "' (expected oam, lg or hg)");

        write_coeffs_csv(out.path("coeffs_" + basis + ".csv"), mc);
        out.record("coeffs_" + basis + ".csv");

        CorrelationMatrix corr =
            (basis == "lg" && args.fix_li && args.fix_ls)
                ? correlation_matrix(mc, {*args.fix_li, *args.fix_ls})
                : correlation_matrix(mc);
        write_corr_csv(out.path("corr_" + basis + ".csv"), corr);
        out.record("corr_" + basis + ".csv");
        write_heatmap_pgm(out.path("corr_" + basis + ".pgm"), corr.rows, corr.cols, corr.prob);
        out.record("corr_" + basis + ".pgm");

        json diag;
        diag["captured_fraction"] = mc.captured_fraction;

        if (basis == "oam" && pump_l) {
            const ConservationReport rep = conservation_diagnostics(corr, {*pump_l, 0});
            diag["mass_on_law"] = rep.mass_on_law;
            diag["leakage"] = rep.leakage;
        } else if (basis == "hg" && pump_m && pump_n) {
            const ConservationReport rep = conservation_diagnostics(corr, {*pump_m, *pump_n});
            diag["mass_on_law"] = rep.mass_on_law;
            diag["leakage"] = rep.leakage;
        }

        // theory / Bell fidelities, with a Poissonian bootstrap error when a
        // counts image is available (amplitude resampled, phase kept)
        std::optional<ModalCoefficients> target;
        std::string target_name;
        if (basis == "oam" && args.bell && pump_l) {
            target = bell_state_coefficients(*pump_l, args.L);
            target_name = "bell";
        } else if (theory) {
            if (basis == "oam") target = oam_coefficients(*theory, waist, args.L);
            else if (basis == "lg") target = lg_decompose(*theory, waist, args.p_max, args.l_min, args.l_max);
            else target = hg_decompose(*theory, waist, args.n_max);
            target_name = "thin-crystal theory";
        }
        if (target) {
            diag["fidelity"] = fidelity(mc, *target);
            diag["fidelity_target"] = target_name;
            if (counts) {
                if (!seed) throw config_error("bootstrap needs a seed (--seed or BIPHOTON_SEED)");
                const auto closure = [&](const CoincidenceImage& img) {
                    const ComplexField amp = amplitude_from_counts(img);
                    BiphotonState st{combine_amplitude_phase(amp, state.psi), waist};
                    ModalCoefficients m;
                    if (basis == "oam") m = oam_coefficients(st, waist, args.L);
                    else if (basis == "lg") m = lg_decompose(st, waist, args.p_max, args.l_min, args.l_max);
                    else m = hg_decompose(st, waist, args.n_max);
                    return fidelity(m, *target);
                };
                const BootstrapResult bs = bootstrap_uncertainty(closure, *counts, args.resamples, *seed);
                diag["fidelity_err"] = bs.stddev;
                diag["fidelity_bootstrap_mean"] = bs.mean;
                diag["bootstrap_resamples"] = bs.n_resamples;
            }
        }
        diag["warnings"] = warnings;
        report["bases"][basis] = diag;
    }

    report["outputs"] = out.entries;
    write_json_file(out.path("decompose_report.json"), report);
    std::cout << "report " << out.path("decompose_report.json") << '\n';
    return 0;
}

// ------------------------------------------------------------------ fit-pm --

struct FitArgs {
    std::string input_path;
    std::string model = "sinc2";
    double lambda_p_nm = 405.0;
    std::string output = "fit.json";
};

int cmd_fit_pm(const FitArgs& args) {
    const CoincidenceImage farfield = read_image(args.input_path);
    PhaseMatchingModel model;
    if (args.model == "sinc2") model = PhaseMatchingModel::SincSquared;
    else if (args.model == "sinc") model = PhaseMatchingModel::Sinc;
    else throw config_error("unknown model '" + args.model + "' (expected sinc or sinc2)");

    const FitResult fr = fit_phase_matching(farfield, model);
    const double lambda_mm = args.lambda_p_nm * 1e-6;

    json j;
    j["command"] = "fit-pm";
    j["config"] = {{"input", args.input_path}, {"model", args.model}, {"lambda_p_nm", args.lambda_p_nm}};
    j["model"] = model_name(fr.model);
    j["A"] = fr.params.amplitude;
    j["alpha_mm2"] = fr.params.alpha;
    j["zeta"] = fr.params.zeta;
    j["stderr"] = {{"A", fr.stderr_amplitude}, {"alpha_mm2", fr.stderr_alpha}, {"zeta", fr.stderr_zeta}};
    j["L_mm"] = derive_crystal_length(fr.params.alpha, lambda_mm);
    j["rms"] = fr.residual_rms;
    j["converged"] = fr.converged;
    j["iterations"] = fr.iterations;
    write_json_file(args.output, j);
    std::cout << "fit " << args.output << '\n';
    return 0;
}

// ------------------------------------------------------------------ events --

struct EventsArgs {
    std::string input_path;
    std::string region_a = "0,0,128,128";
    std::string region_b = "128,0,128,128";
    double window_ns = 5.0;
    int max_offset_px = 1;
    double pitch_mm = 0.055;
    std::string truth_path;
    std::string outdir = "out";
};

int cmd_events(const EventsArgs& args) {
    RegionLayout layout;
    layout.region_a = rect_from_string(args.region_a);
    layout.region_b = rect_from_string(args.region_b);
    layout.pitch_mm = args.pitch_mm;
    try {
        layout.validate();
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }

    const ParseResult parsed = parse_events_file(args.input_path);

    OutputSet out;
    out.dir = args.outdir;
    std::error_code ec;
    fs::create_directories(out.dir, ec);
    if (ec) throw io_error("cannot create output directory " + out.dir.string());

    json summary;
    summary["command"] = "events";
    summary["config"] = {{"input", args.input_path}, {"region_a", args.region_a},
                         {"region_b", args.region_b}, {"window_ns", args.window_ns},
                         {"max_offset_px", args.max_offset_px}};
    summary["events"] = parsed.events.size();
    summary["rejected_lines"] = parsed.rejected_lines;

    const auto pairs = find_coincidences(parsed.events, layout, args.window_ns);
    const auto kept = background_filter(pairs, layout, args.max_offset_px);
    write_pairs_file(out.path("pairs.csv"), kept);
    out.record("pairs.csv");
    summary["pairs"] = pairs.size();
    summary["pairs_kept"] = kept.size();
    summary["accidental_estimate"] =
        shifted_window_accidentals(parsed.events, layout, args.window_ns);

    if (!kept.empty()) {
        const CorrelationHistogram hx = spatial_correlation(kept, layout, Axis::X);
        const CorrelationHistogram hy = spatial_correlation(kept, layout, Axis::Y);
        std::ofstream cx(out.path("corr_x.csv")), cy(out.path("corr_y.csv"));
        for (int a = 0; a < hx.size; ++a) {
            for (int b = 0; b < hx.size; ++b) {
                cx << (b ? "," : "") << detail::fmt_double(hx.at(a, b));
                cy << (b ? "," : "") << detail::fmt_double(hy.at(a, b));
            }
            cx << '\n';
            cy << '\n';
        }
        cx.close();
        cy.close();
        out.record("corr_x.csv");
        out.record("corr_y.csv");
        summary["diagonal_fraction_x"] = hx.diagonal_fraction;
        summary["diagonal_fraction_y"] = hy.diagonal_fraction;

        const CoincidenceImage img = coincidence_image_from_pairs(kept, layout);
        write_matrix_csv(out.path("coincidence_image.csv"), img.grid, img.counts, "image");
        out.record("coincidence_image.csv");
        out.record("coincidence_image.csv.hdr");
        write_heatmap_pgm(out.path("coincidence_image.pgm"), img.grid, img.counts);
        out.record("coincidence_image.pgm");
    }

    if (!args.truth_path.empty()) {
        // truth pairs are keyed by their exact (toa_a, toa_b); the event CSV
        // round-trips doubles exactly
        struct Key {
            double ta, tb;
            bool operator<(const Key& o) const { return ta != o.ta ? ta < o.ta : tb < o.tb; }
        };
        std::vector<Key> truth;
        {
            auto in = detail::open_in(args.truth_path);
            std::string line;
            std::getline(in, line); // header
            double ta, tb;
            int xa, ya, xb, yb;
            while (std::getline(in, line))
                if (std::sscanf(line.c_str(), "%d,%d,%lf,%d,%d,%lf", &xa, &ya, &ta, &xb, &yb, &tb) == 6)
                    truth.push_back({ta, tb});
        }
        std::sort(truth.begin(), truth.end());
        std::size_t hits = 0;
        for (const CoincidencePair& p : kept) {
            const Key k{p.event_a.toa, p.event_b.toa};
            if (std::binary_search(truth.begin(), truth.end(), k)) ++hits;
        }
        summary["truth_pairs"] = truth.size();
        summary["recall"] = truth.empty() ? 0.0 : static_cast<double>(hits) / truth.size();
        summary["precision"] = kept.empty() ? 0.0 : static_cast<double>(hits) / kept.size();
        std::cout << "recall " << summary["recall"].get<double>() << " precision "
                  << summary["precision"].get<double>() << '\n';
    }

    summary["outputs"] = out.entries;
    write_json_file(out.path("events_summary.json"), summary);
    std::cout << "summary " << out.path("events_summary.json") << '\n';
    return 0;
}

// ------------------------------------------------------------------ report --

int cmd_report(const std::vector<std::string>& inputs, const std::string& output) {
    json rep;
    rep["command"] = "report";
    rep["reports"] = json::array();
    for (const std::string& path : inputs) {
        json entry;
        entry["file"] = path;
        entry["content"] = load_json(path);
        rep["reports"].push_back(entry);
    }
    write_json_file(output, rep);
    std::cout << "report " << output << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatial biphoton state simulation and analysis"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "synthesize pump, state and coincidence images");
    c_sim->add_option("--config", sim.config_path, "pipeline config JSON")->required();
    c_sim->add_option("--outdir", sim.outdir_override, "output directory (overrides config io.outdir)");
    std::uint64_t sim_seed = 0;
    auto* sim_seed_opt = c_sim->add_option("--seed", sim_seed, "noise seed (overrides config)");
    c_sim->add_flag("--events", sim.force_events, "also synthesize an event stream");

    ReconstructArgs rec;
    auto* c_rec = app.add_subcommand("reconstruct", "off-axis holographic state reconstruction");
    c_rec->add_option("--interference", rec.interference_path, "interference coincidence image CSV")->required();
    c_rec->add_option("--pump-only", rec.pump_only_path, "pump-only coincidence image CSV");
    c_rec->add_option("--config", rec.config_path, "pipeline config JSON (reference section)")->required();
    c_rec->add_option("--truth", rec.truth_path, "ground-truth .cfield for fidelity reporting");
    c_rec->add_option("--outdir", rec.outdir, "output directory");
    c_rec->add_option("--filter-radius", rec.filter_radius, "sideband filter radius in rad/mm (0 = auto)");
    c_rec->add_option("--window", rec.window, "sideband window: raised-cosine|hard");

    DecomposeArgs dec;
    auto* c_dec = app.add_subcommand("decompose", "modal decomposition and diagnostics");
    c_dec->add_option("--state", dec.state_path, ".cfield state file")->required();
    c_dec->add_option("--config", dec.config_path, "pipeline config JSON (pump metadata)");
    c_dec->add_option("--basis", dec.bases, "bases: oam, lg, hg (repeatable)")->required();
    c_dec->add_option("--waist", dec.waist, "decomposition waist in mm");
    c_dec->add_option("--L", dec.L, "OAM truncation");
    c_dec->add_option("--pmax", dec.p_max, "LG radial truncation");
    c_dec->add_option("--lmin", dec.l_min, "LG OAM range lower bound");
    c_dec->add_option("--lmax", dec.l_max, "LG OAM range upper bound");
    c_dec->add_option("--nmax", dec.n_max, "HG order truncation");
    int pl = 0, pm = 0, pn = 0, fli = 0, fls = 0;
    auto* o_pl = c_dec->add_option("--pump-l", pl, "pump OAM for the conservation law");
    auto* o_pm = c_dec->add_option("--pump-m", pm, "pump HG m parity");
    auto* o_pn = c_dec->add_option("--pump-n", pn, "pump HG n parity");
    auto* o_fli = c_dec->add_option("--fix-li", fli, "LG slice: fixed idler OAM");
    auto* o_fls = c_dec->add_option("--fix-ls", fls, "LG slice: fixed signal OAM");
    c_dec->add_flag("--bell", dec.bell, "report fidelity against the high-dimensional Bell state");
    c_dec->add_option("--counts", dec.counts_path, "counts image CSV for bootstrap errors");
    c_dec->add_option("--resamples", dec.resamples, "bootstrap resample count");
    std::uint64_t dec_seed = 0;
    auto* dec_seed_opt = c_dec->add_option("--seed", dec_seed, "bootstrap seed");
    c_dec->add_option("--outdir", dec.outdir, "output directory");

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit-pm", "fit the phase-matching envelope");
    c_fit->add_option("--input", fit.input_path, "far-field image CSV")->required();
    c_fit->add_option("--model", fit.model, "sinc or sinc2");
    c_fit->add_option("--lambda-p-nm", fit.lambda_p_nm, "pump wavelength in nm");
    c_fit->add_option("--output", fit.output, "output JSON path");

    EventsArgs ev;
    auto* c_ev = app.add_subcommand("events", "match and analyze a time-stamped event stream");
    c_ev->add_option("--input", ev.input_path, "event CSV")->required();
    c_ev->add_option("--region-a", ev.region_a, "region A as x0,y0,w,h");
    c_ev->add_option("--region-b", ev.region_b, "region B as x0,y0,w,h");
    c_ev->add_option("--window-ns", ev.window_ns, "coincidence window in ns");
    c_ev->add_option("--max-offset-px", ev.max_offset_px, "background filter offset");
    c_ev->add_option("--pitch-mm", ev.pitch_mm, "sensor pixel pitch in mm");
    c_ev->add_option("--truth", ev.truth_path, "ground-truth pair CSV for recall/precision");
    c_ev->add_option("--outdir", ev.outdir, "output directory");

    std::vector<std::string> rep_inputs;
    std::string rep_output = "report.json";
    auto* c_rep = app.add_subcommand("report", "aggregate JSON summaries into one run report");
    c_rep->add_option("--inputs", rep_inputs, "summary JSON files")->required();
    c_rep->add_option("--output", rep_output, "aggregated report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (c_sim->parsed()) {
            if (sim_seed_opt->count()) sim.seed_override = sim_seed;
            return cmd_simulate(sim);
        }
        if (c_rec->parsed()) return cmd_reconstruct(rec);
        if (c_dec->parsed()) {
            if (o_pl->count()) dec.pump_l = pl;
            if (o_pm->count()) dec.pump_m = pm;
            if (o_pn->count()) dec.pump_n = pn;
            if (o_fli->count()) dec.fix_li = fli;
            if (o_fls->count()) dec.fix_ls = fls;
            if (dec_seed_opt->count()) dec.seed = dec_seed;
            return cmd_decompose(dec);
        }
        if (c_fit->parsed()) return cmd_fit_pm(fit);
        if (c_ev->parsed()) return cmd_events(ev);
        if (c_rep->parsed()) return cmd_report(rep_inputs, rep_output);
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const carrier_error& e) {
        std::cerr << "error: " << e.what()
                  << " (is the reference tilted and the carrier resolved on this grid?)\n";
        return 4;
    } catch (const fit_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 2;
}
