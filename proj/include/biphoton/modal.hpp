// Modal analysis of thin-crystal biphoton states: OAM / LG / HG pair
// decompositions, correlation matrices, conservation-law diagnostics,
// fidelities and Poissonian bootstrap error bars.
//
// All decompositions integrate directly on the crystal-plane grid. The pair
// coefficient against pump-plane kets of waist w equals, after the exact
// substitution rho -> 2 rho, the quadrature of the state against kets of
// waist w/2, so no resampling (and no interpolation error) enters here.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>

#include "biphoton/grid.hpp"
#include "biphoton/modes.hpp"
#include "biphoton/spdc.hpp"

namespace biphoton {

enum class ModalBasis { OAM, LG, HG };

inline const char* basis_name(ModalBasis b) {
    switch (b) {
        case ModalBasis::OAM: return "oam";
        case ModalBasis::LG: return "lg";
        case ModalBasis::HG: return "hg";
    }
    return "?";
}

// Complex coefficient tensor over (idler mode, signal mode) pairs, block
// normalized so sum |c|^2 = 1 over the truncation.
struct ModalCoefficients {
    ModalBasis basis = ModalBasis::OAM;
    double waist = 0.0; // decomposition waist, pump-plane convention (mm)

    int L = 0;                            // OAM: l in [-L, L]
    int p_max = 0, l_min = 0, l_max = 0;  // LG: p in [0, p_max], l in [l_min, l_max]
    int n_max = 0;                        // HG: m, n in [0, n_max]

    std::vector<cplx> coeffs;       // K*K, idler index slow
    double captured_fraction = 1.0; // pre-normalization energy coverage of the block

    int mode_count() const {
        switch (basis) {
            case ModalBasis::OAM: return 2 * L + 1;
            case ModalBasis::LG: return (p_max + 1) * (l_max - l_min + 1);
            case ModalBasis::HG: return (n_max + 1) * (n_max + 1);
        }
        return 0;
    }

    // label of the k-th mode: OAM -> (l, 0); LG -> (p, l); HG -> (m, n)
    std::array<int, 2> mode_label(int k) const {
        switch (basis) {
            case ModalBasis::OAM: return {k - L, 0};
            case ModalBasis::LG: return {k % (p_max + 1), l_min + k / (p_max + 1)};
            case ModalBasis::HG: return {k / (n_max + 1), k % (n_max + 1)};
        }
        return {0, 0};
    }

    cplx& coeff(int ki, int ks) { return coeffs[static_cast<std::size_t>(ki) * mode_count() + ks]; }
    const cplx& coeff(int ki, int ks) const { return coeffs[static_cast<std::size_t>(ki) * mode_count() + ks]; }

    bool same_block(const ModalCoefficients& o) const {
        return basis == o.basis && L == o.L && p_max == o.p_max &&
               l_min == o.l_min && l_max == o.l_max && n_max == o.n_max;
    }
};

// Probabilities |c|^2 renormalized over a (possibly sliced) block.
struct CorrelationMatrix {
    ModalBasis basis = ModalBasis::OAM;
    int rows = 0, cols = 0;
    std::vector<std::array<int, 2>> row_labels, col_labels;
    std::vector<double> prob; // rows*cols, sums to 1

    double& at(int r, int c) { return prob[static_cast<std::size_t>(r) * cols + c]; }
    const double& at(int r, int c) const { return prob[static_cast<std::size_t>(r) * cols + c]; }
};

namespace detail {

inline void block_normalize(ModalCoefficients& mc) {
    double mass = 0.0;
    for (const cplx& c : mc.coeffs) mass += std::norm(c);
    if (!(mass > 0.0)) throw std::runtime_error("modal decomposition: all coefficients vanish");
    const double s = 1.0 / std::sqrt(mass);
    for (cplx& c : mc.coeffs) c *= s;
}

inline void warn_capture(const ModalCoefficients& mc, WarningList* warnings) {
    if (mc.captured_fraction < 0.90)
        push_warning(warnings, std::string(basis_name(mc.basis)) + " truncation captures only " +
                               std::to_string(mc.captured_fraction * 100.0) + "% of the state energy");
}

// n^2 x K matrix whose columns are the evaluated modes
inline Eigen::MatrixXcd mode_matrix(const std::vector<ModeSpec>& specs, const GridSpec& grid) {
    Eigen::MatrixXcd M(grid.size(), specs.size());
    for (std::size_t k = 0; k < specs.size(); ++k) {
        const ComplexField f = evaluate_mode(specs[k], grid);
        for (std::size_t x = 0; x < f.values.size(); ++x) M(x, k) = f.values[x];
    }
    return M;
}

// Pair coefficients c_ab = sum conj(A) conj(B) psi pitch^2 for all mode pairs,
// symmetrized exactly, plus the single-photon capture sum |<A|psi>|^2.
inline void pair_coefficients(const BiphotonState& state, const std::vector<ModeSpec>& specs,
                              ModalCoefficients& mc) {
    const GridSpec& g = state.psi.grid;
    const double w2 = g.pitch * g.pitch;
    const Eigen::MatrixXcd M = mode_matrix(specs, g);
    const Eigen::Map<const Eigen::VectorXcd> s(state.psi.values.data(),
                                               static_cast<Eigen::Index>(g.size()));

    const Eigen::VectorXcd sc = s.conjugate();
    const Eigen::MatrixXcd G = M.transpose() * (sc.asDiagonal() * M);

    const int K = static_cast<int>(specs.size());
    mc.coeffs.assign(static_cast<std::size_t>(K) * K, cplx(0.0, 0.0));
    for (int a = 0; a < K; ++a)
        for (int b = a; b < K; ++b) {
            const cplx v = std::conj(G(a, b)) * w2;
            mc.coeff(a, b) = v;
            mc.coeff(b, a) = v; // symmetric integrand: swap symmetry is exact
        }

    const Eigen::VectorXcd d = M.adjoint() * s;
    double cap = 0.0;
    for (int k = 0; k < K; ++k) cap += std::norm(d(k)) * w2 * w2;
    const double total = norm_sq(state.psi);
    mc.captured_fraction = total > 0.0 ? cap / total : 0.0;
}

} // namespace detail

// OAM pair coefficients per the Gaussian-ket overlap: on the crystal plane the
// kets have waist w_p/2, so c_{li,ls} = sum psi exp(-8 r^2 / w_p^2)
// exp(-i (li+ls) phi) pitch^2; the tensor depends on li+ls only.
inline ModalCoefficients oam_coefficients(const BiphotonState& state, double w_p, int L,
                                          WarningList* warnings = nullptr) {
    if (L < 0) throw std::invalid_argument("oam_coefficients: L must be >= 0");
    if (!(w_p > 0.0)) throw std::invalid_argument("oam_coefficients: waist must be > 0");
    const GridSpec& g = state.psi.grid;
    g.validate();

    // scan a wider band of azimuthal orders to estimate the captured fraction
    const int d_reach = 2 * L;
    const int d_scan = 2 * d_reach + 8;
    std::vector<cplx> gsum(2 * d_scan + 1, cplx(0.0, 0.0));
    const double inv_w2 = 8.0 / (w_p * w_p);

    // The Gaussian-times-vortex kernel varies steeply across the pixels near
    // the axis, so the kernel (the analytic factor) is averaged over each
    // pixel with a 4x4 Gauss-Legendre rule while the state keeps its
    // pixel-center sample. The node pattern is 90-degree symmetric, which
    // preserves the exact cancellation of orders not divisible by four.
    static constexpr double gl_node[4] = {-0.43056815579702629, -0.16999052179242813,
                                          0.16999052179242813, 0.43056815579702629};
    static constexpr double gl_weight[4] = {0.17392742256872693, 0.32607257743127307,
                                            0.32607257743127307, 0.17392742256872693};
    std::vector<cplx> kernel(2 * d_scan + 1);
    for (int i = 0; i < g.n; ++i) {
        const double x = g.coord(i);
        for (int j = 0; j < g.n; ++j) {
            const double y = g.coord(j);
            const cplx psi = state.psi.at(i, j);
            if (psi == cplx(0.0, 0.0)) continue;
            const double r_in = std::max(0.0, std::hypot(x, y) - g.pitch);
            if (r_in * r_in * inv_w2 > 46.0) continue; // kernel below ~1e-20 here
            std::fill(kernel.begin(), kernel.end(), cplx(0.0, 0.0));
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) {
                    const double xs = x + gl_node[a] * g.pitch;
                    const double ys = y + gl_node[b] * g.pitch;
                    const double env = gl_weight[a] * gl_weight[b] *
                                       std::exp(-(xs * xs + ys * ys) * inv_w2);
                    const double phi = std::atan2(ys, xs);
                    const cplx step = std::polar(1.0, -phi);
                    kernel[d_scan] += env;
                    cplx rp = step, rm = std::conj(step);
                    for (int d = 1; d <= d_scan; ++d) {
                        kernel[d_scan + d] += env * rp;
                        kernel[d_scan - d] += env * rm;
                        rp *= step;
                        rm *= std::conj(step);
                    }
                }
            for (int d = -d_scan; d <= d_scan; ++d) gsum[d_scan + d] += psi * kernel[d_scan + d];
        }
    }
    const double w2 = g.pitch * g.pitch;
    for (cplx& v : gsum) v *= w2;

    ModalCoefficients mc;
    mc.basis = ModalBasis::OAM;
    mc.waist = w_p;
    mc.L = L;
    const int K = 2 * L + 1;
    mc.coeffs.assign(static_cast<std::size_t>(K) * K, cplx(0.0, 0.0));
    for (int ki = 0; ki < K; ++ki)
        for (int ks = 0; ks < K; ++ks) {
            const int delta = (ki - L) + (ks - L);
            mc.coeff(ki, ks) = gsum[d_scan + delta];
        }

    double in_reach = 0.0, scanned = 0.0;
    for (int d = -d_scan; d <= d_scan; ++d) {
        const double m = std::norm(gsum[d_scan + d]);
        scanned += m;
        if (std::abs(d) <= d_reach) in_reach += m;
    }
    mc.captured_fraction = scanned > 0.0 ? in_reach / scanned : 0.0;

    detail::block_normalize(mc);
    detail::warn_capture(mc, warnings);
    return mc;
}

inline ModalCoefficients lg_decompose(const BiphotonState& state, double w, int p_max,
                                      int l_min, int l_max, WarningList* warnings = nullptr) {
    if (!(w > 0.0)) throw std::invalid_argument("lg_decompose: waist must be > 0");
    if (p_max < 0 || l_min > l_max) throw std::invalid_argument("lg_decompose: empty index range");
    ModalCoefficients mc;
    mc.basis = ModalBasis::LG;
    mc.waist = w;
    mc.p_max = p_max;
    mc.l_min = l_min;
    mc.l_max = l_max;

    std::vector<ModeSpec> specs;
    specs.reserve(mc.mode_count());
    for (int l = l_min; l <= l_max; ++l)
        for (int p = 0; p <= p_max; ++p)
            specs.push_back(ModeSpec::lg(p, l, 0.5 * w)); // crystal-plane kets
    detail::pair_coefficients(state, specs, mc);
    detail::block_normalize(mc);
    detail::warn_capture(mc, warnings);
    return mc;
}

inline ModalCoefficients hg_decompose(const BiphotonState& state, double w, int n_max,
                                      WarningList* warnings = nullptr) {
    if (!(w > 0.0)) throw std::invalid_argument("hg_decompose: waist must be > 0");
    if (n_max < 0) throw std::invalid_argument("hg_decompose: empty index range");
    ModalCoefficients mc;
    mc.basis = ModalBasis::HG;
    mc.waist = w;
    mc.n_max = n_max;

    std::vector<ModeSpec> specs;
    specs.reserve(mc.mode_count());
    for (int m = 0; m <= n_max; ++m)
        for (int n = 0; n <= n_max; ++n)
            specs.push_back(ModeSpec::hg(m, n, 0.5 * w));
    detail::pair_coefficients(state, specs, mc);
    detail::block_normalize(mc);
    detail::warn_capture(mc, warnings);
    return mc;
}

// |c|^2 over the full block, renormalized to sum 1.
inline CorrelationMatrix correlation_matrix(const ModalCoefficients& mc) {
    const int K = mc.mode_count();
    CorrelationMatrix corr;
    corr.basis = mc.basis;
    corr.rows = corr.cols = K;
    corr.prob.resize(static_cast<std::size_t>(K) * K);
    double mass = 0.0;
    for (std::size_t k = 0; k < corr.prob.size(); ++k) {
        corr.prob[k] = std::norm(mc.coeffs[k]);
        mass += corr.prob[k];
    }
    if (!(mass > 0.0)) throw std::runtime_error("correlation_matrix: all-zero coefficients");
    for (double& p : corr.prob) p /= mass;
    corr.row_labels.resize(K);
    corr.col_labels.resize(K);
    for (int k = 0; k < K; ++k) corr.row_labels[k] = corr.col_labels[k] = mc.mode_label(k);
    return corr;
}

// LG radial slice at fixed OAM indices (l_i, l_s): probabilities over (p_i, p_s).
inline CorrelationMatrix correlation_matrix(const ModalCoefficients& mc,
                                            std::pair<int, int> fixed_l) {
    if (mc.basis != ModalBasis::LG)
        throw std::invalid_argument("correlation_matrix: fixed OAM slices need the LG basis");
    const auto [li, ls] = fixed_l;
    if (li < mc.l_min || li > mc.l_max || ls < mc.l_min || ls > mc.l_max)
        throw std::invalid_argument("correlation_matrix: fixed OAM index outside the block");
    const int P = mc.p_max + 1;
    auto mode_of = [&](int p, int l) { return (l - mc.l_min) * P + p; };

    CorrelationMatrix corr;
    corr.basis = ModalBasis::LG;
    corr.rows = corr.cols = P;
    corr.prob.resize(static_cast<std::size_t>(P) * P);
    double mass = 0.0;
    for (int pi = 0; pi < P; ++pi)
        for (int ps = 0; ps < P; ++ps) {
            const double v = std::norm(mc.coeff(mode_of(pi, li), mode_of(ps, ls)));
            corr.at(pi, ps) = v;
            mass += v;
        }
    if (!(mass > 0.0)) throw std::runtime_error("correlation_matrix: all-zero slice");
    for (double& p : corr.prob) p /= mass;
    corr.row_labels.resize(P);
    corr.col_labels.resize(P);
    for (int p = 0; p < P; ++p) {
        corr.row_labels[p] = {p, li};
        corr.col_labels[p] = {p, ls};
    }
    return corr;
}

// |sum conj(C_meas) C_th|^2 over matching blocks, both renormalized.
inline double fidelity(const ModalCoefficients& measured, const ModalCoefficients& theory) {
    if (!measured.same_block(theory))
        throw std::invalid_argument("fidelity: basis or index range mismatch");
    double ma = 0.0, mb = 0.0;
    cplx overlap(0.0, 0.0);
    for (std::size_t k = 0; k < measured.coeffs.size(); ++k) {
        ma += std::norm(measured.coeffs[k]);
        mb += std::norm(theory.coeffs[k]);
        overlap += std::conj(measured.coeffs[k]) * theory.coeffs[k];
    }
    if (!(ma > 0.0) || !(mb > 0.0)) throw std::runtime_error("fidelity: zero coefficient block");
    return std::norm(overlap) / (ma * mb);
}

// |Psi_Bell> = 1/sqrt(2L+1-l_p) sum_{l=-L+l_p}^{L} |l>|l_p - l>
inline ModalCoefficients bell_state_coefficients(int l_p, int L) {
    if (L < 0 || l_p < 0 || l_p > 2 * L)
        throw std::invalid_argument("bell_state_coefficients: empty index range");
    ModalCoefficients mc;
    mc.basis = ModalBasis::OAM;
    mc.L = L;
    const int K = 2 * L + 1;
    mc.coeffs.assign(static_cast<std::size_t>(K) * K, cplx(0.0, 0.0));
    const double amp = 1.0 / std::sqrt(2 * L + 1 - l_p);
    for (int li = -L + l_p; li <= L; ++li)
        mc.coeff(li + L, (l_p - li) + L) = amp;
    return mc;
}

struct ConservationReport {
    double mass_on_law = 0.0;
    double leakage = 0.0;
};

// OAM: probability mass on l_i + l_s = l_p. HG: mass on the parity lines
// mod(m_i+m_s,2) = mod(m_p,2) and mod(n_i+n_s,2) = mod(n_p,2).
inline ConservationReport conservation_diagnostics(const CorrelationMatrix& corr,
                                                   std::array<int, 2> pump_indices) {
    if (corr.basis == ModalBasis::LG)
        throw std::invalid_argument("conservation_diagnostics: basis must be OAM or HG");
    ConservationReport rep;
    for (int r = 0; r < corr.rows; ++r)
        for (int c = 0; c < corr.cols; ++c) {
            const auto& a = corr.row_labels[r];
            const auto& b = corr.col_labels[c];
            bool on_law;
            if (corr.basis == ModalBasis::OAM) {
                on_law = a[0] + b[0] == pump_indices[0];
            } else {
                on_law = ((a[0] + b[0]) % 2 == ((pump_indices[0] % 2) + 2) % 2) &&
                         ((a[1] + b[1]) % 2 == ((pump_indices[1] % 2) + 2) % 2);
            }
            if (on_law) rep.mass_on_law += corr.at(r, c);
        }
    rep.leakage = 1.0 - rep.mass_on_law;
    return rep;
}

struct BootstrapResult {
    double mean = 0.0;
    double stddev = 0.0;
    int n_resamples = 0;
    int failures = 0;
};

// Re-runs a scalar diagnostic on Poisson-perturbed copies of a counts image
// (each pixel replaced by a Poisson draw at its mean) and reports the spread.
// The paper's protocol uses 20 realizations.
inline BootstrapResult bootstrap_uncertainty(
    const std::function<double(const CoincidenceImage&)>& diagnostic,
    const CoincidenceImage& image, int n_resamples, std::uint64_t seed) {
    if (n_resamples < 2) throw std::invalid_argument("bootstrap_uncertainty: need >= 2 resamples");
    std::vector<double> vals;
    vals.reserve(n_resamples);
    int failures = 0;
    for (int k = 0; k < n_resamples; ++k) {
        const std::uint64_t sub = seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(k + 1));
        try {
            vals.push_back(diagnostic(add_poisson_noise(image, sub)));
        } catch (const std::exception&) {
            ++failures;
        }
    }
    if (vals.size() < 2)
        throw std::runtime_error("bootstrap_uncertainty: fewer than 2 resamples succeeded");
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    BootstrapResult res;
    res.mean = mean;
    res.stddev = std::sqrt(ss / static_cast<double>(vals.size() - 1));
    res.n_resamples = n_resamples;
    res.failures = failures;
    return res;
}

} // namespace biphoton
