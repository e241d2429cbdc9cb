// Nonlinear least squares for the phase-matching envelope
//   I(q) = A f(4 alpha |q|^2 + zeta),   f = sinc or sinc^2,
// by damped Gauss-Newton with analytic Jacobian, plus the derived crystal
// length and a Poissonian bootstrap of the parameter spread.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>

#include "biphoton/spdc.hpp"

namespace biphoton {

struct fit_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RadialSample {
    double q = 0.0;      // rad/mm
    double value = 0.0;  // mean counts in the annulus
    double weight = 1.0; // pixels contributing (least-squares weight)
};

struct FitResult {
    PhaseMatchingParams params;
    PhaseMatchingModel model = PhaseMatchingModel::SincSquared;
    double stderr_amplitude = 0.0;
    double stderr_alpha = 0.0;
    double stderr_zeta = 0.0;
    double residual_rms = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> objective_history; // accepted-step objective values
};

inline double pm_model_value(PhaseMatchingModel model, const PhaseMatchingParams& p, double q) {
    const double s = sinc(4.0 * p.alpha * q * q + p.zeta);
    return p.amplitude * (model == PhaseMatchingModel::Sinc ? s : s * s);
}

// d(model)/d(A, alpha, zeta)
inline std::array<double, 3> pm_model_jacobian(PhaseMatchingModel model,
                                               const PhaseMatchingParams& p, double q) {
    const double u = 4.0 * p.alpha * q * q + p.zeta;
    const double s = sinc(u);
    const double sp = sinc_prime(u);
    const double f = model == PhaseMatchingModel::Sinc ? s : s * s;
    const double fp = model == PhaseMatchingModel::Sinc ? sp : 2.0 * s * sp;
    return {f, p.amplitude * fp * 4.0 * q * q, p.amplitude * fp};
}

// Azimuthal average into annuli one q-bin wide; the abscissa is the weighted
// mean |q| of the annulus and the weight is the pixel count.
inline std::vector<RadialSample> radial_profile(const CoincidenceImage& farfield) {
    const GridSpec& g = farfield.grid;
    g.validate();
    const double dq = g.pitch;
    const int nbins = g.n; // generous upper bound, corners included
    std::vector<double> sum(nbins, 0.0), qsum(nbins, 0.0), cnt(nbins, 0.0);
    for (int i = 0; i < g.n; ++i) {
        const double qx = g.coord(i);
        for (int j = 0; j < g.n; ++j) {
            const double q = std::hypot(qx, g.coord(j));
            const int b = static_cast<int>(std::lround(q / dq));
            if (b >= nbins) continue;
            sum[b] += farfield.at(i, j);
            qsum[b] += q;
            cnt[b] += 1.0;
        }
    }
    std::vector<RadialSample> out;
    out.reserve(nbins);
    for (int b = 0; b < nbins; ++b)
        if (cnt[b] > 0.0) out.push_back({qsum[b] / cnt[b], sum[b] / cnt[b], cnt[b]});
    return out;
}

namespace detail {

// initial guess from the first (and second, when visible) zero of the profile
inline PhaseMatchingParams auto_initial_guess(const std::vector<RadialSample>& data,
                                              PhaseMatchingModel model) {
    PhaseMatchingParams p;
    p.amplitude = 0.0;
    for (const RadialSample& s : data) p.amplitude = std::max(p.amplitude, std::abs(s.value));
    if (!(p.amplitude > 0.0)) p.amplitude = 1.0;

    std::vector<double> zeros;
    if (model == PhaseMatchingModel::Sinc) {
        for (std::size_t k = 1; k < data.size() && zeros.size() < 2; ++k)
            if ((data[k - 1].value > 0.0) != (data[k].value > 0.0))
                zeros.push_back(0.5 * (data[k - 1].q + data[k].q));
    } else {
        const double floor = 0.05 * p.amplitude;
        for (std::size_t k = 1; k + 1 < data.size() && zeros.size() < 2; ++k)
            if (data[k].value < floor && data[k].value <= data[k - 1].value &&
                data[k].value <= data[k + 1].value) {
                zeros.push_back(data[k].q);
                ++k; // skip the flat neighborhood of this minimum
            }
    }
    p.alpha = 0.0;
    p.zeta = 0.0;
    if (zeros.size() >= 2 && zeros[1] > zeros[0]) {
        // 4 a q0^2 + z = pi and 4 a q1^2 + z = 2 pi
        p.alpha = kPi / (4.0 * (zeros[1] * zeros[1] - zeros[0] * zeros[0]));
        p.zeta = kPi - 4.0 * p.alpha * zeros[0] * zeros[0];
    } else if (zeros.size() == 1) {
        p.alpha = kPi / (4.0 * zeros[0] * zeros[0]);
    }
    return p;
}

} // namespace detail

// Damped Gauss-Newton (Levenberg-style lambda: x10 on rejected steps, /10 on
// accepted ones) on the weighted residuals; converges when the relative
// objective change drops below 1e-10, capped at 200 iterations. Parameter
// standard errors come from the residual-scaled inverse normal matrix.
inline FitResult fit_phase_matching(const std::vector<RadialSample>& data,
                                    PhaseMatchingModel model = PhaseMatchingModel::SincSquared,
                                    std::optional<PhaseMatchingParams> initial = std::nullopt) {
    if (data.size() < 10)
        throw std::invalid_argument("fit_phase_matching: need >= 10 samples, got " +
                                    std::to_string(data.size()));
    for (const RadialSample& s : data)
        if (!(s.weight >= 0.0) || !std::isfinite(s.value) || !std::isfinite(s.q))
            throw std::invalid_argument("fit_phase_matching: non-finite or negatively weighted sample");

    PhaseMatchingParams theta = initial ? *initial : detail::auto_initial_guess(data, model);

    const auto objective = [&](const PhaseMatchingParams& p) {
        double ssr = 0.0;
        for (const RadialSample& s : data) {
            const double r = s.value - pm_model_value(model, p, s.q);
            ssr += s.weight * r * r;
        }
        return ssr;
    };

    const auto normal_system = [&](const PhaseMatchingParams& p, Eigen::Matrix3d& H,
                                   Eigen::Vector3d& grad) {
        H.setZero();
        grad.setZero();
        for (const RadialSample& s : data) {
            const std::array<double, 3> j = pm_model_jacobian(model, p, s.q);
            const double r = s.value - pm_model_value(model, p, s.q);
            for (int a = 0; a < 3; ++a) {
                grad(a) += s.weight * j[a] * r;
                for (int b = 0; b < 3; ++b) H(a, b) += s.weight * j[a] * j[b];
            }
        }
    };

    FitResult res;
    res.model = model;
    double ssr = objective(theta);
    res.objective_history.push_back(ssr);
    double lambda = 1e-3;
    const int max_iterations = 200;
    int it = 0;
    bool converged = false;

    Eigen::Matrix3d H;
    Eigen::Vector3d grad;
    // singularity test on the scale-normalized matrix: the raw diagonal spans
    // many decades because A and alpha have wildly different units
    const auto check_singular = [](const Eigen::Matrix3d& H) {
        const Eigen::Vector3d d = H.diagonal();
        if (!(d.minCoeff() > 0.0) || !d.allFinite())
            throw fit_error("fit_phase_matching: singular normal matrix (flat or unidentifiable data)");
        const Eigen::Vector3d s = d.cwiseSqrt().cwiseInverse();
        const Eigen::Matrix3d corr = s.asDiagonal() * H * s.asDiagonal();
        if (!(std::abs(corr.determinant()) > 1e-14))
            throw fit_error("fit_phase_matching: singular normal matrix (collinear parameters)");
    };

    for (; it < max_iterations && !converged; ++it) {
        normal_system(theta, H, grad);
        check_singular(H);

        Eigen::Matrix3d damped = H;
        damped.diagonal() += lambda * H.diagonal();
        const Eigen::Vector3d step = damped.ldlt().solve(grad);
        if (!step.allFinite())
            throw fit_error("fit_phase_matching: singular normal matrix (solve failed)");

        PhaseMatchingParams trial = theta;
        trial.amplitude += step(0);
        trial.alpha += step(1);
        trial.zeta += step(2);
        const bool feasible = trial.amplitude > 0.0 && trial.alpha > 0.0;
        const double trial_ssr = feasible ? objective(trial) : std::numeric_limits<double>::infinity();
        if (trial_ssr < ssr) {
            const double rel = (ssr - trial_ssr) / std::max(ssr, 1e-300);
            theta = trial;
            ssr = trial_ssr;
            res.objective_history.push_back(ssr);
            lambda = std::max(lambda * 0.1, 1e-12);
            if (rel < 1e-10) converged = true;
        } else {
            lambda *= 10.0;
            if (lambda > 1e14) break; // no acceptable step exists anymore
            if (ssr <= 1e-300) converged = true; // already at an exact fit
        }
    }

    res.params = theta;
    res.iterations = it;
    res.converged = converged || ssr <= 1e-300;
    if (!res.converged)
        throw fit_error("fit_phase_matching: no convergence after " + std::to_string(it) +
                        " iterations (objective " + std::to_string(ssr) + ")");

    normal_system(theta, H, grad);
    double wsum = 0.0;
    for (const RadialSample& s : data) wsum += s.weight > 0.0 ? 1.0 : 0.0;
    const double dof = std::max(1.0, wsum - 3.0);
    const double sigma2 = ssr / dof;
    const Eigen::Matrix3d cov = sigma2 * H.inverse();
    res.stderr_amplitude = std::sqrt(std::max(0.0, cov(0, 0)));
    res.stderr_alpha = std::sqrt(std::max(0.0, cov(1, 1)));
    res.stderr_zeta = std::sqrt(std::max(0.0, cov(2, 2)));
    res.residual_rms = std::sqrt(ssr / std::max(1.0, wsum));
    return res;
}

inline FitResult fit_phase_matching(const CoincidenceImage& farfield,
                                    PhaseMatchingModel model = PhaseMatchingModel::SincSquared,
                                    std::optional<PhaseMatchingParams> initial = std::nullopt) {
    return fit_phase_matching(radial_profile(farfield), model, initial);
}

// L = 8 pi alpha / lambda_p, from alpha = L c / (4 omega_p) with
// omega_p / c = 2 pi / lambda_p.
inline double derive_crystal_length(double alpha_mm2, double lambda_p_mm) {
    if (!(alpha_mm2 > 0.0) || !(lambda_p_mm > 0.0))
        throw std::invalid_argument("derive_crystal_length: alpha and lambda must be > 0");
    return 8.0 * kPi * alpha_mm2 / lambda_p_mm;
}

struct FitBootstrapResult {
    std::array<double, 3> mean{};   // A, alpha, zeta
    std::array<double, 3> stddev{}; // sample standard deviation
    int n_resamples = 0;
    int failures = 0;
};

// Refits Poisson-resampled copies of the far-field image; failed fits are
// counted and skipped.
inline FitBootstrapResult fit_uncertainty_bootstrap(const CoincidenceImage& farfield,
                                                    PhaseMatchingModel model, int n_resamples,
                                                    std::uint64_t seed) {
    if (n_resamples < 2) throw std::invalid_argument("fit_uncertainty_bootstrap: need >= 2 resamples");
    std::vector<std::array<double, 3>> samples;
    samples.reserve(n_resamples);
    int failures = 0;
    for (int k = 0; k < n_resamples; ++k) {
        const std::uint64_t sub = seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(k + 1));
        try {
            const FitResult fr = fit_phase_matching(add_poisson_noise(farfield, sub), model);
            samples.push_back({fr.params.amplitude, fr.params.alpha, fr.params.zeta});
        } catch (const std::exception&) {
            ++failures;
        }
    }
    if (samples.size() < 2)
        throw fit_error("fit_uncertainty_bootstrap: fewer than 2 resamples converged");
    FitBootstrapResult out;
    out.n_resamples = n_resamples;
    out.failures = failures;
    for (int a = 0; a < 3; ++a) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s[a];
        mean /= static_cast<double>(samples.size());
        double ss = 0.0;
        for (const auto& s : samples) ss += (s[a] - mean) * (s[a] - mean);
        out.mean[a] = mean;
        out.stddev[a] = std::sqrt(ss / static_cast<double>(samples.size() - 1));
    }
    return out;
}

} // namespace biphoton
