#pragma once

// Escape efficiency of the squeezing resonator from a scanned reflection
// trace: the Airy reflection dip model, a Levenberg-Marquardt fit of
// (r_sq, loss_rt, i0) together with the scan phase polynomial, and the
// mode-matching bookkeeping that scales the dip before loss is read off.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "qrc/errors.hpp"
#include "qrc/levmar.hpp"
#include "qrc/trace.hpp"
#include "qrc/uncertain.hpp"

namespace qrc {

// Scan phase in radians as a quadratic polynomial of time: the piezo sweep
// is smooth but not perfectly linear.
struct PhasePoly {
    double phi0 = 0.0;  // radians
    double phi1 = 0.0;  // radians/second
    double phi2 = 0.0;  // radians/second^2

    double at(double t) const { return phi0 + t * (phi1 + t * phi2); }

    // Total phase excursion over [t_lo, t_hi], including an interior
    // turning point if the quadratic has one there.
    double range(double t_lo, double t_hi) const {
        double lo = std::min(at(t_lo), at(t_hi));
        double hi = std::max(at(t_lo), at(t_hi));
        if (phi2 != 0.0) {
            const double t_star = -phi1 / (2.0 * phi2);
            if (t_star > t_lo && t_star < t_hi) {
                lo = std::min(lo, at(t_star));
                hi = std::max(hi, at(t_star));
            }
        }
        return hi - lo;
    }
};

// Coupling-mirror power reflectivity, round-trip power loss, incident power
// and the scan phase. i0 is in the trace's own linear units.
struct CavityParams {
    double r_sq = 0.0;
    double loss_rt = 0.0;
    double i0 = 1.0;
    PhasePoly phase;
};

inline void validate_cavity_params(const CavityParams& p) {
    if (!(p.r_sq > 0.0 && p.r_sq < 1.0)) {
        throw DomainError("cavity: r_sq must lie in (0, 1), got " + std::to_string(p.r_sq));
    }
    if (!(p.loss_rt >= 0.0 && p.loss_rt < 1.0)) {
        throw DomainError("cavity: loss_rt must lie in [0, 1), got " + std::to_string(p.loss_rt));
    }
    if (!(p.i0 > 0.0)) {
        throw DomainError("cavity: i0 must be > 0, got " + std::to_string(p.i0));
    }
}

// Power reflected off the scanned resonator at one-way detuning phase phi.
// Real closed form of |(r - a e^{-2i phi}) / (1 - r a e^{-2i phi})|^2 i0
// with r = sqrt(r_sq), a = sqrt(1 - loss_rt). pi-periodic, minimum at
// phi = 0 (mod pi), values in [0, i0].
inline double reflection_response(double phi, const CavityParams& params) {
    validate_cavity_params(params);
    const double r = std::sqrt(params.r_sq);
    const double a = std::sqrt(1.0 - params.loss_rt);
    const double c = std::cos(2.0 * phi);
    const double num = params.r_sq + a * a - 2.0 * r * a * c;
    const double den = 1.0 + params.r_sq * a * a - 2.0 * r * a * c;
    return params.i0 * num / den;
}

// eta_esc = (1 - r_sq) / (1 - r_sq + loss_rt). With the default covariance
// of zero the two uncertainties are treated as independent; a reflection-
// scan fit determines them jointly and strongly anticorrelated, and passing
// that covariance shrinks the propagated sigma well below the independent-
// inputs value.
inline UncertainValue escape_efficiency(const UncertainValue& r_sq, const UncertainValue& loss_rt,
                                        double covariance_rl = 0.0) {
    if (!(r_sq.value > 0.0 && r_sq.value < 1.0)) {
        throw DomainError("escape_efficiency: r_sq must lie in (0, 1)");
    }
    if (!(loss_rt.value >= 0.0 && loss_rt.value < 1.0)) {
        throw DomainError("escape_efficiency: loss_rt must lie in [0, 1)");
    }
    const double one_minus_r = 1.0 - r_sq.value;
    const double denom = one_minus_r + loss_rt.value;
    const double value = one_minus_r / denom;
    const double d_dr = -loss_rt.value / (denom * denom);
    const double d_dl = -one_minus_r / (denom * denom);
    double var = d_dr * d_dr * r_sq.sigma * r_sq.sigma + d_dl * d_dl * loss_rt.sigma * loss_rt.sigma +
                 2.0 * d_dr * d_dl * covariance_rl;
    return UncertainValue(value, std::sqrt(std::max(var, 0.0)));
}

// Transmission peak powers of the scanned resonator: the fundamental mode
// plus any higher-order modes, all in the same linear units. noise_sigma is
// the trace's noise floor, taken as the 1-sigma uncertainty of every peak.
struct TransmissionPeaks {
    double main_peak = 0.0;
    std::vector<double> side_peaks;
    double noise_sigma = 0.0;
};

// Mode matching = main / (main + sum of side peaks).
inline UncertainValue mode_matching_from_transmission(const TransmissionPeaks& peaks) {
    if (!(peaks.main_peak > 0.0)) {
        throw DomainError("mode_matching_from_transmission: main peak must be > 0");
    }
    if (!(peaks.noise_sigma >= 0.0)) {
        throw DomainError("mode_matching_from_transmission: noise_sigma must be >= 0");
    }
    double side_sum = 0.0;
    for (double s : peaks.side_peaks) {
        if (s < 0.0) {
            throw DomainError("mode_matching_from_transmission: side peaks must be >= 0");
        }
        if (s > peaks.main_peak) {
            throw DomainError(
                "mode_matching_from_transmission: side peak exceeds main peak; wrong peak labeled "
                "main");
        }
        side_sum += s;
    }
    const double total = peaks.main_peak + side_sum;
    const double value = peaks.main_peak / total;
    // d(mm)/d(main) = side_sum/total^2, d(mm)/d(side_i) = -main/total^2.
    const double t2 = total * total;
    const double k = static_cast<double>(peaks.side_peaks.size());
    const double var = peaks.noise_sigma * peaks.noise_sigma *
                       (side_sum * side_sum + k * peaks.main_peak * peaks.main_peak) / (t2 * t2);
    return UncertainValue(value, std::sqrt(var));
}

// The fitted reflection dip only sees the mode-matched fraction of the
// incident light; dividing by the mode matching restores the dip depth of
// the matched mode alone.
inline UncertainValue upscale_dip(double fitted_loss, const UncertainValue& mode_matching) {
    if (!(mode_matching.value > 0.0 && mode_matching.value <= 1.0)) {
        throw DomainError("upscale_dip: mode matching must lie in (0, 1]");
    }
    if (!(fitted_loss >= 0.0)) {
        throw DomainError("upscale_dip: fitted loss must be >= 0");
    }
    const double value = fitted_loss / mode_matching.value;
    const double sigma = fitted_loss * mode_matching.sigma / (mode_matching.value * mode_matching.value);
    return UncertainValue(value, sigma);
}

// Parameter order used by the fit vector, sigma vector and covariance.
inline constexpr const char* kCavityParamNames[6] = {"r_sq", "loss_rt", "i0",
                                                     "phi0", "phi1", "phi2"};

struct CavityFitResult {
    CavityParams params;
    Eigen::VectorXd sigma;       // 1-sigma per parameter, kCavityParamNames order
    Eigen::MatrixXd covariance;  // 6x6, same order
    double residual_norm = 0.0;  // unweighted L2 norm of (model - data)
    double cost = 0.0;           // weighted chi-square at the optimum
    int iterations = 0;
    bool converged = false;

    UncertainValue r_sq() const { return UncertainValue(params.r_sq, sigma[0]); }
    UncertainValue loss_rt() const { return UncertainValue(params.loss_rt, sigma[1]); }

    // Escape efficiency carrying the fit's r_sq/loss_rt covariance.
    UncertainValue escape() const {
        return escape_efficiency(r_sq(), loss_rt(), covariance(0, 1));
    }
};

// A scan must cross enough phase to show a resonance; shorter segments are
// unidentifiable no matter how clean the data.
inline constexpr double kMinCavityScanRange = 1.5707963267948966;  // pi/2

namespace detail {

struct DipSet {
    std::vector<std::size_t> indices;       // sample index of each dip minimum
    std::vector<std::size_t> run_lengths;   // width of the below-threshold run
    double floor = 0.0;                     // smoothed trace minimum
    double base = 0.0;                      // smoothed off-resonance level
};

// Dips = connected runs of the smoothed trace below halfway between its
// floor and its off-resonance level; one dip per run, at the run's minimum.
// Runs split by residual noise within one smoothing window are rejoined.
inline DipSet find_dips(const std::vector<double>& smoothed, std::size_t merge_gap) {
    DipSet dips;
    dips.floor = *std::min_element(smoothed.begin(), smoothed.end());
    dips.base = percentile(smoothed, 95.0);
    const double threshold = dips.floor + 0.5 * (dips.base - dips.floor);
    for (const ThresholdRun& run : runs_below_threshold(smoothed, threshold, merge_gap)) {
        dips.indices.push_back(run.min_index);
        dips.run_lengths.push_back(run.end - run.start);
    }
    return dips;
}

inline DipSet detect_dips(const Trace& trace) {
    const std::size_t window = std::max<std::size_t>(3, trace.v.size() / 100);
    return find_dips(moving_average(trace.v, window), window);
}

}  // namespace detail

// Initial parameter guess from the trace alone: dips located by a smoothed
// minimum detector (window = 1 % of the trace) are pinned to phi = 0, pi,
// 2 pi, ..., which fixes the phase polynomial; i0 starts at the 95th
// percentile; loss_rt is read off the dip floor given the r_sq guess.
inline CavityParams auto_init_cavity(const Trace& trace, double r_sq_guess = 0.83) {
    validate_trace(trace, /*require_nonnegative=*/true);
    if (!(r_sq_guess > 0.0 && r_sq_guess < 1.0)) {
        throw DomainError("auto_init_cavity: r_sq_guess must lie in (0, 1)");
    }
    const std::size_t n = trace.v.size();
    const detail::DipSet dips = detail::detect_dips(trace);
    if (dips.indices.empty() || !(dips.base > dips.floor)) {
        throw DegenerateInputError(
            "auto_init_cavity: no resonance dip found; scan may be off resonance");
    }

    CavityParams init;
    init.r_sq = r_sq_guess;
    init.i0 = percentile(trace.v, 95.0);
    if (!(init.i0 > 0.0)) {
        throw DegenerateInputError("auto_init_cavity: trace has no positive power level");
    }

    // loss_rt from the dip floor: sqrt(floor/i0) = (a - r)/(1 - r a) for an
    // undercoupled cavity, solved for a.
    const double r = std::sqrt(r_sq_guess);
    const double s = std::sqrt(std::max(dips.floor, 0.0) / init.i0);
    const double a = std::clamp((s + r) / (1.0 + s * r), r, 1.0);
    init.loss_rt = std::clamp(1.0 - a * a, 1e-6, 0.2);

    const std::size_t n_dips = dips.indices.size();
    constexpr double pi = 3.141592653589793;
    if (n_dips >= 3) {
        // Least-squares quadratic through (t_k, k*pi).
        Eigen::MatrixXd A(n_dips, 3);
        Eigen::VectorXd b(n_dips);
        for (std::size_t k = 0; k < n_dips; ++k) {
            const double t = trace.t[dips.indices[k]];
            A(k, 0) = 1.0;
            A(k, 1) = t;
            A(k, 2) = t * t;
            b(k) = pi * static_cast<double>(k);
        }
        const Eigen::Vector3d coef = A.colPivHouseholderQr().solve(b);
        init.phase = PhasePoly{coef[0], coef[1], coef[2]};
    } else if (n_dips == 2) {
        const double t0 = trace.t[dips.indices[0]];
        const double t1 = trace.t[dips.indices[1]];
        const double phi1 = pi / (t1 - t0);
        init.phase = PhasePoly{-phi1 * t0, phi1, 0.0};
    } else {
        // Single dip: estimate the sweep speed from the dip's width. The
        // half-depth half-width of the Airy dip in one-way phase is
        // (1 - r a) / (2 sqrt(r a)); with the run width equal to the full
        // width at half depth this pins phi1.
        const double ra = r * a;
        const double half_width_phi = (1.0 - ra) / (2.0 * std::sqrt(ra));
        const double dt = trace.duration() / static_cast<double>(n - 1);
        const double run_dt = static_cast<double>(dips.run_lengths[0]) * dt;
        if (!(run_dt > 0.0)) {
            throw DegenerateInputError("auto_init_cavity: dip too narrow to size the sweep speed");
        }
        const double phi1 = 2.0 * half_width_phi / run_dt;
        init.phase = PhasePoly{-phi1 * trace.t[dips.indices[0]], phi1, 0.0};
    }
    return init;
}

namespace detail {

// Shared core of the two public overloads. fit_curvature = false freezes
// phi2 at the init value and reports zero sigma/covariance for it.
inline CavityFitResult fit_reflection_impl(const Trace& trace, const CavityParams& init,
                                           const FitOptions& opts,
                                           const std::vector<double>& point_sigma,
                                           bool fit_curvature) {
    validate_trace(trace, /*require_nonnegative=*/true);
    validate_cavity_params(init);
    if (!point_sigma.empty() && point_sigma.size() != trace.v.size()) {
        throw DomainError("fit_reflection_scan: point_sigma length does not match the trace");
    }
    for (double s : point_sigma) {
        if (!(s > 0.0)) {
            throw DomainError("fit_reflection_scan: point sigmas must be > 0");
        }
    }
    if (init.phase.range(trace.t.front(), trace.t.back()) < kMinCavityScanRange) {
        throw DegenerateInputError(
            "fit_reflection_scan: scan covers less than pi/2 of phase; resonance not crossed");
    }

    const Eigen::Index m = static_cast<Eigen::Index>(trace.v.size());
    const double fixed_phi2 = init.phase.phi2;
    const auto residuals = [&trace, &point_sigma, fit_curvature, fixed_phi2](
                               const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        if (!(p[0] > 0.0 && p[0] < 1.0) || !(p[1] >= 0.0 && p[1] < 1.0) || !(p[2] > 0.0)) {
            return false;
        }
        const double rr = std::sqrt(p[0]);
        const double a = std::sqrt(1.0 - p[1]);
        const double ra2 = 2.0 * rr * a;
        const double num0 = p[0] + a * a;
        const double den0 = 1.0 + p[0] * a * a;
        const PhasePoly phase{p[3], p[4], fit_curvature ? p[5] : fixed_phi2};
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            const double c = std::cos(2.0 * phase.at(trace.t[static_cast<std::size_t>(i)]));
            const double model = p[2] * (num0 - ra2 * c) / (den0 - ra2 * c);
            const double resid = model - trace.v[static_cast<std::size_t>(i)];
            r[i] = point_sigma.empty() ? resid : resid / point_sigma[static_cast<std::size_t>(i)];
        }
        return true;
    };

    Eigen::VectorXd p0(fit_curvature ? 6 : 5);
    p0.head(5) << init.r_sq, init.loss_rt, init.i0, init.phase.phi0, init.phase.phi1;
    if (fit_curvature) {
        p0[5] = init.phase.phi2;
    }
    LevmarResult lm = levenberg_marquardt(residuals, p0, m, opts);
    if (!lm.converged) {
        throw NonConvergenceError("fit_reflection_scan: no convergence after " +
                                  std::to_string(lm.iterations) + " iterations");
    }

    CavityFitResult result;
    result.params.r_sq = lm.params[0];
    result.params.loss_rt = lm.params[1];
    result.params.i0 = lm.params[2];
    result.params.phase =
        PhasePoly{lm.params[3], lm.params[4], fit_curvature ? lm.params[5] : fixed_phi2};
    if (fit_curvature) {
        result.sigma = std::move(lm.sigma);
        result.covariance = std::move(lm.covariance);
    } else {
        result.sigma = Eigen::VectorXd::Zero(6);
        result.sigma.head(5) = lm.sigma;
        result.covariance = Eigen::MatrixXd::Zero(6, 6);
        result.covariance.topLeftCorner(5, 5) = lm.covariance;
    }
    result.cost = lm.cost;
    result.iterations = lm.iterations;
    result.converged = lm.converged;
    double ss = 0.0;
    for (std::size_t i = 0; i < trace.v.size(); ++i) {
        const double d = reflection_response(result.params.phase.at(trace.t[i]), result.params) -
                         trace.v[i];
        ss += d * d;
    }
    result.residual_norm = std::sqrt(ss);
    return result;
}

}  // namespace detail

// Fit the reflection model to a scanned trace. Weights are uniform unless a
// per-point sigma vector is supplied; either way the covariance is scaled
// by the reduced chi-square, so an unknown overall noise level is absorbed.
inline CavityFitResult fit_reflection_scan(const Trace& trace, const CavityParams& init,
                                           const FitOptions& opts = {},
                                           const std::vector<double>& point_sigma = {}) {
    return detail::fit_reflection_impl(trace, init, opts, point_sigma, /*fit_curvature=*/true);
}

// Convenience overload: derive the starting point from the trace itself.
// A narrow Airy dip pins the phase only where the scan crosses resonance,
// so fewer than three dips cannot constrain the quadratic scan term; phi2
// is then frozen at zero instead of being fitted into a rank-deficient
// direction, and its sigma is reported as zero.
inline CavityFitResult fit_reflection_scan(const Trace& trace, const FitOptions& opts = {},
                                           double r_sq_guess = 0.83) {
    const CavityParams init = auto_init_cavity(trace, r_sq_guess);
    const bool fit_curvature = detail::detect_dips(trace).indices.size() >= 3;
    return detail::fit_reflection_impl(trace, init, opts, {}, fit_curvature);
}

}  // namespace qrc
