#pragma once

// Swept-phase homodyne analysis: dark subtraction and vacuum normalization,
// the two-variance sweep model with a quadratic phase polynomial, its
// Levenberg-Marquardt fit, and the auxiliary-beam efficiencies (fringe
// visibility, propagation efficiency, LO proportionality gate).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qrc/cavity.hpp"  // PhasePoly
#include "qrc/errors.hpp"
#include "qrc/levmar.hpp"
#include "qrc/quantum.hpp"
#include "qrc/trace.hpp"
#include "qrc/uncertain.hpp"

namespace qrc {

// Reference noise powers in the trace's raw linear units: the vacuum level
// (signal port blocked) and the detector dark level (all light blocked).
struct NoiseBudget {
    double vacuum_var = 0.0;
    double dark_var = 0.0;
};

inline void validate_noise_budget(const NoiseBudget& b) {
    if (!(b.dark_var >= 0.0)) {
        throw DomainError("noise budget: dark_var must be >= 0");
    }
    if (!(b.vacuum_var > b.dark_var)) {
        throw DomainError("noise budget: vacuum_var must exceed dark_var");
    }
}

// (v - dark) / (vacuum - dark): maps dark to 0 and vacuum to 1 exactly.
// Values below zero (over-subtraction at the noise floor) are kept but
// flagged in the output metadata.
inline Trace normalize_trace(const Trace& raw, const NoiseBudget& budget) {
    validate_trace(raw, /*require_nonnegative=*/true);
    validate_noise_budget(budget);
    Trace out = raw;
    const double scale = 1.0 / (budget.vacuum_var - budget.dark_var);
    bool negative = false;
    for (double& v : out.v) {
        v = (v - budget.dark_var) * scale;
        negative = negative || v < 0.0;
    }
    out.meta.units = "normalized_variance";
    if (negative) {
        out.meta.warnings.push_back("negative_values_after_dark_subtraction");
    }
    return out;
}

// Parameter order used by the sweep fit vector, sigma and covariance.
inline constexpr const char* kSweepParamNames[5] = {"x_sqz", "x_asqz", "phi0", "phi1", "phi2"};

// Result of a sweep fit; also used as the initial guess (only x_sqz,
// x_asqz and phase are read from an init).
struct SweepFit {
    double x_sqz = 0.0;
    double x_asqz = 0.0;
    PhasePoly phase;
    Eigen::VectorXd sigma;       // 1-sigma per parameter, kSweepParamNames order
    Eigen::MatrixXd covariance;  // 5x5, same order
    double residual_norm = 0.0;  // unweighted L2 norm of (model - data)
    double cost = 0.0;           // weighted chi-square at the optimum
    int iterations = 0;
    bool converged = false;
    bool smoothing_bias_warning = false;

    UncertainValue x_sqz_u() const { return UncertainValue(x_sqz, sigma.size() ? sigma[0] : 0.0); }
    UncertainValue x_asqz_u() const { return UncertainValue(x_asqz, sigma.size() ? sigma[1] : 0.0); }
};

// x_sqz cos^2(phi(t)) + x_asqz sin^2(phi(t)).
inline double sweep_model(double t, const SweepFit& fit) {
    const double c = std::cos(fit.phase.at(t));
    const double c2 = c * c;
    return fit.x_sqz * c2 + fit.x_asqz * (1.0 - c2);
}

enum class SweepWeighting {
    uniform,
    // Per-point sigma proportional to the signal, the statistics of
    // RBW-limited averaged power estimates. Fitted in two passes: first
    // weighted by the data, then re-weighted by the first pass's model so
    // noisy low points do not pull the fit down.
    fractional,
};

struct SweepFitOptions {
    FitOptions lm;
    SweepWeighting weighting = SweepWeighting::fractional;
};

// A sweep must cover at least one full fringe, phi range >= pi.
inline constexpr double kMinSweepPhaseRange = 3.141592653589793;

namespace detail {

inline void check_sweep_range(const Trace& trace, const PhasePoly& phase) {
    if (phase.range(trace.t.front(), trace.t.back()) < kMinSweepPhaseRange) {
        throw InsufficientDataError(
            "fit_sweep: insufficient phase range; the sweep must cover at least pi (one fringe)");
    }
}

// Single weighted LM pass over the sweep model. Empty sigmas = uniform
// weights. In dB mode residuals are 10*(log10 model - log10 data) and
// nonpositive samples are skipped.
inline SweepFit run_sweep_fit(const Trace& trace, const SweepFit& init, const FitOptions& opts,
                              const std::vector<double>& sigmas, bool db_domain) {
    std::vector<std::size_t> rows;
    rows.reserve(trace.v.size());
    for (std::size_t i = 0; i < trace.v.size(); ++i) {
        if (!db_domain || trace.v[i] > 0.0) {
            rows.push_back(i);
        }
    }
    const Eigen::Index m = static_cast<Eigen::Index>(rows.size());

    const auto residuals = [&trace, &sigmas, &rows, db_domain](const Eigen::VectorXd& p,
                                                               Eigen::VectorXd& r) {
        if (!(p[0] > 0.0) || !(p[1] > 0.0)) {
            return false;
        }
        const PhasePoly phase{p[2], p[3], p[4]};
        for (Eigen::Index k = 0; k < r.size(); ++k) {
            const std::size_t i = rows[static_cast<std::size_t>(k)];
            const double c = std::cos(phase.at(trace.t[i]));
            const double model = p[0] * c * c + p[1] * (1.0 - c * c);
            if (db_domain) {
                r[k] = 10.0 * (std::log10(model) - std::log10(trace.v[i]));
            } else {
                const double resid = model - trace.v[i];
                r[k] = sigmas.empty() ? resid : resid / sigmas[i];
            }
        }
        return true;
    };

    Eigen::VectorXd p0(5);
    p0 << init.x_sqz, init.x_asqz, init.phase.phi0, init.phase.phi1, init.phase.phi2;
    LevmarResult lm = levenberg_marquardt(residuals, p0, m, opts);
    if (!lm.converged) {
        throw NonConvergenceError("fit_sweep: no convergence after " +
                                  std::to_string(lm.iterations) + " iterations");
    }

    SweepFit fit;
    fit.x_sqz = lm.params[0];
    fit.x_asqz = lm.params[1];
    fit.phase = PhasePoly{lm.params[2], lm.params[3], lm.params[4]};
    fit.sigma = std::move(lm.sigma);
    fit.covariance = std::move(lm.covariance);
    fit.cost = lm.cost;
    fit.iterations = lm.iterations;
    fit.converged = lm.converged;

    // Canonical orientation: x_sqz is the trough. A fit that locked onto
    // the fringe shifted by pi/2 swaps the two variances; undo the swap by
    // shifting phi0, which leaves the model values unchanged.
    if (fit.x_sqz > fit.x_asqz) {
        std::swap(fit.x_sqz, fit.x_asqz);
        fit.phase.phi0 += 1.5707963267948966;
        std::swap(fit.sigma[0], fit.sigma[1]);
        fit.covariance.row(0).swap(fit.covariance.row(1));
        fit.covariance.col(0).swap(fit.covariance.col(1));
    }

    double ss = 0.0;
    for (std::size_t i = 0; i < trace.v.size(); ++i) {
        const double d = sweep_model(trace.t[i], fit) - trace.v[i];
        ss += d * d;
    }
    fit.residual_norm = std::sqrt(ss);
    return fit;
}

inline std::vector<double> fractional_sigmas_from_data(const Trace& trace) {
    const double vmax = *std::max_element(trace.v.begin(), trace.v.end());
    if (!(vmax > 0.0)) {
        throw DegenerateInputError("fit_sweep: trace has no positive values");
    }
    const double floor = 1e-6 * vmax;
    std::vector<double> sigmas(trace.v.size());
    for (std::size_t i = 0; i < trace.v.size(); ++i) {
        sigmas[i] = std::max(std::abs(trace.v[i]), floor);
    }
    return sigmas;
}

}  // namespace detail

// Fit the sweep model to a normalized trace from an explicit starting
// point. Residuals are linear-scale; weighting per options.
inline SweepFit fit_sweep(const Trace& trace, const SweepFit& init,
                          const SweepFitOptions& opts = {}) {
    validate_trace(trace);
    if (!(init.x_sqz > 0.0 && init.x_asqz > 0.0)) {
        throw DomainError("fit_sweep: initial variances must be > 0");
    }
    detail::check_sweep_range(trace, init.phase);

    if (opts.weighting == SweepWeighting::uniform) {
        return detail::run_sweep_fit(trace, init, opts.lm, {}, /*db_domain=*/false);
    }
    const std::vector<double> data_sigmas = detail::fractional_sigmas_from_data(trace);
    const SweepFit pass1 = detail::run_sweep_fit(trace, init, opts.lm, data_sigmas, false);
    const double floor = 1e-6 * pass1.x_asqz;
    std::vector<double> model_sigmas(trace.v.size());
    for (std::size_t i = 0; i < trace.v.size(); ++i) {
        model_sigmas[i] = std::max(sweep_model(trace.t[i], pass1), floor);
    }
    return detail::run_sweep_fit(trace, pass1, opts.lm, model_sigmas, false);
}

// Initial guess from the trace alone: extreme percentiles set the two
// variances; fringe troughs located on a smoothed copy are pinned to
// phi = 0, pi, 2 pi, ... to fix the phase polynomial.
inline SweepFit auto_init_sweep(const Trace& trace) {
    validate_trace(trace);
    const std::size_t n = trace.v.size();
    const double x_asqz = percentile(trace.v, 99.5);
    if (!(x_asqz > 0.0)) {
        throw DegenerateInputError("auto_init_sweep: trace has no positive values");
    }
    const double x_sqz = std::max(percentile(trace.v, 0.5), 1e-3 * x_asqz);

    const std::size_t window = std::max<std::size_t>(3, n / 100);
    const std::vector<double> smoothed = moving_average(trace.v, window);
    const double threshold = std::sqrt(x_sqz * x_asqz);
    const std::vector<detail::ThresholdRun> runs =
        detail::runs_below_threshold(smoothed, threshold, window);
    if (runs.empty()) {
        throw DegenerateInputError("auto_init_sweep: no fringe trough found in the trace");
    }
    std::vector<double> trough_times;
    trough_times.reserve(runs.size());
    for (const detail::ThresholdRun& run : runs) {
        trough_times.push_back(trace.t[run.min_index]);
    }

    SweepFit init;
    init.x_sqz = x_sqz;
    init.x_asqz = x_asqz;
    constexpr double pi = 3.141592653589793;
    if (trough_times.size() >= 3) {
        Eigen::MatrixXd A(trough_times.size(), 3);
        Eigen::VectorXd b(trough_times.size());
        for (std::size_t k = 0; k < trough_times.size(); ++k) {
            A(k, 0) = 1.0;
            A(k, 1) = trough_times[k];
            A(k, 2) = trough_times[k] * trough_times[k];
            b(k) = pi * static_cast<double>(k);
        }
        const Eigen::Vector3d coef = A.colPivHouseholderQr().solve(b);
        init.phase = PhasePoly{coef[0], coef[1], coef[2]};
    } else if (trough_times.size() == 2) {
        const double phi1 = pi / (trough_times[1] - trough_times[0]);
        init.phase = PhasePoly{-phi1 * trough_times[0], phi1, 0.0};
    } else {
        // One trough: size the sweep speed from the trough width. The model
        // sits below the threshold while sin^2(phi) < (thr - x_sqz) /
        // (x_asqz - x_sqz), a phase half-width of asin(sqrt(that)).
        const double frac = (threshold - x_sqz) / (x_asqz - x_sqz);
        const double half_width_phi = std::asin(std::sqrt(std::clamp(frac, 1e-6, 1.0)));
        const double dt = trace.duration() / static_cast<double>(n - 1);
        const double run_dt = static_cast<double>(runs[0].end - runs[0].start) * dt;
        if (!(run_dt > 0.0)) {
            throw DegenerateInputError("auto_init_sweep: trough too narrow to size the sweep");
        }
        const double phi1 = 2.0 * half_width_phi / run_dt;
        init.phase = PhasePoly{-phi1 * trough_times[0], phi1, 0.0};
    }
    return init;
}

struct SweepProcessOptions {
    SweepFitOptions fit;
    // Moving-average window in samples; 1 = no smoothing. Smoothing is for
    // emulating the display low-pass; it biases trough depths when wide.
    std::size_t smoothing_window = 1;
    // Take residuals in dB instead of linear units.
    bool db_domain = false;
};

// Fraction of the fringe period above which a smoothing window provably
// biases the fitted trough upward; crossing it sets the warning flag.
inline constexpr double kSmoothingBiasFraction = 0.05;

// fit_sweep with optional pre-smoothing and a choice of residual domain,
// starting from an automatic initial guess.
inline SweepFit fit_on_log_or_linear(const Trace& trace, const SweepProcessOptions& opts = {}) {
    validate_trace(trace);
    Trace work = trace;
    if (opts.smoothing_window > 1) {
        work.v = moving_average(trace.v, opts.smoothing_window);
    }
    const SweepFit init = auto_init_sweep(work);
    detail::check_sweep_range(work, init.phase);

    SweepFit fit;
    if (opts.db_domain) {
        fit = detail::run_sweep_fit(work, init, opts.fit.lm, {}, /*db_domain=*/true);
    } else {
        fit = fit_sweep(work, init, opts.fit);
    }

    if (opts.smoothing_window > 1) {
        const double t_mid = 0.5 * (work.t.front() + work.t.back());
        const double rate = std::abs(fit.phase.phi1 + 2.0 * fit.phase.phi2 * t_mid);
        const double fringe_period = rate > 0.0 ? 3.141592653589793 / rate
                                                : std::numeric_limits<double>::infinity();
        const double dt = work.duration() / static_cast<double>(work.t.size() - 1);
        fit.smoothing_bias_warning =
            static_cast<double>(opts.smoothing_window) * dt > kSmoothingBiasFraction * fringe_period;
    }
    return fit;
}

// Loss-channel efficiency implied by the fitted variances, with a 1-sigma
// uncertainty carried over from the fit covariance by the delta method.
inline UncertainValue efficiency_from_fit(const SweepFit& fit) {
    const QuadraturePair pair(fit.x_sqz, fit.x_asqz);
    const double eta = infer_efficiency(pair);
    if (fit.covariance.rows() < 2) {
        return UncertainValue(eta, 0.0);
    }
    const double x = fit.x_sqz;
    const double y = fit.x_asqz;
    const double den = x + y - 2.0;
    const double num = x + y - 1.0 - x * y;
    const double d_dx = ((1.0 - y) * den - num) / (den * den);
    const double d_dy = ((1.0 - x) * den - num) / (den * den);
    const double var = d_dx * d_dx * fit.covariance(0, 0) + d_dy * d_dy * fit.covariance(1, 1) +
                       2.0 * d_dx * d_dy * fit.covariance(0, 1);
    return UncertainValue(eta, std::sqrt(std::max(var, 0.0)));
}

// Fringe visibility (u_max - u_min) / (u_max + u_min) after subtracting the
// no-light offset from both voltages. Mode matching estimate = v^2.
inline double visibility(double u_max, double u_min, double u_offset) {
    const double a = u_max - u_offset;
    const double b = u_min - u_offset;
    if (!(a + b > 0.0)) {
        throw DomainError("visibility: offset-corrected voltages sum to <= 0");
    }
    if (std::min(a, b) < 0.0) {
        throw DomainError("visibility: an offset-corrected voltage is negative; offset too large");
    }
    return std::abs(a - b) / (a + b);
}

// (p_pd1 + p_pd2) / p_cm with first-order propagation; the powers are
// measured independently.
inline UncertainValue propagation_efficiency(const UncertainValue& p_cm,
                                             const UncertainValue& p_pd1,
                                             const UncertainValue& p_pd2) {
    if (!(p_cm.value > 0.0 && p_pd1.value > 0.0 && p_pd2.value > 0.0)) {
        throw DomainError("propagation_efficiency: all powers must be > 0");
    }
    const double sum = p_pd1.value + p_pd2.value;
    const double value = sum / p_cm.value;
    const double var = (p_pd1.sigma * p_pd1.sigma + p_pd2.sigma * p_pd2.sigma) /
                           (p_cm.value * p_cm.value) +
                       (sum * sum / std::pow(p_cm.value, 4)) * p_cm.sigma * p_cm.sigma;
    const double sigma = std::sqrt(var);
    if (value > 1.0 + 3.0 * sigma) {
        throw UnphysicalResultError(
            "propagation_efficiency: result " + std::to_string(value) +
            " exceeds 1 by more than 3 sigma; the power measurements are inconsistent");
    }
    return UncertainValue(value, sigma);
}

struct ProportionalityOptions {
    // Gate on the maximum relative residual of the linear fit.
    double metric_threshold = 0.01;
    // Absolute bound on the fitted intercept. Unset = metric_threshold
    // times the fitted full-scale signal.
    std::optional<double> dark_allowance;
    // Required LO power span, max/min.
    double min_span_factor = 4.0;
};

struct ProportionalityResult {
    double slope = 0.0;
    double intercept = 0.0;
    // max_i |v_i - fit_i| / |fit_i| over the linear fit.
    double nonlinearity_metric = 0.0;
    // Relative slope change across the range from an auxiliary quadratic
    // fit: quad_coeff * p_max / linear_coeff. Negative = saturation-like.
    double curvature_ratio = 0.0;
    bool pass = false;
    std::vector<std::string> flags;
};

// Gate for "shot noise scales linearly with LO power": fit a line, judge
// the worst relative residual, and diagnose the failure shape (curvature
// sign, dead slope, excess intercept).
inline ProportionalityResult check_proportionality(
    std::span<const std::pair<double, double>> points, const ProportionalityOptions& opts = {}) {
    if (points.size() < 3) {
        throw InsufficientDataError("check_proportionality: need at least 3 points");
    }
    double p_min = points[0].first;
    double p_max = points[0].first;
    for (const auto& [p, v] : points) {
        if (!(p > 0.0)) {
            throw DomainError("check_proportionality: LO powers must be > 0");
        }
        p_min = std::min(p_min, p);
        p_max = std::max(p_max, p);
    }
    if (p_max < opts.min_span_factor * p_min) {
        throw InsufficientDataError(
            "check_proportionality: LO powers must span at least a factor " +
            std::to_string(opts.min_span_factor));
    }

    const double n = static_cast<double>(points.size());
    double sp = 0.0, sv = 0.0, spp = 0.0, spv = 0.0;
    for (const auto& [p, v] : points) {
        sp += p;
        sv += v;
        spp += p * p;
        spv += p * v;
    }
    const double det = n * spp - sp * sp;
    ProportionalityResult res;
    res.slope = (n * spv - sp * sv) / det;
    res.intercept = (spp * sv - sp * spv) / det;

    double metric = 0.0;
    double mean_v = sv / n;
    for (const auto& [p, v] : points) {
        const double fit = res.slope * p + res.intercept;
        if (fit != 0.0) {
            metric = std::max(metric, std::abs(v - fit) / std::abs(fit));
        }
    }
    res.nonlinearity_metric = metric;

    // Auxiliary quadratic fit for the curvature diagnostic.
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    for (const auto& [p, v] : points) {
        const Eigen::Vector3d row(1.0, p, p * p);
        A += row * row.transpose();
        b += row * v;
    }
    const Eigen::Vector3d quad = A.ldlt().solve(b);
    res.curvature_ratio = quad[1] != 0.0 ? quad[2] * p_max / quad[1] : 0.0;

    const double allowance =
        opts.dark_allowance.value_or(opts.metric_threshold *
                                     std::abs(res.slope * p_max + res.intercept));
    if (res.curvature_ratio < -opts.metric_threshold) {
        res.flags.push_back("negative_curvature");
    } else if (res.curvature_ratio > opts.metric_threshold) {
        res.flags.push_back("positive_curvature");
    }
    if (!(res.slope > 0.0) || res.slope * (p_max - p_min) < 0.1 * std::abs(mean_v)) {
        res.flags.push_back("zero_slope");
    }
    if (std::abs(res.intercept) >= allowance) {
        res.flags.push_back("intercept_exceeds_allowance");
    }
    res.pass = metric < opts.metric_threshold && std::abs(res.intercept) < allowance &&
               res.flags.empty();
    return res;
}

}  // namespace qrc
