#pragma once

// Synthetic traces from known ground truth with seeded multiplicative
// noise: the oracle side of every fit round trip. A single 64-bit seed in
// the config pins every sample; sub-streams per simulator keep cavity,
// homodyne and proportionality draws independent even under one seed.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qrc/cavity.hpp"
#include "qrc/errors.hpp"
#include "qrc/homodyne.hpp"
#include "qrc/quantum.hpp"
#include "qrc/rng.hpp"
#include "qrc/trace.hpp"

namespace qrc {

// Instrument-side knobs: sampling, noise magnitude and the reference noise
// levels a real spectrum analyzer would see. The physics lives in the
// truth structs passed alongside.
struct SimConfig {
    std::uint64_t seed = 1;
    std::size_t n_points = 32001;
    double duration_s = 0.1;
    // 1-sigma fractional noise per power sample.
    double frac_noise = 0.02;
    double dark_var = 0.05;
    double vacuum_var = 1.0;
    double center_frequency_hz = 5e6;
    double rbw_hz = 300e3;
};

inline void validate_sim_config(const SimConfig& cfg) {
    if (cfg.n_points < 2) {
        throw DomainError("simulator: n_points must be >= 2");
    }
    if (!(cfg.duration_s > 0.0)) {
        throw DomainError("simulator: duration must be > 0");
    }
    if (!(cfg.frac_noise >= 0.0)) {
        throw DomainError("simulator: frac_noise must be >= 0");
    }
    if (!(cfg.dark_var >= 0.0) || !(cfg.vacuum_var > cfg.dark_var)) {
        throw DomainError("simulator: need vacuum_var > dark_var >= 0");
    }
}

// Ground truth for a homodyne sweep: the pure state before loss, the total
// efficiency, residual phase jitter and the sweep polynomial.
struct HomodyneTruth {
    QuadraturePair pure;
    double eta = 1.0;
    double theta_rms = 0.0;
    PhasePoly sweep;
};

namespace detail {

// Sub-stream tags so the three simulators draw independent noise from one
// top-level seed.
inline constexpr std::uint64_t kCavityStream = 1;
inline constexpr std::uint64_t kHomodyneStream = 2;
inline constexpr std::uint64_t kProportionalityStream = 3;

inline std::vector<double> sample_times(const SimConfig& cfg) {
    std::vector<double> t(cfg.n_points);
    const double dt = cfg.duration_s / static_cast<double>(cfg.n_points - 1);
    for (std::size_t i = 0; i < cfg.n_points; ++i) {
        t[i] = static_cast<double>(i) * dt;
    }
    return t;
}

}  // namespace detail

// Reflected power off the scanned resonator, truth.phase driving the scan:
// v_i = reflection_response(phi(t_i)) * (1 + frac_noise * g_i).
inline Trace simulate_cavity_scan(const SimConfig& cfg, const CavityParams& truth) {
    validate_sim_config(cfg);
    validate_cavity_params(truth);
    const std::uint64_t stream = rng::derive_stream(cfg.seed, detail::kCavityStream);
    Trace trace;
    trace.t = detail::sample_times(cfg);
    trace.v.resize(cfg.n_points);
    for (std::size_t i = 0; i < cfg.n_points; ++i) {
        const double model = reflection_response(truth.phase.at(trace.t[i]), truth);
        const double eps = cfg.frac_noise == 0.0 ? 0.0 : cfg.frac_noise * rng::gaussian_at(stream, i);
        trace.v[i] = model * (1.0 + eps);
    }
    trace.meta.label = "simulated cavity reflection scan";
    trace.meta.units = "linear_power";
    trace.meta.center_frequency_hz = cfg.center_frequency_hz;
    trace.meta.rbw_hz = cfg.rbw_hz;
    trace.meta.seed = cfg.seed;
    trace.meta.generator = rng::kGeneratorId;
    return trace;
}

// Raw swept-phase noise power: the lossy (and optionally phase-jittered)
// state's sweep model, scaled back to instrument units and noised:
// v_i = model_i * (vacuum - dark) * (1 + frac_noise * g_i) + dark.
inline Trace simulate_homodyne_sweep(const SimConfig& cfg, const HomodyneTruth& truth) {
    validate_sim_config(cfg);
    QuadraturePair measured = apply_loss(truth.pure, truth.eta);
    if (truth.theta_rms > 0.0) {
        measured = apply_phase_noise(measured, PhaseNoise(truth.theta_rms));
    }
    SweepFit model;
    model.x_sqz = measured.x_var;
    model.x_asqz = measured.y_var;
    model.phase = truth.sweep;

    const std::uint64_t stream = rng::derive_stream(cfg.seed, detail::kHomodyneStream);
    const double span = cfg.vacuum_var - cfg.dark_var;
    Trace trace;
    trace.t = detail::sample_times(cfg);
    trace.v.resize(cfg.n_points);
    for (std::size_t i = 0; i < cfg.n_points; ++i) {
        const double m = sweep_model(trace.t[i], model);
        const double eps = cfg.frac_noise == 0.0 ? 0.0 : cfg.frac_noise * rng::gaussian_at(stream, i);
        trace.v[i] = m * span * (1.0 + eps) + cfg.dark_var;
    }
    trace.meta.label = "simulated homodyne sweep";
    trace.meta.units = "linear_power";
    trace.meta.center_frequency_hz = cfg.center_frequency_hz;
    trace.meta.rbw_hz = cfg.rbw_hz;
    trace.meta.seed = cfg.seed;
    trace.meta.generator = rng::kGeneratorId;
    return trace;
}

// Saturating shot-noise curve for the proportionality gate:
// noise(p) = slope * p / (1 + p / p_sat) + dark, then fractional noise.
// p_sat = infinity gives exact linearity.
inline std::vector<std::pair<double, double>> simulate_proportionality(
    std::span<const double> powers, double saturation_power, const SimConfig& cfg,
    double slope = 1.0, double dark = 0.0) {
    if (powers.empty()) {
        throw InsufficientDataError("simulate_proportionality: no LO powers given");
    }
    if (!(saturation_power > 0.0)) {
        throw DomainError("simulate_proportionality: saturation power must be > 0");
    }
    if (!(cfg.frac_noise >= 0.0)) {
        throw DomainError("simulator: frac_noise must be >= 0");
    }
    if (!(slope >= 0.0) || !(dark >= 0.0)) {
        throw DomainError("simulate_proportionality: slope and dark must be >= 0");
    }
    const std::uint64_t stream = rng::derive_stream(cfg.seed, detail::kProportionalityStream);
    std::vector<std::pair<double, double>> points;
    points.reserve(powers.size());
    for (std::size_t i = 0; i < powers.size(); ++i) {
        if (!(powers[i] > 0.0)) {
            throw DomainError("simulate_proportionality: LO powers must be > 0");
        }
        const double clean = slope * powers[i] / (1.0 + powers[i] / saturation_power) + dark;
        const double eps = cfg.frac_noise == 0.0 ? 0.0 : cfg.frac_noise * rng::gaussian_at(stream, i);
        points.emplace_back(powers[i], clean * (1.0 + eps));
    }
    return points;
}

// Bundled demonstration truths: the lossy 13.2 dB state measured at 94.5 %
// total efficiency, and the matching resonator. These are the defaults the
// CLI simulate commands start from.
inline HomodyneTruth default_homodyne_truth() {
    const double x = db_to_var(13.2);
    return HomodyneTruth{QuadraturePair(x, 1.0 / x), 0.945, 0.0, PhasePoly{0.2, 60.0, 80.0}};
}

inline CavityParams default_cavity_truth() {
    return CavityParams{0.8279, 0.00247, 1.0, PhasePoly{-1.0, 150.0, 500.0}};
}

// Acquisition defaults for a cavity scan: shorter, cleaner and denser in
// phase than the homodyne sweep.
inline SimConfig default_cavity_sim_config() {
    SimConfig cfg;
    cfg.n_points = 20001;
    cfg.duration_s = 0.05;
    cfg.frac_noise = 0.002;
    return cfg;
}

}  // namespace qrc
