// Command-line front end: simulation, fitting, calibration and the
// reference replication, each reading strictly validated configs and
// emitting a self-describing JSON report (config digest, seeds, version,
// method notes) so every run can be reproduced from its output alone.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrc/qrc.hpp"

using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- helpers

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json load_json_file(const std::string& path) {
    std::ifstream file(path);
    if (!file) {
        throw qrc::IoError("cannot open '" + path + "' for reading");
    }
    try {
        return json::parse(file);
    } catch (const json::parse_error& e) {
        throw qrc::ParseError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void require_object(const json& j, const std::string& context) {
    if (!j.is_object()) {
        throw qrc::ParseError(context + " must be a JSON object");
    }
}

// Strict schema: every present key must be in the allowed list.
void require_keys(const json& j, std::initializer_list<const char*> allowed,
                  const std::string& context) {
    require_object(j, context);
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (item.key() == a) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw qrc::ParseError(context + ": unknown key '" + item.key() +
                                  "' (strict schema; check for typos and unit suffixes)");
        }
    }
}

double get_double(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    if (!j.at(key).is_number()) {
        throw qrc::ParseError(std::string("key '") + key + "' must be a number");
    }
    return j.at(key).get<double>();
}

std::uint64_t get_u64(const json& j, const char* key, std::uint64_t fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    if (!j.at(key).is_number_unsigned()) {
        throw qrc::ParseError(std::string("key '") + key + "' must be a nonnegative integer");
    }
    return j.at(key).get<std::uint64_t>();
}

qrc::UncertainValue get_uncertain(const json& j, const char* key) {
    if (!j.contains(key)) {
        throw qrc::ParseError(std::string("missing required key '") + key + "'");
    }
    const json& u = j.at(key);
    require_keys(u, {"value", "sigma"}, key);
    if (!u.contains("value") || !u.at("value").is_number()) {
        throw qrc::ParseError(std::string(key) + ".value must be a number");
    }
    return qrc::UncertainValue(u.at("value").get<double>(), get_double(u, "sigma", 0.0));
}

qrc::PhasePoly get_phase(const json& j, const char* key, const qrc::PhasePoly& fallback,
                         const std::string& context) {
    if (!j.contains(key)) {
        return fallback;
    }
    const json& p = j.at(key);
    require_keys(p, {"phi0_rad", "phi1_rad_per_s", "phi2_rad_per_s2"}, context + "." + key);
    return qrc::PhasePoly{get_double(p, "phi0_rad", fallback.phi0),
                          get_double(p, "phi1_rad_per_s", fallback.phi1),
                          get_double(p, "phi2_rad_per_s2", fallback.phi2)};
}

json phase_to_json(const qrc::PhasePoly& p) {
    return json{{"phi0_rad", p.phi0}, {"phi1_rad_per_s", p.phi1}, {"phi2_rad_per_s2", p.phi2}};
}

json uncertain_to_json(const qrc::UncertainValue& u) {
    return json{{"value", u.value}, {"sigma", u.sigma}};
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
            row.push_back(m(i, k));
        }
        rows.push_back(row);
    }
    return rows;
}

// Report envelope shared by every command: version, digested effective
// config and the config itself, so reports are reproducible standalone.
json make_report(const std::string& command, const json& effective_config) {
    json report;
    report["tool"] = "qrc";
    report["version"] = qrc::kVersion;
    report["command"] = command;
    report["config_digest"] = "fnv1a:" + fnv1a_hex(effective_config.dump());
    report["effective_config"] = effective_config;
    return report;
}

void emit_report(const json& report, const std::string& report_path) {
    const std::string text = report.dump(2) + "\n";
    std::fputs(text.c_str(), stdout);
    if (!report_path.empty()) {
        std::ofstream file(report_path);
        if (!file) {
            throw qrc::IoError("cannot open '" + report_path + "' for writing");
        }
        file << text;
        if (!file) {
            throw qrc::IoError("failed writing '" + report_path + "'");
        }
    }
}

std::vector<double> parse_colon_doubles(const std::string& text, std::size_t expected,
                                        const std::string& what) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t colon = text.find(':', pos);
        const std::string piece =
            text.substr(pos, colon == std::string::npos ? std::string::npos : colon - pos);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(piece, &used));
            if (used != piece.size()) {
                throw std::invalid_argument(piece);
            }
        } catch (const std::exception&) {
            throw qrc::ParseError(what + ": cannot parse '" + piece + "' as a number");
        }
        if (colon == std::string::npos) {
            break;
        }
        pos = colon + 1;
    }
    if (out.size() != expected) {
        throw qrc::ParseError(what + ": expected " + std::to_string(expected) +
                              " colon-separated numbers, got " + std::to_string(out.size()));
    }
    return out;
}

// ------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string config_path;
    std::string out_path;
    std::optional<std::uint64_t> seed_override;
};

qrc::SimConfig parse_sim_config(const json& cfg, const qrc::SimConfig& defaults,
                                bool with_noise_budget) {
    qrc::SimConfig sim = defaults;
    sim.seed = get_u64(cfg, "seed", sim.seed);
    sim.n_points = static_cast<std::size_t>(get_u64(cfg, "n_points", sim.n_points));
    sim.duration_s = get_double(cfg, "duration_s", sim.duration_s);
    sim.frac_noise = get_double(cfg, "frac_noise", sim.frac_noise);
    sim.center_frequency_hz = get_double(cfg, "center_frequency_hz", sim.center_frequency_hz);
    sim.rbw_hz = get_double(cfg, "rbw_hz", sim.rbw_hz);
    if (with_noise_budget) {
        sim.dark_var = get_double(cfg, "dark_var", sim.dark_var);
        sim.vacuum_var = get_double(cfg, "vacuum_var", sim.vacuum_var);
    }
    return sim;
}

json sim_config_to_json(const qrc::SimConfig& sim, bool with_noise_budget) {
    json j{{"seed", sim.seed},
           {"n_points", sim.n_points},
           {"duration_s", sim.duration_s},
           {"frac_noise", sim.frac_noise},
           {"center_frequency_hz", sim.center_frequency_hz},
           {"rbw_hz", sim.rbw_hz}};
    if (with_noise_budget) {
        j["dark_var"] = sim.dark_var;
        j["vacuum_var"] = sim.vacuum_var;
    }
    return j;
}

void run_simulate_cavity(const SimulateArgs& args) {
    json cfg = args.config_path.empty() ? json::object() : load_json_file(args.config_path);
    require_keys(cfg,
                 {"seed", "n_points", "duration_s", "frac_noise", "center_frequency_hz", "rbw_hz",
                  "truth"},
                 "simulate cavity config");
    qrc::SimConfig sim = parse_sim_config(cfg, qrc::default_cavity_sim_config(),
                                          /*with_noise_budget=*/false);
    if (args.seed_override) {
        sim.seed = *args.seed_override;
    }
    qrc::CavityParams truth = qrc::default_cavity_truth();
    if (cfg.contains("truth")) {
        const json& t = cfg.at("truth");
        require_keys(t, {"r_sq", "loss_rt", "i0", "phase"}, "simulate cavity config.truth");
        truth.r_sq = get_double(t, "r_sq", truth.r_sq);
        truth.loss_rt = get_double(t, "loss_rt", truth.loss_rt);
        truth.i0 = get_double(t, "i0", truth.i0);
        truth.phase = get_phase(t, "phase", truth.phase, "simulate cavity config.truth");
    }

    const qrc::Trace trace = qrc::simulate_cavity_scan(sim, truth);
    qrc::write_trace(args.out_path, trace);

    json effective = sim_config_to_json(sim, false);
    effective["truth"] = {{"r_sq", truth.r_sq},
                          {"loss_rt", truth.loss_rt},
                          {"i0", truth.i0},
                          {"phase", phase_to_json(truth.phase)}};
    json report = make_report("simulate cavity", effective);
    report["seed"] = sim.seed;
    report["generator"] = qrc::rng::kGeneratorId;
    report["trace_file"] = args.out_path;
    report["n_points"] = trace.t.size();
    report["method_notes"] = json::array(
        {"reflected power: Airy response of a single-ended resonator, pi-periodic in the one-way "
         "phase, scanned by a quadratic phase polynomial",
         "noise: multiplicative Gaussian, 1-sigma fraction frac_noise, one deterministic stream "
         "per (seed, sample index)"});
    emit_report(report, "");
}

void run_simulate_homodyne(const SimulateArgs& args) {
    json cfg = args.config_path.empty() ? json::object() : load_json_file(args.config_path);
    require_keys(cfg,
                 {"seed", "n_points", "duration_s", "frac_noise", "dark_var", "vacuum_var",
                  "center_frequency_hz", "rbw_hz", "truth"},
                 "simulate homodyne config");
    qrc::SimConfig sim = parse_sim_config(cfg, qrc::SimConfig{}, /*with_noise_budget=*/true);
    if (args.seed_override) {
        sim.seed = *args.seed_override;
    }
    qrc::HomodyneTruth truth = qrc::default_homodyne_truth();
    double squeeze_db = qrc::reference::kSqueezeDb;
    bool pure_explicit = false;
    if (cfg.contains("truth")) {
        const json& t = cfg.at("truth");
        require_keys(t, {"squeeze_db", "pure", "eta", "theta_rms_rad", "sweep"},
                     "simulate homodyne config.truth");
        if (t.contains("squeeze_db") && t.contains("pure")) {
            throw qrc::ParseError(
                "simulate homodyne config.truth: give either squeeze_db or pure, not both");
        }
        if (t.contains("pure")) {
            const json& p = t.at("pure");
            require_keys(p, {"x_var", "y_var"}, "simulate homodyne config.truth.pure");
            truth.pure = qrc::QuadraturePair(get_double(p, "x_var", 1.0), get_double(p, "y_var", 1.0));
            pure_explicit = true;
        } else if (t.contains("squeeze_db")) {
            squeeze_db = get_double(t, "squeeze_db", squeeze_db);
            const double x = qrc::db_to_var(squeeze_db);
            truth.pure = qrc::QuadraturePair(x, 1.0 / x);
        }
        truth.eta = get_double(t, "eta", truth.eta);
        truth.theta_rms = get_double(t, "theta_rms_rad", truth.theta_rms);
        truth.sweep = get_phase(t, "sweep", truth.sweep, "simulate homodyne config.truth");
    }

    const qrc::Trace trace = qrc::simulate_homodyne_sweep(sim, truth);
    qrc::write_trace(args.out_path, trace);

    json truth_json{{"eta", truth.eta},
                    {"theta_rms_rad", truth.theta_rms},
                    {"sweep", phase_to_json(truth.sweep)}};
    if (pure_explicit) {
        truth_json["pure"] = {{"x_var", truth.pure.x_var}, {"y_var", truth.pure.y_var}};
    } else {
        truth_json["squeeze_db"] = squeeze_db;
    }
    json effective = sim_config_to_json(sim, true);
    effective["truth"] = truth_json;
    json report = make_report("simulate homodyne", effective);
    report["seed"] = sim.seed;
    report["generator"] = qrc::rng::kGeneratorId;
    report["trace_file"] = args.out_path;
    report["n_points"] = trace.t.size();
    report["method_notes"] = json::array(
        {"raw value = model * (vacuum_var - dark_var) * (1 + noise) + dark_var, where the model "
         "sweeps x_sqz cos^2 phi + x_asqz sin^2 phi over a quadratic phase polynomial",
         "the swept variances are the pure pair passed through the loss channel at efficiency "
         "eta, then optionally phase-jitter averaged",
         "noise: multiplicative Gaussian, 1-sigma fraction frac_noise, one deterministic stream "
         "per (seed, sample index)"});
    emit_report(report, "");
}

void run_simulate_proportionality(const SimulateArgs& args) {
    json cfg = args.config_path.empty() ? json::object() : load_json_file(args.config_path);
    require_keys(cfg, {"seed", "frac_noise", "powers_mw", "saturation_power_mw", "slope", "dark"},
                 "simulate proportionality config");
    qrc::SimConfig sim;
    sim.seed = get_u64(cfg, "seed", 1);
    sim.frac_noise = get_double(cfg, "frac_noise", 0.0);
    if (args.seed_override) {
        sim.seed = *args.seed_override;
    }
    std::vector<double> powers{1.0, 2.0, 4.0, 8.0, 16.0};
    if (cfg.contains("powers_mw")) {
        if (!cfg.at("powers_mw").is_array()) {
            throw qrc::ParseError("powers_mw must be an array of numbers");
        }
        powers.clear();
        for (const json& p : cfg.at("powers_mw")) {
            if (!p.is_number()) {
                throw qrc::ParseError("powers_mw must be an array of numbers");
            }
            powers.push_back(p.get<double>());
        }
    }
    const double p_sat = get_double(cfg, "saturation_power_mw",
                                    std::numeric_limits<double>::infinity());
    const double slope = get_double(cfg, "slope", 1.0);
    const double dark = get_double(cfg, "dark", 0.0);

    const auto points = qrc::simulate_proportionality(powers, p_sat, sim, slope, dark);
    qrc::write_points(args.out_path, points);

    json effective{{"seed", sim.seed},
                   {"frac_noise", sim.frac_noise},
                   {"powers_mw", powers},
                   {"slope", slope},
                   {"dark", dark}};
    if (std::isfinite(p_sat)) {
        effective["saturation_power_mw"] = p_sat;
    }
    json report = make_report("simulate proportionality", effective);
    report["seed"] = sim.seed;
    report["generator"] = qrc::rng::kGeneratorId;
    report["points_file"] = args.out_path;
    report["method_notes"] = json::array(
        {"noise power = slope * p / (1 + p / saturation_power) + dark, then multiplicative "
         "Gaussian noise; omit saturation_power_mw for exact linearity"});
    emit_report(report, "");
}

// ------------------------------------------------------------------- fit

struct FitCavityArgs {
    std::string trace_path;
    std::string init_path;
    std::string peaks_path;
    std::string report_path;
    double r_sq_guess = 0.83;
};

void run_fit_cavity(const FitCavityArgs& args) {
    const qrc::Trace trace = qrc::read_trace(args.trace_path);
    qrc::CavityParams init;
    qrc::CavityFitResult fit;
    if (!args.init_path.empty()) {
        const json j = load_json_file(args.init_path);
        require_keys(j, {"r_sq", "loss_rt", "i0", "phase"}, "cavity init");
        init.r_sq = get_double(j, "r_sq", 0.83);
        init.loss_rt = get_double(j, "loss_rt", 0.002);
        init.i0 = get_double(j, "i0", 1.0);
        init.phase = get_phase(j, "phase", qrc::PhasePoly{}, "cavity init");
        fit = qrc::fit_reflection_scan(trace, init);
    } else {
        init = qrc::auto_init_cavity(trace, args.r_sq_guess);
        fit = qrc::fit_reflection_scan(trace, qrc::FitOptions{}, args.r_sq_guess);
    }
    const qrc::UncertainValue esc = fit.escape();
    const qrc::UncertainValue esc_indep = qrc::escape_efficiency(fit.r_sq(), fit.loss_rt());

    json effective{{"trace_file", args.trace_path},
                   {"init",
                    {{"r_sq", init.r_sq},
                     {"loss_rt", init.loss_rt},
                     {"i0", init.i0},
                     {"phase", phase_to_json(init.phase)}}}};
    if (!args.peaks_path.empty()) {
        effective["peaks_file"] = args.peaks_path;
    }
    json report = make_report("fit cavity", effective);
    report["params"] = {{"r_sq", fit.params.r_sq},
                        {"loss_rt", fit.params.loss_rt},
                        {"i0", fit.params.i0},
                        {"phi0_rad", fit.params.phase.phi0},
                        {"phi1_rad_per_s", fit.params.phase.phi1},
                        {"phi2_rad_per_s2", fit.params.phase.phi2}};
    report["sigma"] = {{"r_sq", fit.sigma[0]},      {"loss_rt", fit.sigma[1]},
                       {"i0", fit.sigma[2]},        {"phi0_rad", fit.sigma[3]},
                       {"phi1_rad_per_s", fit.sigma[4]}, {"phi2_rad_per_s2", fit.sigma[5]}};
    report["covariance"] = matrix_to_json(fit.covariance);
    report["residual_norm"] = fit.residual_norm;
    report["converged"] = fit.converged;
    report["iterations"] = fit.iterations;
    report["escape_efficiency"] = uncertain_to_json(esc);
    report["escape_efficiency_sigma_independent"] = esc_indep.sigma;
    json notes = json::array(
        {"model: Airy reflection response with free r_sq, loss_rt, i0 and a quadratic scan phase",
         "weights: uniform; covariance scaled by the reduced chi-square",
         "escape_efficiency = (1 - r_sq) / (1 - r_sq + loss_rt); its sigma uses the fitted "
         "r_sq/loss_rt covariance (the independent-inputs sigma is reported alongside)"});

    if (!args.peaks_path.empty()) {
        const json j = load_json_file(args.peaks_path);
        require_keys(j, {"main_peak", "side_peaks", "noise_sigma"}, "transmission peaks");
        qrc::TransmissionPeaks peaks;
        peaks.main_peak = get_double(j, "main_peak", 0.0);
        peaks.noise_sigma = get_double(j, "noise_sigma", 0.0);
        if (j.contains("side_peaks")) {
            if (!j.at("side_peaks").is_array()) {
                throw qrc::ParseError("transmission peaks: side_peaks must be an array");
            }
            for (const json& p : j.at("side_peaks")) {
                if (!p.is_number()) {
                    throw qrc::ParseError("transmission peaks: side_peaks must be numbers");
                }
                peaks.side_peaks.push_back(p.get<double>());
            }
        }
        const qrc::UncertainValue mm = qrc::mode_matching_from_transmission(peaks);
        report["mode_matching"] = uncertain_to_json(mm);
        report["loss_rt_upscaled"] = uncertain_to_json(qrc::upscale_dip(fit.params.loss_rt, mm));
        notes.push_back(
            "mode matching = main transmission peak / sum of all peaks; the fitted loss dip is "
            "divided by it to refer the dip to the matched mode only");
    }
    report["method_notes"] = notes;
    emit_report(report, args.report_path);
}

struct FitSweepArgs {
    std::string trace_path;
    std::string budget_path;
    std::string report_path;
    std::string window;
    std::size_t smooth_window = 1;
    bool db_domain = false;
    bool uniform_weights = false;
};

void run_fit_sweep(const FitSweepArgs& args) {
    qrc::Trace raw = qrc::read_trace(args.trace_path);
    const json b = load_json_file(args.budget_path);
    require_keys(b, {"vacuum_var", "dark_var"}, "noise budget");
    qrc::NoiseBudget budget;
    budget.vacuum_var = get_double(b, "vacuum_var", 0.0);
    budget.dark_var = get_double(b, "dark_var", 0.0);

    qrc::Trace normalized = qrc::normalize_trace(raw, budget);
    if (!args.window.empty()) {
        const std::vector<double> w = parse_colon_doubles(args.window, 2, "--window");
        normalized = qrc::slice_trace(normalized, w[0], w[1]);
    }

    qrc::SweepProcessOptions opts;
    opts.smoothing_window = args.smooth_window;
    opts.db_domain = args.db_domain;
    if (args.uniform_weights) {
        opts.fit.weighting = qrc::SweepWeighting::uniform;
    }
    const qrc::SweepFit fit = qrc::fit_on_log_or_linear(normalized, opts);
    const qrc::UncertainValue eta = qrc::efficiency_from_fit(fit);
    const qrc::QuadraturePair pure = qrc::infer_pure_state(qrc::QuadraturePair(fit.x_sqz, fit.x_asqz));

    json effective{{"trace_file", args.trace_path},
                   {"noise_budget", {{"vacuum_var", budget.vacuum_var}, {"dark_var", budget.dark_var}}},
                   {"smoothing_window", args.smooth_window},
                   {"db_domain", args.db_domain},
                   {"weighting", args.uniform_weights ? "uniform" : "fractional"}};
    if (!args.window.empty()) {
        effective["window_s"] = args.window;
    }
    json report = make_report("fit sweep", effective);
    report["params"] = {{"x_sqz", fit.x_sqz},
                        {"x_asqz", fit.x_asqz},
                        {"phi0_rad", fit.phase.phi0},
                        {"phi1_rad_per_s", fit.phase.phi1},
                        {"phi2_rad_per_s2", fit.phase.phi2}};
    report["sigma"] = {{"x_sqz", fit.sigma[0]},
                       {"x_asqz", fit.sigma[1]},
                       {"phi0_rad", fit.sigma[2]},
                       {"phi1_rad_per_s", fit.sigma[3]},
                       {"phi2_rad_per_s2", fit.sigma[4]}};
    report["covariance"] = matrix_to_json(fit.covariance);
    report["residual_norm"] = fit.residual_norm;
    report["converged"] = fit.converged;
    report["iterations"] = fit.iterations;
    report["smoothing_bias_warning"] = fit.smoothing_bias_warning;
    report["normalization_warnings"] = normalized.meta.warnings;
    report["efficiency"] = uncertain_to_json(eta);
    report["pure_state"] = {{"x_var", pure.x_var},
                            {"y_var", pure.y_var},
                            {"squeeze_db", qrc::var_to_db(pure.x_var)}};
    report["method_notes"] = json::array(
        {"normalization: (value - dark_var) / (vacuum_var - dark_var)",
         "model: x_sqz cos^2 phi(t) + x_asqz sin^2 phi(t), phi quadratic in time",
         "weighting: fractional noise (sigma proportional to the model, fitted in two passes) "
         "unless uniform or dB residuals are requested",
         "efficiency from the fitted variances: eta = (x + y - 1 - x*y) / (x + y - 2), sigma by "
         "the delta method over the fit covariance",
         "pure state: loss channel inverted at the fitted efficiency"});
    emit_report(report, args.report_path);
}

// ------------------------------------------------------------- calibrate

struct CalibrateArgs {
    std::string inputs_path;
    std::string report_path;
    std::uint64_t mc_seed = 42;
    std::size_t mc_draws = 100000;
};

void run_calibrate(const CalibrateArgs& args) {
    const json j = load_json_file(args.inputs_path);
    require_keys(j,
                 {"eta_total", "eta_esc", "eta_prop", "eta_mm", "retro_reflectance", "dark_ratio"},
                 "calibrate inputs");
    qrc::EfficiencyBudget budget{get_uncertain(j, "eta_total"), get_uncertain(j, "eta_esc"),
                                 get_uncertain(j, "eta_prop"), get_uncertain(j, "eta_mm")};

    const qrc::UncertainValue eta_de = qrc::detection_efficiency(budget);
    const qrc::UncertainValue eta_de_mc =
        qrc::detection_efficiency_monte_carlo(budget, args.mc_draws, args.mc_seed);

    json effective{{"inputs_file", args.inputs_path},
                   {"inputs", j},
                   {"mc_draws", args.mc_draws},
                   {"mc_seed", args.mc_seed}};
    json report = make_report("calibrate", effective);
    report["eta_total"] = uncertain_to_json(budget.eta_total);
    report["eta_esc"] = uncertain_to_json(budget.eta_esc);
    report["eta_prop"] = uncertain_to_json(budget.eta_prop);
    report["eta_mm"] = uncertain_to_json(budget.eta_mm);
    json de = uncertain_to_json(eta_de);
    de["display"] = std::min(eta_de.value, 1.0);
    de["sigma_monte_carlo"] = eta_de_mc.sigma;
    report["eta_de"] = de;

    json notes = json::array(
        {"eta_de = eta_total / (eta_esc * eta_prop * eta_mm); the four inputs are treated as "
         "independent, relative variances added in quadrature",
         "values above 1 by more than 3 sigma are rejected as unphysical; within 3 sigma the "
         "stored value is unclamped and 'display' is capped at 1",
         "sigma_monte_carlo: Gaussian-draw audit of the linearized propagation"});

    if (j.contains("dark_ratio")) {
        const qrc::UncertainValue dark_ratio = get_uncertain(j, "dark_ratio");
        report["eta_qe"] = uncertain_to_json(qrc::quantum_efficiency_from_de(eta_de, dark_ratio));
        notes.push_back("eta_qe = eta_de / (1 + dark_ratio)");
    }
    if (j.contains("retro_reflectance")) {
        const qrc::UncertainValue refl = get_uncertain(j, "retro_reflectance");
        report["eta_de_retro"] =
            uncertain_to_json(qrc::retro_reflection_adjustment(eta_de, refl));
        notes.push_back(
            "eta_de_retro = eta_de / (1 - retro_reflectance): the value a retro-reflector "
            "recovering the diode surface reflection would yield (modeling choice)");
    }
    report["method_notes"] = notes;
    report["seeds"] = {{"monte_carlo_seed", args.mc_seed},
                       {"monte_carlo_draws", args.mc_draws},
                       {"generator", qrc::rng::kGeneratorId}};
    emit_report(report, args.report_path);
}

// ----------------------------------------------------------------- check

struct CheckArgs {
    std::string points_path;
    std::string report_path;
    double threshold = 0.01;
    std::optional<double> dark_allowance;
};

void run_check_proportionality(const CheckArgs& args) {
    const auto points = qrc::read_points(args.points_path);
    qrc::ProportionalityOptions opts;
    opts.metric_threshold = args.threshold;
    opts.dark_allowance = args.dark_allowance;
    const qrc::ProportionalityResult res = qrc::check_proportionality(points, opts);

    json effective{{"points_file", args.points_path}, {"metric_threshold", args.threshold}};
    if (args.dark_allowance) {
        effective["dark_allowance"] = *args.dark_allowance;
    }
    json report = make_report("check proportionality", effective);
    report["slope"] = res.slope;
    report["intercept"] = res.intercept;
    report["nonlinearity_metric"] = res.nonlinearity_metric;
    report["curvature_ratio"] = res.curvature_ratio;
    report["flags"] = res.flags;
    report["pass"] = res.pass;
    report["method_notes"] = json::array(
        {"linear least squares of noise power vs LO power; the metric is the largest relative "
         "residual; pass needs metric under threshold, a near-zero intercept and no shape flags",
         "curvature_ratio: quadratic coefficient times max power over the linear coefficient; "
         "negative values indicate saturation"});
    emit_report(report, args.report_path);
}

// ------------------------------------------------------------- precision

struct PrecisionArgs {
    std::string eta_range;
    double n_photons = 0.0;
    double eta_de = 1.0;
    std::string out_path;
};

void run_precision(const PrecisionArgs& args) {
    const std::vector<double> r = parse_colon_doubles(args.eta_range, 3, "--eta-range");
    const double lo = r[0], hi = r[1], step = r[2];
    if (!(step > 0.0) || !(hi >= lo)) {
        throw qrc::DomainError("precision: need --eta-range lo:hi:step with step > 0, hi >= lo");
    }
    json effective{{"eta_range", args.eta_range}, {"n", args.n_photons}, {"eta_de", args.eta_de}};
    std::string csv;
    csv += "# qrc precision table, version=" + std::string(qrc::kVersion) + "\n";
    csv += "# config_digest=fnv1a:" + fnv1a_hex(effective.dump()) + "\n";
    csv += "# |S_P| = eta_de^2 * |4 - 8*eta| * n  (sensitivity of the uncertainty product to "
           "efficiency)\n";
    csv += "# eta_de=" + std::to_string(args.eta_de) + " n=" + std::to_string(args.n_photons) +
           "\n";
    csv += "eta,precision_signal\n";
    char buf[64];
    for (double eta = lo; eta <= hi + 0.5 * step; eta += step) {
        const double clamped = std::min(eta, hi);
        const double s = qrc::precision_scaling(clamped, args.eta_de, args.n_photons);
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g\n", clamped, s);
        csv += buf;
        if (clamped >= hi) {
            break;
        }
    }
    if (args.out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        std::ofstream file(args.out_path);
        if (!file) {
            throw qrc::IoError("cannot open '" + args.out_path + "' for writing");
        }
        file << csv;
    }
}

// ------------------------------------------------------------- replicate

struct ReplicateArgs {
    std::string target;
    std::string report_path;
    std::uint64_t mc_seed = 42;
    std::size_t mc_draws = 1000000;
};

void run_replicate(const ReplicateArgs& args) {
    if (args.target != "paper") {
        throw qrc::ParseError("replicate: unknown target '" + args.target +
                              "' (available: paper)");
    }
    const qrc::reference::ReplicationReport rep =
        qrc::reference::replicate(args.mc_draws, args.mc_seed);

    json effective{{"target", args.target}, {"mc_draws", args.mc_draws}, {"mc_seed", args.mc_seed}};
    json report = make_report("replicate", effective);
    json checks = json::array();
    for (const auto& c : rep.checks) {
        json row{{"name", c.name}, {"computed", c.computed}, {"target", c.target},
                 {"interval", json::array({c.lo, c.hi})}, {"pass", c.pass}};
        if (!c.note.empty()) {
            row["note"] = c.note;
        }
        checks.push_back(row);
    }
    report["checks"] = checks;
    report["all_match"] = rep.all_pass;
    report["eta_de"] = uncertain_to_json(rep.eta_de);
    json de_mc = uncertain_to_json(rep.eta_de_mc);
    report["eta_de_monte_carlo"] = de_mc;
    report["eta_esc_independent"] = uncertain_to_json(rep.eta_esc_independent);
    report["eta_qe"] = uncertain_to_json(rep.eta_qe);
    report["eta_de_retro"] = uncertain_to_json(rep.eta_de_retro);
    json dark = uncertain_to_json(rep.dark_ratio);
    dark["back_solved"] = true;
    report["dark_ratio"] = dark;
    report["seeds"] = {{"monte_carlo_seed", rep.mc_seed},
                       {"monte_carlo_draws", rep.mc_draws},
                       {"generator", qrc::rng::kGeneratorId}};
    report["method_notes"] = json::array(
        {"recomputes the bundled reference calibration from its published component values and "
         "checks each derived number against its published counterpart",
         "the dark ratio is back-solved from the published quantum efficiency, not measured",
         "the independent-inputs escape-efficiency sigma is known not to reproduce the published "
         "one, which requires the joint fit's r_sq/loss_rt covariance; see that check's note"});
    emit_report(report, args.report_path);

    // A failed diff is still a successful run; the JSON carries the verdict.
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "qrc: quantum-noise calibration toolkit. Simulates, fits and calibrates "
        "squeezed-vacuum efficiency measurements."};
    app.require_subcommand(1);
    app.footer(
        "Exit codes: 0 success, 2 usage error, 3 config/schema violation, 4 file I/O error,\n"
        "5 domain or degenerate-input error, 6 fit failure, 7 unphysical result.\n"
        "On failure a single JSON object {\"error\": {...}} is printed to stdout.");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Generate synthetic data from known truth");
    simulate->require_subcommand(1);
    SimulateArgs sim_cavity, sim_homodyne, sim_prop;
    {
        auto* c = simulate->add_subcommand("cavity", "Scanned reflection trace of the resonator");
        c->add_option("--config", sim_cavity.config_path, "JSON config (strict schema)");
        c->add_option("--out", sim_cavity.out_path, "Output trace CSV")->required();
        c->add_option("--seed", sim_cavity.seed_override, "Override the config seed");
        c->callback([&] { run_simulate_cavity(sim_cavity); });
    }
    {
        auto* c = simulate->add_subcommand("homodyne", "Swept-phase noise-power trace");
        c->add_option("--config", sim_homodyne.config_path, "JSON config (strict schema)");
        c->add_option("--out", sim_homodyne.out_path, "Output trace CSV")->required();
        c->add_option("--seed", sim_homodyne.seed_override, "Override the config seed");
        c->callback([&] { run_simulate_homodyne(sim_homodyne); });
    }
    {
        auto* c = simulate->add_subcommand("proportionality",
                                           "Shot-noise vs LO-power points, optionally saturating");
        c->add_option("--config", sim_prop.config_path, "JSON config (strict schema)");
        c->add_option("--out", sim_prop.out_path, "Output points CSV")->required();
        c->add_option("--seed", sim_prop.seed_override, "Override the config seed");
        c->callback([&] { run_simulate_proportionality(sim_prop); });
    }

    // fit
    auto* fit = app.add_subcommand("fit", "Least-squares fits of measured traces");
    fit->require_subcommand(1);
    FitCavityArgs fit_cavity;
    {
        auto* c = fit->add_subcommand("cavity", "Fit the reflection scan, derive escape efficiency");
        c->add_option("trace", fit_cavity.trace_path, "Trace CSV")->required();
        c->add_option("--init", fit_cavity.init_path,
                      "JSON initial parameters (default: automatic from the trace)");
        c->add_option("--r-sq-guess", fit_cavity.r_sq_guess,
                      "Mirror reflectivity guess for automatic initialization");
        c->add_option("--peaks", fit_cavity.peaks_path,
                      "Transmission peaks JSON for mode matching and dip upscaling");
        c->add_option("--report", fit_cavity.report_path, "Also write the JSON report here");
        c->callback([&] { run_fit_cavity(fit_cavity); });
    }
    FitSweepArgs fit_sweep_args;
    {
        auto* c = fit->add_subcommand("sweep", "Fit a swept-phase homodyne trace, infer efficiency");
        c->add_option("trace", fit_sweep_args.trace_path, "Raw trace CSV")->required();
        c->add_option("--budget", fit_sweep_args.budget_path,
                      "Noise budget JSON: {vacuum_var, dark_var}")
            ->required();
        c->add_option("--window", fit_sweep_args.window,
                      "Fit only t in [a,b] seconds, as a:b (excludes sweep turnarounds)");
        c->add_option("--smooth", fit_sweep_args.smooth_window,
                      "Moving-average window in samples (display-style low-pass)");
        c->add_flag("--db", fit_sweep_args.db_domain, "Take residuals in dB instead of linear");
        c->add_flag("--uniform-weights", fit_sweep_args.uniform_weights,
                    "Uniform weights instead of fractional-noise weighting");
        c->add_option("--report", fit_sweep_args.report_path, "Also write the JSON report here");
        c->callback([&] { run_fit_sweep(fit_sweep_args); });
    }

    // calibrate
    CalibrateArgs calibrate_args;
    {
        auto* c = app.add_subcommand(
            "calibrate", "Combine component efficiencies into detection/quantum efficiency");
        c->add_option("inputs", calibrate_args.inputs_path, "Inputs JSON")->required();
        c->add_option("--mc-draws", calibrate_args.mc_draws, "Monte-Carlo audit draws");
        c->add_option("--seed", calibrate_args.mc_seed, "Monte-Carlo seed");
        c->add_option("--report", calibrate_args.report_path, "Also write the JSON report here");
        c->callback([&] { run_calibrate(calibrate_args); });
    }

    // check proportionality
    auto* check = app.add_subcommand("check", "Measurement sanity gates");
    check->require_subcommand(1);
    CheckArgs check_args;
    {
        auto* c = check->add_subcommand("proportionality",
                                        "Gate: noise power proportional to LO power");
        c->add_option("points", check_args.points_path, "Points CSV (power_mw,noise_power)")
            ->required();
        c->add_option("--threshold", check_args.threshold, "Max allowed relative residual");
        c->add_option("--dark-allowance", check_args.dark_allowance,
                      "Absolute intercept allowance (default: threshold * full scale)");
        c->add_option("--report", check_args.report_path, "Also write the JSON report here");
        c->callback([&] { run_check_proportionality(check_args); });
    }

    // precision
    PrecisionArgs precision_args;
    {
        auto* c = app.add_subcommand("precision",
                                     "Tabulate the efficiency sensitivity |S_P| as plot-ready CSV");
        c->add_option("--eta-range", precision_args.eta_range, "Efficiency range lo:hi:step")
            ->required();
        c->add_option("--n", precision_args.n_photons, "Mean photon number of the pure state")
            ->required();
        c->add_option("--eta-de", precision_args.eta_de, "Detection efficiency factor");
        c->add_option("--out", precision_args.out_path, "CSV path (default: stdout)");
        c->callback([&] { run_precision(precision_args); });
    }

    // replicate
    ReplicateArgs replicate_args;
    {
        auto* c = app.add_subcommand(
            "replicate", "Re-run the bundled reference calibration and diff published numbers");
        c->add_option("target", replicate_args.target, "Scenario to replicate")->required();
        c->add_option("--mc-draws", replicate_args.mc_draws, "Monte-Carlo audit draws");
        c->add_option("--seed", replicate_args.mc_seed, "Monte-Carlo seed");
        c->add_option("--report", replicate_args.report_path, "Also write the JSON report here");
        c->callback([&] { run_replicate(replicate_args); });
    }

    auto emit_error = [](const char* type, const std::string& message, int code) {
        json err{{"error", {{"type", type}, {"message", message}, {"exit_code", code}}}};
        std::fputs((err.dump(2) + "\n").c_str(), stdout);
        return code;
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return emit_error("usage", e.what(), 2);
    } catch (const qrc::ParseError& e) {
        return emit_error("config_schema", e.what(), 3);
    } catch (const qrc::IoError& e) {
        return emit_error("io", e.what(), 4);
    } catch (const qrc::FitError& e) {
        return emit_error("fit", e.what(), 6);
    } catch (const qrc::UnphysicalResultError& e) {
        return emit_error("unphysical", e.what(), 7);
    } catch (const qrc::DegenerateInputError& e) {
        return emit_error("degenerate_input", e.what(), 5);
    } catch (const qrc::InsufficientDataError& e) {
        return emit_error("insufficient_data", e.what(), 5);
    } catch (const qrc::DomainError& e) {
        return emit_error("domain", e.what(), 5);
    } catch (const qrc::Error& e) {
        return emit_error("error", e.what(), 5);
    }
    return 0;
}
