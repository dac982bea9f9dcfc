#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "qrc/homodyne.hpp"
#include "qrc/simulator.hpp"

using namespace qrc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = 3.141592653589793;

SimConfig quick_config(std::uint64_t seed, double frac_noise = 0.02) {
    SimConfig cfg;
    cfg.seed = seed;
    cfg.n_points = 8001;
    cfg.frac_noise = frac_noise;
    return cfg;
}

NoiseBudget budget_of(const SimConfig& cfg) {
    return NoiseBudget{cfg.vacuum_var, cfg.dark_var};
}

}  // namespace

TEST_CASE("noise budget validation") {
    CHECK_NOTHROW(validate_noise_budget(NoiseBudget{1.0, 0.05}));
    CHECK_THROWS_AS(validate_noise_budget(NoiseBudget{1.0, -0.1}), DomainError);
    CHECK_THROWS_AS(validate_noise_budget(NoiseBudget{0.05, 0.05}), DomainError);
}

TEST_CASE("normalization maps dark to 0 and vacuum to 1") {
    Trace raw;
    raw.t = {0.0, 1.0, 2.0, 3.0};
    raw.v = {0.05, 1.0, 0.525, 2.0};
    const Trace out = normalize_trace(raw, NoiseBudget{1.0, 0.05});
    CHECK_THAT(out.v[0], WithinAbs(0.0, 1e-15));
    CHECK_THAT(out.v[1], WithinRel(1.0, 1e-14));
    CHECK_THAT(out.v[2], WithinRel(0.5, 1e-14));
    CHECK(out.meta.units == "normalized_variance");
    CHECK(out.meta.warnings.empty());
    CHECK(raw.v[0] == 0.05);  // input untouched

    SECTION("invariant under affine re-scaling of the instrument units") {
        Trace scaled = raw;
        for (double& v : scaled.v) {
            v = 3.7 * v + 0.9;
        }
        const Trace out2 = normalize_trace(scaled, NoiseBudget{3.7 * 1.0 + 0.9, 3.7 * 0.05 + 0.9});
        for (std::size_t i = 0; i < out.v.size(); ++i) {
            REQUIRE_THAT(out2.v[i], WithinAbs(out.v[i], 1e-12));
        }
    }
    SECTION("over-subtraction is kept but flagged") {
        Trace low = raw;
        low.v[2] = 0.01;  // below dark
        const Trace flagged = normalize_trace(low, NoiseBudget{1.0, 0.05});
        CHECK(flagged.v[2] < 0.0);
        REQUIRE(flagged.meta.warnings.size() == 1);
        CHECK(flagged.meta.warnings[0] == "negative_values_after_dark_subtraction");
    }
}

TEST_CASE("sweep model hits the two variances at the fringe extremes") {
    SweepFit fit;
    fit.x_sqz = 0.1;
    fit.x_asqz = 19.7;
    fit.phase = PhasePoly{0.0, 1.0, 0.0};
    CHECK_THAT(sweep_model(0.0, fit), WithinRel(0.1, 1e-14));
    CHECK_THAT(sweep_model(kPi / 2.0, fit), WithinRel(19.7, 1e-12));
    CHECK_THAT(sweep_model(kPi / 4.0, fit), WithinRel(0.5 * (0.1 + 19.7), 1e-12));
}

TEST_CASE("noiseless sweep is fitted to the simulated truth") {
    SimConfig cfg = quick_config(1, 0.0);
    const HomodyneTruth truth = default_homodyne_truth();
    const QuadraturePair measured = apply_loss(truth.pure, truth.eta);
    const Trace normalized = normalize_trace(simulate_homodyne_sweep(cfg, truth), budget_of(cfg));

    const SweepFit fit = fit_on_log_or_linear(normalized);
    REQUIRE(fit.converged);
    CHECK_THAT(fit.x_sqz, WithinRel(measured.x_var, 1e-8));
    CHECK_THAT(fit.x_asqz, WithinRel(measured.y_var, 1e-8));
    CHECK_THAT(infer_efficiency(QuadraturePair(fit.x_sqz, fit.x_asqz)),
               WithinRel(truth.eta, 1e-6));
    CHECK_FALSE(fit.smoothing_bias_warning);
}

TEST_CASE("noisy sweep round trip recovers the efficiency within its error bar") {
    const HomodyneTruth truth = default_homodyne_truth();
    int within = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const SimConfig cfg = quick_config(seed);
        const Trace normalized =
            normalize_trace(simulate_homodyne_sweep(cfg, truth), budget_of(cfg));
        const SweepFit fit = fit_on_log_or_linear(normalized);
        REQUIRE(fit.converged);
        const UncertainValue eta = efficiency_from_fit(fit);
        REQUIRE(eta.sigma > 0.0);
        if (std::abs(eta.value - truth.eta) < 3.0 * eta.sigma) {
            ++within;
        }
    }
    CHECK(within >= 8);
}

TEST_CASE("swapped-branch fits are canonicalized back to x_sqz < x_asqz") {
    SimConfig cfg = quick_config(5, 0.01);
    const HomodyneTruth truth = default_homodyne_truth();
    const QuadraturePair measured = apply_loss(truth.pure, truth.eta);
    const Trace normalized = normalize_trace(simulate_homodyne_sweep(cfg, truth), budget_of(cfg));

    // Start on the equivalent branch with the variances exchanged and the
    // phase advanced by pi/2; the reported fit must come back canonical.
    SweepFit init;
    init.x_sqz = measured.y_var;
    init.x_asqz = measured.x_var;
    init.phase = PhasePoly{truth.sweep.phi0 + kPi / 2.0, truth.sweep.phi1, truth.sweep.phi2};
    const SweepFit fit = fit_sweep(normalized, init);
    REQUIRE(fit.converged);
    CHECK(fit.x_sqz < fit.x_asqz);
    CHECK_THAT(fit.x_sqz, WithinRel(measured.x_var, 5e-3));
    CHECK_THAT(fit.x_asqz, WithinRel(measured.y_var, 5e-3));
    CHECK(fit.sigma[0] < fit.sigma[1]);
    // Model values, not parameter values, are what the swap must preserve.
    SweepFit reference;
    reference.x_sqz = measured.x_var;
    reference.x_asqz = measured.y_var;
    reference.phase = truth.sweep;
    for (double t : {0.01, 0.037, 0.06, 0.09}) {
        REQUIRE_THAT(sweep_model(t, fit), WithinRel(sweep_model(t, reference), 0.02));
    }
}

TEST_CASE("smoothing wider than 5 % of a fringe sets the bias warning") {
    const SimConfig cfg = quick_config(2);
    const HomodyneTruth truth = default_homodyne_truth();
    const Trace normalized = normalize_trace(simulate_homodyne_sweep(cfg, truth), budget_of(cfg));

    SweepProcessOptions narrow;
    narrow.smoothing_window = 30;
    const SweepFit ok = fit_on_log_or_linear(normalized, narrow);
    CHECK_FALSE(ok.smoothing_bias_warning);

    SweepProcessOptions wide;
    wide.smoothing_window = 501;
    const SweepFit biased = fit_on_log_or_linear(normalized, wide);
    CHECK(biased.smoothing_bias_warning);
}

TEST_CASE("dB-domain residuals fit the same sweep") {
    const SimConfig cfg = quick_config(3);
    const HomodyneTruth truth = default_homodyne_truth();
    const QuadraturePair measured = apply_loss(truth.pure, truth.eta);
    const Trace normalized = normalize_trace(simulate_homodyne_sweep(cfg, truth), budget_of(cfg));

    SweepProcessOptions opts;
    opts.db_domain = true;
    const SweepFit fit = fit_on_log_or_linear(normalized, opts);
    REQUIRE(fit.converged);
    CHECK_THAT(fit.x_sqz, WithinRel(measured.x_var, 0.02));
    CHECK_THAT(fit.x_asqz, WithinRel(measured.y_var, 0.02));
}

TEST_CASE("uniform weighting is available and lands on the same sweep") {
    const SimConfig cfg = quick_config(4);
    const HomodyneTruth truth = default_homodyne_truth();
    const QuadraturePair measured = apply_loss(truth.pure, truth.eta);
    const Trace normalized = normalize_trace(simulate_homodyne_sweep(cfg, truth), budget_of(cfg));

    SweepProcessOptions opts;
    opts.fit.weighting = SweepWeighting::uniform;
    const SweepFit fit = fit_on_log_or_linear(normalized, opts);
    REQUIRE(fit.converged);
    CHECK_THAT(fit.x_asqz, WithinRel(measured.y_var, 0.02));
}

TEST_CASE("sweeps that do not cover a fringe are rejected") {
    const HomodyneTruth truth = default_homodyne_truth();
    SECTION("explicit init carries the range information") {
        SimConfig cfg = quick_config(6, 0.005);
        HomodyneTruth slow = truth;
        slow.sweep = PhasePoly{-0.5, 30.0, 0.0};  // range 3.0 < pi
        const Trace normalized =
            normalize_trace(simulate_homodyne_sweep(cfg, slow), budget_of(cfg));
        SweepFit init;
        init.x_sqz = 0.1;
        init.x_asqz = 19.8;
        init.phase = slow.sweep;
        CHECK_THROWS_AS(fit_sweep(normalized, init), InsufficientDataError);
        CHECK_THROWS_AS(fit_on_log_or_linear(normalized), InsufficientDataError);
    }
    SECTION("initial variances must be positive") {
        SimConfig cfg = quick_config(6);
        const Trace normalized =
            normalize_trace(simulate_homodyne_sweep(cfg, truth), budget_of(cfg));
        SweepFit init;
        init.x_sqz = 0.0;
        init.x_asqz = 19.8;
        init.phase = truth.sweep;
        CHECK_THROWS_AS(fit_sweep(normalized, init), DomainError);
    }
}

TEST_CASE("auto-initialization handles one, two and many troughs") {
    const HomodyneTruth base = default_homodyne_truth();
    SECTION("one trough") {
        SimConfig cfg = quick_config(7, 0.01);
        HomodyneTruth truth = base;
        truth.sweep = PhasePoly{0.5, 33.0, 0.0};  // crosses pi only
        const Trace normalized =
            normalize_trace(simulate_homodyne_sweep(cfg, truth), budget_of(cfg));
        const SweepFit fit = fit_on_log_or_linear(normalized);
        CHECK_THAT(fit.x_asqz, WithinRel(apply_loss(base.pure, base.eta).y_var, 0.02));
    }
    SECTION("two troughs, the default sweep") {
        SimConfig cfg = quick_config(8, 0.01);
        const Trace normalized =
            normalize_trace(simulate_homodyne_sweep(cfg, base), budget_of(cfg));
        const SweepFit init = auto_init_sweep(normalized);
        CHECK(init.x_sqz < init.x_asqz);
        const SweepFit fit = fit_sweep(normalized, init);
        CHECK_THAT(fit.phase.phi1, WithinRel(base.sweep.phi1, 0.05));
    }
    SECTION("three troughs pin the quadratic") {
        SimConfig cfg = quick_config(9, 0.01);
        HomodyneTruth truth = base;
        truth.sweep = PhasePoly{0.2, 100.0, 0.0};
        const Trace normalized =
            normalize_trace(simulate_homodyne_sweep(cfg, truth), budget_of(cfg));
        const SweepFit fit = fit_on_log_or_linear(normalized);
        CHECK_THAT(fit.phase.phi1, WithinRel(100.0, 0.02));
    }
    SECTION("a flat trace has no fringe") {
        Trace flat;
        for (int i = 0; i < 100; ++i) {
            flat.t.push_back(1e-3 * i);
            flat.v.push_back(1.0);
        }
        CHECK_THROWS_AS(auto_init_sweep(flat), DegenerateInputError);
    }
}

TEST_CASE("efficiency from the fit covariance by the delta method") {
    SweepFit fit;
    fit.x_sqz = 0.10;
    fit.x_asqz = 19.7;
    fit.sigma = Eigen::VectorXd::Zero(5);
    fit.sigma[0] = 0.002;
    fit.sigma[1] = 0.15;
    fit.covariance = Eigen::MatrixXd::Zero(5, 5);
    fit.covariance(0, 0) = 0.002 * 0.002;
    fit.covariance(1, 1) = 0.15 * 0.15;
    const UncertainValue eta = efficiency_from_fit(fit);
    CHECK_THAT(eta.value, WithinRel(0.9455056179775282, 1e-14));
    CHECK_THAT(eta.sigma, WithinRel(0.0022404221739851255, 1e-12));

    SECTION("no covariance means no error bar") {
        SweepFit bare;
        bare.x_sqz = 0.10;
        bare.x_asqz = 19.7;
        CHECK(efficiency_from_fit(bare).sigma == 0.0);
    }
}

TEST_CASE("fringe visibility") {
    CHECK_THAT(visibility(10.0, 2.0, 1.0), WithinRel(0.8, 1e-14));
    SECTION("scale invariant") {
        for (double k : {0.1, 2.0, 500.0}) {
            REQUIRE_THAT(visibility(10.0 * k, 2.0 * k, 1.0 * k), WithinRel(0.8, 1e-12));
        }
    }
    SECTION("perfect fringe") {
        CHECK_THAT(visibility(5.0, 0.0, 0.0), WithinRel(1.0, 1e-15));
    }
    SECTION("offset larger than a voltage") {
        CHECK_THROWS_AS(visibility(10.0, 0.5, 1.0), DomainError);
        CHECK_THROWS_AS(visibility(0.5, 0.2, 1.0), DomainError);
    }
}

TEST_CASE("propagation efficiency from the three power meters") {
    const UncertainValue eta = propagation_efficiency(
        UncertainValue(99.5, 0.5), UncertainValue(49.0, 0.3), UncertainValue(50.0, 0.3));
    CHECK_THAT(eta.value, WithinRel(0.9949748743718593, 1e-14));
    CHECK_THAT(eta.sigma, WithinRel(0.006571156403415763, 1e-12));
    SECTION("inconsistent powers are unphysical") {
        CHECK_THROWS_AS(propagation_efficiency(UncertainValue(100.0, 0.1),
                                               UncertainValue(60.0, 0.1),
                                               UncertainValue(60.0, 0.1)),
                        UnphysicalResultError);
    }
    SECTION("nonpositive powers are rejected") {
        CHECK_THROWS_AS(propagation_efficiency(UncertainValue(0.0, 0.1), UncertainValue(1.0, 0.1),
                                               UncertainValue(1.0, 0.1)),
                        DomainError);
    }
}

TEST_CASE("proportionality gate") {
    const std::vector<double> powers{1.0, 2.0, 4.0, 8.0, 16.0};
    SECTION("clean linear data passes") {
        std::vector<std::pair<double, double>> pts;
        for (double p : powers) {
            pts.emplace_back(p, p);
        }
        const ProportionalityResult res = check_proportionality(pts);
        CHECK_THAT(res.slope, WithinRel(1.0, 1e-13));
        CHECK_THAT(res.intercept, WithinAbs(0.0, 1e-12));
        CHECK(res.nonlinearity_metric < 1e-12);
        CHECK(res.flags.empty());
        CHECK(res.pass);
    }
    SECTION("5 % quadratic contamination fails with positive curvature") {
        std::vector<std::pair<double, double>> pts;
        for (double p : powers) {
            pts.emplace_back(p, p + 0.003125 * p * p);
        }
        const ProportionalityResult res = check_proportionality(pts);
        CHECK_THAT(res.slope, WithinRel(1.05390625, 1e-12));
        CHECK_THAT(res.intercept, WithinRel(-0.12109375, 1e-9));
        CHECK_THAT(res.nonlinearity_metric, WithinRel(0.07537688442211336, 1e-9));
        CHECK_THAT(res.curvature_ratio, WithinRel(0.05, 1e-6));
        CHECK_FALSE(res.pass);
        REQUIRE(res.flags.size() == 1);
        CHECK(res.flags[0] == "positive_curvature");
    }
    SECTION("saturation at twice the maximum power fails with negative curvature") {
        std::vector<std::pair<double, double>> pts;
        for (double p : powers) {
            pts.emplace_back(p, p / (1.0 + p / 32.0));
        }
        const ProportionalityResult res = check_proportionality(pts);
        CHECK_THAT(res.slope, WithinRel(0.6403414281972156, 1e-10));
        CHECK_THAT(res.intercept, WithinRel(0.7247375717963934, 1e-10));
        CHECK_THAT(res.nonlinearity_metric, WithinRel(0.2896404019829551, 1e-9));
        CHECK_THAT(res.curvature_ratio, WithinRel(-0.28435016578931693, 1e-6));
        CHECK_FALSE(res.pass);
        CHECK(std::find(res.flags.begin(), res.flags.end(), "negative_curvature") !=
              res.flags.end());
    }
    SECTION("dead detector shows a zero slope") {
        std::vector<std::pair<double, double>> pts;
        for (double p : powers) {
            pts.emplace_back(p, 0.3);
        }
        const ProportionalityResult res = check_proportionality(pts);
        CHECK_FALSE(res.pass);
        CHECK(std::find(res.flags.begin(), res.flags.end(), "zero_slope") != res.flags.end());
    }
    SECTION("uncorrected dark offset fails on the intercept, allowance can admit it") {
        std::vector<std::pair<double, double>> pts;
        for (double p : powers) {
            pts.emplace_back(p, p + 0.3);
        }
        const ProportionalityResult res = check_proportionality(pts);
        CHECK_THAT(res.intercept, WithinRel(0.3, 1e-12));
        CHECK(res.nonlinearity_metric < 1e-12);
        CHECK_FALSE(res.pass);
        REQUIRE(res.flags.size() == 1);
        CHECK(res.flags[0] == "intercept_exceeds_allowance");

        ProportionalityOptions opts;
        opts.dark_allowance = 0.4;
        const ProportionalityResult admitted = check_proportionality(pts, opts);
        CHECK(admitted.pass);
    }
    SECTION("input validation") {
        std::vector<std::pair<double, double>> two{{1.0, 1.0}, {2.0, 2.0}};
        CHECK_THROWS_AS(check_proportionality(two), InsufficientDataError);
        std::vector<std::pair<double, double>> narrow{{1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}};
        CHECK_THROWS_AS(check_proportionality(narrow), InsufficientDataError);
        std::vector<std::pair<double, double>> bad{{0.0, 1.0}, {2.0, 2.0}, {8.0, 8.0}};
        CHECK_THROWS_AS(check_proportionality(bad), DomainError);
    }
}
