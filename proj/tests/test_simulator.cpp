#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "qrc/simulator.hpp"

using namespace qrc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("one seed pins every sample") {
    const SimConfig cfg = default_cavity_sim_config();
    const Trace a = simulate_cavity_scan(cfg, default_cavity_truth());
    const Trace b = simulate_cavity_scan(cfg, default_cavity_truth());
    REQUIRE(a.v.size() == b.v.size());
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        REQUIRE(a.v[i] == b.v[i]);
        REQUIRE(a.t[i] == b.t[i]);
    }

    SECTION("a different seed gives different noise") {
        SimConfig other = cfg;
        other.seed = cfg.seed + 1;
        const Trace c = simulate_cavity_scan(other, default_cavity_truth());
        std::size_t differing = 0;
        for (std::size_t i = 0; i < a.v.size(); ++i) {
            if (a.v[i] != c.v[i]) {
                ++differing;
            }
        }
        CHECK(differing > a.v.size() / 2);
    }
}

TEST_CASE("simulated traces carry their provenance") {
    SimConfig cfg;
    cfg.seed = 77;
    cfg.n_points = 101;
    const Trace trace = simulate_homodyne_sweep(cfg, default_homodyne_truth());
    CHECK(trace.meta.seed.has_value());
    CHECK(*trace.meta.seed == 77);
    CHECK(trace.meta.generator == rng::kGeneratorId);
    CHECK(trace.meta.units == "linear_power");
    CHECK(trace.meta.center_frequency_hz == cfg.center_frequency_hz);
    CHECK(trace.meta.rbw_hz == cfg.rbw_hz);
    CHECK_FALSE(trace.meta.label.empty());
}

TEST_CASE("sample times are a strict uniform grid over the duration") {
    SimConfig cfg;
    cfg.n_points = 1001;
    cfg.duration_s = 0.25;
    const Trace trace = simulate_cavity_scan(cfg, default_cavity_truth());
    REQUIRE(trace.t.size() == 1001);
    CHECK(trace.t.front() == 0.0);
    CHECK_THAT(trace.t.back(), WithinRel(0.25, 1e-15));
    for (std::size_t i = 1; i < trace.t.size(); ++i) {
        REQUIRE(trace.t[i] > trace.t[i - 1]);
    }
}

TEST_CASE("zero noise reproduces the model exactly") {
    SECTION("cavity") {
        SimConfig cfg = default_cavity_sim_config();
        cfg.frac_noise = 0.0;
        cfg.n_points = 501;
        const CavityParams truth = default_cavity_truth();
        const Trace trace = simulate_cavity_scan(cfg, truth);
        for (std::size_t i = 0; i < trace.v.size(); ++i) {
            REQUIRE(trace.v[i] == reflection_response(truth.phase.at(trace.t[i]), truth));
        }
    }
    SECTION("homodyne, including the instrument scale") {
        SimConfig cfg;
        cfg.frac_noise = 0.0;
        cfg.n_points = 501;
        const HomodyneTruth truth = default_homodyne_truth();
        const QuadraturePair measured = apply_loss(truth.pure, truth.eta);
        SweepFit model;
        model.x_sqz = measured.x_var;
        model.x_asqz = measured.y_var;
        model.phase = truth.sweep;
        const double span = cfg.vacuum_var - cfg.dark_var;
        const Trace trace = simulate_homodyne_sweep(cfg, truth);
        for (std::size_t i = 0; i < trace.v.size(); ++i) {
            REQUIRE(trace.v[i] == sweep_model(trace.t[i], model) * span + cfg.dark_var);
        }
    }
    SECTION("homodyne with phase jitter folded into the quadratures") {
        SimConfig cfg;
        cfg.frac_noise = 0.0;
        cfg.n_points = 101;
        HomodyneTruth truth = default_homodyne_truth();
        truth.theta_rms = 0.05;
        const QuadraturePair jittered =
            apply_phase_noise(apply_loss(truth.pure, truth.eta), PhaseNoise(0.05));
        SweepFit model;
        model.x_sqz = jittered.x_var;
        model.x_asqz = jittered.y_var;
        model.phase = truth.sweep;
        const double span = cfg.vacuum_var - cfg.dark_var;
        const Trace trace = simulate_homodyne_sweep(cfg, truth);
        for (std::size_t i = 0; i < trace.v.size(); ++i) {
            REQUIRE(trace.v[i] == sweep_model(trace.t[i], model) * span + cfg.dark_var);
        }
    }
    SECTION("proportionality, including saturation") {
        SimConfig cfg;
        cfg.frac_noise = 0.0;
        const std::vector<double> powers{1.0, 2.0, 4.0, 8.0, 16.0};
        const auto pts = simulate_proportionality(powers, 32.0, cfg, 1.0, 0.0);
        REQUIRE(pts.size() == 5);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            REQUIRE(pts[i].first == powers[i]);
            REQUIRE(pts[i].second == powers[i] / (1.0 + powers[i] / 32.0));
        }
        const auto linear = simulate_proportionality(
            powers, std::numeric_limits<double>::infinity(), cfg, 2.0, 0.3);
        for (std::size_t i = 0; i < linear.size(); ++i) {
            REQUIRE(linear[i].second == 2.0 * powers[i] + 0.3);
        }
    }
}

TEST_CASE("the injected noise has the configured fractional scale") {
    SimConfig cfg;
    cfg.seed = 3;
    const HomodyneTruth truth = default_homodyne_truth();
    const QuadraturePair measured = apply_loss(truth.pure, truth.eta);
    SweepFit model;
    model.x_sqz = measured.x_var;
    model.x_asqz = measured.y_var;
    model.phase = truth.sweep;
    const double span = cfg.vacuum_var - cfg.dark_var;

    const Trace noisy = simulate_homodyne_sweep(cfg, truth);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < noisy.v.size(); ++i) {
        const double clean = sweep_model(noisy.t[i], model) * span;
        const double eps = (noisy.v[i] - cfg.dark_var - clean) / clean;
        sum += eps;
        sum_sq += eps * eps;
    }
    const double n = static_cast<double>(noisy.v.size());
    const double mean = sum / n;
    const double sd = std::sqrt(sum_sq / n - mean * mean);
    CHECK(std::abs(mean) < 5e-4);
    CHECK_THAT(sd, WithinRel(cfg.frac_noise, 0.05));
}

TEST_CASE("simulator configuration validation") {
    const HomodyneTruth truth = default_homodyne_truth();
    SimConfig cfg;
    cfg.n_points = 1;
    CHECK_THROWS_AS(simulate_homodyne_sweep(cfg, truth), DomainError);
    cfg = SimConfig{};
    cfg.duration_s = 0.0;
    CHECK_THROWS_AS(simulate_homodyne_sweep(cfg, truth), DomainError);
    cfg = SimConfig{};
    cfg.frac_noise = -0.1;
    CHECK_THROWS_AS(simulate_cavity_scan(cfg, default_cavity_truth()), DomainError);
    cfg = SimConfig{};
    cfg.dark_var = 1.0;
    CHECK_THROWS_AS(simulate_homodyne_sweep(cfg, truth), DomainError);

    SECTION("truth is validated too") {
        HomodyneTruth bad = truth;
        bad.eta = 1.2;
        CHECK_THROWS_AS(simulate_homodyne_sweep(SimConfig{}, bad), DomainError);
        CavityParams bad_cavity = default_cavity_truth();
        bad_cavity.r_sq = 1.5;
        CHECK_THROWS_AS(simulate_cavity_scan(SimConfig{}, bad_cavity), DomainError);
    }
    SECTION("proportionality inputs") {
        const SimConfig ok;
        const std::vector<double> powers{1.0, 2.0, 4.0, 8.0};
        CHECK_THROWS_AS(simulate_proportionality({}, 10.0, ok), InsufficientDataError);
        CHECK_THROWS_AS(simulate_proportionality(powers, 0.0, ok), DomainError);
        const std::vector<double> bad{1.0, -2.0};
        CHECK_THROWS_AS(
            simulate_proportionality(bad, std::numeric_limits<double>::infinity(), ok),
            DomainError);
        CHECK_THROWS_AS(simulate_proportionality(
                            powers, std::numeric_limits<double>::infinity(), ok, -1.0, 0.0),
                        DomainError);
    }
}
