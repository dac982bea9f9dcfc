#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "qrc/calibration.hpp"

using namespace qrc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

EfficiencyBudget reference_budget() {
    EfficiencyBudget b;
    b.eta_total = UncertainValue(0.9448, 0.0022);
    b.eta_esc = UncertainValue(0.98583, 0.00015);
    b.eta_prop = UncertainValue(0.9949, 0.0025);
    b.eta_mm = UncertainValue(0.9911, 0.0017);
    return b;
}

}  // namespace

TEST_CASE("detection efficiency from the component budget") {
    const UncertainValue eta_de = detection_efficiency(reference_budget());
    CHECK_THAT(eta_de.value, WithinRel(0.9719433383444964, 1e-14));
    CHECK_THAT(eta_de.sigma, WithinRel(0.0037266905152793252, 1e-13));
}

TEST_CASE("monte carlo audit agrees with first-order propagation") {
    const EfficiencyBudget budget = reference_budget();
    const UncertainValue analytic = detection_efficiency(budget);
    const UncertainValue mc = detection_efficiency_monte_carlo(budget, 100000, 42);
    CHECK_THAT(mc.value, WithinAbs(analytic.value, 5e-4));
    const double ratio = mc.sigma / analytic.sigma;
    CHECK(ratio > 0.99);
    CHECK(ratio < 1.01);

    SECTION("seeded draws are deterministic") {
        const UncertainValue again = detection_efficiency_monte_carlo(budget, 100000, 42);
        CHECK(again.value == mc.value);
        CHECK(again.sigma == mc.sigma);
        const UncertainValue other = detection_efficiency_monte_carlo(budget, 100000, 43);
        CHECK(other.value != mc.value);
    }
}

TEST_CASE("inconsistent budgets are rejected as unphysical") {
    EfficiencyBudget b;
    b.eta_total = UncertainValue(0.99, 1e-5);
    b.eta_esc = UncertainValue(0.90, 1e-5);
    b.eta_prop = UncertainValue(0.90, 1e-5);
    b.eta_mm = UncertainValue(0.90, 1e-5);
    CHECK_THROWS_AS(detection_efficiency(b), UnphysicalResultError);

    SECTION("a value above 1 but within 3 sigma is returned unclamped") {
        b.eta_total = UncertainValue(0.95, 0.01);
        b.eta_esc = UncertainValue(0.97, 0.01);
        b.eta_prop = UncertainValue(0.99, 0.01);
        b.eta_mm = UncertainValue(0.98, 0.01);
        const UncertainValue eta = detection_efficiency(b);
        CHECK(eta.value > 1.0);
        CHECK(eta.value < 1.0 + 3.0 * eta.sigma);
    }
}

TEST_CASE("budget entries must lie in (0, 1]") {
    EfficiencyBudget b = reference_budget();
    b.eta_prop = UncertainValue(0.0, 0.001);
    CHECK_THROWS_AS(detection_efficiency(b), DomainError);
    b = reference_budget();
    b.eta_mm = UncertainValue(1.2, 0.001);
    CHECK_THROWS_AS(detection_efficiency(b), DomainError);
    b = reference_budget();
    b.eta_total = UncertainValue(-0.5, 0.001);
    CHECK_THROWS_AS(detection_efficiency_monte_carlo(b, 100, 1), DomainError);
}

TEST_CASE("voltage-based efficiencies") {
    const VoltageEfficiencies v = quantum_efficiency_from_voltages(PhotoVoltages{98.0, 1.0, 100.0});
    CHECK_THAT(v.eta_de, WithinRel(0.97, 1e-15));
    CHECK_THAT(v.eta_qe, WithinRel(0.9603960396039604, 1e-15));
    CHECK(v.eta_qe < v.eta_de);

    SECTION("no dark current makes the two coincide") {
        const VoltageEfficiencies clean =
            quantum_efficiency_from_voltages(PhotoVoltages{98.0, 0.0, 100.0});
        CHECK(clean.eta_de == clean.eta_qe);
    }
    SECTION("validation") {
        CHECK_THROWS_AS(quantum_efficiency_from_voltages(PhotoVoltages{1.0, 2.0, 100.0}),
                        DomainError);
        CHECK_THROWS_AS(quantum_efficiency_from_voltages(PhotoVoltages{1.0, -0.5, 100.0}),
                        DomainError);
        CHECK_THROWS_AS(quantum_efficiency_from_voltages(PhotoVoltages{1.0, 0.5, 0.0}),
                        DomainError);
    }
}

TEST_CASE("quantum efficiency from a detection efficiency and dark ratio") {
    const UncertainValue eta_de(0.9719433383444964, 0.0037266905152793252);
    const UncertainValue dark_ratio(0.0030375008715133323, 0.0);
    const UncertainValue eta_qe = quantum_efficiency_from_de(eta_de, dark_ratio);
    CHECK_THAT(eta_qe.value, WithinRel(0.969, 1e-12));
    CHECK_THAT(eta_qe.sigma, WithinRel(0.003715404969446606, 1e-12));
    CHECK(eta_qe.value < eta_de.value);

    SECTION("dark ratio uncertainty widens the error bar") {
        const UncertainValue wider =
            quantum_efficiency_from_de(eta_de, UncertainValue(0.003, 0.002));
        CHECK(wider.sigma > eta_qe.sigma);
    }
    SECTION("negative dark ratio is rejected") {
        CHECK_THROWS_AS(quantum_efficiency_from_de(eta_de, UncertainValue(-0.01, 0.0)),
                        DomainError);
    }
}

TEST_CASE("retro-reflector adjustment") {
    const UncertainValue eta(0.9720, 0.0037);
    const UncertainValue refl(0.0046, 0.0006);
    const UncertainValue adjusted = retro_reflection_adjustment(eta, refl);
    CHECK_THAT(adjusted.value, WithinRel(0.976491862567812, 1e-14));
    CHECK_THAT(adjusted.value - eta.value, WithinRel(0.004491862567811977, 1e-10));
    CHECK(adjusted.sigma > eta.sigma);

    SECTION("identity at zero reflectance") {
        const UncertainValue same = retro_reflection_adjustment(eta, UncertainValue(0.0, 0.0));
        CHECK(same.value == eta.value);
        CHECK(same.sigma == eta.sigma);
    }
    SECTION("monotone in the reflectance") {
        double prev = 0.0;
        for (double r : {0.0, 0.002, 0.01, 0.05, 0.2}) {
            const double v = retro_reflection_adjustment(eta, UncertainValue(r, 0.0)).value;
            REQUIRE(v > prev);
            prev = v;
        }
    }
    SECTION("reflectance bounds") {
        CHECK_THROWS_AS(retro_reflection_adjustment(eta, UncertainValue(1.0, 0.0)), DomainError);
        CHECK_THROWS_AS(retro_reflection_adjustment(eta, UncertainValue(-0.1, 0.0)), DomainError);
    }
}

TEST_CASE("repeat statistics") {
    const std::array<double, 4> etas = {1.0, 2.0, 3.0, 4.0};
    const RepeatStats stats = aggregate_repeats(etas);
    CHECK_THAT(stats.mean, WithinRel(2.5, 1e-15));
    CHECK_THAT(stats.std_dev, WithinRel(1.2909944487358056, 1e-14));
    CHECK_THAT(stats.std_error, WithinRel(0.6454972243679028, 1e-14));
    CHECK(stats.count == 4);

    SECTION("identical repeats have zero scatter") {
        const std::array<double, 3> flat = {0.5, 0.5, 0.5};
        const RepeatStats s = aggregate_repeats(flat);
        CHECK(s.std_dev == 0.0);
        CHECK(s.std_error == 0.0);
    }
    SECTION("a single value has no scatter estimate") {
        const std::array<double, 1> one = {0.97};
        CHECK_THROWS_AS(aggregate_repeats(one), InsufficientDataError);
    }
}
