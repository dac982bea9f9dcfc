#pragma once

// The headline computation: divide the measured total efficiency by the
// independently calibrated escape, propagation and mode-matching factors to
// obtain the photodiode detection efficiency, then derive the stricter
// quantum efficiency and the retro-reflector variant. Every result carries
// a first-order uncertainty; a seeded Monte-Carlo route audits it.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "qrc/errors.hpp"
#include "qrc/uncertain.hpp"

namespace qrc {

// Component efficiencies entering eta_total = eta_esc * eta_prop * eta_mm *
// eta_de. The four terms come from disjoint measurements and are treated as
// independent in propagation.
struct EfficiencyBudget {
    UncertainValue eta_total;
    UncertainValue eta_esc;
    UncertainValue eta_prop;
    UncertainValue eta_mm;
};

inline void validate_efficiency_budget(const EfficiencyBudget& b) {
    const struct {
        const char* name;
        const UncertainValue& u;
    } fields[] = {{"eta_total", b.eta_total},
                  {"eta_esc", b.eta_esc},
                  {"eta_prop", b.eta_prop},
                  {"eta_mm", b.eta_mm}};
    for (const auto& f : fields) {
        if (!(f.u.value > 0.0 && f.u.value <= 1.0)) {
            throw DomainError(std::string("efficiency budget: ") + f.name +
                              " must lie in (0, 1], got " + std::to_string(f.u.value));
        }
    }
}

// eta_de = eta_total / (eta_esc * eta_prop * eta_mm), relative variances
// added in quadrature. Values above 1 by more than 3 sigma are rejected;
// within 3 sigma they are returned as computed (display clamping is the
// report layer's business, the stored value stays auditable).
inline UncertainValue detection_efficiency(const EfficiencyBudget& budget) {
    validate_efficiency_budget(budget);
    const std::array<UncertainValue, 4> inputs = {budget.eta_total, budget.eta_esc,
                                                  budget.eta_prop, budget.eta_mm};
    const std::array<double, 4> exponents = {1.0, -1.0, -1.0, -1.0};
    const UncertainValue eta_de = propagate_first_order(inputs, exponents);
    if (eta_de.value > 1.0 + 3.0 * eta_de.sigma) {
        throw UnphysicalResultError(
            "detection_efficiency: implied eta_de = " + std::to_string(eta_de.value) +
            " exceeds 1 by more than 3 sigma; the component efficiencies are inconsistent");
    }
    return eta_de;
}

// Monte-Carlo audit of the same quotient, seeded and order-independent.
inline UncertainValue detection_efficiency_monte_carlo(const EfficiencyBudget& budget,
                                                       std::size_t n_draws, std::uint64_t seed) {
    validate_efficiency_budget(budget);
    const std::array<UncertainValue, 4> inputs = {budget.eta_total, budget.eta_esc,
                                                  budget.eta_prop, budget.eta_mm};
    const std::array<double, 4> exponents = {1.0, -1.0, -1.0, -1.0};
    return monte_carlo_propagation(inputs, exponents, n_draws, seed);
}

// Photodiode voltages behind the calibration: the measured total, the
// dark reading and the ideal-diode prediction.
struct PhotoVoltages {
    double u_tot = 0.0;
    double u_dark = 0.0;
    double u_perf = 0.0;
};

inline void validate_photo_voltages(const PhotoVoltages& v) {
    if (!(v.u_dark >= 0.0) || !(v.u_tot >= v.u_dark)) {
        throw DomainError("photo voltages: need u_tot >= u_dark >= 0");
    }
    if (!(v.u_perf > 0.0)) {
        throw DomainError("photo voltages: u_perf must be > 0");
    }
}

struct VoltageEfficiencies {
    double eta_de = 0.0;
    double eta_qe = 0.0;
};

// eta_de = (u_tot - u_dark) / u_perf credits the diode for light it turned
// into dark-current-free signal; eta_qe = (u_tot - u_dark) / (u_perf +
// u_dark) additionally penalizes the dark current, so eta_qe <= eta_de.
inline VoltageEfficiencies quantum_efficiency_from_voltages(const PhotoVoltages& v) {
    validate_photo_voltages(v);
    const double signal = v.u_tot - v.u_dark;
    return VoltageEfficiencies{signal / v.u_perf, signal / (v.u_perf + v.u_dark)};
}

// Quantum efficiency from a detection efficiency and the dark-to-perfect
// voltage ratio: eta_qe = eta_de / (1 + dark_ratio).
inline UncertainValue quantum_efficiency_from_de(const UncertainValue& eta_de,
                                                 const UncertainValue& dark_ratio) {
    if (dark_ratio.value < 0.0) {
        throw DomainError("quantum_efficiency_from_de: dark_ratio must be >= 0");
    }
    const double denom = 1.0 + dark_ratio.value;
    const double value = eta_de.value / denom;
    const double var = (eta_de.sigma * eta_de.sigma) / (denom * denom) +
                       std::pow(eta_de.value * dark_ratio.sigma / (denom * denom), 2);
    return UncertainValue(value, std::sqrt(var));
}

// Efficiency that would be measured if the light reflected off the diode
// surface were recovered by a retro-reflector: eta / (1 - refl). Identity
// at refl = 0 and strictly increasing in refl.
inline UncertainValue retro_reflection_adjustment(const UncertainValue& eta,
                                                  const UncertainValue& refl) {
    if (!(refl.value >= 0.0 && refl.value < 1.0)) {
        throw DomainError("retro_reflection_adjustment: reflectance must lie in [0, 1)");
    }
    const double denom = 1.0 - refl.value;
    const double value = eta.value / denom;
    const double var = (eta.sigma * eta.sigma) / (denom * denom) +
                       std::pow(eta.value * refl.sigma / (denom * denom), 2);
    return UncertainValue(value, std::sqrt(var));
}

struct RepeatStats {
    double mean = 0.0;
    double std_dev = 0.0;    // sample standard deviation, n-1 normalization
    double std_error = 0.0;  // std_dev / sqrt(n)
    std::size_t count = 0;
};

// Statistics of repeated efficiency measurements. The standard error of
// the mean is what enters the calibration budget; the standard deviation
// describes single-shot scatter. Both are reported.
inline RepeatStats aggregate_repeats(std::span<const double> etas) {
    if (etas.size() < 2) {
        throw InsufficientDataError("aggregate_repeats: need at least 2 values");
    }
    const double n = static_cast<double>(etas.size());
    double sum = 0.0;
    for (double e : etas) {
        sum += e;
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (double e : etas) {
        ss += (e - mean) * (e - mean);
    }
    RepeatStats stats;
    stats.mean = mean;
    stats.std_dev = std::sqrt(ss / (n - 1.0));
    stats.std_error = stats.std_dev / std::sqrt(n);
    stats.count = etas.size();
    return stats;
}

}  // namespace qrc
