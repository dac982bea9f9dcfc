#pragma once

// The bundled reference calibration: published component efficiencies of a
// demonstrated squeezed-vacuum photodiode calibration, re-derived by this
// library and diffed against the published numbers. Every tolerance here
// is pinned; the replication report is the golden test of the whole chain.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qrc/calibration.hpp"
#include "qrc/cavity.hpp"
#include "qrc/homodyne.hpp"
#include "qrc/quantum.hpp"
#include "qrc/uncertain.hpp"

namespace qrc::reference {

// Published values of the reference measurement campaign.
inline const UncertainValue kEtaTotal{0.9448, 0.0022};      // 100-sweep ensemble efficiency
inline const UncertainValue kEtaEsc{0.98583, 0.00015};      // resonator escape efficiency
inline const UncertainValue kEtaProp{0.9949, 0.0025};       // path propagation efficiency
inline const UncertainValue kEtaMm{0.9911, 0.0017};         // mode matching, v^2
inline const UncertainValue kEtaDe{0.9720, 0.0037};         // published detection efficiency
inline const UncertainValue kEtaQe{0.969, 0.004};           // quantum efficiency at 10 mW, 5 MHz
inline const UncertainValue kRSq{0.8279, 0.0035};           // coupling mirror reflectivity
inline const UncertainValue kLossRt{0.00247, 0.00007};      // round-trip loss
inline const UncertainValue kRetroReflectance{0.0046, 0.0006};  // diode surface reflection
inline constexpr double kSqueezeDb = 13.2;                  // pure squeeze factor
inline constexpr double kSingleShotX = 0.10;                // single-sweep fitted variances
inline constexpr double kSingleShotY = 19.7;
inline constexpr double kPhotonNumberTarget = 4.73;
inline constexpr double kTransmissionMain = 98.58;          // transmission peaks, arb. units
inline constexpr double kTransmissionSideSum = 1.42;
inline constexpr double kPhaseNoiseRms = 0.002;             // radians, upper bound quoted

inline EfficiencyBudget budget() {
    return EfficiencyBudget{kEtaTotal, kEtaEsc, kEtaProp, kEtaMm};
}

// One replicated quantity: the value this library computes, the published
// target and the closed acceptance interval the computation must land in.
struct ReplicationCheck {
    std::string name;
    double computed = 0.0;
    double target = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool pass = false;
    std::string note;
};

struct ReplicationReport {
    std::vector<ReplicationCheck> checks;
    bool all_pass = true;
    UncertainValue eta_de;
    UncertainValue eta_de_mc;
    UncertainValue eta_esc_independent;
    UncertainValue eta_qe;
    UncertainValue eta_de_retro;
    UncertainValue dark_ratio;  // back-solved, sigma 0; not a measured value
    std::uint64_t mc_seed = 0;
    std::size_t mc_draws = 0;
};

namespace detail {

inline void add_check(ReplicationReport& report, std::string name, double computed, double target,
                      double lo, double hi, std::string note = {}) {
    const bool pass = computed >= lo && computed <= hi;
    report.all_pass = report.all_pass && pass;
    report.checks.push_back(
        {std::move(name), computed, target, lo, hi, pass, std::move(note)});
}

}  // namespace detail

// Recompute the reference calibration end to end and compare against the
// published numbers. Deterministic given (mc_draws, mc_seed).
inline ReplicationReport replicate(std::size_t mc_draws = 1000000, std::uint64_t mc_seed = 42) {
    ReplicationReport report;
    report.mc_seed = mc_seed;
    report.mc_draws = mc_draws;

    report.eta_de = detection_efficiency(budget());
    detail::add_check(report, "eta_de value", report.eta_de.value, kEtaDe.value, 0.9715, 0.9725);
    detail::add_check(report, "eta_de sigma", report.eta_de.sigma, kEtaDe.sigma, 0.0035, 0.0039);

    report.eta_de_mc = detection_efficiency_monte_carlo(budget(), mc_draws, mc_seed);
    detail::add_check(report, "eta_de sigma, monte carlo vs first order",
                      report.eta_de_mc.sigma / report.eta_de.sigma, 1.0, 0.95, 1.05,
                      "seeded Monte-Carlo audit of the linearized propagation");

    report.eta_esc_independent = escape_efficiency(kRSq, kLossRt);
    detail::add_check(report, "eta_esc value", report.eta_esc_independent.value, kEtaEsc.value,
                      0.98578, 0.98588);
    detail::add_check(
        report, "eta_esc sigma (independent inputs)", report.eta_esc_independent.sigma,
        kEtaEsc.sigma, 0.0001, 0.0002,
        "independent propagation of the published r_sq and loss_rt sigmas cannot reach the "
        "published 0.00015: the r_sq term alone contributes 0.00028 and the loss_rt term 0.00040. "
        "The published sigma implies the strong negative r_sq/loss_rt correlation of a joint "
        "reflection fit (correlation about -0.96), available here by passing the fit covariance "
        "to escape_efficiency");

    const double eta_single = infer_efficiency(QuadraturePair(kSingleShotX, kSingleShotY));
    detail::add_check(report, "single-sweep efficiency", eta_single, kEtaTotal.value, 0.942, 0.948);

    const double x_pure = db_to_var(kSqueezeDb);
    const double n_photons = photon_number(QuadraturePair(x_pure, 1.0 / x_pure));
    detail::add_check(report, "photon number of the pure state", n_photons, kPhotonNumberTarget,
                      4.68, 4.78);

    const UncertainValue retro = retro_reflection_adjustment(kEtaDe, kRetroReflectance);
    detail::add_check(report, "retro-reflector increase", retro.value - kEtaDe.value, 0.0046,
                      0.0044, 0.0048, "efficiency gain if diode surface reflection were recovered");
    report.eta_de_retro = retro_reflection_adjustment(report.eta_de, kRetroReflectance);

    // The dark-to-perfect voltage ratio is not published; it is solved from
    // the published quantum efficiency and must not be read as a measured
    // input. Its sigma is therefore zero.
    report.dark_ratio = UncertainValue(report.eta_de.value / kEtaQe.value - 1.0, 0.0);
    report.eta_qe = quantum_efficiency_from_de(report.eta_de, report.dark_ratio);
    detail::add_check(report, "eta_qe value", report.eta_qe.value, kEtaQe.value, 0.9685, 0.9695,
                      "dark ratio back-solved from the published value");
    detail::add_check(report, "eta_qe sigma", report.eta_qe.sigma, kEtaQe.sigma, 0.003, 0.005);

    const UncertainValue mm = mode_matching_from_transmission(
        TransmissionPeaks{kTransmissionMain, {kTransmissionSideSum}, 0.0});
    detail::add_check(report, "mode matching from transmission", mm.value, 0.9858, 0.9857, 0.9859);

    const QuadraturePair single(kSingleShotX, kSingleShotY);
    const QuadraturePair jittered = apply_phase_noise(single, PhaseNoise(kPhaseNoiseRms));
    detail::add_check(report, "squeezed-variance shift at 2 mrad phase noise",
                      jittered.x_var - single.x_var, 0.0, 0.0, 1e-4,
                      "confirms the quoted phase noise is negligible");

    return report;
}

}  // namespace qrc::reference
