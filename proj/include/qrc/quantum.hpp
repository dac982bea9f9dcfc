#pragma once

// Gaussian squeezed-vacuum arithmetic on vacuum-normalized quadrature
// variance pairs: the optical loss channel, its inversion (which turns a
// single noise measurement into an efficiency estimate), photon number,
// phase-noise averaging and dB conversions.

#include <cmath>
#include <string>

#include "qrc/errors.hpp"

namespace qrc {

// Tolerance on |x*y - 1| below which a pair counts as pure. Far below any
// experimental precision; catches programming errors, not physics.
inline constexpr double kPurityTol = 1e-6;

// Inversion of the loss channel is singular where x + y = 2; inputs closer
// than this to the singularity are rejected as uninformative.
inline constexpr double kEfficiencyDenominatorTol = 1e-9;

// Variances of the two field quadratures, normalized so vacuum is (1, 1).
// Physical states obey x_var * y_var >= 1; the constructor only enforces
// positivity so that intermediate arithmetic can hold unnormalized pairs.
struct QuadraturePair {
    double x_var;
    double y_var;

    QuadraturePair(double x, double y) : x_var(x), y_var(y) {
        if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(x) || !std::isfinite(y)) {
            throw DomainError("QuadraturePair: variances must be positive and finite, got (" +
                              std::to_string(x) + ", " + std::to_string(y) + ")");
        }
    }
};

// Root-mean-square fluctuation of the readout phase, radians.
struct PhaseNoise {
    double theta_rms;

    explicit PhaseNoise(double theta) : theta_rms(theta) {
        if (!(theta >= 0.0) || !std::isfinite(theta)) {
            throw DomainError("PhaseNoise: theta_rms must be >= 0, got " + std::to_string(theta));
        }
    }
};

// Mix a state with vacuum: each variance maps to eta*v + (1 - eta).
// eta = 1 is the identity, eta = 0 returns vacuum.
inline QuadraturePair apply_loss(const QuadraturePair& pure, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw DomainError("apply_loss: eta must lie in [0, 1], got " + std::to_string(eta));
    }
    return QuadraturePair(eta * pure.x_var + (1.0 - eta), eta * pure.y_var + (1.0 - eta));
}

inline double uncertainty_product(const QuadraturePair& p) {
    return p.x_var * p.y_var;
}

// Efficiency of the loss channel that turned some pure squeezed state into
// this measurement: eta = (x + y - 1 - x*y) / (x + y - 2). Requires a
// genuinely squeezed pair (x < 1 < y); the result lies in (0, 1].
inline double infer_efficiency(const QuadraturePair& measured) {
    const double x = measured.x_var;
    const double y = measured.y_var;
    if (!(x < 1.0 && y > 1.0)) {
        throw DomainError("infer_efficiency: need a squeezed measurement with x_var < 1 < y_var");
    }
    const double denom = x + y - 2.0;
    if (std::abs(denom) < kEfficiencyDenominatorTol) {
        throw DegenerateInputError(
            "infer_efficiency: x_var + y_var = 2, state indistinguishable from a thermal mixture");
    }
    const double eta = (x + y - 1.0 - x * y) / denom;
    // Allow a hair of rounding slack above 1 (an exactly pure input lands on
    // 1 up to floating-point error), none below 0.
    if (!(eta > 0.0) || eta > 1.0 + 1e-12) {
        throw DomainError("infer_efficiency: implied efficiency " + std::to_string(eta) +
                          " outside (0, 1]; input pair is not a lossy squeezed state");
    }
    return std::min(eta, 1.0);
}

// The pure state that apply_loss(., infer_efficiency(measured)) would map
// onto the measurement. Its product is 1 by construction.
inline QuadraturePair infer_pure_state(const QuadraturePair& measured) {
    const double eta = infer_efficiency(measured);
    return QuadraturePair((measured.x_var - 1.0 + eta) / eta, (measured.y_var - 1.0 + eta) / eta);
}

// Mean photon number of a pure squeezed state: (x + y)/4 - 1/2.
inline double photon_number(const QuadraturePair& pure) {
    const double product = pure.x_var * pure.y_var;
    if (std::abs(product - 1.0) > kPurityTol) {
        throw DomainError("photon_number: input is not pure, x*y = " + std::to_string(product));
    }
    return (pure.x_var + pure.y_var) / 4.0 - 0.5;
}

// Sensitivity of the measured uncertainty product to the total efficiency,
// |S_P| = eta_de^2 * |4 - 8*eta| * n. Zero at eta = 0.5 and symmetric about
// it: the product is blind to efficiency there.
inline double precision_scaling(double eta, double eta_de, double n) {
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw DomainError("precision_scaling: eta must lie in [0, 1]");
    }
    if (!(eta_de >= 0.0 && eta_de <= 1.0)) {
        throw DomainError("precision_scaling: eta_de must lie in [0, 1]");
    }
    if (!(n >= 0.0)) {
        throw DomainError("precision_scaling: photon number must be >= 0");
    }
    return eta_de * eta_de * std::abs(4.0 - 8.0 * eta) * n;
}

// Average the measured variances over Gaussian readout-phase jitter of rms
// width theta_rms. With c = E[cos^2 theta] = (1 + exp(-2 theta_rms^2))/2:
// x_eff = c*x + (1-c)*y and symmetrically for y. Never decreases x_var of a
// squeezed pair, never increases y_var; identity at theta_rms = 0.
inline QuadraturePair apply_phase_noise(const QuadraturePair& measured, const PhaseNoise& noise) {
    const double t2 = noise.theta_rms * noise.theta_rms;
    const double c = 0.5 * (1.0 + std::exp(-2.0 * t2));
    return QuadraturePair(c * measured.x_var + (1.0 - c) * measured.y_var,
                          c * measured.y_var + (1.0 - c) * measured.x_var);
}

// Squeeze factor in dB: positive for variances below vacuum.
inline double var_to_db(double var) {
    if (!(var > 0.0)) {
        throw DomainError("var_to_db: variance must be > 0, got " + std::to_string(var));
    }
    return -10.0 * std::log10(var);
}

inline double db_to_var(double db) {
    return std::pow(10.0, -db / 10.0);
}

}  // namespace qrc
