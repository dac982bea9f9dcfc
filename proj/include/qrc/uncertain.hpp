#pragma once

// Scalar value with a one-standard-deviation uncertainty, plus first-order
// and Monte-Carlo propagation through products of powers. Power products
// (v1^e1 * v2^e2 * ...) cover every combination rule used in the calibration
// chain: products, quotients and square roots of independent factors.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "qrc/errors.hpp"
#include "qrc/rng.hpp"

namespace qrc {

struct UncertainValue {
    double value = 0.0;
    double sigma = 0.0;

    UncertainValue() = default;

    UncertainValue(double value_, double sigma_) : value(value_), sigma(sigma_) {
        if (!std::isfinite(value_) || !std::isfinite(sigma_)) {
            throw DomainError("UncertainValue: value and sigma must be finite");
        }
        if (sigma_ < 0.0) {
            throw DomainError("UncertainValue: sigma must be >= 0, got " + std::to_string(sigma_));
        }
    }

    // |sigma / value|; the building block of independent product propagation.
    double relative_sigma() const {
        if (value == 0.0) {
            throw DomainError("UncertainValue: relative sigma undefined for value == 0");
        }
        return std::abs(sigma / value);
    }
};

// First-order propagation through f = prod_i inputs[i]^exponents[i] for
// independent inputs: relative variances add, scaled by squared exponents.
inline UncertainValue propagate_first_order(std::span<const UncertainValue> inputs,
                                              std::span<const double> exponents) {
    if (inputs.size() != exponents.size()) {
        throw DomainError("propagate_first_order: inputs and exponents differ in length");
    }
    if (inputs.empty()) {
        throw DomainError("propagate_first_order: no inputs");
    }
    double value = 1.0;
    double rel_var = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (exponents[i] == 0.0) {
            continue;
        }
        if (inputs[i].value == 0.0) {
            throw DomainError("propagate_first_order: input " + std::to_string(i) +
                              " is zero with nonzero exponent");
        }
        value *= std::pow(inputs[i].value, exponents[i]);
        const double term = exponents[i] * inputs[i].relative_sigma();
        rel_var += term * term;
    }
    return UncertainValue(value, std::abs(value) * std::sqrt(rel_var));
}

// Linear propagation sigma^2 = sum_i (gradient[i] * sigmas[i])^2 for
// independent inputs with known partial derivatives.
inline double propagate_linear_sigma(std::span<const double> gradient,
                                     std::span<const double> sigmas) {
    if (gradient.size() != sigmas.size()) {
        throw DomainError("propagate_linear_sigma: gradient and sigmas differ in length");
    }
    double var = 0.0;
    for (std::size_t i = 0; i < gradient.size(); ++i) {
        const double term = gradient[i] * sigmas[i];
        var += term * term;
    }
    return std::sqrt(var);
}

// Monte-Carlo counterpart of propagate_first_order: draws each input as an
// independent Gaussian and returns the sample mean and standard deviation of
// the product. Used to audit the linearized propagation; the two agree to a
// few percent whenever relative uncertainties are small.
inline UncertainValue monte_carlo_propagation(std::span<const UncertainValue> inputs,
                                       std::span<const double> exponents,
                                       std::size_t n_draws,
                                       std::uint64_t seed) {
    if (inputs.size() != exponents.size()) {
        throw DomainError("monte_carlo_propagation: inputs and exponents differ in length");
    }
    if (inputs.empty() || n_draws < 2) {
        throw DomainError("monte_carlo_propagation: need inputs and at least 2 draws");
    }
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t k = 0; k < n_draws; ++k) {
        double product = 1.0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (exponents[i] == 0.0) {
                continue;
            }
            const std::uint64_t stream = rng::derive_stream(seed, i);
            const double draw = inputs[i].value + inputs[i].sigma * rng::gaussian_at(stream, k);
            product *= std::pow(draw, exponents[i]);
        }
        sum += product;
        sum_sq += product * product;
    }
    const double n = static_cast<double>(n_draws);
    const double mean = sum / n;
    const double var = (sum_sq - n * mean * mean) / (n - 1.0);
    return UncertainValue(mean, std::sqrt(std::max(var, 0.0)));
}

}  // namespace qrc
