#pragma once

// Dense Levenberg-Marquardt for small-parameter curve fits ( < 10 params,
// up to ~1e5 residuals). Derivatives are numeric: forward differences while
// iterating, central differences once at the optimum for the covariance.
// The residual callback returns weighted residuals, so the final cost is a
// chi-square and the covariance is scaled by the reduced chi-square; with
// honest per-point sigmas that scale factor is near one, with uniform
// weights it absorbs the unknown overall noise level.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "qrc/errors.hpp"

namespace qrc {

struct FitOptions {
    int max_iterations = 200;
    // Accepted step smaller than this, relative to (|param| + 1), stops.
    double step_tolerance = 1e-10;
    // Relative cost decrease smaller than this stops.
    double cost_tolerance = 1e-12;
    double lambda_init = 1e-3;
    // Damping beyond this with no accepted step means the fit has stalled.
    double lambda_max = 1e12;
    // Eigenvalue ratio of J^T J below which the Jacobian counts as rank
    // deficient and no covariance is defined. Eigenvalues under ~100 machine
    // epsilons of the largest are indistinguishable from rounding noise in
    // the explicitly formed normal matrix.
    double rank_tolerance = 100.0 * std::numeric_limits<double>::epsilon();
    // Additive floor on finite-difference steps, for parameters near zero.
    double fd_floor = 1e-8;
};

// Fills r (already sized) with weighted residuals at p; returns false when
// p lies outside the model's domain, which the optimizer treats as a
// rejected trial step.
using ResidualFn = std::function<bool(const Eigen::VectorXd& p, Eigen::VectorXd& r)>;

struct LevmarResult {
    Eigen::VectorXd params;
    Eigen::VectorXd sigma;
    Eigen::MatrixXd covariance;
    double cost = 0.0;  // sum of squared weighted residuals at the optimum
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline bool finite(const Eigen::VectorXd& v) {
    return v.allFinite();
}

// One column of the numeric Jacobian. Forward step first, backward as a
// fallback when the forward point is out of domain.
inline void jacobian_column(const ResidualFn& fn, const Eigen::VectorXd& p,
                            const Eigen::VectorXd& r0, Eigen::Index j, double h, bool central,
                            Eigen::VectorXd& scratch, Eigen::VectorXd& col) {
    Eigen::VectorXd probe = p;
    probe[j] = p[j] + h;
    const bool fwd_ok = fn(probe, scratch) && finite(scratch);
    if (central) {
        Eigen::VectorXd r_plus = scratch;
        probe[j] = p[j] - h;
        if (fwd_ok && fn(probe, scratch) && finite(scratch)) {
            col = (r_plus - scratch) / (2.0 * h);
            return;
        }
        if (fwd_ok) {
            col = (r_plus - r0) / h;
            return;
        }
    } else if (fwd_ok) {
        col = (scratch - r0) / h;
        return;
    }
    probe[j] = p[j] - h;
    if (fn(probe, scratch) && finite(scratch)) {
        col = (r0 - scratch) / h;
        return;
    }
    throw FitError("levenberg_marquardt: cannot differentiate parameter " + std::to_string(j) +
                   " (both finite-difference probes rejected)");
}

inline void numeric_jacobian(const ResidualFn& fn, const Eigen::VectorXd& p,
                             const Eigen::VectorXd& r0, bool central, double fd_floor,
                             Eigen::MatrixXd& J) {
    static constexpr double kSqrtEps = 1.4901161193847656e-08;  // eps^(1/2)
    static constexpr double kCbrtEps = 6.0554544523933395e-06;  // eps^(1/3)
    const double rel = central ? kCbrtEps : kSqrtEps;
    Eigen::VectorXd scratch(r0.size());
    Eigen::VectorXd col(r0.size());
    for (Eigen::Index j = 0; j < p.size(); ++j) {
        const double h = rel * std::abs(p[j]) + fd_floor;
        jacobian_column(fn, p, r0, j, h, central, scratch, col);
        J.col(j) = col;
    }
}

}  // namespace detail

inline LevmarResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd init,
                                        Eigen::Index n_residuals, const FitOptions& opts = {}) {
    const Eigen::Index n = init.size();
    const Eigen::Index m = n_residuals;
    if (n == 0) {
        throw DomainError("levenberg_marquardt: no parameters");
    }
    if (m <= n) {
        throw InsufficientDataError("levenberg_marquardt: need more residuals (" +
                                    std::to_string(m) + ") than parameters (" + std::to_string(n) +
                                    ")");
    }

    Eigen::VectorXd p = std::move(init);
    Eigen::VectorXd r(m);
    if (!fn(p, r) || !detail::finite(r)) {
        throw DomainError("levenberg_marquardt: initial parameters rejected by the model");
    }
    double cost = r.squaredNorm();

    Eigen::MatrixXd J(m, n);
    Eigen::VectorXd r_trial(m);
    double lambda = opts.lambda_init;
    bool converged = cost == 0.0;
    int iter = 0;

    while (!converged && iter < opts.max_iterations && lambda <= opts.lambda_max) {
        ++iter;
        detail::numeric_jacobian(fn, p, r, /*central=*/false, opts.fd_floor, J);
        const Eigen::MatrixXd jtj = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;

        // Inner loop: escalate damping until a step is accepted or the
        // damping budget is exhausted.
        const auto below_step_floor = [&p, &opts, n](const Eigen::VectorXd& delta) {
            for (Eigen::Index k = 0; k < n; ++k) {
                if (std::abs(delta[k]) > opts.step_tolerance * (std::abs(p[k]) + 1.0)) {
                    return false;
                }
            }
            return true;
        };
        bool accepted = false;
        while (lambda <= opts.lambda_max) {
            Eigen::MatrixXd damped = jtj;
            for (Eigen::Index k = 0; k < n; ++k) {
                damped(k, k) += lambda * std::max(jtj(k, k), 1e-30);
            }
            const Eigen::VectorXd delta = damped.ldlt().solve(-g);
            if (!detail::finite(delta)) {
                lambda *= 11.0;
                continue;
            }
            const Eigen::VectorXd p_trial = p + delta;
            if (fn(p_trial, r_trial) && detail::finite(r_trial) &&
                r_trial.squaredNorm() < cost) {
                const double new_cost = r_trial.squaredNorm();
                const double decrease = (cost - new_cost) / std::max(cost, 1e-300);
                const bool small_step = below_step_floor(delta);
                p = p_trial;
                r.swap(r_trial);
                cost = new_cost;
                lambda = std::max(lambda / 9.0, 1e-12);
                accepted = true;
                if (small_step || decrease < opts.cost_tolerance || cost == 0.0) {
                    converged = true;
                }
                break;
            }
            if (below_step_floor(delta)) {
                // The trial step is already below the parameter resolution
                // floor and still fails to improve: the iterate sits at a
                // minimum of the numeric model, so stop as converged rather
                // than escalating the damping until it stalls.
                converged = true;
                break;
            }
            lambda *= 11.0;
        }
        if (!accepted) {
            break;  // damping exhausted (or step floor reached) this round
        }
    }

    // Covariance from a central-difference Jacobian at the final point.
    detail::numeric_jacobian(fn, p, r, /*central=*/true, opts.fd_floor, J);
    const Eigen::MatrixXd jtj = J.transpose() * J;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jtj);
    if (eig.info() != Eigen::Success) {
        throw FitError("levenberg_marquardt: eigendecomposition of J^T J failed");
    }
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double ev_max = ev.maxCoeff();
    if (!(ev_max > 0.0) || ev.minCoeff() <= opts.rank_tolerance * ev_max) {
        Eigen::Index worst = 0;
        eig.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
        throw RankDeficientError(
            "levenberg_marquardt: Jacobian is rank deficient at the solution; parameter " +
            std::to_string(worst) + " (or a combination involving it) is unconstrained by the data");
    }
    const double s2 = cost / static_cast<double>(m - n);
    Eigen::MatrixXd cov = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() *
                          eig.eigenvectors().transpose() * s2;

    LevmarResult result;
    result.params = std::move(p);
    result.sigma = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    result.covariance = std::move(cov);
    result.cost = cost;
    result.iterations = iter;
    result.converged = converged;
    return result;
}

}  // namespace qrc
