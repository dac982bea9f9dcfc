#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "qrc/levmar.hpp"

using namespace qrc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// y = a exp(b t) sampled without noise; the optimizer must land on the
// generating parameters to machine precision.
struct ExpProblem {
    std::vector<double> t;
    std::vector<double> y;

    explicit ExpProblem(double a = 2.0, double b = -1.3, std::size_t n = 20) {
        for (std::size_t i = 0; i < n; ++i) {
            const double ti = 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
            t.push_back(ti);
            y.push_back(a * std::exp(b * ti));
        }
    }

    ResidualFn fn() const {
        return [this](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
            for (Eigen::Index i = 0; i < r.size(); ++i) {
                r[i] = p[0] * std::exp(p[1] * t[static_cast<std::size_t>(i)]) -
                       y[static_cast<std::size_t>(i)];
            }
            return true;
        };
    }
};

}  // namespace

TEST_CASE("exact data is recovered to machine precision") {
    const ExpProblem prob;
    Eigen::VectorXd p0(2);
    p0 << 1.0, -0.5;
    const LevmarResult res = levenberg_marquardt(prob.fn(), p0, 20);
    REQUIRE(res.converged);
    CHECK_THAT(res.params[0], WithinRel(2.0, 1e-9));
    CHECK_THAT(res.params[1], WithinRel(-1.3, 1e-9));
    CHECK(res.cost < 1e-18);
    CHECK(res.iterations > 0);
    CHECK(res.sigma.size() == 2);
    CHECK(res.covariance.rows() == 2);
}

TEST_CASE("linear fit reproduces the closed-form least-squares covariance") {
    // t = {0, 1, 2}, y = {0, 1, 1}: intercept 1/6, slope 1/2, chi2 = 1/6,
    // covariance = chi2/(m-n) * (J^T J)^{-1} = [[5/36, -1/12], [-1/12, 1/12]].
    const std::vector<double> t{0.0, 1.0, 2.0};
    const std::vector<double> y{0.0, 1.0, 1.0};
    const auto fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (Eigen::Index i = 0; i < 3; ++i) {
            r[i] = p[0] + p[1] * t[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(i)];
        }
        return true;
    };
    Eigen::VectorXd p0(2);
    p0 << 0.0, 0.0;
    const LevmarResult res = levenberg_marquardt(fn, p0, 3);
    REQUIRE(res.converged);
    CHECK_THAT(res.params[0], WithinAbs(1.0 / 6.0, 1e-7));
    CHECK_THAT(res.params[1], WithinAbs(0.5, 1e-7));
    CHECK_THAT(res.cost, WithinRel(1.0 / 6.0, 1e-8));
    CHECK_THAT(res.covariance(0, 0), WithinRel(5.0 / 36.0, 1e-6));
    CHECK_THAT(res.covariance(1, 1), WithinRel(1.0 / 12.0, 1e-6));
    CHECK_THAT(res.covariance(0, 1), WithinRel(-1.0 / 12.0, 1e-6));
    CHECK_THAT(res.sigma[0], WithinRel(std::sqrt(5.0 / 36.0), 1e-6));
    CHECK_THAT(res.sigma[1], WithinRel(std::sqrt(1.0 / 12.0), 1e-6));
}

TEST_CASE("underdetermined problems are rejected up front") {
    const auto fn = [](const Eigen::VectorXd&, Eigen::VectorXd& r) {
        r.setZero();
        return true;
    };
    Eigen::VectorXd p0(2);
    p0 << 1.0, 1.0;
    CHECK_THROWS_AS(levenberg_marquardt(fn, p0, 2), InsufficientDataError);
    CHECK_THROWS_AS(levenberg_marquardt(fn, Eigen::VectorXd(), 5), DomainError);
}

TEST_CASE("initial point outside the model domain is a caller error") {
    const auto fn = [](const Eigen::VectorXd&, Eigen::VectorXd&) { return false; };
    Eigen::VectorXd p0(1);
    p0 << 1.0;
    CHECK_THROWS_AS(levenberg_marquardt(fn, p0, 5), DomainError);
}

TEST_CASE("a degenerate parameterization raises a rank error naming a parameter") {
    // Only the sum p0 + p1 enters the model, so neither is identifiable.
    const std::vector<double> t{0.0, 1.0, 2.0, 3.0};
    const auto fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (Eigen::Index i = 0; i < 4; ++i) {
            r[i] = (p[0] + p[1]) * t[static_cast<std::size_t>(i)] -
                   2.0 * t[static_cast<std::size_t>(i)];
        }
        return true;
    };
    Eigen::VectorXd p0(2);
    p0 << 0.5, 0.5;
    CHECK_THROWS_WITH(levenberg_marquardt(fn, p0, 4),
                      Catch::Matchers::ContainsSubstring("rank deficient"));
    CHECK_THROWS_AS(levenberg_marquardt(fn, p0, 4), RankDeficientError);
}

TEST_CASE("residual function rejected around the optimum raises a fit error") {
    // Accepts only the exact initial point: no derivative can be formed.
    Eigen::VectorXd p0(1);
    p0 << 1.0;
    const auto fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        if (p[0] != 1.0) {
            return false;
        }
        r.setConstant(1.0);
        return true;
    };
    CHECK_THROWS_AS(levenberg_marquardt(fn, p0, 5), FitError);
}

TEST_CASE("iteration budget of zero leaves the fit unconverged") {
    const ExpProblem prob;
    Eigen::VectorXd p0(2);
    p0 << 50.0, 2.0;
    FitOptions opts;
    opts.max_iterations = 0;
    const LevmarResult res = levenberg_marquardt(prob.fn(), p0, 20, opts);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 0);
    CHECK(res.params[0] == 50.0);
}
