#pragma once

// Time series container for scanned measurements plus the handful of
// order-statistics helpers the fit initializers rely on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrc/errors.hpp"

namespace qrc {

struct TraceMeta {
    std::string label;
    double center_frequency_hz = 0.0;
    double rbw_hz = 0.0;
    // "linear_power" for raw instrument units, "normalized_variance" after
    // dark subtraction and vacuum normalization.
    std::string units = "linear_power";
    std::optional<std::uint64_t> seed;
    std::string generator;
    std::vector<std::string> warnings;
};

// Sample times in seconds with one value per time. Power traces are
// nonnegative; normalized traces may dip below zero at the noise floor
// (flagged by normalize_trace).
struct Trace {
    std::vector<double> t;
    std::vector<double> v;
    TraceMeta meta;

    double duration() const { return t.empty() ? 0.0 : t.back() - t.front(); }
};

// Drops samples whose timestamp repeats the previous one (a common
// instrument artifact), keeping the first occurrence.
inline Trace deduplicate_times(const Trace& trace) {
    Trace out;
    out.meta = trace.meta;
    out.t.reserve(trace.t.size());
    out.v.reserve(trace.v.size());
    for (std::size_t i = 0; i < trace.t.size(); ++i) {
        if (i > 0 && trace.t[i] == out.t.back()) {
            continue;
        }
        out.t.push_back(trace.t[i]);
        out.v.push_back(trace.v[i]);
    }
    return out;
}

// Enforces the container invariants: equal lengths >= 2, strictly
// increasing times after deduplication, finite values, and nonnegative
// values for power traces.
inline void validate_trace(const Trace& trace, bool require_nonnegative = false) {
    if (trace.t.size() != trace.v.size()) {
        throw DomainError("trace: time and value arrays differ in length");
    }
    if (trace.t.size() < 2) {
        throw InsufficientDataError("trace: need at least 2 samples, got " +
                                    std::to_string(trace.t.size()));
    }
    for (std::size_t i = 0; i < trace.t.size(); ++i) {
        if (!std::isfinite(trace.t[i]) || !std::isfinite(trace.v[i])) {
            throw DomainError("trace: non-finite sample at row " + std::to_string(i));
        }
        if (i > 0 && !(trace.t[i] > trace.t[i - 1])) {
            throw DomainError("trace: times not strictly increasing at row " + std::to_string(i) +
                              " (deduplicate first if the scan has repeated timestamps)");
        }
        if (require_nonnegative && trace.v[i] < 0.0) {
            throw DomainError("trace: negative power at row " + std::to_string(i));
        }
    }
}

// Keeps samples with t in [t_lo, t_hi]. Used to cut a smooth sweep segment
// out of a longer record (e.g. to drop scan turnarounds).
inline Trace slice_trace(const Trace& trace, double t_lo, double t_hi) {
    if (!(t_lo < t_hi)) {
        throw DomainError("slice_trace: need t_lo < t_hi");
    }
    Trace out;
    out.meta = trace.meta;
    for (std::size_t i = 0; i < trace.t.size(); ++i) {
        if (trace.t[i] >= t_lo && trace.t[i] <= t_hi) {
            out.t.push_back(trace.t[i]);
            out.v.push_back(trace.v[i]);
        }
    }
    if (out.t.size() < 2) {
        throw InsufficientDataError("slice_trace: fewer than 2 samples in the selected window");
    }
    return out;
}

// Moving average with a window truncated at the ends, so edge samples are
// averaged over the part of the window that exists instead of over implicit
// zeros. Zero-padding would bend the smoothed trace toward zero at the
// boundaries and fabricate dips there.
inline std::vector<double> moving_average(std::span<const double> v, std::size_t window) {
    if (window < 1) {
        throw DomainError("moving_average: window must be >= 1");
    }
    const std::size_t n = v.size();
    if (window <= 1 || n == 0) {
        return std::vector<double>(v.begin(), v.end());
    }
    std::vector<double> cumsum(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        cumsum[i + 1] = cumsum[i] + v[i];
    }
    std::vector<double> out(n);
    const std::size_t half = window / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i > half ? i - half : 0;
        const std::size_t hi = std::min(n, i + window - half);
        out[i] = (cumsum[hi] - cumsum[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

// Linear-interpolation percentile, q in [0, 100].
inline double percentile(std::span<const double> v, double q) {
    if (v.empty()) {
        throw InsufficientDataError("percentile: empty input");
    }
    if (!(q >= 0.0 && q <= 100.0)) {
        throw DomainError("percentile: q must lie in [0, 100]");
    }
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) {
        return sorted.back();
    }
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

namespace detail {

// A maximal run of samples below a threshold: [start, end) with the index
// of the run's minimum. Noise right at the threshold splits one physical
// run into several; runs separated by gaps of at most merge_gap samples are
// therefore rejoined before the minima are located.
struct ThresholdRun {
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t min_index = 0;
};

inline std::vector<ThresholdRun> runs_below_threshold(std::span<const double> v, double threshold,
                                                      std::size_t merge_gap) {
    std::vector<ThresholdRun> runs;
    bool in_run = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= v.size(); ++i) {
        const bool below = i < v.size() && v[i] < threshold;
        if (below && !in_run) {
            if (!runs.empty() && i - runs.back().end <= merge_gap) {
                start = runs.back().start;
                runs.pop_back();
            } else {
                start = i;
            }
            in_run = true;
        } else if (!below && in_run) {
            runs.push_back({start, i, start});
            in_run = false;
        }
    }
    // Gap samples sit at or above the threshold, so they never win here and
    // the minimum of a rejoined run is still the true run minimum.
    for (ThresholdRun& run : runs) {
        for (std::size_t j = run.start + 1; j < run.end; ++j) {
            if (v[j] < v[run.min_index]) {
                run.min_index = j;
            }
        }
    }
    return runs;
}

}  // namespace detail

}  // namespace qrc
