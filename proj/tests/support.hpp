#pragma once

// Test-side signal generators and oracles. Kept independent of the harness
// so generator bugs cannot hide plant or ident bugs.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace testsup {

// rise 40% / hold 20% / fall 40%
inline std::vector<double> trapezoid(double lo, double hi, double seconds, double fs = 500.0) {
    const int n = static_cast<int>(std::lround(seconds * fs));
    std::vector<double> v(n);
    for (int k = 0; k < n; ++k) {
        const double u = static_cast<double>(k) / n;
        if (u < 0.4) v[k] = lo + (hi - lo) * u / 0.4;
        else if (u < 0.6) v[k] = hi;
        else v[k] = hi - (hi - lo) * (u - 0.6) / 0.4;
    }
    return v;
}

inline std::vector<double> triangle(double lo, double hi, int period, int periods) {
    std::vector<double> v;
    for (int k = 0; k < period * periods; ++k) {
        const double u = static_cast<double>(k % period) / period;
        v.push_back(lo + (hi - lo) * (u < 0.5 ? 2 * u : 2 - 2 * u));
    }
    return v;
}

inline std::vector<double> sine(double offset, double amp, double cycles_per_sample, int n, double phase = 0.0) {
    std::vector<double> v(n);
    for (int k = 0; k < n; ++k) v[k] = offset + amp * std::sin(2 * std::numbers::pi * cycles_per_sample * k + phase);
    return v;
}

// Generalised play operator: the output is pushed up by the pull line and
// down by the release line, otherwise it stays put. Equivalent to the
// four-phase plant whenever the release line lies above the pull line.
inline std::vector<double> play_operator(double gp, double bp, double gr, double br, const std::vector<double>& x) {
    std::vector<double> y(x.size());
    double prev = gp * x[0] + bp;
    for (std::size_t k = 0; k < x.size(); ++k) {
        prev = std::min(gr * x[k] + br, std::max(gp * x[k] + bp, prev));
        y[k] = prev;
    }
    return y;
}

}  // namespace testsup
