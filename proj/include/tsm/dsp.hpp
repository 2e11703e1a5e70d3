#pragma once

// Zero-phase Butterworth low-pass, zig-zag extrema detection and RANSAC line
// fitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "tsm/error.hpp"

namespace tsm::dsp {

struct FilterSpec {
    double cutoff_hz = 5.0;
    int order = 2;  // per pass; the zero-phase response has twice this order
    double sample_rate_hz = 500.0;
};

inline void validate(const FilterSpec& f) {
    if (f.order < 1 || f.order > 16) throw std::invalid_argument("filter: order must be in [1, 16]");
    if (!(f.sample_rate_hz > 0.0)) throw std::invalid_argument("filter: sample rate must be > 0");
    if (!(f.cutoff_hz > 0.0 && f.cutoff_hz < 0.5 * f.sample_rate_hz)) {
        throw std::invalid_argument("filter: cutoff must lie in (0, sample_rate/2)");
    }
}

// Second-order section, a0 normalised to 1.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

// Bilinear transform of the analogue Butterworth prototype with the cutoff
// pre-warped, so |H| = 1/sqrt(2) exactly at cutoff_hz. Every section has unit
// DC gain.
inline std::vector<Biquad> butterworth_lowpass(const FilterSpec& f) {
    validate(f);
    const double k = std::tan(std::numbers::pi * f.cutoff_hz / f.sample_rate_hz);
    const double k2 = k * k;
    std::vector<Biquad> sections;
    for (int i = 1; i <= f.order / 2; ++i) {
        const double damping = 2.0 * std::sin(std::numbers::pi * (2.0 * i - 1.0) / (2.0 * f.order));
        const double norm = 1.0 / (1.0 + damping * k + k2);
        Biquad s;
        s.b0 = k2 * norm;
        s.b1 = 2.0 * s.b0;
        s.b2 = s.b0;
        s.a1 = 2.0 * (k2 - 1.0) * norm;
        s.a2 = (1.0 - damping * k + k2) * norm;
        sections.push_back(s);
    }
    if (f.order % 2 == 1) {
        Biquad s;
        s.b0 = k / (1.0 + k);
        s.b1 = s.b0;
        s.a1 = (k - 1.0) / (k + 1.0);
        sections.push_back(s);
    }
    return sections;
}

namespace detail {

// Transposed direct form II, started in the steady state of a constant input
// equal to x[0].
inline void filter_in_place(std::vector<double>& x, const std::vector<Biquad>& sections) {
    if (x.empty()) return;
    for (const auto& s : sections) {
        const double x0 = x.front();
        const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        double z2 = (s.b2 - s.a2 * gain) * x0;
        double z1 = (s.b1 + s.b2 - (s.a1 + s.a2) * gain) * x0;
        for (double& v : x) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
}

}  // namespace detail

inline std::size_t min_filter_length(const FilterSpec& f) { return static_cast<std::size_t>(3 * f.order); }

// Forward-backward filtering with odd reflection of 3*order samples at each end.
inline std::vector<double> zero_phase_lowpass(std::span<const double> signal, const FilterSpec& f) {
    const auto sections = butterworth_lowpass(f);
    const std::size_t n = signal.size();
    if (n < std::max<std::size_t>(min_filter_length(f), 2)) {
        throw std::invalid_argument("filter: signal too short (" + std::to_string(n) + " samples, need " +
                                    std::to_string(std::max<std::size_t>(min_filter_length(f), 2)) + ")");
    }
    const std::size_t pad = std::min(min_filter_length(f), n - 1);

    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
    ext.insert(ext.end(), signal.begin(), signal.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

    detail::filter_in_place(ext, sections);
    std::reverse(ext.begin(), ext.end());
    detail::filter_in_place(ext, sections);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

// Segment boundaries of a signal: index 0, the alternating maxima/minima whose
// swing from the previous turning point is at least `min_prominence`, and the
// last index. On a plateau the first sample of the plateau is reported.
inline std::vector<std::size_t> find_extrema(std::span<const double> x, double min_prominence) {
    if (x.empty()) throw std::invalid_argument("find_extrema: empty signal");
    if (!(min_prominence > 0.0)) throw std::invalid_argument("find_extrema: min_prominence must be > 0");
    std::vector<std::size_t> out{0};
    const std::size_t n = x.size();

    int trend = 0;
    std::size_t i_max = 0, i_min = 0, cand = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (trend == 0) {
            if (x[i] > x[i_max]) i_max = i;
            if (x[i] < x[i_min]) i_min = i;
            if (x[i_max] - x[i_min] >= min_prominence) {
                trend = i_max > i_min ? +1 : -1;
                cand = trend > 0 ? i_max : i_min;
            }
        } else if (trend > 0) {
            if (x[i] > x[cand]) {
                cand = i;
            } else if (x[cand] - x[i] >= min_prominence) {
                out.push_back(cand);
                trend = -1;
                cand = i;
            }
        } else {
            if (x[i] < x[cand]) {
                cand = i;
            } else if (x[i] - x[cand] >= min_prominence) {
                out.push_back(cand);
                trend = +1;
                cand = i;
            }
        }
    }
    if (out.back() != n - 1) out.push_back(n - 1);
    return out;
}

struct Line {
    double slope = 0.0;
    double intercept = 0.0;
    double operator()(double x) const { return slope * x + intercept; }
};

// Ordinary least squares of y on x; empty mask means all points.
inline Line least_squares_line(std::span<const double> x, std::span<const double> y,
                               const std::vector<bool>& mask = {}) {
    double n = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        n += 1;
        sx += x[i];
        sy += y[i];
    }
    if (n < 2) throw std::invalid_argument("least squares: need at least 2 points");
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("least squares: zero variance in x");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

struct RansacSpec {
    double inlier_threshold = 0.15;  // [N] vertical residual
    int iterations = 500;
    double min_inliers_fraction = 0.5;
    std::uint64_t seed = 7;
};

inline void validate(const RansacSpec& r) {
    if (!(r.inlier_threshold > 0.0)) throw std::invalid_argument("ransac: inlier_threshold must be > 0");
    if (r.iterations < 1) throw std::invalid_argument("ransac: iterations must be >= 1");
    if (!(r.min_inliers_fraction > 0.0 && r.min_inliers_fraction <= 1.0)) {
        throw std::invalid_argument("ransac: min_inliers_fraction must lie in (0, 1]");
    }
}

struct RansacFit {
    Line line;
    std::vector<bool> inliers;
    std::size_t inlier_count = 0;
};

// Best-consensus two-point hypothesis, refit by least squares on its inliers.
// Ties on inlier count go to the lower inlier RMS, then to the earlier draw.
inline RansacFit ransac_line(std::span<const double> x, std::span<const double> y, const RansacSpec& spec) {
    validate(spec);
    if (x.size() != y.size()) throw std::invalid_argument("ransac: x/y length mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw std::invalid_argument("ransac: need at least 2 points");

    std::mt19937_64 rng(spec.seed);
    std::size_t best_count = 0;
    double best_sse = std::numeric_limits<double>::infinity();
    Line best;
    for (int it = 0; it < spec.iterations; ++it) {
        const std::size_t i = rng() % n;
        std::size_t j = rng() % (n - 1);
        if (j >= i) ++j;
        if (x[i] == x[j]) continue;
        const double slope = (y[j] - y[i]) / (x[j] - x[i]);
        const Line h{slope, y[i] - slope * x[i]};
        std::size_t count = 0;
        double sse = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double r = y[k] - h(x[k]);
            if (std::abs(r) <= spec.inlier_threshold) {
                ++count;
                sse += r * r;
            }
        }
        // Compare mean squared residuals without dividing (count equal here).
        if (count > best_count || (count == best_count && count > 0 && sse < best_sse)) {
            best_count = count;
            best_sse = sse;
            best = h;
        }
    }

    const auto needed = static_cast<std::size_t>(std::ceil(spec.min_inliers_fraction * static_cast<double>(n)));
    if (best_count < std::max<std::size_t>(needed, 2)) {
        throw IdentificationError("ransac: consensus of " + std::to_string(best_count) + " of " +
                                  std::to_string(n) + " points is below the required fraction");
    }

    RansacFit fit;
    fit.inliers.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        fit.inliers[k] = std::abs(y[k] - best(x[k])) <= spec.inlier_threshold;
    }
    fit.inlier_count = best_count;
    try {
        fit.line = least_squares_line(x, y, fit.inliers);
    } catch (const std::invalid_argument& e) {
        throw IdentificationError(std::string("ransac: degenerate inlier set: ") + e.what());
    }
    return fit;
}

}  // namespace tsm::dsp
