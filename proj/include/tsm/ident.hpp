#pragma once

// Hysteresis-loop segmentation and per-direction propagation-line
// identification from a probing trace.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tsm/dsp.hpp"
#include "tsm/error.hpp"
#include "tsm/plant.hpp"

namespace tsm {

struct PhaseSegment {
    Phase label = Phase::PP;
    std::size_t begin = 0;  // half-open [begin, end)
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool operator==(const PhaseSegment&) const = default;
};

struct IdentSpec {
    dsp::FilterSpec filter;  // sample rate is taken from the trace
    double delta_bl = 0.3;   // [N]
    dsp::RansacSpec ransac;
    double min_prominence = 1.0;  // [N]
    // Propagation samples skipped next to a backlash range, in units of
    // 1/cutoff; the filtered corner is still bent there.
    double corner_guard = 1.5;
};

inline void validate(const IdentSpec& s) {
    if (!(s.delta_bl > 0.0)) throw std::invalid_argument("ident: delta_bl must be > 0");
    if (!(s.min_prominence > 0.0)) throw std::invalid_argument("ident: min_prominence must be > 0");
    if (!(s.corner_guard >= 0.0)) throw std::invalid_argument("ident: corner_guard must be >= 0");
    dsp::validate(s.ransac);
}

inline constexpr std::size_t kMinFitSegment = 5;

struct Segmentation {
    std::vector<double> f_in;   // filtered input
    std::vector<double> f_out;  // filtered output
    std::vector<PhaseSegment> segments;
};

namespace detail {

inline std::vector<double> filtered_channel(std::span<const double> x, const IdentSpec& spec, double dt) {
    dsp::FilterSpec f = spec.filter;
    f.sample_rate_hz = 1.0 / dt;
    try {
        return dsp::zero_phase_lowpass(x, f);
    } catch (const std::invalid_argument& e) {
        throw IdentificationError(std::string("segmentation: ") + e.what());
    }
}

}  // namespace detail

// Splits the loop at the extrema of the filtered input. Each monotone segment
// that starts at a reversal opens with a backlash range (output within
// delta_bl of its value at the reversal) followed by propagation.
//
// The first segment does not start at a reversal. It is taken as backlash only
// when the output is still flat (within delta_bl/4) halfway through the
// candidate range; a segment that starts in propagation moves linearly and is
// already delta_bl/2 away at that point.
inline Segmentation segment_filtered(const TensionTrace& trace, const IdentSpec& spec) {
    validate(spec);
    validate(trace);
    Segmentation seg;
    seg.f_in = detail::filtered_channel(trace.t_in, spec, trace.dt);
    seg.f_out = detail::filtered_channel(trace.t_out, spec, trace.dt);
    const auto& fin = seg.f_in;
    const auto& fout = seg.f_out;
    const std::size_t n = fin.size();

    const auto bounds = dsp::find_extrema(fin, spec.min_prominence);
    bool usable = false;
    for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
        const std::size_t b = bounds[s];
        const std::size_t e = (s + 2 == bounds.size()) ? n : bounds[s + 1];
        const double swing = fin[bounds[s + 1]] - fin[b];
        if (swing == 0.0 || e <= b) continue;
        const bool pull = swing > 0.0;
        if (e - b > 4) usable = true;

        std::size_t bl_end = b;
        while (bl_end < e && std::abs(fout[bl_end] - fout[b]) <= spec.delta_bl) ++bl_end;
        if (s == 0 && bl_end > b) {
            const std::size_t mid = b + (bl_end - b) / 2;
            if (std::abs(fout[mid] - fout[b]) > 0.25 * spec.delta_bl) bl_end = b;
        }
        if (bl_end > b) seg.segments.push_back({pull ? Phase::PB : Phase::RB, b, bl_end});
        if (e > bl_end) seg.segments.push_back({pull ? Phase::PP : Phase::RP, bl_end, e});
    }
    if (!usable) {
        throw IdentificationError("segmentation: no monotone segment longer than 4 samples");
    }
    return seg;
}

inline std::vector<PhaseSegment> segment_loop(const TensionTrace& trace, const IdentSpec& spec) {
    return segment_filtered(trace, spec).segments;
}

inline constexpr double kMaxIdentifiedGammaP = 1.05;
inline constexpr double kMinIdentifiedGammaR = 0.95;

// Pools the filtered samples of every propagation segment per direction and
// fits one line per direction. Each end of a segment that touches a backlash
// range loses corner_guard/cutoff seconds (at most a third of the segment). Slopes inside the tolerance band around the
// physical limits are clamped onto them; slopes outside it mean the loop was
// mislabelled.
inline HysteresisParams identify_params(const TensionTrace& trace, const IdentSpec& spec) {
    const auto seg = segment_filtered(trace, spec);
    const auto guard = static_cast<std::size_t>(
        std::ceil(spec.corner_guard / (spec.filter.cutoff_hz * trace.dt) - 1e-9));

    auto fit_direction = [&](Phase label) {
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < seg.segments.size(); ++i) {
            const auto& s = seg.segments[i];
            if (s.label != label || s.size() < kMinFitSegment) continue;
            const std::size_t g = std::min(guard, s.size() / 3);
            std::size_t b = s.begin, e = s.end;
            if (i > 0 && is_backlash(seg.segments[i - 1].label)) b += g;
            if (i + 1 < seg.segments.size() && is_backlash(seg.segments[i + 1].label)) e -= g;
            xs.insert(xs.end(), seg.f_in.begin() + static_cast<std::ptrdiff_t>(b),
                      seg.f_in.begin() + static_cast<std::ptrdiff_t>(e));
            ys.insert(ys.end(), seg.f_out.begin() + static_cast<std::ptrdiff_t>(b),
                      seg.f_out.begin() + static_cast<std::ptrdiff_t>(e));
        }
        if (xs.size() < 2) {
            throw IdentificationError(std::string("identification: no usable ") + to_string(label) +
                                      " propagation samples");
        }
        return dsp::ransac_line(xs, ys, spec.ransac).line;
    };

    const auto pull = fit_direction(Phase::PP);
    const auto release = fit_direction(Phase::RP);
    if (!(pull.slope > 0.0 && pull.slope <= kMaxIdentifiedGammaP)) {
        throw IdentificationError("identification: pull slope " + std::to_string(pull.slope) +
                                  " outside (0, 1.05]; segmentation is likely mislabelled");
    }
    if (!(release.slope >= kMinIdentifiedGammaR) || !std::isfinite(release.slope)) {
        throw IdentificationError("identification: release slope " + std::to_string(release.slope) +
                                  " below 0.95; segmentation is likely mislabelled");
    }
    HysteresisParams p;
    p.gamma_p = std::min(pull.slope, 1.0);
    p.beta_p = pull.intercept;
    p.gamma_r = std::max(release.slope, 1.0);
    p.beta_r = release.intercept;
    return p;
}

inline constexpr const char* kParamsHeader = "gamma_p,beta_p,gamma_r,beta_r";

inline std::string params_row(const HysteresisParams& p) {
    return csv::fixed(p.gamma_p) + ',' + csv::fixed(p.beta_p) + ',' + csv::fixed(p.gamma_r) + ',' +
           csv::fixed(p.beta_r);
}

}  // namespace tsm
