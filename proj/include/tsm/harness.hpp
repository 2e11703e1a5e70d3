#pragma once

// Experiment runner: reference trajectories, SSTL probing and slope
// inference, the four compensation schemes and the tracking metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsm/control.hpp"
#include "tsm/csv.hpp"
#include "tsm/error.hpp"
#include "tsm/ident.hpp"
#include "tsm/mapping.hpp"
#include "tsm/plant.hpp"

namespace tsm {

enum class TrajectoryKind { trapezoid, sinusoid, multisine };

inline const char* to_string(TrajectoryKind k) {
    switch (k) {
        case TrajectoryKind::trapezoid: return "trapezoid";
        case TrajectoryKind::sinusoid: return "sinusoid";
        case TrajectoryKind::multisine: return "multisine";
    }
    return "?";
}

struct TrajectorySpec {
    TrajectoryKind kind = TrajectoryKind::sinusoid;
    double duration_s = 200.0;
    double sample_rate_hz = 500.0;
    // trapezoid: rise 40%, hold 20%, fall 40%
    double low = 5.0;    // [N]
    double high = 25.0;  // [N]
    // sinusoid
    double offset = 10.0;     // [N]
    double amplitude = 5.0;   // [N]
    double frequency_hz = 0.01;
    // multisine: seeded components, then an affine map onto [range_min, range_max]
    int components = 6;
    double freq_min_hz = 0.02;
    double freq_max_hz = 0.15;
    double amp_min = 5.0;  // [N]
    double amp_max = 30.0;
    double range_min = 1.0;  // [N]
    double range_max = 30.0;
    std::uint64_t seed = 1;

    double dt() const { return 1.0 / sample_rate_hz; }
    std::size_t samples() const { return static_cast<std::size_t>(std::lround(duration_s * sample_rate_hz)); }
};

inline void validate(const TrajectorySpec& s) {
    if (!(s.duration_s > 0.0)) throw std::invalid_argument("trajectory: duration_s must be > 0");
    if (!(s.sample_rate_hz > 0.0)) throw std::invalid_argument("trajectory: sample_rate_hz must be > 0");
    if (s.samples() < 2) throw std::invalid_argument("trajectory: fewer than 2 samples");
    switch (s.kind) {
        case TrajectoryKind::trapezoid:
            if (!(s.low > 0.0 && s.high > s.low)) throw std::invalid_argument("trajectory: need 0 < low < high");
            break;
        case TrajectoryKind::sinusoid:
            if (!(s.frequency_hz > 0.0) || !(s.amplitude >= 0.0)) {
                throw std::invalid_argument("trajectory: need frequency_hz > 0 and amplitude >= 0");
            }
            if (!(s.offset - s.amplitude > 0.0)) {
                throw std::invalid_argument("trajectory: sinusoid must stay above 0 N (offset > amplitude)");
            }
            break;
        case TrajectoryKind::multisine:
            if (s.components < 1) throw std::invalid_argument("trajectory: components must be >= 1");
            if (!(s.freq_min_hz > 0.0 && s.freq_max_hz >= s.freq_min_hz)) {
                throw std::invalid_argument("trajectory: need 0 < freq_min_hz <= freq_max_hz");
            }
            if (!(s.amp_min > 0.0 && s.amp_max >= s.amp_min)) {
                throw std::invalid_argument("trajectory: need 0 < amp_min <= amp_max");
            }
            if (!(s.range_min > 0.0 && s.range_max > s.range_min)) {
                throw std::invalid_argument("trajectory: need 0 < range_min < range_max");
            }
            break;
    }
}

inline std::vector<double> gen_trajectory(const TrajectorySpec& s) {
    validate(s);
    const std::size_t n = s.samples();
    const double dt = s.dt();
    std::vector<double> v(n);
    switch (s.kind) {
        case TrajectoryKind::trapezoid:
            for (std::size_t k = 0; k < n; ++k) {
                const double u = static_cast<double>(k) / static_cast<double>(n);
                if (u < 0.4) v[k] = s.low + (s.high - s.low) * u / 0.4;
                else if (u < 0.6) v[k] = s.high;
                else v[k] = s.high - (s.high - s.low) * (u - 0.6) / 0.4;
            }
            break;
        case TrajectoryKind::sinusoid:
            for (std::size_t k = 0; k < n; ++k) {
                v[k] = s.offset + s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency_hz * k * dt);
            }
            break;
        case TrajectoryKind::multisine: {
            std::mt19937_64 rng(s.seed);
            std::uniform_real_distribution<double> f(s.freq_min_hz, s.freq_max_hz), a(s.amp_min, s.amp_max),
                ph(0.0, 2.0 * std::numbers::pi);
            std::vector<double> fs, as, ps;
            for (int i = 0; i < s.components; ++i) {
                fs.push_back(f(rng));
                as.push_back(a(rng));
                ps.push_back(ph(rng));
            }
            for (std::size_t k = 0; k < n; ++k) {
                double sum = 0.0;
                for (int i = 0; i < s.components; ++i) {
                    sum += as[i] * std::sin(2.0 * std::numbers::pi * fs[i] * k * dt + ps[i]);
                }
                v[k] = sum;
            }
            const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
            const double vmin = *lo, span = *hi - *lo;
            if (!(span > 0.0)) throw std::invalid_argument("trajectory: multisine is flat");
            for (auto& x : v) x = s.range_min + (x - vmin) / span * (s.range_max - s.range_min);
            break;
        }
    }
    for (double x : v) {
        if (!(x > 0.0)) throw std::invalid_argument("trajectory: reference must stay above 0 N");
    }
    return v;
}

inline double metric_rmse(const std::vector<double>& ref, const std::vector<double>& out) {
    if (ref.empty() || ref.size() != out.size()) throw std::invalid_argument("rmse: need equal non-empty lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) s += (ref[i] - out[i]) * (ref[i] - out[i]);
    return std::sqrt(s / static_cast<double>(ref.size()));
}

inline constexpr double kMapeGuard = 0.5;  // [N] smallest reference accepted by MAPE

inline double metric_mape(const std::vector<double>& ref, const std::vector<double>& out) {
    if (ref.empty() || ref.size() != out.size()) throw std::invalid_argument("mape: need equal non-empty lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (!(ref[i] >= kMapeGuard)) throw std::invalid_argument("mape: reference below 0.5 N");
        s += std::abs(ref[i] - out[i]) / ref[i];
    }
    return 100.0 * s / static_cast<double>(ref.size());
}

// Population standard deviation of |ref - out| over the samples.
inline double metric_abs_error_std(const std::vector<double>& ref, const std::vector<double>& out) {
    if (ref.empty() || ref.size() != out.size()) throw std::invalid_argument("error std: need equal non-empty lengths");
    const double n = static_cast<double>(ref.size());
    double m = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) m += std::abs(ref[i] - out[i]) / n;
    double s = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) s += (std::abs(ref[i] - out[i]) - m) * (std::abs(ref[i] - out[i]) - m);
    return std::sqrt(s / n);
}

// Actuation biases loaded as calibrated constants (population means).
inline constexpr double kDefaultBetaP = -1.444;
inline constexpr double kDefaultBetaR = -1.043;

inline TrajectorySpec default_sstl_probe() {
    TrajectorySpec p;
    p.kind = TrajectoryKind::trapezoid;
    p.duration_s = 24.0;
    p.low = 0.5;
    p.high = 60.0;
    return p;
}

// One period over 12 s, spanning the actuation probing range.
inline TrajectorySpec default_di_probe() {
    TrajectorySpec p;
    p.kind = TrajectoryKind::sinusoid;
    p.duration_s = 12.0;
    p.offset = 22.5;
    p.amplitude = 17.5;
    p.frequency_hz = 1.0 / 12.0;
    return p;
}

struct ProbeSpec {
    TrajectorySpec probe = default_sstl_probe();
    IdentSpec ident;
    double noise_sigma = 0.05;  // [N] sensor noise on both probe channels
    double beta_p = kDefaultBetaP;
    double beta_r = kDefaultBetaR;
};

struct ProbeResult {
    HysteresisParams sstl;  // identified twin parameters
    Prediction mapped;
    CompensatorConfig config;
};

inline ProbeResult probe_and_infer(const HysteresisParams& sstl_plant, const MappingModel& model, const ProbeSpec& spec,
                                   std::uint64_t seed) {
    const auto ref = gen_trajectory(spec.probe);
    const auto trace = simulate_trace(sstl_plant, ref, spec.probe.dt(), spec.noise_sigma, seed);
    ProbeResult r;
    r.sstl = identify_params(trace, spec.ident);
    r.mapped = predict(model, r.sstl.gamma_p, r.sstl.gamma_r);
    r.config = {r.mapped.gamma_p, spec.beta_p, r.mapped.gamma_r, spec.beta_r};
    return r;
}

enum class Scheme { no_comp, no_bias, proposed, direct_ident };

inline const char* to_string(Scheme s) {
    switch (s) {
        case Scheme::no_comp: return "no_comp";
        case Scheme::no_bias: return "no_bias";
        case Scheme::proposed: return "proposed";
        case Scheme::direct_ident: return "direct_ident";
    }
    return "?";
}

inline Scheme scheme_from_string(const std::string& s) {
    for (Scheme v : {Scheme::no_comp, Scheme::no_bias, Scheme::proposed, Scheme::direct_ident}) {
        if (s == to_string(v)) return v;
    }
    throw std::invalid_argument("unknown scheme '" + s + "'");
}

struct ExperimentSetup {
    HysteresisParams act_plant{0.583, kDefaultBetaP, 1.688, kDefaultBetaR};
    SstlTwinSpec twin;  // the SSTL plant is sstl_twin(act_plant, twin)
    ProbeSpec probe;
    TrajectorySpec di_probe = default_di_probe();
    double lag_tau_s = 0.0;
    double window_s = 2.0;  // half-width of the reversal windows
    std::string position = "NP";
};

struct ExperimentReport {
    Scheme scheme = Scheme::no_comp;
    std::string trajectory;
    std::string position;
    std::optional<CompensatorConfig> config;
    double rmse = 0.0;
    double rmse_std = 0.0;
    double mape = 0.0;
    double rmse_reduction = 0.0;  // percent vs the paired no_comp run
    double rmse_near_reversal = 0.0;
    double rmse_away_from_reversal = 0.0;
    LoopTrace trace;
};

// Samples within window_s of a reference direction change (dead-banded like
// the controller, so sampled flats do not count).
inline std::vector<bool> reversal_mask(const std::vector<double>& ref, double dt, double window_s) {
    std::vector<bool> mask(ref.size(), false);
    const auto half = static_cast<long>(std::lround(window_s / dt));
    int prev = 0;
    for (std::size_t k = 1; k < ref.size(); ++k) {
        const double d = ref[k] - ref[k - 1];
        const int z = d > kZetaDeadband ? 1 : (d < -kZetaDeadband ? -1 : 0);
        if (z == 0) continue;
        if (prev != 0 && z != prev) {
            const long lo = std::max(0L, static_cast<long>(k) - half);
            const long hi = std::min(static_cast<long>(ref.size()) - 1, static_cast<long>(k) + half);
            for (long j = lo; j <= hi; ++j) mask[static_cast<std::size_t>(j)] = true;
        }
        prev = z;
    }
    return mask;
}

inline double masked_rmse(const LoopTrace& tr, const std::vector<bool>& mask, bool want) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        if (mask[k] != want) continue;
        s += (tr.t_ref[k] - tr.t_out[k]) * (tr.t_ref[k] - tr.t_out[k]);
        ++n;
    }
    return n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
}

inline std::optional<CompensatorConfig> scheme_config(Scheme scheme, const ExperimentSetup& setup,
                                                      const MappingModel* model, std::uint64_t seed) {
    switch (scheme) {
        case Scheme::no_comp: return std::nullopt;
        case Scheme::no_bias:
        case Scheme::proposed: {
            if (!model) throw std::invalid_argument("experiment: scheme needs a mapping model");
            const auto sstl = sstl_twin(setup.act_plant, setup.twin);
            auto cfg = probe_and_infer(sstl, *model, setup.probe, seed).config;
            if (scheme == Scheme::no_bias) cfg.beta_p = cfg.beta_r = 0.0;
            return cfg;
        }
        case Scheme::direct_ident: {
            const auto ref = gen_trajectory(setup.di_probe);
            // distinct noise stream from the SSTL probe of the same seed
            const auto trace = simulate_trace(setup.act_plant, ref, setup.di_probe.dt(), setup.probe.noise_sigma,
                                              seed ^ 0xd1d1d1d1ULL);
            return config_from(identify_params(trace, setup.probe.ident));
        }
    }
    return std::nullopt;
}

inline ExperimentReport run_experiment(Scheme scheme, const ExperimentSetup& setup, const MappingModel* model,
                                       const TrajectorySpec& trajectory, std::uint64_t seed) {
    validate(setup.act_plant);
    const auto ref = gen_trajectory(trajectory);
    const double dt = trajectory.dt();
    const auto mask = reversal_mask(ref, dt, setup.window_s);
    auto measure = [&](ExperimentReport& r) {
        r.trace = run_closed_loop(setup.act_plant, r.config, ref, dt, setup.lag_tau_s);
        r.rmse = metric_rmse(ref, r.trace.t_out);
        r.rmse_std = metric_abs_error_std(ref, r.trace.t_out);
        r.mape = metric_mape(ref, r.trace.t_out);
        r.rmse_near_reversal = masked_rmse(r.trace, mask, true);
        r.rmse_away_from_reversal = masked_rmse(r.trace, mask, false);
    };

    ExperimentReport r;
    r.scheme = scheme;
    r.trajectory = to_string(trajectory.kind);
    r.position = setup.position;
    r.config = scheme_config(scheme, setup, model, seed);
    measure(r);

    ExperimentReport base;
    measure(base);
    r.rmse_reduction = base.rmse > 0.0 ? 100.0 * (1.0 - r.rmse / base.rmse) : 0.0;
    return r;
}

// Default desk-scale suite: two sinusoid periods and a 100 s multisine.
inline std::vector<TrajectorySpec> default_trajectories(std::uint64_t seed) {
    TrajectorySpec sine;
    sine.kind = TrajectoryKind::sinusoid;
    TrajectorySpec ms;
    ms.kind = TrajectoryKind::multisine;
    ms.duration_s = 100.0;
    ms.seed = seed;
    return {sine, ms};
}

inline constexpr const char* kResultsHeader = "trajectory,scheme,position,rmse_N,rmse_std_N,mape_pct,rmse_red_pct";

inline void write_results_row(std::ostream& os, const ExperimentReport& r) {
    os << r.trajectory << ',' << to_string(r.scheme) << ',' << r.position << ',' << csv::fixed(r.rmse) << ','
       << csv::fixed(r.rmse_std) << ',' << csv::fixed(r.mape, 4) << ',' << csv::fixed(r.rmse_reduction, 4) << '\n';
}

inline constexpr const char* kReversalHeader = "trajectory,scheme,position,rmse_near_reversal_N,rmse_away_N";

inline void write_reversal_row(std::ostream& os, const ExperimentReport& r) {
    os << r.trajectory << ',' << to_string(r.scheme) << ',' << r.position << ',' << csv::fixed(r.rmse_near_reversal)
       << ',' << csv::fixed(r.rmse_away_from_reversal) << '\n';
}

}  // namespace tsm
