#pragma once

// Quasi-static tendon-sheath plant: capstan-type propagation slopes, the
// four-phase hysteresis operator, the double-pass loop twin and a noisy
// trace generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsm/csv.hpp"
#include "tsm/error.hpp"

namespace tsm {

enum class Direction { pull, release };

inline int sign_of(Direction d) { return d == Direction::pull ? +1 : -1; }

enum class Phase : std::uint8_t { PB, PP, RB, RP };

inline const char* to_string(Phase p) {
    switch (p) {
        case Phase::PB: return "PB";
        case Phase::PP: return "PP";
        case Phase::RB: return "RB";
        case Phase::RP: return "RP";
    }
    return "?";
}

inline bool is_backlash(Phase p) { return p == Phase::PB || p == Phase::RB; }

struct PlantGeometry {
    double mu = 0.0;   // friction coefficient
    double phi = 0.0;  // accumulated bending angle [rad]
    int n_pass = 1;    // 1 = actuation tendon, 2 = self-sensing loop
};

inline void validate(const PlantGeometry& g) {
    if (!(g.mu >= 0.0) || !std::isfinite(g.mu)) throw std::invalid_argument("geometry: mu must be >= 0");
    if (!(g.phi >= 0.0) || !std::isfinite(g.phi)) throw std::invalid_argument("geometry: phi must be >= 0");
    if (g.n_pass != 1 && g.n_pass != 2) throw std::invalid_argument("geometry: n_pass must be 1 or 2");
}

// Propagation lines T_out = gamma * T_in + beta, one per direction.
struct HysteresisParams {
    double gamma_p = 1.0;
    double beta_p = 0.0;
    double gamma_r = 1.0;
    double beta_r = 0.0;

    double gamma(Direction d) const { return d == Direction::pull ? gamma_p : gamma_r; }
    double beta(Direction d) const { return d == Direction::pull ? beta_p : beta_r; }
    double line(Direction d, double t_in) const { return gamma(d) * t_in + beta(d); }

    bool operator==(const HysteresisParams&) const = default;
};

inline void validate(const HysteresisParams& p) {
    if (!std::isfinite(p.beta_p) || !std::isfinite(p.beta_r)) {
        throw std::invalid_argument("params: biases must be finite");
    }
    if (!(p.gamma_p > 0.0 && p.gamma_p <= 1.0)) {
        throw std::invalid_argument("params: gamma_p must lie in (0, 1]");
    }
    if (!(p.gamma_r >= 1.0) || !std::isfinite(p.gamma_r)) {
        throw std::invalid_argument("params: gamma_r must be >= 1");
    }
}

inline double gamma_from_geometry(const PlantGeometry& g, Direction d) {
    validate(g);
    const double wrap = g.n_pass * g.mu * g.phi;
    return d == Direction::pull ? std::exp(-wrap) : std::exp(wrap);
}

// Biases are not a function of geometry; they are supplied as constants.
inline HysteresisParams params_from_geometry(const PlantGeometry& g, double beta_p, double beta_r) {
    return {gamma_from_geometry(g, Direction::pull), beta_p,
            gamma_from_geometry(g, Direction::release), beta_r};
}

// Geometry with mu = 1 so that phi carries the whole friction product.
inline PlantGeometry geometry_from_wrap(double mu_phi, int n_pass = 1) {
    return {1.0, mu_phi, n_pass};
}

struct PlantState {
    Phase phase = Phase::PP;
    double t_out_held = 0.0;  // last output; held constant while in backlash
    double t_in_rev = 0.0;    // input at the last direction reversal
    int dir_prev = +1;        // last nonzero input direction
    double t_in_prev = 0.0;
};

inline constexpr double kPlantDeadband = 1e-9;  // [N] per-step input change treated as flat

// The tendon cannot carry compression, so every output is floored at zero.
inline double floor_tension(double t) { return t > 0.0 ? t : 0.0; }

// Plant probing starts with a pull: the first sample sits on the pull line.
inline PlantState initial_state(const HysteresisParams& p, double t_in0) {
    if (!std::isfinite(t_in0) || t_in0 < 0.0) {
        throw std::invalid_argument("plant: initial input must be finite and >= 0");
    }
    PlantState s;
    s.phase = Phase::PP;
    s.dir_prev = +1;
    s.t_out_held = floor_tension(p.line(Direction::pull, t_in0));
    s.t_in_rev = t_in0;
    s.t_in_prev = t_in0;
    return s;
}

struct PlantStep {
    PlantState state;
    double t_out = 0.0;
};

// One sample of the hysteresis operator. A direction reversal enters backlash
// and holds the output; backlash ends when the new direction's propagation
// line reaches the held value.
inline PlantStep plant_step(const HysteresisParams& p, const PlantState& s, double t_in) {
    if (!std::isfinite(t_in)) throw std::invalid_argument("plant: non-finite input tension");
    if (t_in < 0.0) throw std::invalid_argument("plant: negative input tension");

    const double delta = t_in - s.t_in_prev;
    const int dir = delta > kPlantDeadband ? +1 : (delta < -kPlantDeadband ? -1 : 0);

    PlantState next = s;
    next.t_in_prev = t_in;
    if (dir != 0 && s.dir_prev != 0 && dir != s.dir_prev) {
        next.phase = dir > 0 ? Phase::PB : Phase::RB;
        next.t_in_rev = s.t_in_prev;
    }
    if (dir != 0) next.dir_prev = dir;

    if (next.phase == Phase::PB && p.line(Direction::pull, t_in) >= next.t_out_held) {
        next.phase = Phase::PP;
    } else if (next.phase == Phase::RB && p.line(Direction::release, t_in) <= next.t_out_held) {
        next.phase = Phase::RP;
    }

    double out = next.t_out_held;
    if (next.phase == Phase::PP) out = floor_tension(p.line(Direction::pull, t_in));
    if (next.phase == Phase::RP) out = floor_tension(p.line(Direction::release, t_in));
    next.t_out_held = out;
    return {next, out};
}

struct LinearFit {
    double a = 1.0;
    double b = 0.0;
    double operator()(double x) const { return a * x + b; }
};

// Maps actuation slopes to the double-pass loop: gamma_sstl = a * gamma_act^2 + b.
// Defaults are the empirical fits; {1, 0} reproduces the ideal squared relation.
struct SstlTwinSpec {
    LinearFit pull{0.735, 0.019};
    LinearFit release{1.718, -1.574};
    double beta_p = 0.033;
    double beta_r = 4.366;
    double release_asymmetry = 1.0;  // extra factor on the release slope (pulley friction)
};

inline HysteresisParams sstl_twin(const HysteresisParams& act, const SstlTwinSpec& spec = {}) {
    HysteresisParams out;
    out.gamma_p = spec.pull(act.gamma_p * act.gamma_p);
    out.gamma_r = spec.release(act.gamma_r * act.gamma_r) * spec.release_asymmetry;
    out.beta_p = spec.beta_p;
    out.beta_r = spec.beta_r;
    if (!(out.gamma_p > 0.0 && out.gamma_p <= 1.0) || !(out.gamma_r >= 1.0)) {
        throw std::invalid_argument("sstl_twin: fit coefficients give inconsistent slopes (gamma_p=" +
                                    std::to_string(out.gamma_p) +
                                    ", gamma_r=" + std::to_string(out.gamma_r) + ")");
    }
    return out;
}

struct TensionTrace {
    double dt = 0.002;
    std::vector<double> t_in;
    std::vector<double> t_out;

    std::size_t size() const { return t_in.size(); }
};

inline void validate(const TensionTrace& tr) {
    if (!(tr.dt > 0.0) || !std::isfinite(tr.dt)) throw std::invalid_argument("trace: dt must be > 0");
    if (tr.t_in.size() != tr.t_out.size()) throw std::invalid_argument("trace: channel length mismatch");
    for (std::size_t k = 0; k < tr.size(); ++k) {
        if (!std::isfinite(tr.t_in[k]) || !std::isfinite(tr.t_out[k]) || tr.t_in[k] < 0.0 ||
            tr.t_out[k] < 0.0) {
            throw std::invalid_argument("trace: sample " + std::to_string(k) +
                                        " is non-finite or negative");
        }
    }
}

struct PlantRun {
    TensionTrace trace;
    std::vector<Phase> phases;
};

// Noiseless replay of a profile with the plant's phase log.
inline PlantRun run_plant(const HysteresisParams& p, std::span<const double> profile, double dt) {
    if (profile.empty()) throw std::invalid_argument("plant: empty input profile");
    if (!(dt > 0.0)) throw std::invalid_argument("plant: dt must be > 0");
    PlantRun run;
    run.trace.dt = dt;
    run.trace.t_in.assign(profile.begin(), profile.end());
    run.trace.t_out.reserve(profile.size());
    run.phases.reserve(profile.size());

    PlantState s = initial_state(p, profile[0]);
    run.trace.t_out.push_back(s.t_out_held);
    run.phases.push_back(s.phase);
    for (std::size_t k = 1; k < profile.size(); ++k) {
        const auto step = plant_step(p, s, profile[k]);
        s = step.state;
        run.trace.t_out.push_back(step.t_out);
        run.phases.push_back(s.phase);
    }
    return run;
}

// Simulated sensor reading: additive Gaussian noise, floored at zero.
inline TensionTrace add_sensor_noise(TensionTrace tr, double noise_sigma, std::uint64_t seed) {
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
    if (noise_sigma == 0.0) return tr;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (std::size_t k = 0; k < tr.size(); ++k) {
        tr.t_in[k] = floor_tension(tr.t_in[k] + noise(rng));
        tr.t_out[k] = floor_tension(tr.t_out[k] + noise(rng));
    }
    return tr;
}

inline TensionTrace simulate_trace(const HysteresisParams& p, std::span<const double> profile, double dt,
                                   double noise_sigma, std::uint64_t seed) {
    for (double v : profile) {
        if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("plant: profile must be finite and >= 0");
    }
    return add_sensor_noise(run_plant(p, profile, dt).trace, noise_sigma, seed);
}

// First-order tracking of the commanded input tension. tau = 0 is ideal
// tracking (input equals the command at the same step).
class TrackingLag {
public:
    TrackingLag(double tau_s, double dt) : tau_(tau_s), dt_(dt) {
        if (!(tau_s >= 0.0) || !(dt > 0.0)) throw std::invalid_argument("lag: tau >= 0 and dt > 0 required");
    }

    double track(double command) {
        if (!primed_ || tau_ == 0.0) {
            value_ = command;
            primed_ = true;
        } else {
            value_ += dt_ / (tau_ + dt_) * (command - value_);
        }
        return value_;
    }

private:
    double tau_;
    double dt_;
    double value_ = 0.0;
    bool primed_ = false;
};

inline constexpr const char* kTraceHeader = "time_s,t_in_N,t_out_N";

inline void write_trace_csv(std::ostream& os, const TensionTrace& tr) {
    os << kTraceHeader << '\n';
    for (std::size_t k = 0; k < tr.size(); ++k) {
        os << csv::fixed(static_cast<double>(k) * tr.dt) << ',' << csv::fixed(tr.t_in[k]) << ','
           << csv::fixed(tr.t_out[k]) << '\n';
    }
}

// dt is recovered from the time column; single-row files keep `fallback_dt`.
inline TensionTrace read_trace_csv(std::istream& is, double fallback_dt = 0.002) {
    const auto rows = csv::read_numeric(is, kTraceHeader);
    if (rows.empty()) throw IoError("trace CSV has no samples");
    TensionTrace tr;
    tr.dt = rows.size() > 1 ? (rows.back()[0] - rows.front()[0]) / static_cast<double>(rows.size() - 1)
                            : fallback_dt;
    for (const auto& r : rows) {
        tr.t_in.push_back(r[1]);
        tr.t_out.push_back(r[2]);
    }
    try {
        validate(tr);
    } catch (const std::invalid_argument& e) {
        throw IoError(e.what());
    }
    return tr;
}

}  // namespace tsm
