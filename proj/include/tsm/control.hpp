#pragma once

// Feedforward hysteresis compensator: inverts the propagation lines and
// drives through the dead zone after every reference reversal.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tsm/csv.hpp"
#include "tsm/ident.hpp"
#include "tsm/plant.hpp"

namespace tsm {

struct CompensatorConfig {
    double gamma_p_hat = 1.0;
    double beta_p = 0.0;  // [N]
    double gamma_r_hat = 1.0;
    double beta_r = 0.0;  // [N]

    double gamma(Direction d) const { return d == Direction::pull ? gamma_p_hat : gamma_r_hat; }
    double beta(Direction d) const { return d == Direction::pull ? beta_p : beta_r; }
    double line(Direction d, double t_in) const { return gamma(d) * t_in + beta(d); }
};

inline CompensatorConfig config_from(const HysteresisParams& p) { return {p.gamma_p, p.beta_p, p.gamma_r, p.beta_r}; }

inline void validate(const CompensatorConfig& c) {
    if (!(c.gamma_p_hat > 0.0 && c.gamma_p_hat <= kMaxIdentifiedGammaP)) {
        throw std::invalid_argument("compensator: gamma_p_hat must lie in (0, 1.05]");
    }
    if (!(c.gamma_r_hat >= kMinIdentifiedGammaR) || !std::isfinite(c.gamma_r_hat)) {
        throw std::invalid_argument("compensator: gamma_r_hat must be >= 0.95");
    }
    if (!std::isfinite(c.beta_p) || !std::isfinite(c.beta_r)) {
        throw std::invalid_argument("compensator: biases must be finite");
    }
}

inline double ff_command(double t_ref, Direction d, const CompensatorConfig& c) {
    if (!(c.gamma(d) > 0.0)) throw std::invalid_argument("ff_command: slope must be > 0");
    return (t_ref - c.beta(d)) / c.gamma(d);
}

// Output held at a reversal: the preceding direction's line at the reversal input.
inline double reversal_update(double t_in_rev, Direction preceding, const CompensatorConfig& c) {
    return c.line(preceding, t_in_rev);
}

struct Thresholds {
    double pull = 0.0;     // PB ends once t_in >= pull
    double release = 0.0;  // RB ends once t_in <= release
};

// Inputs at which the next direction's line meets the held output, for a
// reversal at t_in_rev. `pull` applies after a release run, `release` after a pull run.
inline Thresholds backlash_thresholds(double t_in_rev, const CompensatorConfig& c) {
    if (!(c.gamma_p_hat > 0.0 && c.gamma_r_hat > 0.0)) {
        throw std::invalid_argument("backlash_thresholds: slopes must be > 0");
    }
    return {(c.gamma_r_hat * t_in_rev + c.beta_r - c.beta_p) / c.gamma_p_hat,
            (c.gamma_p_hat * t_in_rev + c.beta_p - c.beta_r) / c.gamma_r_hat};
}

// The reference error at the reversal is added once more, so the command
// jumps across the dead zone instead of crawling through it.
inline double backlash_command(double t_ref, double t_out_rev, Direction d, const CompensatorConfig& c) {
    if (!(c.gamma(d) > 0.0)) throw std::invalid_argument("backlash_command: slope must be > 0");
    return (2.0 * t_ref - t_out_rev - c.beta(d)) / c.gamma(d);
}

inline constexpr double kZetaDeadband = 1e-6;  // [N] reference change treated as flat
inline constexpr double kCommandMin = 0.0;      // [N]
inline constexpr double kCommandMax = 60.0;     // [N]

struct CompensatorState {
    bool bl = false;
    int zeta_prev = 0;  // 0 until the reference first moves
    double t_in_rev = 0.0;
    double t_out_rev = 0.0;
    Direction dir = Direction::pull;
};

struct ControllerStep {
    CompensatorState state;
    double t_cmd = 0.0;
    bool reversal = false;  // a reversal was registered on this step
};

inline ControllerStep controller_step(const CompensatorState& s, double t_ref_k, double t_ref_km1, double t_in_k,
                                      const CompensatorConfig& c) {
    if (!std::isfinite(t_ref_k) || !std::isfinite(t_ref_km1) || !std::isfinite(t_in_k)) {
        throw std::invalid_argument("controller_step: non-finite input");
    }
    const double diff = t_ref_k - t_ref_km1;
    const int zeta = diff > kZetaDeadband ? +1 : (diff < -kZetaDeadband ? -1 : 0);

    ControllerStep out;
    out.state = s;
    auto& n = out.state;
    if (zeta != 0) {
        const Direction d = zeta > 0 ? Direction::pull : Direction::release;
        if (s.zeta_prev != 0 && zeta != s.zeta_prev) {
            n.t_in_rev = t_in_k;
            n.t_out_rev = reversal_update(t_in_k, s.dir, c);
            n.bl = true;
            out.reversal = true;
        }
        n.dir = d;
        n.zeta_prev = zeta;
    }
    if (n.bl) {
        const auto th = backlash_thresholds(n.t_in_rev, c);
        if ((n.dir == Direction::pull && t_in_k >= th.pull) || (n.dir == Direction::release && t_in_k <= th.release)) {
            n.bl = false;
        }
    }
    const double cmd = n.bl ? backlash_command(t_ref_k, n.t_out_rev, n.dir, c) : ff_command(t_ref_k, n.dir, c);
    out.t_cmd = std::clamp(cmd, kCommandMin, kCommandMax);
    return out;
}

// One closed-loop run, one row per sample.
struct LoopTrace {
    double dt = 0.002;
    std::vector<double> t_ref, t_cmd, t_in, t_out;
    std::vector<Phase> phase;
    std::vector<bool> bl;
    std::vector<bool> reversal;

    std::size_t size() const { return t_ref.size(); }
};

// Closed loop against the plant. Without a config the reference is sent
// straight to the actuator (no compensation). lag_tau_s = 0 is an ideal
// inner tension loop; the controller measures the actuator tension of the
// previous step either way.
inline LoopTrace run_closed_loop(const HysteresisParams& plant, const std::optional<CompensatorConfig>& cfg,
                                 const std::vector<double>& ref, double dt, double lag_tau_s = 0.0) {
    validate(plant);
    if (cfg) validate(*cfg);
    if (ref.empty()) throw std::invalid_argument("closed loop: empty reference");
    if (!(dt > 0.0)) throw std::invalid_argument("closed loop: dt must be > 0");

    LoopTrace tr;
    tr.dt = dt;
    const std::size_t n = ref.size();
    for (auto* v : {&tr.t_ref, &tr.t_cmd, &tr.t_in, &tr.t_out}) v->reserve(n);

    auto saturate = [](double v) { return std::clamp(v, kCommandMin, kCommandMax); };
    CompensatorState cs;
    double cmd = saturate(cfg ? ff_command(ref[0], Direction::pull, *cfg) : ref[0]);
    TrackingLag lag(lag_tau_s, dt);
    double actuator = lag.track(cmd);
    PlantState ps = initial_state(plant, actuator);
    for (std::size_t k = 0; k < n; ++k) {
        bool reversal = false;
        if (k > 0) {
            const double measured = actuator;
            if (cfg) {
                const auto step = controller_step(cs, ref[k], ref[k - 1], measured, *cfg);
                cs = step.state;
                cmd = step.t_cmd;
                reversal = step.reversal;
            } else {
                cmd = saturate(ref[k]);
            }
            actuator = lag.track(cmd);
        }
        const auto ps_next = plant_step(plant, ps, actuator);
        ps = ps_next.state;
        tr.t_ref.push_back(ref[k]);
        tr.t_cmd.push_back(cmd);
        tr.t_in.push_back(actuator);
        tr.t_out.push_back(ps_next.t_out);
        tr.phase.push_back(ps.phase);
        tr.bl.push_back(cs.bl);
        tr.reversal.push_back(reversal);
    }
    return tr;
}

inline constexpr const char* kLoopHeader = "time_s,t_ref_N,t_cmd_N,t_in_N,t_out_N,phase,bl_flag";

inline void write_loop_csv(std::ostream& os, const LoopTrace& tr) {
    os << kLoopHeader << '\n';
    for (std::size_t k = 0; k < tr.size(); ++k) {
        os << csv::fixed(static_cast<double>(k) * tr.dt, 3) << ',' << csv::fixed(tr.t_ref[k]) << ','
           << csv::fixed(tr.t_cmd[k]) << ',' << csv::fixed(tr.t_in[k]) << ',' << csv::fixed(tr.t_out[k]) << ','
           << to_string(tr.phase[k]) << ',' << (tr.bl[k] ? 1 : 0) << '\n';
    }
}

}  // namespace tsm
