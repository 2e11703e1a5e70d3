#pragma once

// Run configuration: one JSON document drives a whole experiment. Every block
// is optional and falls back to the module defaults; unknown keys are
// rejected and every error names the offending key path.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsm/analysis.hpp"
#include "tsm/error.hpp"
#include "tsm/harness.hpp"
#include "tsm/ident.hpp"
#include "tsm/mapping.hpp"
#include "tsm/plant.hpp"

namespace tsm {

// Configuration sweep for the analysis tables: measured slope product and
// the twin-fit residuals as slope noise.
inline PopulationSpec analysis_population() {
    PopulationSpec p;
    p.act_product = 0.983;
    p.noise_pull = 0.006;
    p.noise_release = 0.096;
    return p;
}

struct RunConfig {
    HysteresisParams plant{0.583, kDefaultBetaP, 1.688, kDefaultBetaR};
    SstlTwinSpec twin;
    IdentSpec ident;
    DatasetSpec dataset;
    std::uint64_t dataset_seed = 1;
    std::string model_kind = "mlp";  // mlp | linear
    MlpConfig mlp;
    std::vector<std::uint64_t> ablation_seeds{1, 2, 3, 4, 5};
    PopulationSpec population = analysis_population();  // analyze
    TrajectorySpec trajectory;
    ExperimentSetup experiment;  // act_plant and twin are copied from the blocks above
    double sim_noise = 0.0;      // [N] simulate
    Scheme scheme = Scheme::proposed;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
};

namespace detail {

using json = nlohmann::json;

class Block {
public:
    Block(const json* j, std::string path) : j_(j), path_(std::move(path)) {
        if (j_ && !j_->is_object()) throw ConfigError(where() + "expected an object");
    }

    const std::string& path() const { return path_; }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return j_ && j_->contains(key); }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        seen_.insert(key);
        try {
            out = j_->at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(key_path(key) + ": wrong type");
        }
    }

    Block child(const std::string& key) {
        if (!has(key)) return Block(nullptr, key_path(key));
        seen_.insert(key);
        return Block(&j_->at(key), key_path(key));
    }

    void check(const std::string& key, bool ok, const std::string& msg) const {
        if (!ok) throw ConfigError(key_path(key) + ": " + msg);
    }

    // reports the first key nobody asked for
    void finish() const {
        if (!j_) return;
        for (const auto& [k, v] : j_->items()) {
            if (!seen_.count(k)) throw ConfigError("unknown key '" + key_path(k) + "'");
        }
    }

private:
    std::string where() const { return path_.empty() ? "" : path_ + ": "; }

    const json* j_;
    std::string path_;
    std::set<std::string> seen_;
};

// Runs a module validator and re-labels its complaint with the block path.
template <class F>
void validated(const std::string& path, F&& f) {
    try {
        f();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline void read_trajectory(Block b, TrajectorySpec& t) {
    std::string kind = to_string(t.kind);
    b.get("kind", kind);
    if (kind == "trapezoid") t.kind = TrajectoryKind::trapezoid;
    else if (kind == "sinusoid") t.kind = TrajectoryKind::sinusoid;
    else if (kind == "multisine") t.kind = TrajectoryKind::multisine;
    else throw ConfigError(b.key_path("kind") + ": expected trapezoid, sinusoid or multisine");
    b.get("duration_s", t.duration_s);
    b.get("sample_rate_hz", t.sample_rate_hz);
    b.get("low_N", t.low);
    b.get("high_N", t.high);
    b.get("offset_N", t.offset);
    b.get("amplitude_N", t.amplitude);
    b.get("frequency_hz", t.frequency_hz);
    b.get("components", t.components);
    b.get("freq_min_hz", t.freq_min_hz);
    b.get("freq_max_hz", t.freq_max_hz);
    b.get("amp_min_N", t.amp_min);
    b.get("amp_max_N", t.amp_max);
    b.get("range_min_N", t.range_min);
    b.get("range_max_N", t.range_max);
    b.get("seed", t.seed);
    b.check("duration_s", t.duration_s > 0.0, "must be > 0");
    b.check("sample_rate_hz", t.sample_rate_hz > 0.0, "must be > 0");
    b.finish();
    validated(b.path(), [&] { validate(t); });
}

inline void read_plant(Block b, HysteresisParams& p) {
    const bool geometry = b.has("mu") || b.has("phi") || b.has("n_pass");
    const bool slopes = b.has("gamma_p") || b.has("gamma_r");
    if (geometry && slopes) throw ConfigError(b.key_path("gamma_p") + ": give either slopes or geometry (mu, phi)");
    b.get("beta_p", p.beta_p);
    b.get("beta_r", p.beta_r);
    if (geometry) {
        PlantGeometry g{1.0, 0.0, 1};
        b.get("mu", g.mu);
        b.get("phi", g.phi);
        b.get("n_pass", g.n_pass);
        b.check("mu", g.mu >= 0.0, "must be >= 0");
        b.check("phi", g.phi >= 0.0, "must be >= 0");
        b.check("n_pass", g.n_pass == 1 || g.n_pass == 2, "must be 1 or 2");
        const double bp = p.beta_p, br = p.beta_r;
        p = params_from_geometry(g, bp, br);
    } else {
        b.get("gamma_p", p.gamma_p);
        b.get("gamma_r", p.gamma_r);
    }
    b.check("gamma_p", p.gamma_p > 0.0 && p.gamma_p <= 1.0, "must lie in (0, 1]");
    b.check("gamma_r", p.gamma_r >= 1.0 && std::isfinite(p.gamma_r), "must be >= 1");
    b.check("beta_p", std::isfinite(p.beta_p), "must be finite");
    b.check("beta_r", std::isfinite(p.beta_r), "must be finite");
    b.finish();
}

inline void read_twin(Block b, SstlTwinSpec& t) {
    b.get("pull_a", t.pull.a);
    b.get("pull_b", t.pull.b);
    b.get("release_a", t.release.a);
    b.get("release_b", t.release.b);
    b.get("beta_p", t.beta_p);
    b.get("beta_r", t.beta_r);
    b.get("release_asymmetry", t.release_asymmetry);
    b.check("pull_a", t.pull.a > 0.0, "must be > 0");
    b.check("release_a", t.release.a > 0.0, "must be > 0");
    b.check("release_asymmetry", t.release_asymmetry > 0.0, "must be > 0");
    b.finish();
}

inline void read_ident(Block b, IdentSpec& s) {
    b.get("cutoff_hz", s.filter.cutoff_hz);
    b.get("filter_order", s.filter.order);
    b.get("delta_bl_N", s.delta_bl);
    b.get("min_prominence_N", s.min_prominence);
    b.get("corner_guard", s.corner_guard);
    b.get("inlier_threshold_N", s.ransac.inlier_threshold);
    b.get("ransac_iterations", s.ransac.iterations);
    b.get("min_inliers_fraction", s.ransac.min_inliers_fraction);
    b.get("ransac_seed", s.ransac.seed);
    b.check("cutoff_hz", s.filter.cutoff_hz > 0.0, "must be > 0");
    b.check("filter_order", s.filter.order >= 1 && s.filter.order <= 16, "must lie in [1, 16]");
    b.check("delta_bl_N", s.delta_bl > 0.0, "must be > 0");
    b.check("min_prominence_N", s.min_prominence > 0.0, "must be > 0");
    b.check("corner_guard", s.corner_guard >= 0.0, "must be >= 0");
    b.check("inlier_threshold_N", s.ransac.inlier_threshold > 0.0, "must be > 0");
    b.check("ransac_iterations", s.ransac.iterations >= 1, "must be >= 1");
    b.check("min_inliers_fraction", s.ransac.min_inliers_fraction > 0.0 && s.ransac.min_inliers_fraction <= 1.0,
            "must lie in (0, 1]");
    b.finish();
}

inline void read_population_fields(Block& b, PopulationSpec& p) {
    b.get("wrap_min", p.wrap_min);
    b.get("wrap_max", p.wrap_max);
    b.get("act_product", p.act_product);
    b.get("noise_pull", p.noise_pull);
    b.get("noise_release", p.noise_release);
    b.check("wrap_min", p.wrap_min >= 0.0, "must be >= 0");
    b.check("wrap_max", p.wrap_max >= p.wrap_min, "must be >= wrap_min");
    b.check("act_product", p.act_product > 0.0, "must be > 0");
    b.check("noise_pull", p.noise_pull >= 0.0, "must be >= 0");
    b.check("noise_release", p.noise_release >= 0.0, "must be >= 0");
}

inline void read_dataset(Block b, RunConfig& c) {
    auto& d = c.dataset;
    int n = static_cast<int>(d.n_per_location);
    b.get("n_per_location", n);
    b.check("n_per_location", n >= 2, "must be >= 2");
    d.n_per_location = static_cast<std::size_t>(n);
    b.get("locations", d.locations);
    b.check("locations", !d.locations.empty(), "must not be empty");
    b.get("train_fraction", d.train_fraction);
    b.check("train_fraction", d.train_fraction > 0.0 && d.train_fraction < 1.0, "must lie in (0, 1)");
    b.get("seed", c.dataset_seed);
    read_population_fields(b, d.population);
    b.finish();
}

inline void read_mapping(Block b, RunConfig& c) {
    auto& m = c.mlp;
    b.get("model", c.model_kind);
    b.check("model", c.model_kind == "mlp" || c.model_kind == "linear", "expected mlp or linear");
    b.get("embed_dim", m.embed_dim);
    b.get("n_blocks", m.n_blocks);
    b.get("skip_alpha", m.skip_alpha);
    b.get("lambda_inv", m.lambda_inv);
    b.get("learning_rate", m.learning_rate);
    b.get("weight_decay", m.weight_decay);
    b.get("epochs", m.epochs);
    b.get("batch_size", m.batch_size);
    b.get("init_seed", m.init_seed);
    b.get("cosine_schedule", m.cosine_schedule);
    b.get("ablation_seeds", c.ablation_seeds);
    b.check("embed_dim", m.embed_dim >= 1, "must be >= 1");
    b.check("n_blocks", m.n_blocks >= 1, "must be >= 1");
    b.check("skip_alpha", m.skip_alpha == 0 || m.skip_alpha == 1, "must be 0 or 1");
    b.check("lambda_inv", m.lambda_inv >= 0.0, "must be >= 0");
    b.check("learning_rate", m.learning_rate > 0.0, "must be > 0");
    b.check("weight_decay", m.weight_decay >= 0.0, "must be >= 0");
    b.check("epochs", m.epochs >= 1, "must be >= 1");
    b.check("batch_size", m.batch_size >= 0, "must be >= 0");
    b.check("ablation_seeds", c.ablation_seeds.size() >= 3, "need at least 3 seeds");
    b.finish();
}

inline void read_analysis(Block b, PopulationSpec& p) {
    int n = static_cast<int>(p.n);
    b.get("n_configs", n);
    b.check("n_configs", n >= 3, "must be >= 3");
    p.n = static_cast<std::size_t>(n);
    b.get("beta_p", p.beta_p);
    b.get("beta_r", p.beta_r);
    read_population_fields(b, p);
    b.finish();
}

inline void read_experiment(Block b, ExperimentSetup& e) {
    auto& pr = e.probe;
    b.get("probe_noise_N", pr.noise_sigma);
    b.get("beta_p", pr.beta_p);
    b.get("beta_r", pr.beta_r);
    b.get("lag_tau_s", e.lag_tau_s);
    b.get("window_s", e.window_s);
    b.get("position", e.position);
    b.check("probe_noise_N", pr.noise_sigma >= 0.0, "must be >= 0");
    b.check("lag_tau_s", e.lag_tau_s >= 0.0, "must be >= 0");
    b.check("window_s", e.window_s >= 0.0, "must be >= 0");
    b.check("position", !e.position.empty() && e.position.find(',') == std::string::npos,
            "must be a non-empty label without commas");
    if (b.has("sstl_probe")) read_trajectory(b.child("sstl_probe"), pr.probe);
    if (b.has("di_probe")) read_trajectory(b.child("di_probe"), e.di_probe);
    b.finish();
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text) {
    detail::json j;
    try {
        j = detail::json::parse(text, nullptr, true, true);  // comments allowed
    } catch (const detail::json::parse_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    RunConfig c;
    detail::Block root(&j, "");
    if (root.has("plant")) detail::read_plant(root.child("plant"), c.plant);
    if (root.has("twin")) detail::read_twin(root.child("twin"), c.twin);
    if (root.has("ident")) detail::read_ident(root.child("ident"), c.ident);
    if (root.has("dataset")) detail::read_dataset(root.child("dataset"), c);
    if (root.has("mapping")) detail::read_mapping(root.child("mapping"), c);
    if (root.has("analysis")) detail::read_analysis(root.child("analysis"), c.population);
    if (root.has("trajectory")) detail::read_trajectory(root.child("trajectory"), c.trajectory);
    if (root.has("experiment")) detail::read_experiment(root.child("experiment"), c.experiment);
    root.get("sim_noise_N", c.sim_noise);
    root.check("sim_noise_N", c.sim_noise >= 0.0, "must be >= 0");
    std::string scheme = to_string(c.scheme);
    root.get("scheme", scheme);
    try {
        c.scheme = scheme_from_string(scheme);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("scheme: ") + e.what());
    }
    root.get("seed", c.seed);
    root.get("output_dir", c.output_dir);
    root.check("output_dir", !c.output_dir.empty(), "must not be empty");
    root.finish();

    // the SSTL twin of the configured plant must itself be a valid plant
    detail::validated("twin", [&] { sstl_twin(c.plant, c.twin); });
    c.experiment.act_plant = c.plant;
    c.experiment.twin = c.twin;
    c.experiment.probe.ident = c.ident;
    c.population.twin = c.twin;
    c.dataset.population.twin = c.twin;
    if (const char* dir = std::getenv("TSM_OUTPUT_DIR"); dir && *dir) c.output_dir = dir;
    return c;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace tsm
