#pragma once

// Inter-system statistics between actuation tendons and their self-sensing
// twins: squared-slope correlation, slope products and bias spread.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsm/csv.hpp"
#include "tsm/plant.hpp"

namespace tsm {

struct ParamPair {
    HysteresisParams act;
    HysteresisParams sstl;
    std::string config_id;
};

// Ideal double-pass twin (gamma_sstl = gamma_act^2) with the pulley friction
// folded into an extra release factor.
inline SstlTwinSpec identity_twin(double release_asymmetry = 0.92) {
    SstlTwinSpec t;
    t.pull = {1.0, 0.0};
    t.release = {1.0, 0.0};
    t.release_asymmetry = release_asymmetry;
    return t;
}

// Synthetic configuration sweep. Actuation slopes come from a friction wrap
// drawn uniformly; the release slope is scaled so gamma_p * gamma_r equals
// act_product. Twin slopes get independent Gaussian noise per direction.
struct PopulationSpec {
    std::size_t n = 40;
    double wrap_min = 0.47;
    double wrap_max = 0.633;
    double act_product = 1.0;
    double beta_p = -1.444;  // actuation biases [N]
    double beta_r = -1.043;
    SstlTwinSpec twin;
    double noise_pull = 0.0;
    double noise_release = 0.0;
};

inline void validate(const PopulationSpec& s) {
    if (s.n < 1) throw std::invalid_argument("population: n must be >= 1");
    if (!(s.wrap_min >= 0.0 && s.wrap_max >= s.wrap_min)) {
        throw std::invalid_argument("population: need 0 <= wrap_min <= wrap_max");
    }
    if (!(s.act_product > 0.0)) throw std::invalid_argument("population: act_product must be > 0");
    if (!(s.noise_pull >= 0.0 && s.noise_release >= 0.0)) {
        throw std::invalid_argument("population: noise must be >= 0");
    }
}

inline HysteresisParams actuation_from_wrap(double wrap, const PopulationSpec& s) {
    const double gp = std::exp(-wrap);
    return {gp, s.beta_p, s.act_product / gp, s.beta_r};
}

inline std::vector<ParamPair> sample_population(const PopulationSpec& spec, std::uint64_t seed,
                                                const std::string& label = "cfg") {
    validate(spec);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> wrap(spec.wrap_min, spec.wrap_max);
    std::normal_distribution<double> n01(0.0, 1.0);

    std::vector<ParamPair> out;
    out.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        ParamPair pair;
        pair.act = actuation_from_wrap(wrap(rng), spec);
        validate(pair.act);
        const auto clean = sstl_twin(pair.act, spec.twin);
        // redraw the rare noise sample that would break the slope invariants
        for (int attempt = 0;; ++attempt) {
            pair.sstl = clean;
            pair.sstl.gamma_p += spec.noise_pull * n01(rng);
            pair.sstl.gamma_r += spec.noise_release * n01(rng);
            if (pair.sstl.gamma_p > 0.0 && pair.sstl.gamma_p <= 1.0 && pair.sstl.gamma_r >= 1.0) break;
            if (attempt == 100) throw std::invalid_argument("population: noise too large for the slope ranges");
        }
        pair.config_id = label + std::to_string(i);
        out.push_back(std::move(pair));
    }
    return out;
}

struct IntersystemStats {
    double pearson_r = 0.0;
    double rmse_identity = 0.0;
    double fit_slope = 0.0;
    double fit_bias = 0.0;
    double rmse_fit = 0.0;
};

// x = (gamma_act)^2, y = gamma_sstl for the chosen direction.
inline IntersystemStats intersystem_stats(const std::vector<ParamPair>& pairs, Direction d) {
    const std::size_t n = pairs.size();
    if (n < 3) throw std::invalid_argument("intersystem_stats: need at least 3 pairs");
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = pairs[i].act.gamma(d);
        x[i] = g * g;
        y[i] = pairs[i].sstl.gamma(d);
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0, id2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
        id2 += (y[i] - x[i]) * (y[i] - x[i]);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw std::invalid_argument("intersystem_stats: zero variance");

    IntersystemStats st;
    st.pearson_r = sxy / std::sqrt(sxx * syy);
    st.rmse_identity = std::sqrt(id2 / n);
    st.fit_slope = sxy / sxx;
    st.fit_bias = my - st.fit_slope * mx;
    double r2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (st.fit_slope * x[i] + st.fit_bias);
        r2 += r * r;
    }
    st.rmse_fit = std::sqrt(r2 / n);
    return st;
}

struct FieldStats {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single entry
    double min = 0.0;
    double max = 0.0;
};

inline FieldStats field_stats(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("field_stats: empty list");
    FieldStats s;
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

struct ProductStats {
    FieldStats gamma_p, gamma_r, product, beta_p, beta_r;
};

inline ProductStats product_stats(const std::vector<HysteresisParams>& list) {
    if (list.empty()) throw std::invalid_argument("product_stats: empty list");
    std::vector<double> gp, gr, pr, bp, br;
    for (const auto& p : list) {
        gp.push_back(p.gamma_p);
        gr.push_back(p.gamma_r);
        pr.push_back(p.gamma_p * p.gamma_r);
        bp.push_back(p.beta_p);
        br.push_back(p.beta_r);
    }
    return {field_stats(gp), field_stats(gr), field_stats(pr), field_stats(bp), field_stats(br)};
}

inline constexpr const char* kIntersystemHeader = "direction,pearson_r,rmse_identity,fit_slope,fit_bias,rmse_fit";
inline constexpr const char* kProductHeader = "system,parameter,mean,std,min,max";

inline void write_intersystem_csv(std::ostream& os, const std::vector<ParamPair>& pairs) {
    os << kIntersystemHeader << '\n';
    for (Direction d : {Direction::pull, Direction::release}) {
        const auto s = intersystem_stats(pairs, d);
        os << (d == Direction::pull ? "pull" : "release") << ',' << csv::fixed(s.pearson_r) << ','
           << csv::fixed(s.rmse_identity) << ',' << csv::fixed(s.fit_slope) << ',' << csv::fixed(s.fit_bias)
           << ',' << csv::fixed(s.rmse_fit) << '\n';
    }
}

inline void write_product_csv(std::ostream& os, const std::vector<ParamPair>& pairs) {
    os << kProductHeader << '\n';
    std::vector<HysteresisParams> act, sstl;
    for (const auto& p : pairs) {
        act.push_back(p.act);
        sstl.push_back(p.sstl);
    }
    auto emit = [&](const char* system, const ProductStats& st) {
        const std::pair<const char*, const FieldStats*> rows[] = {{"gamma_p", &st.gamma_p},
                                                                  {"gamma_r", &st.gamma_r},
                                                                  {"product", &st.product},
                                                                  {"beta_p", &st.beta_p},
                                                                  {"beta_r", &st.beta_r}};
        for (const auto& [name, f] : rows) {
            os << system << ',' << name << ',' << csv::fixed(f->mean) << ',' << csv::fixed(f->std) << ','
               << csv::fixed(f->min) << ',' << csv::fixed(f->max) << '\n';
        }
    };
    emit("act", product_stats(act));
    emit("sstl", product_stats(sstl));
}

}  // namespace tsm
