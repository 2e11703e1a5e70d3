#pragma once

// Slope mapping from the self-sensing loop to the actuation tendon: paired
// dataset, linear baseline, plain/skip MLP with an inverse-consistency
// penalty, and the variant ablation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tsm/analysis.hpp"
#include "tsm/csv.hpp"
#include "tsm/error.hpp"
#include "tsm/ident.hpp"

namespace tsm {

struct DatasetRow {
    double gp_sstl = 0.0;
    double gr_sstl = 0.0;
    double gp_act = 0.0;
    double gr_act = 0.0;
    int stratum = 0;  // constraint location index
};

struct MappingDataset {
    std::vector<DatasetRow> rows;
    std::uint64_t split_seed = 1;
    double train_fraction = 0.75;
};

struct DatasetSpec {
    std::size_t n_per_location = 50;
    std::vector<std::string> locations{"NP", "CP", "ND"};
    PopulationSpec population;
    double train_fraction = 0.75;

    DatasetSpec() {
        population.act_product = 0.983;
        population.noise_pull = 0.006;
        population.noise_release = 0.096;
    }
};

inline void validate_row(const DatasetRow& r) {
    if (!(r.gp_sstl > 0.0 && r.gp_sstl <= 1.0) || !(r.gp_act > 0.0 && r.gp_act <= 1.0) ||
        !(r.gr_sstl >= 1.0) || !(r.gr_act >= 1.0) || !std::isfinite(r.gr_sstl) || !std::isfinite(r.gr_act)) {
        throw std::invalid_argument("dataset: row violates the slope ranges");
    }
}

inline void validate(const MappingDataset& ds) {
    if (!(ds.train_fraction > 0.0 && ds.train_fraction < 1.0)) {
        throw std::invalid_argument("dataset: train_fraction must lie in (0, 1)");
    }
    for (const auto& r : ds.rows) validate_row(r);
}

inline MappingDataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.n_per_location < 2) throw std::invalid_argument("dataset: n_per_location must be >= 2");
    if (spec.locations.empty()) throw std::invalid_argument("dataset: need at least one location");
    MappingDataset ds;
    ds.split_seed = seed;
    ds.train_fraction = spec.train_fraction;
    std::mt19937_64 master(seed);
    PopulationSpec pop = spec.population;
    pop.n = spec.n_per_location;
    for (std::size_t l = 0; l < spec.locations.size(); ++l) {
        for (const auto& p : sample_population(pop, master(), spec.locations[l])) {
            ds.rows.push_back({p.sstl.gamma_p, p.sstl.gamma_r, p.act.gamma_p, p.act.gamma_r, static_cast<int>(l)});
        }
    }
    validate(ds);
    return ds;
}

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Stratified by location: each stratum contributes round(n * fraction) rows
// to training and keeps at least one for testing.
inline Split split_dataset(const MappingDataset& ds) {
    validate(ds);
    std::vector<int> strata;
    for (const auto& r : ds.rows) strata.push_back(r.stratum);
    std::sort(strata.begin(), strata.end());
    strata.erase(std::unique(strata.begin(), strata.end()), strata.end());

    std::mt19937_64 rng(ds.split_seed);
    Split sp;
    for (int s : strata) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.rows.size(); ++i) {
            if (ds.rows[i].stratum == s) idx.push_back(i);
        }
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
        auto n_train = static_cast<std::size_t>(std::lround(ds.train_fraction * static_cast<double>(idx.size())));
        if (idx.size() > 1) n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        sp.train.insert(sp.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        sp.test.insert(sp.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    std::sort(sp.train.begin(), sp.train.end());
    std::sort(sp.test.begin(), sp.test.end());
    return sp;
}

inline MappingDataset subset(const MappingDataset& ds, const std::vector<std::size_t>& idx) {
    MappingDataset out;
    out.split_seed = ds.split_seed;
    out.train_fraction = ds.train_fraction;
    for (auto i : idx) out.rows.push_back(ds.rows.at(i));
    return out;
}

inline constexpr const char* kDatasetHeader = "gp_sstl,gr_sstl,gp_act,gr_act";

inline void write_dataset_csv(std::ostream& os, const MappingDataset& ds) {
    os << kDatasetHeader << '\n';
    for (const auto& r : ds.rows) {
        os << csv::fixed(r.gp_sstl) << ',' << csv::fixed(r.gr_sstl) << ',' << csv::fixed(r.gp_act) << ','
           << csv::fixed(r.gr_act) << '\n';
    }
}

// Locations are not part of the file, so a loaded dataset is one stratum.
inline MappingDataset read_dataset_csv(std::istream& is, std::uint64_t split_seed, double train_fraction) {
    MappingDataset ds;
    ds.split_seed = split_seed;
    ds.train_fraction = train_fraction;
    for (const auto& r : csv::read_numeric(is, kDatasetHeader)) ds.rows.push_back({r[0], r[1], r[2], r[3], 0});
    try {
        validate(ds);
    } catch (const std::invalid_argument& e) {
        throw IoError(e.what());
    }
    return ds;
}

struct MlpConfig {
    int embed_dim = 128;
    int n_blocks = 2;
    int skip_alpha = 1;
    double lambda_inv = 2e-3;
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 2000;
    int batch_size = 0;  // 0 = full batch
    std::uint64_t init_seed = 1;
    // Cosine decay of the learning rate from learning_rate to 0 over the run.
    // With a constant rate Adam's late updates kick the loss up tenfold.
    bool cosine_schedule = true;
};

inline void validate(const MlpConfig& c) {
    if (c.embed_dim < 1) throw std::invalid_argument("mlp: embed_dim must be >= 1");
    if (c.n_blocks < 1) throw std::invalid_argument("mlp: n_blocks must be >= 1");
    if (c.skip_alpha != 0 && c.skip_alpha != 1) throw std::invalid_argument("mlp: skip_alpha must be 0 or 1");
    if (!(c.lambda_inv >= 0.0)) throw std::invalid_argument("mlp: lambda_inv must be >= 0");
    if (!(c.learning_rate > 0.0)) throw std::invalid_argument("mlp: learning_rate must be > 0");
    if (!(c.weight_decay >= 0.0)) throw std::invalid_argument("mlp: weight_decay must be >= 0");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
        throw std::invalid_argument("mlp: adam betas must lie in [0, 1)");
    }
    if (!(c.adam_eps > 0.0)) throw std::invalid_argument("mlp: adam_eps must be > 0");
    if (c.epochs < 1) throw std::invalid_argument("mlp: epochs must be >= 1");
    if (c.batch_size < 0) throw std::invalid_argument("mlp: batch_size must be >= 0");
}

struct LossRecord {
    double total = 0.0;
    double mse = 0.0;
    double inv = 0.0;  // mean (gp * gr - 1)^2, before the lambda weight
};

struct Dense {
    Eigen::MatrixXd w;
    Eigen::VectorXd b;
};

enum class ModelKind { linear, mlp };

struct MappingModel {
    ModelKind kind = ModelKind::linear;
    MlpConfig config;  // meaningful for mlp only
    // linear: layers[0] is the 2x2 map on raw inputs.
    // mlp: embed, then two layers per block, then the head; inputs standardised.
    std::vector<Dense> layers;
    Eigen::Vector2d input_mean = Eigen::Vector2d::Zero();
    Eigen::Vector2d input_std = Eigen::Vector2d::Ones();
    Eigen::Vector2d input_min = Eigen::Vector2d::Zero();
    Eigen::Vector2d input_max = Eigen::Vector2d::Zero();
    std::vector<LossRecord> history;
};

namespace detail {

inline Eigen::MatrixXd inputs_of(const std::vector<DatasetRow>& rows) {
    Eigen::MatrixXd x(2, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        x(0, static_cast<Eigen::Index>(i)) = rows[i].gp_sstl;
        x(1, static_cast<Eigen::Index>(i)) = rows[i].gr_sstl;
    }
    return x;
}

inline Eigen::MatrixXd targets_of(const std::vector<DatasetRow>& rows) {
    Eigen::MatrixXd y(2, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        y(0, static_cast<Eigen::Index>(i)) = rows[i].gp_act;
        y(1, static_cast<Eigen::Index>(i)) = rows[i].gr_act;
    }
    return y;
}

inline void set_hull(MappingModel& m, const Eigen::MatrixXd& x) {
    m.input_min = x.rowwise().minCoeff();
    m.input_max = x.rowwise().maxCoeff();
}

// In-place tanh through the vectorised exp; Eigen evaluates tanh on doubles
// one element at a time, which dominated training time.
inline void tanh_inplace(Eigen::MatrixXd& a) { a.array() = 1.0 - 2.0 / ((2.0 * a.array()).exp() + 1.0); }

// Activations kept for backpropagation. Buffers are reused across epochs:
// 128x128 temporaries are large enough to be mmap'd on every allocation.
struct Tape {
    Eigen::MatrixXd x;                // standardised input
    std::vector<Eigen::MatrixXd> h;   // h[0] embedding, h[k+1] after block k
    std::vector<Eigen::MatrixXd> u;   // inner tanh of each block
    Eigen::MatrixXd y;
};

inline void forward(const MappingModel& m, const Eigen::MatrixXd& raw, Tape& t) {
    const int nb = m.config.n_blocks;
    t.h.resize(static_cast<std::size_t>(nb) + 1);
    t.u.resize(static_cast<std::size_t>(nb));
    t.x = (raw.colwise() - m.input_mean).array().colwise() / m.input_std.array();
    const auto& emb = m.layers[0];
    t.h[0].noalias() = emb.w * t.x;
    t.h[0].colwise() += emb.b;
    const double alpha = m.config.skip_alpha;
    for (int k = 0; k < nb; ++k) {
        const auto& l1 = m.layers[1 + 2 * k];
        const auto& l2 = m.layers[2 + 2 * k];
        const auto& h = t.h[k];
        auto& u = t.u[k];
        auto& out = t.h[k + 1];
        u.noalias() = l1.w * h;
        u.colwise() += l1.b;
        tanh_inplace(u);
        out.noalias() = l2.w * u;
        out.colwise() += l2.b;
        if (alpha != 0.0) out += alpha * h;
        tanh_inplace(out);
    }
    const auto& head = m.layers.back();
    t.y.noalias() = head.w * t.h[nb];
    t.y.colwise() += head.b;
}

inline Tape forward(const MappingModel& m, const Eigen::MatrixXd& raw) {
    Tape t;
    forward(m, raw, t);
    return t;
}

inline LossRecord loss_of(const Eigen::MatrixXd& y, const Eigen::MatrixXd& target, double lambda) {
    const double n = static_cast<double>(y.cols());
    LossRecord r;
    r.mse = (y - target).colwise().squaredNorm().sum() / n;
    r.inv = (y.row(0).array() * y.row(1).array() - 1.0).square().sum() / n;
    r.total = r.mse + lambda * r.inv;
    return r;
}

struct Scratch {
    Eigen::MatrixXd dy, dh, da1, da2;
};

// Gradients of the loss with respect to every layer, written into `g`
// (resized to the layer shapes on first use).
inline void backward(const MappingModel& m, const Tape& t, const Eigen::MatrixXd& target, std::vector<Dense>& g,
                     Scratch& s) {
    const double n = static_cast<double>(t.y.cols());
    const double lambda = m.config.lambda_inv;
    const double alpha = m.config.skip_alpha;
    g.resize(m.layers.size());

    s.dy = 2.0 / n * (t.y - target);
    if (lambda != 0.0) {
        const Eigen::ArrayXXd prod = (t.y.row(0).array() * t.y.row(1).array() - 1.0);
        s.dy.row(0).array() += 2.0 * lambda / n * prod * t.y.row(1).array();
        s.dy.row(1).array() += 2.0 * lambda / n * prod * t.y.row(0).array();
    }

    const auto& head = m.layers.back();
    g.back().w.noalias() = s.dy * t.h.back().transpose();
    g.back().b = s.dy.rowwise().sum();
    s.dh.noalias() = head.w.transpose() * s.dy;

    for (int k = m.config.n_blocks - 1; k >= 0; --k) {
        const auto& l1 = m.layers[1 + 2 * k];
        const auto& l2 = m.layers[2 + 2 * k];
        const auto& h_out = t.h[k + 1];
        const auto& h_in = t.h[k];
        const auto& u = t.u[k];
        s.da2 = (s.dh.array() * (1.0 - h_out.array().square())).matrix();
        g[2 + 2 * k].w.noalias() = s.da2 * u.transpose();
        g[2 + 2 * k].b = s.da2.rowwise().sum();
        s.da1.noalias() = l2.w.transpose() * s.da2;
        s.da1.array() *= 1.0 - u.array().square();
        g[1 + 2 * k].w.noalias() = s.da1 * h_in.transpose();
        g[1 + 2 * k].b = s.da1.rowwise().sum();
        s.dh.noalias() = l1.w.transpose() * s.da1;
        if (alpha != 0.0) s.dh += alpha * s.da2;
    }
    g[0].w.noalias() = s.dh * t.x.transpose();
    g[0].b = s.dh.rowwise().sum();
}

inline std::vector<Dense> backward(const MappingModel& m, const Tape& t, const Eigen::MatrixXd& target) {
    std::vector<Dense> g;
    Scratch s;
    backward(m, t, target, g, s);
    return g;
}

inline Dense init_dense(int out, int in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Dense d{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (Eigen::Index j = 0; j < d.w.cols(); ++j) {
        for (Eigen::Index i = 0; i < d.w.rows(); ++i) d.w(i, j) = u(rng);
    }
    for (Eigen::Index i = 0; i < d.b.size(); ++i) d.b(i) = u(rng);
    return d;
}

}  // namespace detail

inline MappingModel train_linear(const MappingDataset& ds) {
    if (ds.rows.size() < 2) throw TrainingError("linear: need at least 2 training rows");
    const auto x = detail::inputs_of(ds.rows);
    const auto y = detail::targets_of(ds.rows);
    Eigen::MatrixXd design(x.cols(), 3);
    design.col(0).setOnes();
    design.col(1) = x.row(0).transpose();
    design.col(2) = x.row(1).transpose();
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < 3) throw TrainingError("linear: rank-deficient design");
    const Eigen::MatrixXd coef = qr.solve(Eigen::MatrixXd(y.transpose()));  // 3 x 2

    MappingModel m;
    m.kind = ModelKind::linear;
    m.layers.push_back({coef.bottomRows(2).transpose(), coef.row(0).transpose()});
    detail::set_hull(m, x);
    return m;
}

inline Eigen::MatrixXd predict_raw(const MappingModel& m, const Eigen::MatrixXd& x) {
    if (m.kind == ModelKind::linear) return (m.layers[0].w * x).colwise() + m.layers[0].b;
    return detail::forward(m, x).y;
}

inline MappingModel init_mlp(const MappingDataset& ds, const MlpConfig& cfg) {
    validate(cfg);
    const auto x = detail::inputs_of(ds.rows);
    const auto y = detail::targets_of(ds.rows);
    MappingModel m;
    m.kind = ModelKind::mlp;
    m.config = cfg;
    m.input_mean = x.rowwise().mean();
    for (int r = 0; r < 2; ++r) {
        const double var = (x.row(r).array() - m.input_mean(r)).square().mean();
        m.input_std(r) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    detail::set_hull(m, x);

    std::mt19937_64 rng(cfg.init_seed);
    m.layers.push_back(detail::init_dense(cfg.embed_dim, 2, rng));
    for (int k = 0; k < 2 * cfg.n_blocks; ++k) m.layers.push_back(detail::init_dense(cfg.embed_dim, cfg.embed_dim, rng));
    m.layers.push_back(detail::init_dense(2, cfg.embed_dim, rng));
    // start the head at the target means so early epochs fit shape, not offset
    m.layers.back().b = y.rowwise().mean();
    return m;
}

// Full-batch (or seeded mini-batch) AdamW with decoupled weight decay on
// every parameter. The history logs each epoch's loss as seen by its forward
// passes, i.e. before that epoch's updates.
inline MappingModel train_mlp(const MappingDataset& ds, const MlpConfig& cfg) {
    if (ds.rows.size() < 8) throw TrainingError("mlp: need at least 8 training rows");
    MappingModel m = init_mlp(ds, cfg);
    const auto x = detail::inputs_of(ds.rows);
    const auto y = detail::targets_of(ds.rows);
    const auto n = static_cast<Eigen::Index>(ds.rows.size());
    const Eigen::Index batch = cfg.batch_size == 0 ? n : std::min<Eigen::Index>(cfg.batch_size, n);

    std::vector<Dense> mom(m.layers.size()), vel(m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        mom[i] = {Eigen::MatrixXd::Zero(m.layers[i].w.rows(), m.layers[i].w.cols()),
                  Eigen::VectorXd::Zero(m.layers[i].b.size())};
        vel[i] = mom[i];
    }
    std::mt19937_64 shuffle_rng(cfg.init_seed ^ 0x5eedULL);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    detail::Tape tape;
    detail::Scratch scratch;
    std::vector<Dense> grads;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.cosine_schedule
                              ? 0.5 * cfg.learning_rate *
                                    (1.0 + std::cos(std::numbers::pi * epoch / static_cast<double>(cfg.epochs)))
                              : cfg.learning_rate;
        if (batch < n) {
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);
        }
        LossRecord rec;
        for (Eigen::Index start = 0; start < n; start += batch) {
            const Eigen::Index len = std::min(batch, n - start);
            Eigen::MatrixXd xb(2, len), yb(2, len);
            for (Eigen::Index j = 0; j < len; ++j) {
                xb.col(j) = x.col(order[static_cast<std::size_t>(start + j)]);
                yb.col(j) = y.col(order[static_cast<std::size_t>(start + j)]);
            }
            detail::forward(m, xb, tape);
            const auto batch_loss = detail::loss_of(tape.y, yb, cfg.lambda_inv);
            const double w = static_cast<double>(len) / static_cast<double>(n);
            rec.total += w * batch_loss.total;
            rec.mse += w * batch_loss.mse;
            rec.inv += w * batch_loss.inv;
            detail::backward(m, tape, yb, grads, scratch);
            ++step;
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            auto update = [&](auto& p, auto& mo, auto& ve, const auto& g) {
                p *= 1.0 - lr * cfg.weight_decay;
                mo = cfg.beta1 * mo + (1.0 - cfg.beta1) * g;
                ve = cfg.beta2 * ve + (1.0 - cfg.beta2) * g.cwiseProduct(g);
                p.array() -= lr * (mo.array() / c1) / ((ve.array() / c2).sqrt() + cfg.adam_eps);
            };
            for (std::size_t i = 0; i < m.layers.size(); ++i) {
                update(m.layers[i].w, mom[i].w, vel[i].w, grads[i].w);
                update(m.layers[i].b, mom[i].b, vel[i].b, grads[i].b);
            }
        }
        if (!std::isfinite(rec.total)) {
            throw TrainingError("mlp: loss became non-finite at epoch " + std::to_string(epoch));
        }
        m.history.push_back(rec);
    }
    return m;
}

inline LossRecord evaluate_loss(const MappingModel& m, const MappingDataset& ds, double lambda) {
    return detail::loss_of(predict_raw(m, detail::inputs_of(ds.rows)), detail::targets_of(ds.rows), lambda);
}

struct Prediction {
    double gamma_p = 0.0;
    double gamma_r = 0.0;
    bool clamped = false;
    bool outside_hull = false;  // more than 20% of the hull width beyond the training inputs
};

inline constexpr double kMinPredictedGammaP = 1e-3;

inline Prediction predict(const MappingModel& m, double gp_sstl, double gr_sstl) {
    Eigen::MatrixXd x(2, 1);
    x << gp_sstl, gr_sstl;
    const Eigen::MatrixXd y = predict_raw(m, x);
    Prediction p;
    p.gamma_p = std::clamp(y(0, 0), kMinPredictedGammaP, kMaxIdentifiedGammaP);
    p.gamma_r = std::max(y(1, 0), kMinIdentifiedGammaR);
    p.clamped = p.gamma_p != y(0, 0) || p.gamma_r != y(1, 0);
    for (int r = 0; r < 2; ++r) {
        const double margin = 0.2 * (m.input_max(r) - m.input_min(r));
        if (x(r, 0) < m.input_min(r) - margin || x(r, 0) > m.input_max(r) + margin) p.outside_hull = true;
    }
    return p;
}

struct Rmse {
    double gamma_p = 0.0;
    double gamma_r = 0.0;
    double total = 0.0;  // joint over both outputs
};

inline Rmse evaluate_rmse(const MappingModel& m, const MappingDataset& ds) {
    const Eigen::MatrixXd e = predict_raw(m, detail::inputs_of(ds.rows)) - detail::targets_of(ds.rows);
    const double n = static_cast<double>(e.cols());
    Rmse r;
    r.gamma_p = std::sqrt(e.row(0).squaredNorm() / n);
    r.gamma_r = std::sqrt(e.row(1).squaredNorm() / n);
    r.total = std::sqrt(e.squaredNorm() / (2.0 * n));
    return r;
}

// Mean (gp * gr - 1)^2 of the unclamped predictions.
inline double inverse_residual(const MappingModel& m, const MappingDataset& ds) {
    return evaluate_loss(m, ds, 0.0).inv;
}

inline constexpr const char* kModelMagic = "tsm-mapping-model";

inline void write_model(std::ostream& os, const MappingModel& m) {
    auto vec = [&](const Eigen::VectorXd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << csv::exact(v(i));
        os << '\n';
    };
    const auto& c = m.config;
    os << kModelMagic << " 1\n";
    os << "kind " << (m.kind == ModelKind::linear ? "linear" : "mlp") << '\n';
    os << "config " << c.embed_dim << ' ' << c.n_blocks << ' ' << c.skip_alpha << ' ' << csv::exact(c.lambda_inv)
       << ' ' << csv::exact(c.learning_rate) << ' ' << csv::exact(c.weight_decay) << ' ' << csv::exact(c.beta1)
       << ' ' << csv::exact(c.beta2) << ' ' << csv::exact(c.adam_eps) << ' ' << c.epochs << ' ' << c.batch_size
       << ' ' << c.init_seed << ' ' << (c.cosine_schedule ? 1 : 0) << '\n';
    os << "input_mean ";
    vec(m.input_mean);
    os << "input_std ";
    vec(m.input_std);
    os << "input_min ";
    vec(m.input_min);
    os << "input_max ";
    vec(m.input_max);
    os << "layers " << m.layers.size() << '\n';
    for (const auto& l : m.layers) {
        os << l.w.rows() << ' ' << l.w.cols() << '\n';
        for (Eigen::Index i = 0; i < l.w.rows(); ++i) vec(l.w.row(i).transpose());
        vec(l.b);
    }
    os << "history " << m.history.size() << '\n';
    for (const auto& h : m.history) os << csv::exact(h.total) << ' ' << csv::exact(h.mse) << ' ' << csv::exact(h.inv) << '\n';
}

inline MappingModel read_model(std::istream& is) {
    auto fail = [](const std::string& what) { return IoError("model file: " + what); };
    auto expect = [&](const std::string& word) {
        std::string got;
        if (!(is >> got) || got != word) throw fail("expected '" + word + "'");
    };
    auto num = [&]() {
        std::string tok;
        if (!(is >> tok)) throw fail("truncated");
        return csv::to_double(tok, 0);
    };
    auto integer = [&]() {
        long long v = 0;
        if (!(is >> v)) throw fail("expected an integer");
        return v;
    };

    MappingModel m;
    expect(kModelMagic);
    if (integer() != 1) throw fail("unsupported version");
    expect("kind");
    std::string kind;
    is >> kind;
    if (kind == "linear") m.kind = ModelKind::linear;
    else if (kind == "mlp") m.kind = ModelKind::mlp;
    else throw fail("unknown kind '" + kind + "'");
    expect("config");
    auto& c = m.config;
    c.embed_dim = static_cast<int>(integer());
    c.n_blocks = static_cast<int>(integer());
    c.skip_alpha = static_cast<int>(integer());
    c.lambda_inv = num();
    c.learning_rate = num();
    c.weight_decay = num();
    c.beta1 = num();
    c.beta2 = num();
    c.adam_eps = num();
    c.epochs = static_cast<int>(integer());
    c.batch_size = static_cast<int>(integer());
    if (!(is >> c.init_seed)) throw fail("expected init_seed");
    c.cosine_schedule = integer() != 0;
    const std::pair<const char*, Eigen::Vector2d*> stats[] = {
        {"input_mean", &m.input_mean}, {"input_std", &m.input_std}, {"input_min", &m.input_min},
        {"input_max", &m.input_max}};
    for (const auto& [key, v] : stats) {
        expect(key);
        (*v)(0) = num();
        (*v)(1) = num();
    }
    expect("layers");
    const auto n_layers = integer();
    const long long expected = m.kind == ModelKind::linear ? 1 : 2 + 2LL * c.n_blocks;
    if (n_layers != expected) throw fail("layer count does not match the kind/config");
    for (long long k = 0; k < n_layers; ++k) {
        const auto rows = integer(), cols = integer();
        if (rows < 1 || cols < 1 || rows > 100000 || cols > 100000) throw fail("bad layer shape");
        Dense d{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) d.w(i, j) = num();
        }
        for (Eigen::Index i = 0; i < rows; ++i) d.b(i) = num();
        m.layers.push_back(std::move(d));
    }
    expect("history");
    const auto n_hist = integer();
    if (n_hist < 0) throw fail("bad history length");
    for (long long k = 0; k < n_hist; ++k) {
        LossRecord r;
        r.total = num();
        r.mse = num();
        r.inv = num();
        m.history.push_back(r);
    }
    if (m.kind == ModelKind::mlp) {
        try {
            validate(c);
        } catch (const std::invalid_argument& e) {
            throw fail(e.what());
        }
    }
    return m;
}

struct AblationVariant {
    std::string name;
    bool linear = false;
    int skip_alpha = 0;
    bool inverse_loss = false;
};

inline std::vector<AblationVariant> ablation_variants() {
    return {{"linear", true, 0, false},
            {"plain_mlp", false, 0, false},
            {"plain_mlp_inv", false, 0, true},
            {"skip_mlp", false, 1, false},
            {"skip_mlp_inv", false, 1, true}};
}

struct AblationRun {
    std::string variant;
    std::uint64_t seed = 0;
    Rmse test;
    double train_inverse_residual = 0.0;
};

struct AblationRow {
    std::string variant;
    FieldStats rmse_gamma_p;  // spread over seeds
    FieldStats rmse_gamma_r;
    FieldStats rmse_total;
    double train_inverse_residual = 0.0;  // mean over seeds
};

struct AblationResult {
    std::vector<AblationRun> runs;
    std::vector<AblationRow> rows;
};

// Each seed drives both the train/test split and the network initialisation.
inline AblationResult run_ablation(const MappingDataset& ds, const std::vector<std::uint64_t>& seeds,
                                   const MlpConfig& base) {
    if (seeds.size() < 3) throw std::invalid_argument("ablation: need at least 3 seeds");
    AblationResult res;
    const auto variants = ablation_variants();
    for (auto seed : seeds) {
        MappingDataset d = ds;
        d.split_seed = seed;
        const auto sp = split_dataset(d);
        const auto train = subset(d, sp.train), test = subset(d, sp.test);
        for (const auto& v : variants) {
            MappingModel m;
            if (v.linear) {
                m = train_linear(train);
            } else {
                MlpConfig cfg = base;
                cfg.skip_alpha = v.skip_alpha;
                cfg.lambda_inv = v.inverse_loss ? base.lambda_inv : 0.0;
                cfg.init_seed = seed;
                m = train_mlp(train, cfg);
            }
            res.runs.push_back({v.name, seed, evaluate_rmse(m, test), inverse_residual(m, train)});
        }
    }
    for (const auto& v : variants) {
        std::vector<double> gp, gr, tot, inv;
        for (const auto& r : res.runs) {
            if (r.variant != v.name) continue;
            gp.push_back(r.test.gamma_p);
            gr.push_back(r.test.gamma_r);
            tot.push_back(r.test.total);
            inv.push_back(r.train_inverse_residual);
        }
        res.rows.push_back({v.name, field_stats(gp), field_stats(gr), field_stats(tot), field_stats(inv).mean});
    }
    return res;
}

inline constexpr const char* kAblationHeader =
    "variant,rmse_gamma_p_mean,rmse_gamma_p_std,rmse_gamma_r_mean,rmse_gamma_r_std,rmse_total_mean,"
    "rmse_total_std,train_inv_residual";

inline void write_ablation_csv(std::ostream& os, const AblationResult& res) {
    os << kAblationHeader << '\n';
    for (const auto& r : res.rows) {
        os << r.variant << ',' << csv::fixed(r.rmse_gamma_p.mean) << ',' << csv::fixed(r.rmse_gamma_p.std) << ','
           << csv::fixed(r.rmse_gamma_r.mean) << ',' << csv::fixed(r.rmse_gamma_r.std) << ','
           << csv::fixed(r.rmse_total.mean) << ',' << csv::fixed(r.rmse_total.std) << ','
           << csv::fixed(r.train_inverse_residual, 9) << '\n';
    }
}

}  // namespace tsm
