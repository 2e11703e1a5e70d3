// tsmctl: command-line front end for the compensation pipeline.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "tsm/analysis.hpp"
#include "tsm/config.hpp"
#include "tsm/control.hpp"
#include "tsm/harness.hpp"
#include "tsm/ident.hpp"
#include "tsm/mapping.hpp"
#include "tsm/plant.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace tsm;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string output_dir;
};

RunConfig load(const Common& c) {
    RunConfig cfg = c.config.empty() ? parse_config_text("{}") : parse_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
    return cfg;
}

fs::path out_dir(const RunConfig& cfg) {
    const fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

template <class F>
void write_file(const fs::path& path, F&& body) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    body(os);
    os.flush();
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

void write_summary(const fs::path& dir, const ordered_json& summary) {
    write_file(dir / "summary.json", [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
}

ordered_json params_json(const HysteresisParams& p) {
    return {{"gamma_p", p.gamma_p}, {"beta_p", p.beta_p}, {"gamma_r", p.gamma_r}, {"beta_r", p.beta_r}};
}

ordered_json config_json(const CompensatorConfig& c) {
    return {{"gamma_p_hat", c.gamma_p_hat}, {"beta_p", c.beta_p}, {"gamma_r_hat", c.gamma_r_hat}, {"beta_r", c.beta_r}};
}

MappingModel train_model(const RunConfig& cfg, const MappingDataset& ds) {
    return cfg.model_kind == "linear" ? train_linear(ds) : train_mlp(ds, cfg.mlp);
}

MappingModel obtain_model(const RunConfig& cfg, const std::string& model_path) {
    if (!model_path.empty()) {
        std::ifstream in(model_path);
        if (!in) throw IoError("cannot open model '" + model_path + "'");
        return read_model(in);
    }
    return train_model(cfg, generate_dataset(cfg.dataset, cfg.dataset_seed));
}

int cmd_simulate(const Common& common, const std::string& system) {
    const auto cfg = load(common);
    const auto plant = system == "sstl" ? sstl_twin(cfg.plant, cfg.twin) : cfg.plant;
    const auto trace =
        simulate_trace(plant, gen_trajectory(cfg.trajectory), cfg.trajectory.dt(), cfg.sim_noise, cfg.seed);
    const auto dir = out_dir(cfg);
    write_file(dir / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, trace); });
    write_summary(dir, {{"command", "simulate"},
                        {"system", system},
                        {"plant", params_json(plant)},
                        {"samples", trace.size()},
                        {"outputs", {"trace.csv"}}});
    return 0;
}

int cmd_identify(const Common& common, const std::string& trace_path) {
    const auto cfg = load(common);
    std::ifstream in(trace_path);
    if (!in) throw IoError("cannot open trace '" + trace_path + "'");
    const auto p = identify_params(read_trace_csv(in), cfg.ident);
    std::cout << kParamsHeader << '\n' << params_row(p) << '\n';
    return 0;
}

int cmd_gen_dataset(const Common& common) {
    const auto cfg = load(common);
    const auto ds = generate_dataset(cfg.dataset, cfg.dataset_seed);
    const auto dir = out_dir(cfg);
    write_file(dir / "dataset.csv", [&](std::ostream& os) { write_dataset_csv(os, ds); });
    write_summary(dir, {{"command", "gen-dataset"}, {"rows", ds.rows.size()}, {"outputs", {"dataset.csv"}}});
    return 0;
}

int cmd_train_map(const Common& common, const std::string& dataset_path) {
    const auto cfg = load(common);
    MappingDataset ds;
    if (dataset_path.empty()) {
        ds = generate_dataset(cfg.dataset, cfg.dataset_seed);
    } else {
        std::ifstream in(dataset_path);
        if (!in) throw IoError("cannot open dataset '" + dataset_path + "'");
        ds = read_dataset_csv(in, cfg.dataset_seed, cfg.dataset.train_fraction);
    }
    const auto model = train_model(cfg, ds);
    const auto dir = out_dir(cfg);
    write_file(dir / "model.txt", [&](std::ostream& os) { write_model(os, model); });
    ordered_json outputs = {"model.txt"};
    if (!model.history.empty()) {
        write_file(dir / "loss_history.csv", [&](std::ostream& os) {
            os << "epoch,total,mse,inv\n";
            for (std::size_t e = 0; e < model.history.size(); ++e) {
                const auto& h = model.history[e];
                os << e << ',' << csv::exact(h.total) << ',' << csv::exact(h.mse) << ',' << csv::exact(h.inv) << '\n';
            }
        });
        outputs.push_back("loss_history.csv");
    }
    const auto fit = evaluate_rmse(model, ds);
    write_summary(dir, {{"command", "train-map"},
                        {"model", cfg.model_kind},
                        {"rows", ds.rows.size()},
                        {"rmse_gamma_p", fit.gamma_p},
                        {"rmse_gamma_r", fit.gamma_r},
                        {"rmse_total", fit.total},
                        {"outputs", outputs}});
    return 0;
}

int cmd_probe(const Common& common, const std::string& model_path) {
    const auto cfg = load(common);
    const auto model = obtain_model(cfg, model_path);
    const auto r = probe_and_infer(sstl_twin(cfg.plant, cfg.twin), model, cfg.experiment.probe, cfg.seed);
    std::ostringstream row;
    row << "gamma_p_sstl,gamma_r_sstl,gamma_p_hat,beta_p,gamma_r_hat,beta_r\n"
        << csv::fixed(r.sstl.gamma_p) << ',' << csv::fixed(r.sstl.gamma_r) << ',' << csv::fixed(r.config.gamma_p_hat)
        << ',' << csv::fixed(r.config.beta_p) << ',' << csv::fixed(r.config.gamma_r_hat) << ','
        << csv::fixed(r.config.beta_r) << '\n';
    const auto dir = out_dir(cfg);
    write_file(dir / "probe.csv", [&](std::ostream& os) { os << row.str(); });
    std::cout << row.str();
    if (r.mapped.outside_hull) std::cerr << "warning: SSTL slopes lie outside the mapping's training range\n";
    write_summary(dir, {{"command", "probe"},
                        {"sstl", params_json(r.sstl)},
                        {"config", config_json(r.config)},
                        {"clamped", r.mapped.clamped},
                        {"outside_hull", r.mapped.outside_hull},
                        {"outputs", {"probe.csv"}}});
    return 0;
}

int cmd_run(const Common& common, const std::string& scheme_opt, bool all, const std::string& model_path) {
    auto cfg = load(common);
    if (!scheme_opt.empty()) {
        try {
            cfg.scheme = scheme_from_string(scheme_opt);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("--scheme: ") + e.what());
        }
    }
    std::vector<Scheme> schemes{cfg.scheme};
    if (all) schemes = {Scheme::no_comp, Scheme::no_bias, Scheme::proposed, Scheme::direct_ident};
    std::optional<MappingModel> model;
    for (Scheme s : schemes) {
        if (s == Scheme::proposed || s == Scheme::no_bias) {
            model = obtain_model(cfg, model_path);
            break;
        }
    }

    const auto dir = out_dir(cfg);
    std::ostringstream results, reversal;
    results << kResultsHeader << '\n';
    reversal << kReversalHeader << '\n';
    ordered_json runs = ordered_json::array();
    ordered_json outputs = {"results.csv", "reversal_windows.csv"};
    for (Scheme s : schemes) {
        const auto rep = run_experiment(s, cfg.experiment, model ? &*model : nullptr, cfg.trajectory, cfg.seed);
        write_results_row(results, rep);
        write_reversal_row(reversal, rep);
        const std::string trace_name = std::string("trace_") + to_string(s) + ".csv";
        write_file(dir / trace_name, [&](std::ostream& os) { write_loop_csv(os, rep.trace); });
        outputs.push_back(trace_name);
        ordered_json run = {{"scheme", to_string(s)},
                            {"rmse_N", rep.rmse},
                            {"mape_pct", rep.mape},
                            {"rmse_red_pct", rep.rmse_reduction}};
        if (rep.config) run["config"] = config_json(*rep.config);
        runs.push_back(run);
    }
    write_file(dir / "results.csv", [&](std::ostream& os) { os << results.str(); });
    write_file(dir / "reversal_windows.csv", [&](std::ostream& os) { os << reversal.str(); });
    std::cout << results.str();
    write_summary(dir, {{"command", "run"},
                        {"trajectory", to_string(cfg.trajectory.kind)},
                        {"seed", cfg.seed},
                        {"runs", runs},
                        {"outputs", outputs}});
    return 0;
}

int cmd_ablation(const Common& common, int n_seeds) {
    const auto cfg = load(common);
    std::vector<std::uint64_t> seeds = cfg.ablation_seeds;
    if (n_seeds > 0) {
        seeds.clear();
        for (int i = 1; i <= n_seeds; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
    }
    if (seeds.size() < 3) throw ConfigError("--seeds: need at least 3 seeds");
    const auto res = run_ablation(generate_dataset(cfg.dataset, cfg.dataset_seed), seeds, cfg.mlp);
    const auto dir = out_dir(cfg);
    write_file(dir / "ablation.csv", [&](std::ostream& os) { write_ablation_csv(os, res); });
    write_file(dir / "ablation_runs.csv", [&](std::ostream& os) {
        os << "variant,seed,rmse_gamma_p,rmse_gamma_r,rmse_total,train_inv_residual\n";
        for (const auto& r : res.runs) {
            os << r.variant << ',' << r.seed << ',' << csv::fixed(r.test.gamma_p) << ',' << csv::fixed(r.test.gamma_r)
               << ',' << csv::fixed(r.test.total) << ',' << csv::fixed(r.train_inverse_residual, 9) << '\n';
        }
    });
    std::ostringstream table;
    write_ablation_csv(table, res);
    std::cout << table.str();
    write_summary(dir, {{"command", "ablation"},
                        {"seeds", seeds},
                        {"variants", res.rows.size()},
                        {"outputs", {"ablation.csv", "ablation_runs.csv"}}});
    return 0;
}

int cmd_analyze(const Common& common) {
    const auto cfg = load(common);
    const auto pairs = sample_population(cfg.population, cfg.seed);
    const auto dir = out_dir(cfg);
    write_file(dir / "intersystem.csv", [&](std::ostream& os) { write_intersystem_csv(os, pairs); });
    write_file(dir / "products.csv", [&](std::ostream& os) { write_product_csv(os, pairs); });
    write_summary(dir, {{"command", "analyze"},
                        {"configs", pairs.size()},
                        {"outputs", {"intersystem.csv", "products.csv"}}});
    return 0;
}

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::config: return 2;
        case ErrorKind::identification: return 3;
        case ErrorKind::training: return 4;
        case ErrorKind::io: return 5;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tendon-sheath hysteresis identification, mapping and compensation"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", common.config, "JSON run configuration");
        sub->add_option("--seed", common.seed, "override the config seed");
        sub->add_option("-o,--output-dir", common.output_dir, "override the output directory");
    };

    std::string system = "act", trace_path, dataset_path, model_path, scheme;
    bool all_schemes = false;
    int n_seeds = 0;

    auto* simulate = app.add_subcommand("simulate", "drive a plant with the configured trajectory");
    add_common(simulate);
    simulate->add_option("--system", system, "act or sstl")->check(CLI::IsMember({"act", "sstl"}));

    auto* identify = app.add_subcommand("identify", "extract hysteresis parameters from a trace CSV");
    add_common(identify);
    identify->add_option("-t,--trace", trace_path, "trace CSV (time_s,t_in_N,t_out_N)")->required();

    auto* gen = app.add_subcommand("gen-dataset", "generate the synthetic mapping dataset");
    add_common(gen);

    auto* train = app.add_subcommand("train-map", "train the slope mapping");
    add_common(train);
    train->add_option("-d,--dataset", dataset_path, "dataset CSV (default: generate from config)");

    auto* probe = app.add_subcommand("probe", "probe the SSTL twin and infer the compensator config");
    add_common(probe);
    probe->add_option("-m,--model", model_path, "model file (default: train from config)");

    auto* run = app.add_subcommand("run", "closed-loop tracking experiment");
    add_common(run);
    run->add_option("-s,--scheme", scheme, "no_comp, no_bias, proposed or direct_ident");
    run->add_flag("--all-schemes", all_schemes, "run all four schemes");
    run->add_option("-m,--model", model_path, "model file (default: train from config)");

    auto* ablation = app.add_subcommand("ablation", "mapping variant ablation");
    add_common(ablation);
    ablation->add_option("--seeds", n_seeds, "use seeds 1..N instead of the configured list")
        ->check(CLI::PositiveNumber);

    auto* analyze = app.add_subcommand("analyze", "inter-system and slope-product tables");
    add_common(analyze);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(common, system);
        if (identify->parsed()) return cmd_identify(common, trace_path);
        if (gen->parsed()) return cmd_gen_dataset(common);
        if (train->parsed()) return cmd_train_map(common, dataset_path);
        if (probe->parsed()) return cmd_probe(common, model_path);
        if (run->parsed()) return cmd_run(common, scheme, all_schemes, model_path);
        if (ablation->parsed()) return cmd_ablation(common, n_seeds);
        if (analyze->parsed()) return cmd_analyze(common);
    } catch (const tsm::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
