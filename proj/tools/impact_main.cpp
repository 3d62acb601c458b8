#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "impact/errors.hpp"
#include "impact/eval_harness.hpp"
#include "impact/glm_fit.hpp"
#include "impact/io.hpp"
#include "impact/np_regression.hpp"
#include "impact/poi_core.hpp"
#include "impact/process_sim.hpp"

namespace {

using impact::RunConfig;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CliOverrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> estimator;
    std::optional<std::size_t> threads;
    std::optional<std::string> curves;
    std::optional<std::string> responses;
    std::optional<std::string> metadata;
};

RunConfig resolve_config(const CliOverrides& cli) {
    RunConfig config = impact::load_config(cli.config_path);
    if (cli.seed) {
        config.seed = *cli.seed;
    }
    if (cli.out_dir) {
        config.out_dir = *cli.out_dir;
    }
    if (cli.estimator) {
        config.estimator = *cli.estimator;
        if (config.estimator != "trh" && config.estimator != "poi" &&
            config.estimator != "both") {
            throw impact::ConfigError("estimator must be one of trh|poi|both");
        }
    }
    if (cli.threads) {
        config.threads = *cli.threads;
    }
    if (cli.curves) {
        config.estimate.curves = *cli.curves;
    }
    if (cli.responses) {
        config.estimate.responses = *cli.responses;
    }
    if (cli.metadata) {
        config.estimate.metadata = *cli.metadata;
    }
    return config;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::string stars(double p_value) {
    if (p_value < 0.01) {
        return "***";
    }
    if (p_value < 0.05) {
        return "**";
    }
    if (p_value < 0.1) {
        return "*";
    }
    return "";
}

impact::LinkSpec link_from_config(const RunConfig& config) {
    return {config.link == "logit" ? impact::LinkKind::Logit : impact::LinkKind::Identity};
}

impact::DgpDesign design_from_string(const std::string& name) {
    if (name == "dgp1") return impact::dgp_design(impact::Dgp::Dgp1);
    if (name == "dgp2") return impact::dgp_design(impact::Dgp::Dgp2);
    if (name == "dgp3") return impact::dgp_design(impact::Dgp::Dgp3);
    if (name == "dgp4") return impact::dgp_design(impact::Dgp::Dgp4);
    if (name == "dgp5") return impact::dgp_design(impact::Dgp::Dgp5);
    throw impact::ConfigError("unknown dgp: " + name);
}

json glm_block(const impact::GlmFit& fit, const std::vector<std::string>& names) {
    json j;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["loglik"] = fit.loglik;
    j["aic"] = fit.aic;
    j["bic"] = fit.bic;
    json coef = json::array();
    std::vector<double> se;
    if (fit.converged) {
        se = impact::standard_errors(fit);
    }
    for (std::size_t k = 0; k < fit.beta.size(); ++k) {
        json row;
        row["name"] = k < names.size() ? names[k] : "b" + std::to_string(k);
        row["coef"] = fit.beta[k];
        if (fit.converged) {
            const double z = fit.beta[k] / se[k];
            const double p = 2.0 * (1.0 - normal_cdf(std::fabs(z)));
            row["se"] = se[k];
            row["z"] = z;
            row["p_value"] = p;
            row["stars"] = stars(p);
        }
        coef.push_back(std::move(row));
    }
    j["coefficients"] = coef;
    return j;
}

// Intercept-only log-likelihood, used for McFadden's pseudo-R^2.
double null_loglik(const impact::FunctionalDataset& data, const impact::LinkSpec& link) {
    impact::Matrix design(data.n(), 1, 1.0);
    const impact::GlmFit fit = impact::fisher_scoring(design, data.y, link);
    return fit.loglik;
}

json fit_quality_block(const impact::FunctionalDataset& data, const impact::Matrix& design,
                       const impact::GlmFit& fit, const impact::LinkSpec& link,
                       double loglik_null) {
    json j;
    if (link.kind != impact::LinkKind::Logit) {
        return j;
    }
    bool binary = true;
    for (double v : data.y) {
        if (v != 0.0 && v != 1.0) {
            binary = false;
            break;
        }
    }
    if (!binary || !fit.converged) {
        return j;
    }
    std::vector<double> probs(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        double eta = 0.0;
        for (std::size_t k = 0; k < design.cols(); ++k) {
            eta += design(i, k) * fit.beta[k];
        }
        probs[i] = impact::logistic(eta);
    }
    try {
        const impact::FitQuality q =
            impact::fit_quality(data.y, probs, fit.loglik, loglik_null);
        j["mcfadden_r2"] = q.mcfadden_r2;
        j["somers_dxy"] = q.somers_dxy;
    } catch (const impact::DataError&) {
        // single-class response: quality metrics undefined
    }
    return j;
}

impact::Matrix design_for_candidates(const impact::FunctionalDataset& data,
                                     const std::vector<impact::Candidate>& candidates) {
    impact::Matrix design(data.n(), 1 + candidates.size(), 1.0);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        for (std::size_t i = 0; i < data.n(); ++i) {
            design(i, 1 + c) = data.x(i, candidates[c].grid_index);
        }
    }
    return design;
}

std::vector<std::string> coef_names(const std::vector<impact::Candidate>& candidates) {
    std::vector<std::string> names{"intercept"};
    for (const auto& c : candidates) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "x(%.6g)", c.location);
        names.emplace_back(buf);
    }
    return names;
}

void standardize_curves(impact::FunctionalDataset& data) {
    const std::size_t n = data.n();
    const std::size_t p = data.p();
    for (std::size_t j = 0; j < p; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mean += data.x(i, j);
        }
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = data.x(i, j) - mean;
            ss += d * d;
        }
        const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        const double denom = sd > 0.0 ? sd : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            data.x(i, j) = (data.x(i, j) - mean) / denom;
        }
    }
}

int cmd_simulate(const RunConfig& config) {
    impact::ProcessSpec process = config.simulate.process;
    impact::ImpactModelSpec model = config.simulate.model;
    if (!config.simulate.dgp.empty()) {
        const impact::DgpDesign design = design_from_string(config.simulate.dgp);
        process = design.process;
        model = design.model;
    }
    const impact::GridSpec grid = config.simulate.grid;
    grid.validate();

    impact::RngStream stream(config.seed, 0);
    const std::uint64_t path_seed = stream.next_u64();
    const std::uint64_t resp_seed = stream.next_u64();
    const impact::Matrix x = impact::sample_paths(process, grid, config.simulate.n, path_seed);
    const impact::ResponseDraw draw = impact::generate_responses(x, grid, model, resp_seed);

    impact::FunctionalDataset data{grid, x, draw.y};
    json meta;
    meta["seed"] = config.seed;
    meta["dgp"] = config.simulate.dgp;
    meta["process"] = impact::process_to_json(process);
    meta["model"] = impact::model_to_json(model);
    meta["tau_grid_indices"] = draw.grid_indices;
    impact::write_dataset(config.out_dir, data, meta);
    std::cout << "wrote curves.csv, responses.csv, metadata.json to " << config.out_dir << "\n";
    return kExitOk;
}

json estimate_blocks(const impact::FunctionalDataset& data, const RunConfig& config) {
    const impact::LinkSpec link = link_from_config(config);
    const double loglik_null = null_loglik(data, link);
    json out;

    if (config.estimator == "trh" || config.estimator == "both") {
        const impact::PoiEstimate est = impact::estimate_poi(data, config.poi);
        // diagnostics are computed on the same (possibly centered) curves
        const impact::FunctionalDataset stat_data =
            config.poi.center ? impact::centered(data) : data;
        const std::vector<double> stats =
            impact::candidate_statistics(stat_data, est.candidates, est.k_delta);
        json block;
        block["delta"] = est.delta;
        block["k_delta"] = est.k_delta;
        block["lambda"] = est.lambda;
        block["s_hat"] = est.s_hat;
        json cands = json::array();
        for (std::size_t l = 0; l < est.candidates.size(); ++l) {
            cands.push_back({{"grid_index", est.candidates[l].grid_index},
                             {"location", est.candidates[l].location},
                             {"score", est.candidates[l].score},
                             {"statistic", stats[l]}});
        }
        block["candidates"] = cands;
        json selected = json::array();
        for (const auto& c : est.selected) {
            selected.push_back({{"grid_index", c.grid_index}, {"location", c.location}});
        }
        block["selected"] = selected;
        const impact::Matrix design = design_for_candidates(data, est.selected);
        const impact::GlmFit fit = impact::fisher_scoring(design, data.y, link);
        block["glm"] = glm_block(fit, coef_names(est.selected));
        block["fit_quality"] = fit_quality_block(data, design, fit, link, loglik_null);
        if (!est.selected.empty()) {
            std::vector<double> locations;
            for (const auto& c : est.selected) {
                locations.push_back(c.location);
            }
            const impact::NwFit nw = impact::fit_nw(data, locations, config.kernel);
            block["nw_bandwidths"] = nw.bandwidths;
        }
        out["trh"] = block;
    }

    if (config.estimator == "poi" || config.estimator == "both") {
        const std::vector<std::size_t> k_grid = config.k_delta_grid.empty()
                                                    ? impact::default_k_delta_grid(data.grid)
                                                    : config.k_delta_grid;
        const impact::SelectionResult sel =
            impact::best_subset_over_delta(data, k_grid, link, config.selection, config.poi);
        json block;
        block["delta"] = sel.best_delta;
        block["k_delta"] = sel.best_k_delta;
        block["s_hat"] = sel.best_subset.size();
        block["all_nonconverged"] = sel.all_nonconverged;
        block["subsets_evaluated"] = sel.trace.size();
        json selected = json::array();
        for (const auto& c : sel.best_candidates) {
            selected.push_back({{"grid_index", c.grid_index}, {"location", c.location}});
        }
        block["selected"] = selected;
        block["glm"] = glm_block(sel.fit, coef_names(sel.best_candidates));
        const impact::Matrix design = design_for_candidates(data, sel.best_candidates);
        block["fit_quality"] = fit_quality_block(data, design, sel.fit, link, loglik_null);
        out["poi"] = block;
    }
    return out;
}

int cmd_estimate(const RunConfig& config) {
    if (config.estimate.curves.empty() || config.estimate.responses.empty()) {
        throw impact::ConfigError("estimate: curves and responses paths are required");
    }
    impact::FunctionalDataset data =
        impact::read_dataset(config.estimate.curves, config.estimate.responses,
                             config.estimate.metadata);
    if (config.estimate.standardize) {
        standardize_curves(data);
    }

    json out;
    out["n"] = data.n();
    out["p"] = data.p();
    out["standardized"] = config.estimate.standardize;
    out["seed"] = config.seed;
    out.update(estimate_blocks(data, config));

    const std::filesystem::path path = std::filesystem::path(config.out_dir) / "estimate.json";
    std::ofstream file(path);
    if (!file) {
        throw impact::DataError("cannot open output file: " + path.string());
    }
    file << out.dump(2) << "\n";
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

int cmd_benchmark(const RunConfig& config) {
    const impact::ExperimentSpec spec = impact::experiment_from_config(config);
    const impact::McReport report = impact::run_experiment(spec);
    const std::filesystem::path dir(config.out_dir);
    if (!std::filesystem::is_directory(dir)) {
        throw impact::DataError("output directory does not exist: " + dir.string());
    }
    impact::write_report_json(dir / "report.json", report, spec);
    impact::write_report_csv(dir / "reps.csv", report, spec);
    for (const impact::CellReport& cell : report.cells) {
        std::printf("n=%zu p=%zu %s: P(S_hat=S)=%.4f avg_mse_matched=%s mase=%s\n", cell.n,
                    cell.p, impact::estimator_name(cell.estimator).c_str(),
                    cell.aggregates.p_s_correct,
                    impact::format_double(cell.aggregates.avg_mse_matched).c_str(),
                    impact::format_double(cell.aggregates.mase).c_str());
    }
    std::cout << "wrote report.json, reps.csv to " << config.out_dir << "\n";
    return kExitOk;
}

int cmd_analyze(const RunConfig& config) {
    if (config.estimate.curves.empty() || config.estimate.responses.empty()) {
        throw impact::ConfigError("analyze: curves and responses paths are required");
    }
    impact::FunctionalDataset data =
        impact::read_dataset(config.estimate.curves, config.estimate.responses,
                             config.estimate.metadata);
    if (config.estimate.standardize) {
        standardize_curves(data);
    }
    const impact::LinkSpec link = link_from_config(config);
    const double loglik_null = null_loglik(data, link);

    json out;
    out["n"] = data.n();
    out["p"] = data.p();
    out["standardized"] = config.estimate.standardize;

    // POI: BIC-based best subset over delta.
    const std::vector<std::size_t> k_grid = config.k_delta_grid.empty()
                                                ? impact::default_k_delta_grid(data.grid)
                                                : config.k_delta_grid;
    const impact::SelectionResult sel =
        impact::best_subset_over_delta(data, k_grid, link, config.selection, config.poi);
    {
        json block;
        block["delta"] = sel.best_delta;
        json selected = json::array();
        for (const auto& c : sel.best_candidates) {
            selected.push_back({{"grid_index", c.grid_index}, {"location", c.location}});
        }
        block["selected"] = selected;
        block["glm"] = glm_block(sel.fit, coef_names(sel.best_candidates));
        const impact::Matrix design = design_for_candidates(data, sel.best_candidates);
        block["fit_quality"] = fit_quality_block(data, design, sel.fit, link, loglik_null);
        out["poi"] = block;
    }

    // Peak-and-end-rule comparators.
    const auto [per1_cols, per2_cols] = impact::per_models(data);
    auto per_block = [&](const impact::Matrix& cols, const std::vector<std::string>& names) {
        impact::Matrix design(data.n(), 1 + cols.cols(), 1.0);
        for (std::size_t i = 0; i < data.n(); ++i) {
            for (std::size_t j = 0; j < cols.cols(); ++j) {
                design(i, 1 + j) = cols(i, j);
            }
        }
        const impact::GlmFit fit = impact::fisher_scoring(design, data.y, link);
        json block;
        block["glm"] = glm_block(fit, names);
        block["fit_quality"] = fit_quality_block(data, design, fit, link, loglik_null);
        return block;
    };
    out["per1"] = per_block(per1_cols, {"intercept", "x(peak_abs)", "x(end)"});
    out["per2"] = per_block(per2_cols, {"intercept", "x(peak_pos)", "x(peak_neg)", "x(end)"});

    const std::filesystem::path path = std::filesystem::path(config.out_dir) / "analyze.json";
    std::ofstream file(path);
    if (!file) {
        throw impact::DataError("cannot open output file: " + path.string());
    }
    file << out.dump(2) << "\n";

    // Compact comparison table on stdout.
    auto print_model = [](const std::string& label, const json& block) {
        std::printf("%-6s", label.c_str());
        const json& glm = block.at("glm");
        std::printf(" loglik=%8.2f aic=%8.2f", glm.at("loglik").get<double>(),
                    glm.at("aic").get<double>());
        const json& fq = block.at("fit_quality");
        if (fq.contains("mcfadden_r2")) {
            std::printf(" r2=%5.2f dxy=%5.2f", fq.at("mcfadden_r2").get<double>(),
                        fq.at("somers_dxy").get<double>());
        }
        std::printf("\n");
        for (const auto& row : glm.at("coefficients")) {
            std::printf("    %-12s %8.3f", row.at("name").get<std::string>().c_str(),
                        row.at("coef").get<double>());
            if (row.contains("se")) {
                std::printf(" (%.3f)%s", row.at("se").get<double>(),
                            row.at("stars").get<std::string>().c_str());
            }
            std::printf("\n");
        }
    };
    print_model("poi", out["poi"]);
    print_model("per1", out["per1"]);
    print_model("per2", out["per2"]);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"points-of-impact estimation for functional predictors"};
    app.require_subcommand(1);

    CliOverrides cli;
    app.add_option("--config", cli.config_path, "JSON configuration file");
    app.add_option("--seed", cli.seed, "RNG seed override");
    app.add_option("--out-dir", cli.out_dir, "output directory override");
    app.add_option("--estimator", cli.estimator, "trh | poi | both");
    app.add_option("--threads", cli.threads, "worker threads (0 = hardware)");

    CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
    CLI::App* estimate = app.add_subcommand("estimate", "estimate points of impact from CSVs");
    CLI::App* benchmark = app.add_subcommand("benchmark", "run a Monte Carlo experiment");
    CLI::App* analyze = app.add_subcommand("analyze", "POI vs peak-and-end-rule comparison");
    for (CLI::App* sub : {estimate, analyze}) {
        sub->add_option("--curves", cli.curves, "curves CSV path");
        sub->add_option("--responses", cli.responses, "responses CSV path");
        sub->add_option("--metadata", cli.metadata, "metadata JSON path");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        const RunConfig config = resolve_config(cli);
        if (simulate->parsed()) {
            return cmd_simulate(config);
        }
        if (estimate->parsed()) {
            return cmd_estimate(config);
        }
        if (benchmark->parsed()) {
            return cmd_benchmark(config);
        }
        if (analyze->parsed()) {
            return cmd_analyze(config);
        }
        return kExitConfig;
    } catch (const impact::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const impact::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const impact::NumericError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
