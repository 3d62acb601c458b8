#include "impact/io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "impact/errors.hpp"

namespace impact {

namespace {

using nlohmann::json;

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot open output file: " + path.string());
    }
    return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open input file: " + path.string());
    }
    return in;
}

double parse_cell(const std::string& token, std::size_t row, std::size_t col,
                  const std::filesystem::path& path) {
    const char* begin = token.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        std::ostringstream msg;
        msg << path.string() << ": row " << row << ", column " << (col + 1)
            << ": cannot parse '" << token << "' as a number";
        throw DataError(msg.str());
    }
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_curves_csv(const std::filesystem::path& path, const Matrix& x) {
    std::ofstream out = open_output(path);
    for (std::size_t j = 0; j < x.cols(); ++j) {
        out << (j == 0 ? "" : ",") << "t_" << (j + 1);
    }
    out << "\n";
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto row = x.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) {
            out << (j == 0 ? "" : ",") << format_double(row[j]);
        }
        out << "\n";
    }
}

void write_responses_csv(const std::filesystem::path& path, const std::vector<double>& y) {
    std::ofstream out = open_output(path);
    out << "y\n";
    for (double v : y) {
        out << format_double(v) << "\n";
    }
}

Matrix read_curves_csv(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path.string() + ": missing header row");
    }
    const std::size_t p = split_csv_line(line).size();
    if (p == 0) {
        throw DataError(path.string() + ": empty header row");
    }
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t row_number = 1;
    while (std::getline(in, line)) {
        ++row_number;
        if (line.empty()) {
            continue;
        }
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != p) {
            std::ostringstream msg;
            msg << path.string() << ": row " << row_number << ": expected " << p
                << " columns, found " << fields.size();
            throw DataError(msg.str());
        }
        for (std::size_t j = 0; j < p; ++j) {
            values.push_back(parse_cell(fields[j], row_number, j, path));
        }
        ++rows;
    }
    if (rows == 0) {
        throw DataError(path.string() + ": no data rows");
    }
    Matrix x(rows, p);
    x.data() = std::move(values);
    return x;
}

std::vector<double> read_responses_csv(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path.string() + ": missing header row");
    }
    std::vector<double> y;
    std::size_t row_number = 1;
    while (std::getline(in, line)) {
        ++row_number;
        if (line.empty()) {
            continue;
        }
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 1) {
            std::ostringstream msg;
            msg << path.string() << ": row " << row_number << ": expected 1 column, found "
                << fields.size();
            throw DataError(msg.str());
        }
        y.push_back(parse_cell(fields[0], row_number, 0, path));
    }
    if (y.empty()) {
        throw DataError(path.string() + ": no data rows");
    }
    return y;
}

void write_dataset(const std::filesystem::path& out_dir, const FunctionalDataset& data,
                   const nlohmann::json& metadata_extra) {
    if (!std::filesystem::is_directory(out_dir)) {
        throw DataError("output directory does not exist: " + out_dir.string());
    }
    write_curves_csv(out_dir / "curves.csv", data.x);
    write_responses_csv(out_dir / "responses.csv", data.y);
    json meta = metadata_extra;
    meta["grid"] = {{"a", data.grid.a}, {"b", data.grid.b}, {"p", data.grid.p}};
    meta["n"] = data.n();
    std::ofstream out = open_output(out_dir / "metadata.json");
    out << meta.dump(2) << "\n";
}

FunctionalDataset read_dataset(const std::filesystem::path& curves,
                               const std::filesystem::path& responses,
                               const std::filesystem::path& metadata) {
    FunctionalDataset data;
    data.x = read_curves_csv(curves);
    data.y = read_responses_csv(responses);
    data.grid = GridSpec{0.0, 1.0, data.x.cols()};
    if (!metadata.empty()) {
        std::ifstream in = open_input(metadata);
        json meta;
        try {
            in >> meta;
        } catch (const json::exception& e) {
            throw DataError(metadata.string() + ": " + e.what());
        }
        if (meta.contains("grid")) {
            data.grid.a = meta["grid"].value("a", 0.0);
            data.grid.b = meta["grid"].value("b", 1.0);
            data.grid.p = meta["grid"].value("p", data.x.cols());
        }
    }
    data.validate();
    return data;
}

// --- configuration -----------------------------------------------------------

namespace {

json grid_to_json(const GridSpec& grid) {
    return {{"a", grid.a}, {"b", grid.b}, {"p", grid.p}};
}

GridSpec grid_from_json(const json& j) {
    GridSpec grid;
    grid.a = j.at("a").get<double>();
    grid.b = j.at("b").get<double>();
    grid.p = j.at("p").get<std::size_t>();
    return grid;
}

json scale_law_to_json(const ScaleLaw& law) {
    return {{"kind", law.kind == ScaleLaw::Kind::Constant ? "constant" : "shifted_abs_normal"},
            {"value", law.value}};
}

ScaleLaw scale_law_from_json(const json& j) {
    ScaleLaw law;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") {
        law.kind = ScaleLaw::Kind::Constant;
    } else if (kind == "shifted_abs_normal") {
        law.kind = ScaleLaw::Kind::ShiftedAbsNormal;
    } else {
        throw ConfigError("unknown scale law kind: " + kind);
    }
    law.value = j.at("value").get<double>();
    return law;
}

}  // namespace

nlohmann::json process_to_json(const ProcessSpec& spec) {
    json j;
    switch (spec.kind) {
        case ProcessKind::OrnsteinUhlenbeck:
            j["kind"] = "oup";
            break;
        case ProcessKind::GaussianCovarianceModel:
            j["kind"] = "gcm";
            break;
        case ProcessKind::BrownianMotion:
            j["kind"] = "bm";
            break;
        case ProcessKind::ExponentialBrownianMotion:
            j["kind"] = "ebm";
            break;
        case ProcessKind::Elliptical:
            j["kind"] = "elliptical";
            break;
    }
    j["theta"] = spec.theta;
    j["sigma_u_sq"] = spec.sigma_u_sq;
    j["length_scale"] = spec.length_scale;
    j["scale"] = spec.scale;
    j["scale_law"] = scale_law_to_json(spec.scale_law);
    j["base"] = spec.base ? process_to_json(*spec.base) : json(nullptr);
    return j;
}

ProcessSpec process_from_json(const nlohmann::json& j) {
    ProcessSpec spec;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "oup") {
        spec.kind = ProcessKind::OrnsteinUhlenbeck;
    } else if (kind == "gcm") {
        spec.kind = ProcessKind::GaussianCovarianceModel;
    } else if (kind == "bm") {
        spec.kind = ProcessKind::BrownianMotion;
    } else if (kind == "ebm") {
        spec.kind = ProcessKind::ExponentialBrownianMotion;
    } else if (kind == "elliptical") {
        spec.kind = ProcessKind::Elliptical;
    } else {
        throw ConfigError("unknown process kind: " + kind);
    }
    spec.theta = j.value("theta", 5.0);
    spec.sigma_u_sq = j.value("sigma_u_sq", 3.5);
    spec.length_scale = j.value("length_scale", 0.1);
    spec.scale = j.value("scale", 1.0);
    if (j.contains("scale_law") && !j["scale_law"].is_null()) {
        spec.scale_law = scale_law_from_json(j["scale_law"]);
    }
    if (spec.kind == ProcessKind::Elliptical) {
        if (!j.contains("base") || j["base"].is_null()) {
            throw ConfigError("elliptical process needs a base process");
        }
        spec.base = std::make_shared<const ProcessSpec>(process_from_json(j["base"]));
    }
    return spec;
}

nlohmann::json model_to_json(const ImpactModelSpec& model) {
    return {{"alpha", model.alpha},
            {"betas", model.betas},
            {"taus", model.taus},
            {"response",
             {{"kind", model.response.kind == ResponseSpec::Kind::BernoulliLogit
                           ? "bernoulli_logit"
                           : "gaussian_identity"},
              {"sigma_eps", model.response.sigma_eps}}}};
}

ImpactModelSpec model_from_json(const nlohmann::json& j) {
    ImpactModelSpec model;
    model.alpha = j.at("alpha").get<double>();
    model.betas = j.at("betas").get<std::vector<double>>();
    model.taus = j.at("taus").get<std::vector<double>>();
    const json& resp = j.at("response");
    const std::string kind = resp.at("kind").get<std::string>();
    if (kind == "bernoulli_logit") {
        model.response.kind = ResponseSpec::Kind::BernoulliLogit;
    } else if (kind == "gaussian_identity") {
        model.response.kind = ResponseSpec::Kind::GaussianIdentity;
    } else {
        throw ConfigError("unknown response kind: " + kind);
    }
    model.response.sigma_eps = resp.value("sigma_eps", 0.0);
    return model;
}

RunConfig default_config() {
    RunConfig config;
    config.simulate.model = ImpactModelSpec{
        1.0, {-6.0, 5.0}, {1.0 / 3.0, 2.0 / 3.0}, {ResponseSpec::Kind::BernoulliLogit, 0.0}};
    return config;
}

nlohmann::json config_to_json(const RunConfig& config) {
    json j;
    j["seed"] = config.seed;
    j["out_dir"] = config.out_dir;
    j["threads"] = config.threads;
    j["estimator"] = config.estimator;
    j["link"] = config.link;
    j["poi"] = {
        {"delta_rule", config.poi.delta.kind == DeltaRule::Kind::Rate ? "rate" : "explicit"},
        {"c_delta", config.poi.delta.c_delta},
        {"k_delta", config.poi.delta.k_delta},
        {"threshold_a", config.poi.threshold_a},
        {"difference_order",
         config.poi.order == DifferenceOrder::Second ? "second" : "fourth"},
        {"max_candidates",
         config.poi.max_candidates ? static_cast<std::int64_t>(*config.poi.max_candidates) : 0},
        {"center", config.poi.center}};
    j["selection"] = {{"min_subset_size", config.selection.min_subset_size},
                      {"max_subset_size", config.selection.max_subset_size},
                      {"max_enumerated", config.selection.max_enumerated}};
    j["k_delta_grid"] = config.k_delta_grid;
    j["kernel"] = {
        {"kind", config.kernel.kernel == KernelKind::GaussianProduct ? "gaussian"
                                                                     : "epanechnikov"},
        {"bandwidth_rule",
         config.kernel.bandwidths.kind == BandwidthRule::Kind::Rate ? "rate" : "explicit"},
        {"c_h", config.kernel.bandwidths.c_h},
        {"bandwidths", config.kernel.bandwidths.values}};
    j["simulate"] = {{"dgp", config.simulate.dgp},
                     {"n", config.simulate.n},
                     {"grid", grid_to_json(config.simulate.grid)},
                     {"process", process_to_json(config.simulate.process)},
                     {"model", model_to_json(config.simulate.model)}};
    j["benchmark"] = {{"dgp", config.benchmark.dgp},       {"n_list", config.benchmark.n_list},
                      {"p_list", config.benchmark.p_list}, {"reps", config.benchmark.reps},
                      {"c_delta", config.benchmark.c_delta}, {"mase", config.benchmark.mase},
                      {"center", config.benchmark.center}};
    j["estimate"] = {{"curves", config.estimate.curves},
                     {"responses", config.estimate.responses},
                     {"metadata", config.estimate.metadata},
                     {"standardize", config.estimate.standardize}};
    return j;
}

RunConfig config_from_json(const nlohmann::json& user) {
    json j = config_to_json(default_config());
    j.merge_patch(user);
    RunConfig config;
    try {
        config.seed = j.at("seed").get<std::uint64_t>();
        config.out_dir = j.at("out_dir").get<std::string>();
        config.threads = j.at("threads").get<std::size_t>();
        config.estimator = j.at("estimator").get<std::string>();
        config.link = j.at("link").get<std::string>();

        const json& poi = j.at("poi");
        const std::string delta_rule = poi.at("delta_rule").get<std::string>();
        if (delta_rule == "rate") {
            config.poi.delta = DeltaRule::rate(poi.at("c_delta").get<double>());
        } else if (delta_rule == "explicit") {
            config.poi.delta = DeltaRule::explicit_k(poi.at("k_delta").get<std::size_t>());
        } else {
            throw ConfigError("unknown delta_rule: " + delta_rule);
        }
        config.poi.delta.c_delta = poi.at("c_delta").get<double>();
        config.poi.delta.k_delta = poi.at("k_delta").get<std::size_t>();
        config.poi.threshold_a = poi.at("threshold_a").get<double>();
        const std::string order = poi.at("difference_order").get<std::string>();
        if (order == "second") {
            config.poi.order = DifferenceOrder::Second;
        } else if (order == "fourth") {
            config.poi.order = DifferenceOrder::Fourth;
        } else {
            throw ConfigError("unknown difference_order: " + order);
        }
        const auto max_candidates = poi.at("max_candidates").get<std::size_t>();
        config.poi.max_candidates =
            max_candidates == 0 ? std::nullopt : std::optional<std::size_t>(max_candidates);
        config.poi.center = poi.at("center").get<bool>();

        const json& sel = j.at("selection");
        config.selection.min_subset_size = sel.at("min_subset_size").get<std::size_t>();
        config.selection.max_subset_size = sel.at("max_subset_size").get<std::size_t>();
        config.selection.max_enumerated = sel.at("max_enumerated").get<std::size_t>();
        config.k_delta_grid = j.at("k_delta_grid").get<std::vector<std::size_t>>();

        const json& kern = j.at("kernel");
        const std::string kernel_kind = kern.at("kind").get<std::string>();
        if (kernel_kind == "gaussian") {
            config.kernel.kernel = KernelKind::GaussianProduct;
        } else if (kernel_kind == "epanechnikov") {
            config.kernel.kernel = KernelKind::EpanechnikovProduct;
        } else {
            throw ConfigError("unknown kernel kind: " + kernel_kind);
        }
        const std::string bw_rule = kern.at("bandwidth_rule").get<std::string>();
        if (bw_rule == "rate") {
            config.kernel.bandwidths = BandwidthRule::rate(kern.at("c_h").get<double>());
        } else if (bw_rule == "explicit") {
            config.kernel.bandwidths = BandwidthRule::explicit_values(
                kern.at("bandwidths").get<std::vector<double>>());
        } else {
            throw ConfigError("unknown bandwidth_rule: " + bw_rule);
        }
        config.kernel.bandwidths.c_h = kern.at("c_h").get<double>();
        config.kernel.bandwidths.values = kern.at("bandwidths").get<std::vector<double>>();

        const json& sim = j.at("simulate");
        config.simulate.dgp = sim.at("dgp").get<std::string>();
        config.simulate.n = sim.at("n").get<std::size_t>();
        config.simulate.grid = grid_from_json(sim.at("grid"));
        config.simulate.process = process_from_json(sim.at("process"));
        config.simulate.model = model_from_json(sim.at("model"));

        const json& bench = j.at("benchmark");
        config.benchmark.dgp = bench.at("dgp").get<std::string>();
        config.benchmark.n_list = bench.at("n_list").get<std::vector<std::size_t>>();
        config.benchmark.p_list = bench.at("p_list").get<std::vector<std::size_t>>();
        config.benchmark.reps = bench.at("reps").get<std::size_t>();
        config.benchmark.c_delta = bench.at("c_delta").get<double>();
        config.benchmark.mase = bench.at("mase").get<bool>();
        config.benchmark.center = bench.at("center").get<bool>();

        const json& est = j.at("estimate");
        config.estimate.curves = est.at("curves").get<std::string>();
        config.estimate.responses = est.at("responses").get<std::string>();
        config.estimate.metadata = est.at("metadata").get<std::string>();
        config.estimate.standardize = est.at("standardize").get<bool>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }

    if (config.estimator != "trh" && config.estimator != "poi" && config.estimator != "both") {
        throw ConfigError("estimator must be one of trh|poi|both");
    }
    if (config.link != "logit" && config.link != "identity") {
        throw ConfigError("link must be logit or identity");
    }
    return config;
}

namespace {

void apply_env_recursive(json& node, const std::string& prefix) {
    for (auto& [key, value] : node.items()) {
        std::string env = prefix + "_";
        for (char c : key) {
            env.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        }
        if (value.is_object()) {
            apply_env_recursive(value, env);
            continue;
        }
        const char* raw = std::getenv(env.c_str());
        if (raw == nullptr) {
            continue;
        }
        json parsed;
        try {
            parsed = json::parse(raw);
        } catch (const json::exception&) {
            parsed = std::string(raw);
        }
        value = parsed;
    }
}

}  // namespace

void apply_env_overrides(nlohmann::json& config_json) {
    apply_env_recursive(config_json, "IMPACT");
}

RunConfig load_config(const std::filesystem::path& path) {
    json user;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("cannot open config file: " + path.string());
        }
        try {
            in >> user;
        } catch (const json::exception& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
    } else {
        user = json::object();
    }
    json full = config_to_json(default_config());
    full.merge_patch(user);
    apply_env_overrides(full);
    return config_from_json(full);
}

ExperimentSpec experiment_from_config(const RunConfig& config) {
    ExperimentSpec spec;
    if (!config.benchmark.dgp.empty()) {
        Dgp dgp;
        if (config.benchmark.dgp == "dgp1") {
            dgp = Dgp::Dgp1;
        } else if (config.benchmark.dgp == "dgp2") {
            dgp = Dgp::Dgp2;
        } else if (config.benchmark.dgp == "dgp3") {
            dgp = Dgp::Dgp3;
        } else if (config.benchmark.dgp == "dgp4") {
            dgp = Dgp::Dgp4;
        } else if (config.benchmark.dgp == "dgp5") {
            dgp = Dgp::Dgp5;
        } else {
            throw ConfigError("unknown dgp: " + config.benchmark.dgp);
        }
        spec = ExperimentSpec::for_dgp(dgp);
    } else {
        spec.process = config.simulate.process;
        spec.model = config.simulate.model;
        spec.domain_a = config.simulate.grid.a;
        spec.domain_b = config.simulate.grid.b;
    }
    spec.n_list = config.benchmark.n_list;
    spec.p_list = config.benchmark.p_list;
    spec.reps = config.benchmark.reps;
    if (config.benchmark.c_delta > 0.0) {
        spec.c_delta = config.benchmark.c_delta;
    }
    spec.seed = config.seed;
    spec.threads = config.threads;
    spec.run_trh = config.estimator == "trh" || config.estimator == "both";
    spec.run_poi = config.estimator == "poi" || config.estimator == "both";
    spec.kernel = config.kernel;
    spec.compute_mase = config.benchmark.mase;
    spec.limits = config.selection;
    spec.center_curves = config.benchmark.center;
    if (!config.k_delta_grid.empty()) {
        spec.k_delta_grid = config.k_delta_grid;
    }
    return spec;
}

// --- reports -----------------------------------------------------------------

namespace {

json aggregates_to_json(const CellAggregates& agg) {
    json j;
    j["reps"] = agg.reps;
    j["p_s_correct"] = agg.p_s_correct;
    j["mse_per_tau_matched"] = agg.mse_per_tau_matched;
    j["mse_per_tau_penalized"] = agg.mse_per_tau_penalized;
    j["avg_mse_matched"] = agg.avg_mse_matched;
    j["avg_mse_penalized"] = agg.avg_mse_penalized;
    j["mase"] = agg.mase;
    j["unmatched_count"] = agg.unmatched_count;
    j["failure_count"] = agg.failure_count;
    j["coef_sample_count"] = agg.coef_sample_count;
    json quantiles = json::array();
    for (const auto& q : agg.coef_quantiles) {
        quantiles.push_back({{"q10", q[0]}, {"q25", q[1]}, {"q50", q[2]}, {"q75", q[3]},
                             {"q90", q[4]}});
    }
    j["coef_quantiles"] = quantiles;
    return j;
}

std::string hash_hex(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

nlohmann::json report_to_json(const McReport& report, const ExperimentSpec& spec) {
    json j;
    j["metadata"] = {{"spec_hash", hash_hex(report.spec_hash)},
                     {"seed", report.seed},
                     {"runtime_seconds", report.runtime_seconds},
                     {"spec", canonical_description(spec)}};
    json cells = json::array();
    for (const CellReport& cell : report.cells) {
        json c;
        c["n"] = cell.n;
        c["p"] = cell.p;
        c["estimator"] = estimator_name(cell.estimator);
        c["aggregates"] = aggregates_to_json(cell.aggregates);
        json records = json::array();
        for (const RepRecord& rec : cell.records) {
            records.push_back({{"rep", rec.rep},
                               {"failed", rec.failed},
                               {"error", rec.error},
                               {"s_hat", rec.s_hat},
                               {"tau_err", rec.tau_err},
                               {"coef", rec.coef},
                               {"glm_converged", rec.glm_converged},
                               {"mase_contrib", rec.mase_contrib}});
        }
        c["records"] = records;
        cells.push_back(std::move(c));
    }
    j["cells"] = cells;
    return j;
}

void write_report_json(const std::filesystem::path& path, const McReport& report,
                       const ExperimentSpec& spec) {
    std::ofstream out = open_output(path);
    out << report_to_json(report, spec).dump(2) << "\n";
}

void write_report_csv(const std::filesystem::path& path, const McReport& report,
                      const ExperimentSpec& spec) {
    std::ofstream out = open_output(path);
    const std::size_t s = spec.model.s();
    out << "n,p,estimator,rep,failed,s_hat,glm_converged,mase_contrib";
    for (std::size_t j = 1; j <= s; ++j) {
        out << ",tau_err_" << j;
    }
    out << ",coef_alpha";
    for (std::size_t j = 1; j <= s; ++j) {
        out << ",coef_beta_" << j;
    }
    out << "\n";
    auto cell_or_empty = [&out](double v) {
        if (std::isnan(v)) {
            out << ",";
        } else {
            out << "," << format_double(v);
        }
    };
    for (const CellReport& cell : report.cells) {
        for (const RepRecord& rec : cell.records) {
            out << cell.n << "," << cell.p << "," << estimator_name(cell.estimator) << ","
                << rec.rep << "," << (rec.failed ? 1 : 0) << "," << rec.s_hat << ","
                << (rec.glm_converged ? 1 : 0);
            cell_or_empty(rec.mase_contrib);
            for (std::size_t j = 0; j < s; ++j) {
                cell_or_empty(rec.tau_err[j]);
            }
            for (std::size_t j = 0; j <= s; ++j) {
                cell_or_empty(rec.coef[j]);
            }
            out << "\n";
        }
    }
}

}  // namespace impact
