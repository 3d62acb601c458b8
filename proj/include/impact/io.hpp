#ifndef IMPACT_IO_HPP
#define IMPACT_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "impact/eval_harness.hpp"
#include "impact/process_sim.hpp"

namespace impact {

// Doubles rendered with 17 significant digits so emitted files are exact.
std::string format_double(double v);

// --- CSV ------------------------------------------------------------------
// Curves: header t_1..t_p, one row per subject. Responses: header y.
// Comma separated, '.' decimal, UTF-8. Parse errors carry row/column info.

void write_curves_csv(const std::filesystem::path& path, const Matrix& x);
void write_responses_csv(const std::filesystem::path& path, const std::vector<double>& y);
Matrix read_curves_csv(const std::filesystem::path& path);
std::vector<double> read_responses_csv(const std::filesystem::path& path);

void write_dataset(const std::filesystem::path& out_dir, const FunctionalDataset& data,
                   const nlohmann::json& metadata_extra);

// Grid comes from metadata.json when given, otherwise equidistant on [0,1].
FunctionalDataset read_dataset(const std::filesystem::path& curves,
                               const std::filesystem::path& responses,
                               const std::filesystem::path& metadata = {});

// --- Run configuration ------------------------------------------------------

struct SimulateSection {
    std::string dgp = "dgp2";  // dgp1..dgp5, or "" for the custom process/model below
    std::size_t n = 100;
    GridSpec grid{0.0, 1.0, 100};
    ProcessSpec process = ProcessSpec::ornstein_uhlenbeck(5.0, 3.5);
    ImpactModelSpec model;
};

struct BenchmarkSection {
    std::string dgp = "dgp2";
    std::vector<std::size_t> n_list{100};
    std::vector<std::size_t> p_list{100};
    std::size_t reps = 200;
    double c_delta = 0.0;  // 0 = the DGP default
    bool mase = true;
    bool center = true;  // pre-center simulated curves in the detection step
};

struct EstimateSection {
    std::string curves;
    std::string responses;
    std::string metadata;
    bool standardize = false;  // per-grid-point centering/scaling of the curves
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    std::size_t threads = 0;
    std::string estimator = "both";  // trh | poi | both
    std::string link = "logit";      // logit | identity
    PoiConfig poi;
    SelectionLimits selection;
    std::vector<std::size_t> k_delta_grid;  // empty = default grid
    KernelConfig kernel;
    SimulateSection simulate;
    BenchmarkSection benchmark;
    EstimateSection estimate;
};

nlohmann::json config_to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& j);

// Loads a config file, then applies IMPACT_* environment overrides. Every
// config key maps to a variable: nested keys join with '_' and upcase, e.g.
// poi.c_delta -> IMPACT_POI_C_DELTA. Values parse as JSON, else as strings.
RunConfig load_config(const std::filesystem::path& path);
RunConfig default_config();
void apply_env_overrides(nlohmann::json& config_json);

// Builds the Monte Carlo experiment from the benchmark section.
ExperimentSpec experiment_from_config(const RunConfig& config);

// Process/model (de)serialization, shared by config and dataset metadata.
nlohmann::json process_to_json(const ProcessSpec& spec);
ProcessSpec process_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const ImpactModelSpec& model);
ImpactModelSpec model_from_json(const nlohmann::json& j);

// --- Report emission --------------------------------------------------------

nlohmann::json report_to_json(const McReport& report, const ExperimentSpec& spec);
void write_report_json(const std::filesystem::path& path, const McReport& report,
                       const ExperimentSpec& spec);
// Flat CSV, one row per (cell, estimator, rep).
void write_report_csv(const std::filesystem::path& path, const McReport& report,
                      const ExperimentSpec& spec);

}  // namespace impact

#endif
