#ifndef IMPACT_EVAL_HARNESS_HPP
#define IMPACT_EVAL_HARNESS_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "impact/glm_fit.hpp"
#include "impact/np_regression.hpp"
#include "impact/poi_core.hpp"
#include "impact/process_sim.hpp"

namespace impact {

enum class Dgp { Dgp1 = 1, Dgp2, Dgp3, Dgp4, Dgp5 };

struct DgpDesign {
    ProcessSpec process;
    ImpactModelSpec model;
    double c_delta = 1.5;
    std::optional<std::size_t> known_s;  // DGP1: S=1 treated as known
};

DgpDesign dgp_design(Dgp dgp);

enum class EstimatorKind { Trh, Poi };

std::string estimator_name(EstimatorKind kind);

struct ExperimentSpec {
    std::optional<Dgp> dgp;  // preset; process/model below are the materialized design
    ProcessSpec process;
    ImpactModelSpec model;
    double domain_a = 0.0;
    double domain_b = 1.0;
    std::vector<std::size_t> n_list;
    std::vector<std::size_t> p_list;
    std::size_t reps = 200;
    bool run_trh = true;
    bool run_poi = false;
    double c_delta = 1.5;
    std::uint64_t seed = 1;
    std::size_t threads = 0;  // 0 = hardware concurrency
    KernelConfig kernel;
    bool compute_mase = true;
    SelectionLimits limits;
    std::optional<std::size_t> known_s;
    std::optional<std::vector<std::size_t>> k_delta_grid;  // POI search grid override
    // Subtract the pointwise sample mean before detection, enforcing the
    // centered-predictor model assumption in-sample.
    bool center_curves = true;

    static ExperimentSpec for_dgp(Dgp dgp);
    void validate() const;
};

struct RepRecord {
    std::size_t rep = 0;
    std::size_t s_hat = 0;
    std::vector<double> tau_err;    // |tau_hat - tau| per true tau, NaN if unmatched
    std::vector<double> coef;       // alpha, then beta aligned to true taus, NaN if missing
    bool glm_converged = false;
    double mase_contrib = 0.0;      // NaN when MASE is not computed
    bool failed = false;
    std::string error;
};

struct CellAggregates {
    double p_s_correct = 0.0;
    std::vector<double> mse_per_tau_matched;
    std::vector<double> mse_per_tau_penalized;
    double avg_mse_matched = 0.0;
    double avg_mse_penalized = 0.0;
    // Per coefficient: {10%, 25%, 50%, 75%, 90%} quantiles over fully matched reps.
    std::vector<std::array<double, 5>> coef_quantiles;
    std::size_t coef_sample_count = 0;
    double mase = 0.0;
    std::size_t unmatched_count = 0;
    std::size_t failure_count = 0;
    std::size_t reps = 0;
};

struct CellReport {
    std::size_t n = 0;
    std::size_t p = 0;
    EstimatorKind estimator = EstimatorKind::Trh;
    std::vector<RepRecord> records;
    CellAggregates aggregates;
};

struct McReport {
    std::vector<CellReport> cells;
    std::uint64_t spec_hash = 0;
    std::uint64_t seed = 0;
    double runtime_seconds = 0.0;
};

// Midpoint-partition matching: [a,b] is split at m_j = (tau_j + tau_{j+1})/2
// with m_0 = a and m_S = b; each true tau receives the closest candidate
// inside its interval. Returns candidate indices (the last interval is closed
// at b so an endpoint candidate stays assignable).
std::vector<std::optional<std::size_t>> match_candidates_idx(
    const std::vector<double>& taus_true, const std::vector<double>& candidates, double a,
    double b);

// Same rule, returning the matched locations.
std::vector<std::optional<double>> match_candidates(const std::vector<double>& taus_true,
                                                    const std::vector<double>& candidates,
                                                    double a, double b);

// Stable 64-bit hash of the experiment configuration (FNV-1a over a
// canonical text encoding); embedded in emitted reports.
std::uint64_t spec_hash(const ExperimentSpec& spec);
std::string canonical_description(const ExperimentSpec& spec);

// Monte Carlo driver: simulate -> estimate -> match -> fit -> record, with
// replications spread over a worker pool. Deterministic given the seed and
// independent of the worker count.
McReport run_experiment(const ExperimentSpec& spec);

// Peak-and-end-rule designs: PER-1 columns [X_i(p_abs), X_i(b)],
// PER-2 columns [X_i(p_pos), X_i(p_neg), X_i(b)]; argmax ties take the
// smallest grid index. Intercepts are not included.
std::pair<Matrix, Matrix> per_models(const FunctionalDataset& data);

struct FitQuality {
    double mcfadden_r2 = 0.0;
    double somers_dxy = 0.0;
};

// McFadden pseudo-R^2 and Somers' D_xy for a binary response; probability
// ties count as neither concordant nor discordant.
FitQuality fit_quality(std::span<const double> y, std::span<const double> fitted_probs,
                       double loglik, double null_loglik);

}  // namespace impact

#endif
