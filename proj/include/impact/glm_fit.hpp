#ifndef IMPACT_GLM_FIT_HPP
#define IMPACT_GLM_FIT_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "impact/matrix.hpp"
#include "impact/poi_core.hpp"

namespace impact {

enum class LinkKind { Logit, Identity };

// Mean function g, its derivative, inverse and the variance function
// sigma^2(mu) of the quasi-likelihood model.
struct LinkSpec {
    LinkKind kind = LinkKind::Logit;

    [[nodiscard]] double mean(double eta) const;
    [[nodiscard]] double mean_derivative(double eta) const;
    [[nodiscard]] double inverse(double mu) const;
    [[nodiscard]] double variance(double mu) const;
    [[nodiscard]] std::string name() const { return kind == LinkKind::Logit ? "logit" : "identity"; }
};

struct GlmFit {
    std::vector<double> beta;  // intercept first
    Matrix vcov;               // inverse of the estimated information
    double loglik = 0.0;       // log-likelihood (logit) or quasi-likelihood (identity)
    double aic = 0.0;
    double bic = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    double score_norm = 0.0;  // sup-norm of the score at the final beta
};

struct FitOptions {
    double tol = 1e-8;
    std::size_t max_iter = 100;
    double beta_guard = 1e3;  // separation guard on the sup-norm of beta
};

// Fisher scoring for the quasi-likelihood score equations.
// The design matrix is used as given (include an intercept column yourself).
GlmFit fisher_scoring(const Matrix& design, std::span<const double> y, const LinkSpec& link,
                      std::span<const double> init = {}, const FitOptions& options = {});

// Log-likelihood (logit: Bernoulli; identity: quasi-likelihood -RSS/2), with
// fitted means clamped away from the boundary.
double log_likelihood(const Matrix& design, std::span<const double> y,
                      std::span<const double> beta, const LinkSpec& link);

// -2 Q, the quasi-deviance; coincides with the deviance for exponential
// family links (Bernoulli for logit, Gaussian for identity).
double quasi_deviance(const Matrix& design, std::span<const double> y,
                      std::span<const double> beta, const LinkSpec& link);

// (AIC, BIC) = (2K - 2 logL, -2 logL + K log n).
std::pair<double, double> information_criteria(double loglik, std::size_t k, std::size_t n);

// Wald standard errors sqrt(diag(vcov)). Throws for non-converged fits.
std::vector<double> standard_errors(const GlmFit& fit);

struct SelectionLimits {
    std::size_t max_subset_size = 6;
    std::size_t min_subset_size = 0;  // > 0 forces at least this many impact points
    std::size_t max_enumerated = 20;  // candidate pool cap per delta
};

struct SubsetRecord {
    std::size_t k_delta = 0;
    double delta = 0.0;
    std::vector<std::size_t> subset;  // indices into that delta's candidate list
    double bic = 0.0;
    bool converged = false;
};

struct SelectionResult {
    std::vector<double> delta_grid;
    double best_delta = 0.0;
    std::size_t best_k_delta = 0;
    std::vector<std::size_t> best_subset;
    std::vector<Candidate> best_candidates;  // winning predictors, extraction metadata
    GlmFit fit;
    std::vector<SubsetRecord> trace;
    bool all_nonconverged = false;
};

// Default ~10 log-spaced k_delta values spanning (grid step, (b-a)/4].
std::vector<std::size_t> default_k_delta_grid(const GridSpec& grid);

// Best subset selection over the delta grid: for each delta the Algorithm-1
// candidates are enumerated (all subsets up to max_subset_size, intercept-only
// always included) and the global BIC minimizer wins. Ties prefer fewer
// predictors, then smaller delta.
SelectionResult best_subset_over_delta(const FunctionalDataset& data,
                                       const std::vector<std::size_t>& k_delta_grid,
                                       const LinkSpec& link, const SelectionLimits& limits = {},
                                       const PoiConfig& poi_base = {});

}  // namespace impact

#endif
