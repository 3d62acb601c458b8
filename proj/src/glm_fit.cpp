#include "impact/glm_fit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "impact/errors.hpp"

namespace impact {

namespace {

constexpr double kMeanClamp = 1e-12;

double clamp_probability(double mu) {
    return std::clamp(mu, kMeanClamp, 1.0 - kMeanClamp);
}

}  // namespace

double LinkSpec::mean(double eta) const {
    return kind == LinkKind::Logit ? logistic(eta) : eta;
}

double LinkSpec::mean_derivative(double eta) const {
    if (kind == LinkKind::Logit) {
        const double mu = logistic(eta);
        return mu * (1.0 - mu);
    }
    return 1.0;
}

double LinkSpec::inverse(double mu) const {
    if (kind == LinkKind::Logit) {
        const double m = clamp_probability(mu);
        return std::log(m / (1.0 - m));
    }
    return mu;
}

double LinkSpec::variance(double mu) const {
    return kind == LinkKind::Logit ? mu * (1.0 - mu) : 1.0;
}

namespace {

std::vector<double> linear_predictor(const Matrix& design, std::span<const double> beta) {
    const std::size_t n = design.rows();
    const std::size_t k = design.cols();
    std::vector<double> eta(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = design.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            s += row[j] * beta[j];
        }
        eta[i] = s;
    }
    return eta;
}

// Score U = D^T V^{-1} (y - mu) and information F = D^T V^{-1} D at beta.
void score_and_information(const Matrix& design, std::span<const double> y,
                           const LinkSpec& link, std::span<const double> beta,
                           std::vector<double>& score, Matrix& info) {
    const std::size_t n = design.rows();
    const std::size_t k = design.cols();
    score.assign(k, 0.0);
    info = Matrix(k, k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = design.row(i);
        double eta = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            eta += row[j] * beta[j];
        }
        double mu = link.mean(eta);
        double gp = link.mean_derivative(eta);
        double var = link.variance(mu);
        if (link.kind == LinkKind::Logit) {
            // Keep the weight and working residual finite at extreme etas.
            mu = clamp_probability(mu);
            var = mu * (1.0 - mu);
            gp = var;
        }
        const double resid_factor = gp / var * (y[i] - mu);
        const double weight = gp * gp / var;
        for (std::size_t j = 0; j < k; ++j) {
            score[j] += row[j] * resid_factor;
            for (std::size_t l = 0; l <= j; ++l) {
                info(j, l) += weight * row[j] * row[l];
            }
        }
    }
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t l = j + 1; l < k; ++l) {
            info(j, l) = info(l, j);
        }
    }
}

double sup_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::fabs(x));
    }
    return m;
}

}  // namespace

GlmFit fisher_scoring(const Matrix& design, std::span<const double> y, const LinkSpec& link,
                      std::span<const double> init, const FitOptions& options) {
    const std::size_t n = design.rows();
    const std::size_t k = design.cols();
    if (k == 0 || n <= k) {
        throw ConfigError("fisher_scoring: requires n > K >= 1");
    }
    if (y.size() != n) {
        throw ConfigError("fisher_scoring: response length does not match the design");
    }
    if (!init.empty() && init.size() != k) {
        throw ConfigError("fisher_scoring: init length does not match the design");
    }

    GlmFit fit;
    fit.beta.assign(k, 0.0);
    if (!init.empty()) {
        fit.beta.assign(init.begin(), init.end());
    }

    std::vector<double> score;
    Matrix info;
    for (std::size_t iter = 0; iter <= options.max_iter; ++iter) {
        score_and_information(design, y, link, fit.beta, score, info);
        fit.score_norm = sup_norm(score);
        if (fit.score_norm <= options.tol) {
            fit.converged = true;
            break;
        }
        if (iter == options.max_iter) {
            break;
        }
        Matrix factor = info;
        if (!cholesky_in_place(factor)) {
            if (iter == 0) {
                throw NumericError("fisher_scoring: information matrix is singular at the "
                                   "starting value (rank-deficient design)");
            }
            fit.converged = false;
            break;
        }
        const std::vector<double> step = cholesky_solve(factor, score);
        for (std::size_t j = 0; j < k; ++j) {
            fit.beta[j] += step[j];
        }
        fit.iterations = iter + 1;
        if (sup_norm(fit.beta) > options.beta_guard) {
            fit.converged = false;
            break;
        }
    }

    if (fit.converged) {
        fit.vcov = inverse_spd(info);
    }
    fit.loglik = log_likelihood(design, y, fit.beta, link);
    const auto [aic, bic] = information_criteria(fit.loglik, k, n);
    fit.aic = aic;
    fit.bic = bic;
    return fit;
}

double log_likelihood(const Matrix& design, std::span<const double> y,
                      std::span<const double> beta, const LinkSpec& link) {
    const std::vector<double> eta = linear_predictor(design, beta);
    double ll = 0.0;
    if (link.kind == LinkKind::Logit) {
        for (std::size_t i = 0; i < eta.size(); ++i) {
            const double mu = clamp_probability(logistic(eta[i]));
            ll += y[i] * std::log(mu) + (1.0 - y[i]) * std::log(1.0 - mu);
        }
    } else {
        for (std::size_t i = 0; i < eta.size(); ++i) {
            const double r = y[i] - eta[i];
            ll -= 0.5 * r * r;
        }
    }
    return ll;
}

double quasi_deviance(const Matrix& design, std::span<const double> y,
                      std::span<const double> beta, const LinkSpec& link) {
    const std::vector<double> eta = linear_predictor(design, beta);
    double dev = 0.0;
    if (link.kind == LinkKind::Logit) {
        // -2 int_y^mu (y-t)/(t(1-t)) dt = 2 [y log(y/mu) + (1-y) log((1-y)/(1-mu))]
        for (std::size_t i = 0; i < eta.size(); ++i) {
            const double mu = clamp_probability(logistic(eta[i]));
            const double yi = y[i];
            double term = 0.0;
            if (yi > 0.0) {
                term += yi * std::log(yi / mu);
            }
            if (yi < 1.0) {
                term += (1.0 - yi) * std::log((1.0 - yi) / (1.0 - mu));
            }
            dev += 2.0 * term;
        }
    } else {
        for (std::size_t i = 0; i < eta.size(); ++i) {
            const double r = y[i] - eta[i];
            dev += r * r;
        }
    }
    return dev;
}

std::pair<double, double> information_criteria(double loglik, std::size_t k, std::size_t n) {
    if (k < 1 || n < 1) {
        throw ConfigError("information_criteria: requires K >= 1 and n >= 1");
    }
    const double aic = 2.0 * static_cast<double>(k) - 2.0 * loglik;
    const double bic = -2.0 * loglik + static_cast<double>(k) * std::log(static_cast<double>(n));
    return {aic, bic};
}

std::vector<double> standard_errors(const GlmFit& fit) {
    if (!fit.converged) {
        throw NumericError("standard_errors: fit did not converge");
    }
    std::vector<double> se(fit.beta.size());
    for (std::size_t j = 0; j < se.size(); ++j) {
        se[j] = std::sqrt(fit.vcov(j, j));
    }
    return se;
}

std::vector<std::size_t> default_k_delta_grid(const GridSpec& grid) {
    grid.validate();
    const std::size_t k_cap = std::min(max_k_delta(DifferenceOrder::Second, grid.p),
                                       std::max<std::size_t>(2, (grid.p - 1) / 4));
    // delta spans (grid step, (b-a)/4], so the one-step lag k = 1 is excluded.
    const std::size_t k_lo = std::min<std::size_t>(2, k_cap);
    std::vector<std::size_t> ks;
    const std::size_t points = 10;
    const double log_lo = std::log(static_cast<double>(k_lo));
    const double log_hi = std::log(static_cast<double>(k_cap));
    for (std::size_t i = 0; i < points; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(points - 1);
        auto k = static_cast<std::size_t>(
            std::llround(std::exp(log_lo + f * (log_hi - log_lo))));
        k = std::clamp<std::size_t>(k, k_lo, k_cap);
        if (ks.empty() || ks.back() != k) {
            ks.push_back(k);
        }
    }
    return ks;
}

SelectionResult best_subset_over_delta(const FunctionalDataset& data,
                                       const std::vector<std::size_t>& k_delta_grid,
                                       const LinkSpec& link, const SelectionLimits& limits,
                                       const PoiConfig& poi_base) {
    data.validate();
    if (k_delta_grid.empty()) {
        throw ConfigError("best_subset_over_delta: empty delta grid");
    }
    if (limits.min_subset_size > limits.max_subset_size) {
        throw ConfigError("best_subset_over_delta: min_subset_size exceeds max_subset_size");
    }

    const std::size_t n = data.n();
    SelectionResult result;
    bool have_best = false;
    double best_bic = std::numeric_limits<double>::infinity();
    std::size_t best_size = 0;

    Matrix design(n, 1, 1.0);
    for (const std::size_t k_delta : k_delta_grid) {
        PoiConfig cfg = poi_base;
        cfg.delta = DeltaRule::explicit_k(k_delta);
        const PoiEstimate est = estimate_poi(data, cfg);
        result.delta_grid.push_back(est.delta);

        // Candidate pool, capped by the marginal standardized statistic.
        std::vector<std::size_t> pool(est.candidates.size());
        for (std::size_t i = 0; i < pool.size(); ++i) {
            pool[i] = i;
        }
        if (pool.size() > limits.max_enumerated) {
            const std::vector<double> stats =
                candidate_statistics(data, est.candidates, est.k_delta);
            std::stable_sort(pool.begin(), pool.end(), [&stats](std::size_t a, std::size_t b) {
                return stats[a] > stats[b];
            });
            pool.resize(limits.max_enumerated);
            std::sort(pool.begin(), pool.end());
        }

        const std::size_t m = pool.size();
        if (m >= 62) {
            throw ConfigError("best_subset_over_delta: candidate pool too large to enumerate");
        }
        const std::uint64_t mask_end = std::uint64_t{1} << m;
        for (std::uint64_t mask = 0; mask < mask_end; ++mask) {
            const auto size = static_cast<std::size_t>(std::popcount(mask));
            if (size < limits.min_subset_size || size > limits.max_subset_size) {
                continue;
            }
            std::vector<std::size_t> subset;
            subset.reserve(size);
            for (std::size_t bit = 0; bit < m; ++bit) {
                if (mask & (std::uint64_t{1} << bit)) {
                    subset.push_back(pool[bit]);
                }
            }

            design = Matrix(n, 1 + size, 1.0);
            for (std::size_t c = 0; c < size; ++c) {
                const std::size_t col = est.candidates[subset[c]].grid_index;
                for (std::size_t i = 0; i < n; ++i) {
                    design(i, 1 + c) = data.x(i, col);
                }
            }

            GlmFit fit;
            bool fit_ok = true;
            try {
                fit = fisher_scoring(design, data.y, link);
            } catch (const NumericError&) {
                fit_ok = false;  // rank-deficient subset, e.g. duplicated grid columns
            }
            const bool usable = fit_ok && fit.converged;
            result.trace.push_back({est.k_delta, est.delta, subset,
                                    usable ? fit.bic : std::numeric_limits<double>::quiet_NaN(),
                                    usable});
            if (!usable) {
                continue;
            }
            const bool better =
                !have_best || fit.bic < best_bic ||
                (fit.bic == best_bic &&
                 (size < best_size || (size == best_size && est.delta < result.best_delta)));
            if (better) {
                have_best = true;
                best_bic = fit.bic;
                best_size = size;
                result.best_delta = est.delta;
                result.best_k_delta = est.k_delta;
                result.best_subset = subset;
                result.best_candidates.clear();
                for (std::size_t idx : subset) {
                    result.best_candidates.push_back(est.candidates[idx]);
                }
                result.fit = std::move(fit);
            }
        }
    }

    if (!have_best) {
        // Nothing converged: report the intercept-only model with a warning flag.
        result.all_nonconverged = true;
        design = Matrix(n, 1, 1.0);
        result.fit = fisher_scoring(design, data.y, link);
        result.best_k_delta = k_delta_grid.front();
        result.best_delta = result.delta_grid.front();
        result.best_subset.clear();
        result.best_candidates.clear();
    }
    return result;
}

}  // namespace impact
