#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "impact/errors.hpp"
#include "impact/glm_fit.hpp"
#include "impact/matrix.hpp"
#include "impact/process_sim.hpp"
#include "impact/rng.hpp"

using namespace impact;

namespace {

double bernoulli_loglik(const Matrix& design, const std::vector<double>& y,
                        const std::vector<double>& beta) {
    double ll = 0.0;
    for (std::size_t i = 0; i < design.rows(); ++i) {
        double eta = 0.0;
        for (std::size_t k = 0; k < design.cols(); ++k) {
            eta += design(i, k) * beta[k];
        }
        const double mu = logistic(eta);
        ll += y[i] * std::log(mu) + (1.0 - y[i]) * std::log(1.0 - mu);
    }
    return ll;
}

// Iteratively refined grid search over the Bernoulli log-likelihood,
// independent of the scoring implementation.
std::vector<double> grid_search_mle(const Matrix& design, const std::vector<double>& y) {
    const std::size_t k = design.cols();
    std::vector<double> center(k, 0.0);
    double width = 5.0;
    for (int round = 0; round < 5; ++round) {
        std::vector<double> best = center;
        double best_ll = -std::numeric_limits<double>::infinity();
        const int steps = 20;
        std::vector<int> idx(k, 0);
        std::vector<double> point(k);
        while (true) {
            for (std::size_t d = 0; d < k; ++d) {
                point[d] = center[d] - width + 2.0 * width * idx[d] / steps;
            }
            const double ll = bernoulli_loglik(design, y, point);
            if (ll > best_ll) {
                best_ll = ll;
                best = point;
            }
            std::size_t d = 0;
            while (d < k && ++idx[d] > steps) {
                idx[d] = 0;
                ++d;
            }
            if (d == k) {
                break;
            }
        }
        center = best;
        width = 2.0 * width / steps;  // one cell each side of the best point
    }
    return center;
}

Matrix with_intercept(const std::vector<std::vector<double>>& cols, std::size_t n) {
    Matrix design(n, 1 + cols.size(), 1.0);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            design(i, 1 + c) = cols[c][i];
        }
    }
    return design;
}

FunctionalDataset simulated_dataset(std::size_t n, std::size_t p, std::uint64_t seed,
                                    const ImpactModelSpec& model) {
    const GridSpec grid{0.0, 1.0, p};
    const Matrix x = sample_paths(ProcessSpec::ornstein_uhlenbeck(5.0, 3.5), grid, n, seed);
    const ResponseDraw draw = generate_responses(x, grid, model, seed ^ 0xabcdefULL);
    return {grid, x, draw.y};
}

ImpactModelSpec null_model() {
    ImpactModelSpec m;
    m.alpha = 1.0;
    return m;
}

}  // namespace

TEST_CASE("intercept-only logit recovers log-odds of the mean") {
    const std::vector<double> y{1, 0, 1, 1, 0, 1, 1, 0, 1, 1};
    Matrix design(y.size(), 1, 1.0);
    const GlmFit fit = fisher_scoring(design, y, {LinkKind::Logit});
    REQUIRE(fit.converged);
    const double ybar = 0.7;
    CHECK(fit.beta[0] == doctest::Approx(std::log(ybar / (1.0 - ybar))).epsilon(1e-8));
    CHECK(fit.score_norm <= 1e-8);
}

TEST_CASE("logit fixture matches the grid-search maximizer coordinatewise") {
    // classes overlap in both predictors, so the MLE is interior
    const std::vector<double> x1{-1.2, 0.5, 1.3, -0.7, 2.0, -1.5, 0.3, 0.9};
    const std::vector<double> x2{0.4, -0.8, 1.1, 1.6, -0.2, -1.0, 0.8, -1.4};
    const std::vector<double> y{0, 1, 0, 1, 1, 0, 1, 0};
    const Matrix design = with_intercept({x1, x2}, y.size());
    const GlmFit fit = fisher_scoring(design, y, {LinkKind::Logit});
    REQUIRE(fit.converged);
    REQUIRE(std::fabs(fit.beta[1]) < 10.0);  // sanity: not separated
    const std::vector<double> oracle = grid_search_mle(design, y);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(std::fabs(fit.beta[k] - oracle[k]) <= 1e-3);
    }
}

TEST_CASE("identity link equals ordinary least squares") {
    RngStream rng(5);
    const std::size_t n = 40;
    std::vector<double> x(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.normal();
        y[i] = 1.0 + 2.0 * x[i] + rng.normal();
    }
    const Matrix design = with_intercept({x}, n);
    const GlmFit fit = fisher_scoring(design, y, {LinkKind::Identity});
    REQUIRE(fit.converged);
    CHECK(fit.iterations <= 2);

    // normal equations solved directly
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double nd = static_cast<double>(n);
    const double slope = (nd * sxy - sx * sy) / (nd * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / nd;
    CHECK(fit.beta[0] == doctest::Approx(intercept).epsilon(1e-12));
    CHECK(fit.beta[1] == doctest::Approx(slope).epsilon(1e-12));
}

TEST_CASE("rank-deficient designs are rejected") {
    const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    const std::vector<double> y{0, 1, 0, 1, 0, 1};
    const Matrix design = with_intercept({x, x}, y.size());  // duplicated column
    CHECK_THROWS_AS(fisher_scoring(design, y, {LinkKind::Logit}), NumericError);
}

TEST_CASE("separation guard flags runaway coefficients instead of crashing") {
    // Separated response on a tiny predictor scale forces |beta| past the
    // guard bound before the score can reach the tolerance.
    const std::vector<double> x{-0.003, -0.002, -0.001, 0.001, 0.002, 0.003};
    const std::vector<double> y{0, 0, 0, 1, 1, 1};
    const Matrix design = with_intercept({x}, y.size());
    const GlmFit fit = fisher_scoring(design, y, {LinkKind::Logit});
    CHECK(!fit.converged);
}

TEST_CASE("log-likelihood clamping and simple values") {
    // A huge slope saturates every probability; the clamp keeps logL finite.
    const std::vector<double> x{-1.0, -1.0, 1.0, 1.0};
    const std::vector<double> y{0, 0, 1, 1};
    const Matrix design = with_intercept({x}, 4);
    const std::vector<double> beta{0.0, 1e6};
    const double ll = log_likelihood(design, y, beta, {LinkKind::Logit});
    CHECK(ll == doctest::Approx(4.0 * std::log(1.0 - 1e-12)));

    // n = 1, p = 0.5, y = 1.
    Matrix one(1, 1, 1.0);
    const std::vector<double> y1{1.0};
    const std::vector<double> zero{0.0};
    CHECK(log_likelihood(one, y1, zero, {LinkKind::Logit}) ==
          doctest::Approx(std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("logit quasi-deviance equals the Bernoulli deviance identity") {
    const std::vector<double> x{-0.9, 0.1, 0.4, -0.3, 1.2};
    const std::vector<double> y{1, 0, 1, 1, 0};
    const Matrix design = with_intercept({x}, 5);
    const std::vector<double> beta{0.3, -0.7};
    const double dev = quasi_deviance(design, y, beta, {LinkKind::Logit});
    const double ll = log_likelihood(design, y, beta, {LinkKind::Logit});
    // saturated Bernoulli log-likelihood is zero for y in {0,1}
    CHECK(dev == doctest::Approx(-2.0 * ll).epsilon(1e-12));
}

TEST_CASE("identity quasi-deviance is the residual sum of squares") {
    const std::vector<double> x{0.0, 1.0, 2.0};
    const std::vector<double> y{0.5, 1.0, 2.5};
    const Matrix design = with_intercept({x}, 3);
    const std::vector<double> beta{0.25, 1.0};
    double rss = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double r = y[i] - (0.25 + x[i]);
        rss += r * r;
    }
    CHECK(quasi_deviance(design, y, beta, {LinkKind::Identity}) ==
          doctest::Approx(rss).epsilon(1e-15));
}

TEST_CASE("information criteria formulas") {
    const auto [aic, bic] = information_criteria(-36.03, 3, 65);
    // agreement up to the reference values' two-decimal rounding
    CHECK(std::fabs(aic - 78.07) <= 0.015);
    CHECK(bic == doctest::Approx(72.06 + 3.0 * std::log(65.0)).epsilon(1e-12));
    CHECK(std::fabs(bic - 84.58) <= 0.01);

    const auto [aic0, bic0] = information_criteria(0.0, 1, 1);
    CHECK(aic0 == 2.0);
    CHECK(bic0 == 0.0);

    CHECK_THROWS_AS(information_criteria(0.0, 0, 10), ConfigError);
}

TEST_CASE("standard errors: orthonormal identity-link design gives 1/sqrt(n)") {
    // Columns scaled so that X^T X = n I.
    const std::size_t n = 8;
    Matrix design(n, 2);
    const double sign1[] = {1, -1, 1, -1, 1, -1, 1, -1};
    const double sign2[] = {1, 1, -1, -1, 1, 1, -1, -1};
    std::vector<double> y(n);
    RngStream rng(3);
    for (std::size_t i = 0; i < n; ++i) {
        design(i, 0) = sign1[i];
        design(i, 1) = sign2[i];
        y[i] = rng.normal();
    }
    const GlmFit fit = fisher_scoring(design, y, {LinkKind::Identity});
    REQUIRE(fit.converged);
    const std::vector<double> se = standard_errors(fit);
    for (double s : se) {
        CHECK(s == doctest::Approx(1.0 / std::sqrt(static_cast<double>(n))).epsilon(1e-12));
    }
}

TEST_CASE("standard errors match a finite-difference Hessian oracle") {
    const std::vector<double> x1{-1.2, 0.5, 1.3, -0.7, 2.0, -1.5, 0.3, 0.9, -0.4, 1.8};
    const std::vector<double> x2{0.4, -0.8, 1.1, 1.6, -0.2, -1.0, 0.8, -1.4, 0.6, -0.9};
    const std::vector<double> y{0, 1, 1, 0, 1, 0, 0, 1, 1, 0};
    const Matrix design = with_intercept({x1, x2}, y.size());
    const GlmFit fit = fisher_scoring(design, y, {LinkKind::Logit});
    REQUIRE(fit.converged);

    const std::size_t k = 3;
    const double h = 1e-5;
    Matrix neg_hessian(k, k);
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            std::vector<double> bpp = fit.beta, bpm = fit.beta, bmp = fit.beta, bmm = fit.beta;
            bpp[a] += h;
            bpp[b] += h;
            bpm[a] += h;
            bpm[b] -= h;
            bmp[a] -= h;
            bmp[b] += h;
            bmm[a] -= h;
            bmm[b] -= h;
            neg_hessian(a, b) =
                -(bernoulli_loglik(design, y, bpp) - bernoulli_loglik(design, y, bpm) -
                  bernoulli_loglik(design, y, bmp) + bernoulli_loglik(design, y, bmm)) /
                (4.0 * h * h);
        }
    }
    const Matrix vcov_oracle = inverse_spd(neg_hessian);
    const std::vector<double> se = standard_errors(fit);
    for (std::size_t a = 0; a < k; ++a) {
        const double oracle = std::sqrt(vcov_oracle(a, a));
        CHECK(std::fabs(se[a] - oracle) / oracle <= 1e-3);
    }
}

TEST_CASE("non-converged fits refuse to report standard errors") {
    GlmFit fit;
    fit.converged = false;
    CHECK_THROWS_AS(standard_errors(fit), NumericError);
}

TEST_CASE("scaling a predictor rescales its standard error (identity link)") {
    RngStream rng(11);
    const std::size_t n = 30;
    std::vector<double> x(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.normal();
        y[i] = 0.4 * x[i] + rng.normal();
    }
    const double c = 4.0;
    std::vector<double> xc(n);
    for (std::size_t i = 0; i < n; ++i) {
        xc[i] = c * x[i];
    }
    const GlmFit fit = fisher_scoring(with_intercept({x}, n), y, {LinkKind::Identity});
    const GlmFit fit_scaled = fisher_scoring(with_intercept({xc}, n), y, {LinkKind::Identity});
    const double se = standard_errors(fit)[1];
    const double se_scaled = standard_errors(fit_scaled)[1];
    CHECK(se_scaled == doctest::Approx(se / c).epsilon(1e-10));
}

TEST_CASE("affine shift of a predictor only moves the intercept") {
    RngStream rng(17);
    const std::size_t n = 60;
    std::vector<double> x(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.normal();
        y[i] = rng.bernoulli(logistic(0.5 + x[i])) ? 1.0 : 0.0;
    }
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) {
        shifted[i] = x[i] + 2.0;
    }
    const GlmFit fit = fisher_scoring(with_intercept({x}, n), y, {LinkKind::Logit});
    const GlmFit fit_shifted =
        fisher_scoring(with_intercept({shifted}, n), y, {LinkKind::Logit});
    REQUIRE(fit.converged);
    REQUIRE(fit_shifted.converged);
    CHECK(fit.loglik == doctest::Approx(fit_shifted.loglik).epsilon(1e-8));
    CHECK(fit_shifted.beta[1] == doctest::Approx(fit.beta[1]).epsilon(1e-6));
    CHECK(fit_shifted.beta[0] ==
          doctest::Approx(fit.beta[0] - 2.0 * fit.beta[1]).epsilon(1e-6));
}

TEST_CASE("BIC penalty: larger subsets never decrease the log-likelihood") {
    const FunctionalDataset data = simulated_dataset(120, 30, 21, null_model());
    SelectionLimits limits;
    limits.max_subset_size = 3;
    const SelectionResult sel = best_subset_over_delta(data, {3}, {LinkKind::Logit}, limits);

    double empty_bic = 0.0;
    for (const SubsetRecord& rec : sel.trace) {
        if (rec.subset.empty()) {
            empty_bic = rec.bic;
        }
    }
    const double log_n = std::log(120.0);
    const double empty_neg2 = empty_bic - log_n;
    for (const SubsetRecord& rec : sel.trace) {
        if (!rec.converged) {
            continue;
        }
        const double neg2_loglik =
            rec.bic - log_n * (1.0 + static_cast<double>(rec.subset.size()));
        CHECK(neg2_loglik <= empty_neg2 + 1e-6);
    }
}

TEST_CASE("subset enumeration visits every subset up to the cap") {
    const FunctionalDataset data = simulated_dataset(80, 40, 31, null_model());
    PoiConfig base;
    base.delta = DeltaRule::explicit_k(4);
    const PoiEstimate est = estimate_poi(data, base);
    const std::size_t m = est.candidates.size();
    REQUIRE(m >= 2);
    REQUIRE(m <= 10);

    SelectionLimits limits;
    limits.max_subset_size = m;  // no effective size cap: all 2^m subsets
    const SelectionResult sel = best_subset_over_delta(data, {4}, {LinkKind::Logit}, limits);
    CHECK(sel.trace.size() == (std::size_t{1} << m));

    // fit.bic equals the minimum over converged trace records
    double min_bic = std::numeric_limits<double>::infinity();
    for (const SubsetRecord& rec : sel.trace) {
        if (rec.converged) {
            min_bic = std::min(min_bic, rec.bic);
        }
    }
    CHECK(sel.fit.bic == min_bic);
}

TEST_CASE("single delta, single candidate reduces to a two-model comparison") {
    const FunctionalDataset data = simulated_dataset(60, 20, 41, null_model());
    PoiConfig base;
    base.max_candidates = 1;
    const SelectionResult sel =
        best_subset_over_delta(data, {2}, {LinkKind::Logit}, SelectionLimits{}, base);
    REQUIRE(sel.trace.size() == 2);
    const double best = std::min(sel.trace[0].bic, sel.trace[1].bic);
    CHECK(sel.fit.bic == best);
}

TEST_CASE("null data: BIC selects the empty subset in most replications") {
    const std::size_t reps = 200;
    std::size_t empty_count = 0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const FunctionalDataset data = simulated_dataset(1000, 50, 1000 + rep, null_model());
        const SelectionResult sel =
            best_subset_over_delta(data, default_k_delta_grid(data.grid), {LinkKind::Logit});
        if (sel.best_subset.empty()) {
            ++empty_count;
        }
    }
    CHECK(static_cast<double>(empty_count) / static_cast<double>(reps) >= 0.9);
}

TEST_CASE("DGP1 with subset size capped at one localizes tau") {
    ImpactModelSpec dgp1;
    dgp1.alpha = 1.0;
    dgp1.betas = {4.0};
    dgp1.taus = {0.5};
    const std::size_t reps = 100;
    std::size_t hits = 0;
    SelectionLimits limits;
    limits.min_subset_size = 1;
    limits.max_subset_size = 1;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const FunctionalDataset data = simulated_dataset(1000, 100, 5000 + rep, dgp1);
        const SelectionResult sel = best_subset_over_delta(
            data, default_k_delta_grid(data.grid), {LinkKind::Logit}, limits);
        REQUIRE(sel.best_candidates.size() == 1);
        if (std::fabs(sel.best_candidates[0].location - 0.5) <= 2.0 * data.grid.step()) {
            ++hits;
        }
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(reps) >= 0.95);
}
