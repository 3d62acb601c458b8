#include "impact/poi_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "impact/errors.hpp"

namespace impact {

std::vector<double> cross_covariance(const FunctionalDataset& data) {
    data.validate();
    const std::size_t n = data.n();
    const std::size_t p = data.p();
    std::vector<double> f_xy(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double yi = data.y[i];
        const auto row = data.x.row(i);
        for (std::size_t j = 0; j < p; ++j) {
            f_xy[j] += row[j] * yi;
        }
    }
    for (double& v : f_xy) {
        v /= static_cast<double>(n);
    }
    return f_xy;
}

std::size_t max_k_delta(DifferenceOrder order, std::size_t p) {
    // Second: 1 <= k < (p-1)/2. Fourth: 1 <= 2k < (p-1)/2.
    const double bound = (static_cast<double>(p) - 1.0) / 2.0;
    std::size_t k = 0;
    if (order == DifferenceOrder::Second) {
        k = static_cast<std::size_t>(std::ceil(bound)) - 1;
        while (k >= 1 && !(static_cast<double>(k) < bound)) {
            --k;
        }
    } else {
        k = static_cast<std::size_t>(std::ceil(bound / 2.0)) - 1;
        while (k >= 1 && !(2.0 * static_cast<double>(k) < bound)) {
            --k;
        }
    }
    if (k < 1) {
        throw ConfigError("max_k_delta: grid too short for the difference order");
    }
    return k;
}

DifferenceResult difference_transform(std::span<const double> f_xy, std::size_t k_delta,
                                      DifferenceOrder order) {
    const std::size_t p = f_xy.size();
    if (p < 3) {
        throw ConfigError("difference_transform: needs at least 3 grid points");
    }
    const double bound = (static_cast<double>(p) - 1.0) / 2.0;
    const bool admissible =
        order == DifferenceOrder::Second
            ? (k_delta >= 1 && static_cast<double>(k_delta) < bound)
            : (k_delta >= 1 && 2.0 * static_cast<double>(k_delta) < bound);
    if (!admissible) {
        throw ConfigError("difference_transform: inadmissible k_delta for this order");
    }

    DifferenceResult out;
    if (order == DifferenceOrder::Second) {
        out.offset = k_delta;
        out.values.resize(p - 2 * k_delta);
        for (std::size_t j = k_delta; j + k_delta < p; ++j) {
            out.values[j - k_delta] = f_xy[j] - 0.5 * (f_xy[j - k_delta] + f_xy[j + k_delta]);
        }
    } else {
        out.offset = 2 * k_delta;
        out.values.resize(p - 4 * k_delta);
        for (std::size_t j = 2 * k_delta; j + 2 * k_delta < p; ++j) {
            out.values[j - 2 * k_delta] =
                f_xy[j] - (2.0 / 3.0) * (f_xy[j - k_delta] + f_xy[j + k_delta]) +
                (1.0 / 6.0) * (f_xy[j - 2 * k_delta] + f_xy[j + 2 * k_delta]);
        }
    }
    return out;
}

std::vector<Candidate> extract_candidates(const DifferenceResult& f_zy, const GridSpec& grid,
                                          double delta,
                                          std::optional<std::size_t> max_candidates) {
    if (f_zy.values.empty()) {
        throw ConfigError("extract_candidates: empty f_zy");
    }
    const double half_width = std::sqrt(delta) / 2.0;
    std::vector<bool> alive(f_zy.values.size(), true);
    std::size_t remaining = f_zy.values.size();

    std::vector<Candidate> candidates;
    while (remaining > 0) {
        if (max_candidates && candidates.size() >= *max_candidates) {
            break;
        }
        std::size_t best = f_zy.values.size();
        double best_abs = -1.0;
        for (std::size_t idx = 0; idx < f_zy.values.size(); ++idx) {
            if (!alive[idx]) {
                continue;
            }
            const double a = std::fabs(f_zy.values[idx]);
            if (a > best_abs) {
                best_abs = a;
                best = idx;
            }
        }
        const std::size_t grid_index = f_zy.offset + best;
        const double location = grid.point(grid_index);
        candidates.push_back({grid_index, location, best_abs});
        for (std::size_t idx = 0; idx < f_zy.values.size(); ++idx) {
            if (alive[idx] &&
                std::fabs(grid.point(f_zy.offset + idx) - location) <= half_width) {
                alive[idx] = false;
                --remaining;
            }
        }
    }
    return candidates;
}

double threshold_lambda(const FunctionalDataset& data, double delta, double threshold_a) {
    if (!(delta > 0.0) || !(delta < data.grid.b - data.grid.a)) {
        throw ConfigError("threshold_lambda: delta must lie in (0, b-a)");
    }
    const std::size_t n = data.n();
    double fourth = 0.0;
    for (double yi : data.y) {
        fourth += yi * yi * yi * yi;
    }
    fourth /= static_cast<double>(n);
    const double span = data.grid.b - data.grid.a;
    return threshold_a *
           std::sqrt(std::sqrt(fourth) * std::log(span / delta) / static_cast<double>(n));
}

namespace {

// Standardized statistic |mean(Z Y)| / sqrt(mean(Z^2)) at one grid index,
// with Z the per-curve second difference at lag k_delta. A zero denominator
// (constant curves at the candidate) reports as not finite.
double standardized_statistic(const FunctionalDataset& data, std::size_t grid_index,
                              std::size_t k_delta) {
    const std::size_t n = data.n();
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = data.x.row(i);
        const double z = row[grid_index] -
                         0.5 * (row[grid_index - k_delta] + row[grid_index + k_delta]);
        num += z * data.y[i];
        den += z * z;
    }
    if (!(den > 0.0)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return std::fabs(num / static_cast<double>(n)) /
           std::sqrt(den / static_cast<double>(n));
}

}  // namespace

std::size_t select_s_hat(const FunctionalDataset& data, const std::vector<Candidate>& candidates,
                         std::size_t k_delta, double lambda) {
    const std::size_t p = data.p();
    for (std::size_t l = 0; l < candidates.size(); ++l) {
        const std::size_t j = candidates[l].grid_index;
        if (j < k_delta || j + k_delta >= p) {
            throw ConfigError("select_s_hat: candidate too close to the boundary for k_delta");
        }
        const double stat = standardized_statistic(data, j, k_delta);
        // A degenerate denominator terminates selection regardless of lambda.
        if (std::isnan(stat) || stat < lambda) {
            return l;
        }
    }
    return candidates.size();
}

std::vector<double> candidate_statistics(const FunctionalDataset& data,
                                         const std::vector<Candidate>& candidates,
                                         std::size_t k_delta) {
    std::vector<double> stats;
    stats.reserve(candidates.size());
    for (const Candidate& c : candidates) {
        if (c.grid_index < k_delta || c.grid_index + k_delta >= data.p()) {
            throw ConfigError("candidate_statistics: candidate too close to the boundary");
        }
        stats.push_back(standardized_statistic(data, c.grid_index, k_delta));
    }
    return stats;
}

std::size_t resolve_k_delta(const DeltaRule& rule, DifferenceOrder order, std::size_t n,
                            const GridSpec& grid) {
    const std::size_t k_max = max_k_delta(order, grid.p);
    if (rule.kind == DeltaRule::Kind::Explicit) {
        if (rule.k_delta < 1 || rule.k_delta > k_max) {
            throw ConfigError("resolve_k_delta: explicit k_delta is inadmissible");
        }
        return rule.k_delta;
    }
    if (!(rule.c_delta > 0.0)) {
        throw ConfigError("resolve_k_delta: c_delta must be positive");
    }
    const double delta = rule.c_delta / std::sqrt(static_cast<double>(n));
    auto k = static_cast<std::size_t>(std::llround(delta / grid.step()));
    if (k < 1) {
        k = 1;
    }
    if (k > k_max) {
        k = k_max;
    }
    return k;
}

FunctionalDataset centered(const FunctionalDataset& data) {
    FunctionalDataset out = data;
    const std::size_t n = data.n();
    const std::size_t p = data.p();
    std::vector<double> mean(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = data.x.row(i);
        for (std::size_t j = 0; j < p; ++j) {
            mean[j] += row[j];
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto row = out.x.row(i);
        for (std::size_t j = 0; j < p; ++j) {
            row[j] -= mean[j];
        }
    }
    return out;
}

PoiEstimate estimate_poi(const FunctionalDataset& data, const PoiConfig& config) {
    data.validate();
    const FunctionalDataset* active = &data;
    FunctionalDataset centered_copy;
    if (config.center) {
        centered_copy = centered(data);
        active = &centered_copy;
    }

    PoiEstimate est;
    est.k_delta = resolve_k_delta(config.delta, config.order, active->n(), active->grid);
    est.delta = static_cast<double>(est.k_delta) * active->grid.step();
    est.f_xy = cross_covariance(*active);
    DifferenceResult f_zy = difference_transform(est.f_xy, est.k_delta, config.order);
    est.candidates = extract_candidates(f_zy, active->grid, est.delta, config.max_candidates);
    est.lambda = threshold_lambda(*active, est.delta, config.threshold_a);
    est.s_hat = select_s_hat(*active, est.candidates, est.k_delta, est.lambda);
    est.selected.assign(est.candidates.begin(),
                        est.candidates.begin() + static_cast<std::ptrdiff_t>(est.s_hat));
    est.f_zy_offset = f_zy.offset;
    est.f_zy = std::move(f_zy.values);
    return est;
}

}  // namespace impact
