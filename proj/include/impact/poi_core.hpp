#ifndef IMPACT_POI_CORE_HPP
#define IMPACT_POI_CORE_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "impact/process_sim.hpp"

namespace impact {

// A = sqrt(2 sqrt(3)), the practical threshold constant.
inline const double kDefaultThresholdA = std::sqrt(2.0 * std::sqrt(3.0));

enum class DifferenceOrder { Second, Fourth };

// Choice of delta: either an explicit lattice multiple k_delta, or the rate
// rule delta = c_delta * n^{-1/2} rounded to the nearest admissible multiple
// of the grid step (k_delta = 0 rounds up to 1).
struct DeltaRule {
    enum class Kind { Explicit, Rate };
    Kind kind = Kind::Rate;
    std::size_t k_delta = 1;
    double c_delta = 1.5;

    static DeltaRule explicit_k(std::size_t k) { return {Kind::Explicit, k, 0.0}; }
    static DeltaRule rate(double c) { return {Kind::Rate, 0, c}; }
};

struct PoiConfig {
    DeltaRule delta;
    double threshold_a = kDefaultThresholdA;
    DifferenceOrder order = DifferenceOrder::Second;
    std::optional<std::size_t> max_candidates;
    bool center = false;  // subtract the pointwise sample mean of the curves first
};

struct Candidate {
    std::size_t grid_index = 0;  // 0-based index into the grid
    double location = 0.0;       // t_j
    double score = 0.0;          // |f_zy| at extraction time
};

struct PoiEstimate {
    std::vector<Candidate> candidates;  // extraction order, scores non-increasing
    std::size_t s_hat = 0;
    std::vector<Candidate> selected;  // first s_hat candidates
    double lambda = 0.0;
    std::vector<double> f_xy;  // length p
    std::vector<double> f_zy;  // over J_delta
    std::size_t f_zy_offset = 0;  // grid index of f_zy.front()
    double delta = 0.0;
    std::size_t k_delta = 0;
};

// Empirical cross-moment f_xy(t_j) = n^{-1} sum_i X_i(t_j) Y_i, no centering.
std::vector<double> cross_covariance(const FunctionalDataset& data);

struct DifferenceResult {
    std::vector<double> values;
    std::size_t offset = 0;  // grid index corresponding to values.front()
};

// Central difference transform over the interior index set J_delta.
// Second: f(j) - (f(j-k) + f(j+k))/2, length p - 2k.
// Fourth: f(j) - 2/3 (f(j-k) + f(j+k)) + 1/6 (f(j-2k) + f(j+2k)), length p - 4k.
DifferenceResult difference_transform(std::span<const double> f_xy, std::size_t k_delta,
                                      DifferenceOrder order);

// Iterative arg-max extraction with exclusion half-width sqrt(delta)/2.
// Ties break toward the smaller grid index.
std::vector<Candidate> extract_candidates(const DifferenceResult& f_zy, const GridSpec& grid,
                                          double delta,
                                          std::optional<std::size_t> max_candidates = {});

// lambda = A (sqrt(mean(Y^4)) log((b-a)/delta) / n)^{1/2}.
double threshold_lambda(const FunctionalDataset& data, double delta, double threshold_a);

// Number of leading candidates whose standardized |mean(Z Y)| statistic stays
// at or above lambda; a zero denominator counts as below threshold.
std::size_t select_s_hat(const FunctionalDataset& data, const std::vector<Candidate>& candidates,
                         std::size_t k_delta, double lambda);

// Standardized |mean(Z Y)| / sqrt(mean(Z^2)) per candidate (NaN when the
// denominator degenerates).
std::vector<double> candidate_statistics(const FunctionalDataset& data,
                                         const std::vector<Candidate>& candidates,
                                         std::size_t k_delta);

// Resolves the delta rule to a lattice multiple admissible for the order.
std::size_t resolve_k_delta(const DeltaRule& rule, DifferenceOrder order, std::size_t n,
                            const GridSpec& grid);

// Largest admissible k_delta for the order on this grid.
std::size_t max_k_delta(DifferenceOrder order, std::size_t p);

PoiEstimate estimate_poi(const FunctionalDataset& data, const PoiConfig& config);

// Pointwise-mean-centered copy of the curves.
FunctionalDataset centered(const FunctionalDataset& data);

}  // namespace impact

#endif
