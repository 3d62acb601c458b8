#ifndef IMPACT_NP_REGRESSION_HPP
#define IMPACT_NP_REGRESSION_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "impact/matrix.hpp"
#include "impact/process_sim.hpp"

namespace impact {

enum class KernelKind { GaussianProduct, EpanechnikovProduct };

// Bandwidths: explicit per coordinate, or the rate rule
// h_r = c_h * sd(X(tau_r)) * n^{-1/(S+4)}.
struct BandwidthRule {
    enum class Kind { Explicit, Rate };
    Kind kind = Kind::Rate;
    std::vector<double> values;
    double c_h = 1.0;

    static BandwidthRule explicit_values(std::vector<double> h) {
        return {Kind::Explicit, std::move(h), 0.0};
    }
    static BandwidthRule rate(double c_h) { return {Kind::Rate, {}, c_h}; }
};

struct KernelConfig {
    KernelKind kernel = KernelKind::GaussianProduct;
    BandwidthRule bandwidths;
};

struct NwFit {
    Matrix anchors;                 // n x S predictor values X_i(tau_r)
    std::vector<double> responses;  // length n
    std::vector<double> bandwidths;
    KernelKind kernel = KernelKind::GaussianProduct;
};

// Stores anchors (curve values at the grid points nearest each tau) and the
// resolved bandwidths. Throws for S = 0; the caller should fall back to the
// sample mean in that case.
NwFit fit_nw(const FunctionalDataset& data, const std::vector<double>& taus_hat,
             const KernelConfig& config);

// Kernel-weighted average at the query point; if every weight underflows to
// zero the response of the nearest anchor is returned.
double predict_nw(const NwFit& fit, std::span<const double> query);

// Mean Average Squared Error over replications:
// R^{-1} sum_reps n^{-1} sum_i (truth - prediction)^2.
double mase(const std::vector<std::vector<double>>& predictions,
            const std::vector<std::vector<double>>& truths);

}  // namespace impact

#endif
