#include "impact/np_regression.hpp"

#include <cmath>
#include <limits>

#include "impact/errors.hpp"

namespace impact {

NwFit fit_nw(const FunctionalDataset& data, const std::vector<double>& taus_hat,
             const KernelConfig& config) {
    data.validate();
    const std::size_t s = taus_hat.size();
    if (s == 0) {
        throw ConfigError("fit_nw: needs at least one impact point (S >= 1)");
    }
    const std::size_t n = data.n();
    if (n < 2) {
        throw ConfigError("fit_nw: needs n >= 2");
    }

    NwFit fit;
    fit.kernel = config.kernel;
    fit.responses = data.y;
    fit.anchors = Matrix(n, s);
    for (std::size_t r = 0; r < s; ++r) {
        const std::size_t j = data.grid.nearest_index(taus_hat[r]);
        for (std::size_t i = 0; i < n; ++i) {
            fit.anchors(i, r) = data.x(i, j);
        }
    }

    if (config.bandwidths.kind == BandwidthRule::Kind::Explicit) {
        if (config.bandwidths.values.size() != s) {
            throw ConfigError("fit_nw: explicit bandwidth count does not match S");
        }
        fit.bandwidths = config.bandwidths.values;
    } else {
        if (!(config.bandwidths.c_h > 0.0)) {
            throw ConfigError("fit_nw: c_h must be positive");
        }
        const double rate =
            std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(s) + 4.0));
        fit.bandwidths.resize(s);
        for (std::size_t r = 0; r < s; ++r) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                mean += fit.anchors(i, r);
            }
            mean /= static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = fit.anchors(i, r) - mean;
                ss += d * d;
            }
            const double sd = std::sqrt(ss / static_cast<double>(n - 1));
            fit.bandwidths[r] = config.bandwidths.c_h * sd * rate;
        }
    }
    for (double h : fit.bandwidths) {
        if (!(h > 0.0)) {
            throw ConfigError("fit_nw: resolved bandwidths must be strictly positive");
        }
    }
    return fit;
}

double predict_nw(const NwFit& fit, std::span<const double> query) {
    const std::size_t n = fit.anchors.rows();
    const std::size_t s = fit.anchors.cols();
    if (query.size() != s) {
        throw ConfigError("predict_nw: query dimension does not match S");
    }

    // Product kernel; normalizing constants cancel in the ratio and are omitted.
    double weight_sum = 0.0;
    double weighted_y = 0.0;
    double nearest_dist_sq = std::numeric_limits<double>::infinity();
    std::size_t nearest = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double w = 1.0;
        double dist_sq = 0.0;
        for (std::size_t r = 0; r < s; ++r) {
            const double d = fit.anchors(i, r) - query[r];
            dist_sq += d * d;
            const double u = d / fit.bandwidths[r];
            if (fit.kernel == KernelKind::GaussianProduct) {
                w *= std::exp(-0.5 * u * u);
            } else {
                const double k = 0.75 * (1.0 - u * u);
                w *= (k > 0.0) ? k : 0.0;
            }
        }
        weight_sum += w;
        weighted_y += w * fit.responses[i];
        if (dist_sq < nearest_dist_sq) {
            nearest_dist_sq = dist_sq;
            nearest = i;
        }
    }
    if (!(weight_sum > 0.0)) {
        return fit.responses[nearest];
    }
    return weighted_y / weight_sum;
}

double mase(const std::vector<std::vector<double>>& predictions,
            const std::vector<std::vector<double>>& truths) {
    if (predictions.size() != truths.size() || predictions.empty()) {
        throw ConfigError("mase: replication counts differ or are empty");
    }
    double total = 0.0;
    for (std::size_t r = 0; r < predictions.size(); ++r) {
        const auto& pred = predictions[r];
        const auto& truth = truths[r];
        if (pred.size() != truth.size() || pred.empty()) {
            throw ConfigError("mase: prediction/truth length mismatch in a replication");
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double e = truth[i] - pred[i];
            sum += e * e;
        }
        total += sum / static_cast<double>(pred.size());
    }
    return total / static_cast<double>(predictions.size());
}

}  // namespace impact
