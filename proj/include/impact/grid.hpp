#ifndef IMPACT_GRID_HPP
#define IMPACT_GRID_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "impact/errors.hpp"

namespace impact {

// Equidistant observation grid t_j = a + j (b-a)/(p-1), j = 0..p-1,
// with t_0 = a and t_{p-1} = b exactly.
struct GridSpec {
    double a = 0.0;
    double b = 1.0;
    std::size_t p = 0;

    void validate() const {
        if (!(a < b)) {
            throw ConfigError("GridSpec: requires a < b");
        }
        if (p < 3) {
            throw ConfigError("GridSpec: requires p >= 3");
        }
    }

    [[nodiscard]] double step() const { return (b - a) / static_cast<double>(p - 1); }

    [[nodiscard]] double point(std::size_t j) const {
        if (j + 1 == p) {
            return b;
        }
        return a + static_cast<double>(j) * (b - a) / static_cast<double>(p - 1);
    }

    [[nodiscard]] std::vector<double> points() const {
        std::vector<double> t(p);
        for (std::size_t j = 0; j < p; ++j) {
            t[j] = point(j);
        }
        return t;
    }

    // Nearest grid index to x; equidistant ties resolve to the smaller index.
    [[nodiscard]] std::size_t nearest_index(double x) const {
        if (x <= a) {
            return 0;
        }
        if (x >= b) {
            return p - 1;
        }
        const double pos = (x - a) / step();
        auto lo = static_cast<std::size_t>(std::floor(pos));
        if (lo >= p - 1) {
            lo = p - 2;
        }
        const double d_lo = std::fabs(x - point(lo));
        const double d_hi = std::fabs(point(lo + 1) - x);
        return (d_lo <= d_hi) ? lo : lo + 1;
    }

    bool operator==(const GridSpec&) const = default;
};

}  // namespace impact

#endif
