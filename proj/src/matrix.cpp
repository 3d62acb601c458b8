#include "impact/matrix.hpp"

#include <cmath>

#include "impact/errors.hpp"

namespace impact {

bool cholesky_in_place(Matrix& a) {
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) {
            d -= a(j, k) * a(j, k);
        }
        if (!(d > 0.0)) {
            return false;
        }
        const double ljj = std::sqrt(d);
        a(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) {
                s -= a(i, k) * a(j, k);
            }
            a(i, j) = s / ljj;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            a(i, j) = 0.0;
        }
    }
    return true;
}

std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b) {
    const std::size_t n = lower.rows();
    std::vector<double> x(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
        double s = x[i];
        for (std::size_t k = 0; k < i; ++k) {
            s -= lower(i, k) * x[k];
        }
        x[i] = s / lower(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = x[ii];
        for (std::size_t k = ii + 1; k < n; ++k) {
            s -= lower(k, ii) * x[k];
        }
        x[ii] = s / lower(ii, ii);
    }
    return x;
}

std::vector<double> solve_spd(const Matrix& a, std::span<const double> b) {
    Matrix factor = a;
    if (!cholesky_in_place(factor)) {
        throw NumericError("solve_spd: matrix is not positive definite");
    }
    return cholesky_solve(factor, b);
}

Matrix inverse_spd(const Matrix& a) {
    const std::size_t n = a.rows();
    Matrix factor = a;
    if (!cholesky_in_place(factor)) {
        throw NumericError("inverse_spd: matrix is not positive definite");
    }
    Matrix inv(n, n);
    std::vector<double> e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        const std::vector<double> col = cholesky_solve(factor, e);
        for (std::size_t i = 0; i < n; ++i) {
            inv(i, j) = col[i];
        }
        e[j] = 0.0;
    }
    return inv;
}

}  // namespace impact
