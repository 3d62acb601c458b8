#ifndef IMPACT_MATRIX_HPP
#define IMPACT_MATRIX_HPP

#include <cstddef>
#include <span>
#include <vector>

namespace impact {

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    [[nodiscard]] std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    [[nodiscard]] std::vector<double>& data() { return data_; }
    [[nodiscard]] const std::vector<double>& data() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// In-place lower Cholesky factorization. Returns false on a non-positive pivot
// (matrix not numerically positive definite); the upper triangle is zeroed on success.
bool cholesky_in_place(Matrix& a);

// Solves A x = b for symmetric positive definite A via Cholesky.
// Throws NumericError if the factorization fails.
std::vector<double> solve_spd(const Matrix& a, std::span<const double> b);

// Inverse of a symmetric positive definite matrix. Throws NumericError on failure.
Matrix inverse_spd(const Matrix& a);

// Forward/back substitution against a lower Cholesky factor: solves L L^T x = b.
std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b);

}  // namespace impact

#endif
