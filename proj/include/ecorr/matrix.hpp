#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <span>
#include <vector>

#include "ecorr/error.hpp"

namespace ecorr {

/// Dense row-major matrix of doubles. General-purpose workhorse; the
/// domain types below wrap it and add invariants.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    Matrix transposed() const;
    bool all_finite() const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(const Matrix& a, const Matrix& b);
std::vector<double> operator*(const Matrix& a, std::span<const double> x);

double frobenius_norm(const Matrix& m);
double frobenius_distance(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Square matrix whose storage keeps entries[i][j] == entries[j][i] exactly.
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    explicit SymmetricMatrix(std::size_t dim, double fill = 0.0);
    /// Throws InvalidInput unless `m` is square, dim >= 2 and exactly symmetric.
    explicit SymmetricMatrix(Matrix m);

    /// Averages m and m^T; for results of floating-point products that are
    /// symmetric only up to rounding.
    static SymmetricMatrix symmetrized(const Matrix& m);
    static SymmetricMatrix identity(std::size_t dim);

    std::size_t dim() const noexcept { return m_.rows(); }
    double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
    void set(std::size_t i, std::size_t j, double v) {
        m_(i, j) = v;
        m_(j, i) = v;
    }

    const Matrix& matrix() const noexcept { return m_; }
    std::span<const double> data() const noexcept { return m_.data(); }

    friend bool operator==(const SymmetricMatrix&, const SymmetricMatrix&) = default;

private:
    Matrix m_;
};

struct ValidationReport;

/// Element of the elliptope: symmetric, unit diagonal, PSD.
class CorrelationMatrix {
public:
    CorrelationMatrix() = default;
    /// Validates at `tol`; throws InvalidInput listing the failed conditions.
    explicit CorrelationMatrix(SymmetricMatrix s, double tol = 1e-8);

    static CorrelationMatrix identity(std::size_t dim);

    std::size_t dim() const noexcept { return s_.dim(); }
    double operator()(std::size_t i, std::size_t j) const { return s_(i, j); }
    const SymmetricMatrix& symmetric() const noexcept { return s_; }
    const Matrix& matrix() const noexcept { return s_.matrix(); }
    std::span<const double> data() const noexcept { return s_.data(); }

    friend bool operator==(const CorrelationMatrix&, const CorrelationMatrix&) = default;

private:
    SymmetricMatrix s_;
};

/// Strictly positive definite symmetric matrix.
class CovarianceMatrix {
public:
    CovarianceMatrix() = default;
    /// Throws NotPositiveDefinite when a Cholesky factorization fails.
    explicit CovarianceMatrix(SymmetricMatrix s);
    explicit CovarianceMatrix(const CorrelationMatrix& c) : CovarianceMatrix(c.symmetric()) {}

    std::size_t dim() const noexcept { return s_.dim(); }
    double operator()(std::size_t i, std::size_t j) const { return s_(i, j); }
    const SymmetricMatrix& symmetric() const noexcept { return s_; }
    const Matrix& matrix() const noexcept { return s_.matrix(); }

private:
    SymmetricMatrix s_;
};

/// Pearson correlation matrix of a covariance matrix.
SymmetricMatrix covariance_to_correlation(const SymmetricMatrix& cov);

/// Lower-triangle (strict, row-major i > j) entries, length dim(dim-1)/2.
std::vector<double> lower_triangle(const SymmetricMatrix& m);
SymmetricMatrix from_lower_triangle(std::span<const double> tri, std::size_t dim, double diag = 1.0);
std::size_t triangle_size(std::size_t dim);

/// Matrix text format: one row per line, comma-separated decimals, no header.
/// Blank lines and lines starting with '#' are skipped.
Matrix parse_matrix_csv(std::string_view text);
std::string format_matrix_csv(const Matrix& m);
Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

}  // namespace ecorr
