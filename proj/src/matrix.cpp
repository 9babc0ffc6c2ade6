#include "ecorr/matrix.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "ecorr/linalg.hpp"
#include "ecorr/util.hpp"

namespace ecorr {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows * cols, ErrorKind::InvalidInput, "matrix data length does not match shape");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    require(rows_ == other.rows_ && cols_ == other.cols_, ErrorKind::InvalidInput, "shape mismatch in +");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require(rows_ == other.rows_ && cols_ == other.cols_, ErrorKind::InvalidInput, "shape mismatch in -");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix operator*(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), ErrorKind::InvalidInput, "shape mismatch in matrix product");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

std::vector<double> operator*(const Matrix& a, std::span<const double> x) {
    require(a.cols() == x.size(), ErrorKind::InvalidInput, "shape mismatch in matrix-vector product");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return std::sqrt(s);
}

double frobenius_distance(const Matrix& a, const Matrix& b) { return frobenius_norm(a - b); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::InvalidInput, "shape mismatch");
    double m = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
    return m;
}

SymmetricMatrix::SymmetricMatrix(std::size_t dim, double fill) : m_(dim, dim, fill) {
    require(dim >= 2, ErrorKind::InvalidInput, "symmetric matrix needs dim >= 2");
}

SymmetricMatrix::SymmetricMatrix(Matrix m) : m_(std::move(m)) {
    require(m_.square(), ErrorKind::InvalidInput, "symmetric matrix must be square");
    require(m_.rows() >= 2, ErrorKind::InvalidInput, "symmetric matrix needs dim >= 2");
    for (std::size_t i = 0; i < m_.rows(); ++i)
        for (std::size_t j = i + 1; j < m_.cols(); ++j)
            if (!(m_(i, j) == m_(j, i)) && !(std::isnan(m_(i, j)) && std::isnan(m_(j, i))))
                fail(ErrorKind::InvalidInput,
                     "matrix is not symmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
}

SymmetricMatrix SymmetricMatrix::symmetrized(const Matrix& m) {
    require(m.square(), ErrorKind::InvalidInput, "symmetrize needs a square matrix");
    SymmetricMatrix s(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        s.m_(i, i) = m(i, i);
        for (std::size_t j = i + 1; j < m.rows(); ++j) s.set(i, j, 0.5 * (m(i, j) + m(j, i)));
    }
    return s;
}

SymmetricMatrix SymmetricMatrix::identity(std::size_t dim) { return SymmetricMatrix(Matrix::identity(dim)); }

CorrelationMatrix::CorrelationMatrix(SymmetricMatrix s, double tol) : s_(std::move(s)) {
    const auto report = validate(s_, tol);
    if (!report.is_valid) {
        std::string what = "not a correlation matrix:";
        for (auto f : report.failures) {
            switch (f) {
                case ValidationFailure::Diagonal: what += " Diagonal"; break;
                case ValidationFailure::Range: what += " Range"; break;
                case ValidationFailure::PSD: what += " PSD"; break;
                case ValidationFailure::Asymmetry: what += " Asymmetry"; break;
            }
        }
        fail(ErrorKind::InvalidInput, what);
    }
}

CorrelationMatrix CorrelationMatrix::identity(std::size_t dim) {
    return CorrelationMatrix(SymmetricMatrix::identity(dim));
}

CovarianceMatrix::CovarianceMatrix(SymmetricMatrix s) : s_(std::move(s)) {
    require(s_.matrix().all_finite(), ErrorKind::InvalidInput, "covariance has non-finite entries");
    if (!try_cholesky(s_)) fail(ErrorKind::NotPositiveDefinite, "covariance matrix is not positive definite");
}

SymmetricMatrix covariance_to_correlation(const SymmetricMatrix& cov) {
    const std::size_t n = cov.dim();
    std::vector<double> sd(n);
    for (std::size_t i = 0; i < n; ++i) {
        require(cov(i, i) > 0.0, ErrorKind::InvalidInput, "non-positive variance");
        sd[i] = std::sqrt(cov(i, i));
    }
    SymmetricMatrix c(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.set(i, i, 1.0);
        for (std::size_t j = i + 1; j < n; ++j) c.set(i, j, cov(i, j) / (sd[i] * sd[j]));
    }
    return c;
}

std::size_t triangle_size(std::size_t dim) { return dim * (dim - 1) / 2; }

std::vector<double> lower_triangle(const SymmetricMatrix& m) {
    std::vector<double> tri;
    tri.reserve(triangle_size(m.dim()));
    for (std::size_t i = 1; i < m.dim(); ++i)
        for (std::size_t j = 0; j < i; ++j) tri.push_back(m(i, j));
    return tri;
}

SymmetricMatrix from_lower_triangle(std::span<const double> tri, std::size_t dim, double diag) {
    require(tri.size() == triangle_size(dim), ErrorKind::InvalidInput, "triangle length does not match dim");
    SymmetricMatrix m(dim);
    std::size_t k = 0;
    for (std::size_t i = 0; i < dim; ++i) {
        m.set(i, i, diag);
        for (std::size_t j = 0; j < i; ++j) m.set(i, j, tri[k++]);
    }
    return m;
}

Matrix parse_matrix_csv(std::string_view text) {
    std::vector<double> values;
    std::size_t cols = 0, rows = 0, line_no = 0, pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        std::size_t count = 0, start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            std::string_view cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
            while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
            while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
                fail(ErrorKind::ParseError, "matrix csv line " + std::to_string(line_no) + ": not a number '" +
                                                std::string(cell) + "'");
            values.push_back(v);
            ++count;
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (rows == 0) cols = count;
        if (count != cols)
            fail(ErrorKind::ParseError, "matrix csv line " + std::to_string(line_no) + ": expected " +
                                            std::to_string(cols) + " columns, found " + std::to_string(count));
        ++rows;
    }
    require(rows > 0, ErrorKind::ParseError, "matrix csv is empty");
    return Matrix(rows, cols, std::move(values));
}

std::string format_matrix_csv(const Matrix& m) {
    std::string out;
    char buf[32];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            const auto r = std::to_chars(buf, buf + sizeof buf, m(i, j));
            out.append(buf, r.ptr);
        }
        out += '\n';
    }
    return out;
}

Matrix read_matrix_csv(const std::filesystem::path& path) { return parse_matrix_csv(read_file(path)); }

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) { write_file(path, format_matrix_csv(m)); }

}  // namespace ecorr
