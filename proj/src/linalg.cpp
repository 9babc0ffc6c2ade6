#include "ecorr/linalg.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <string>

namespace ecorr {

namespace {

constexpr double kJacobiTol = 1e-12;
constexpr int kJacobiMaxSweeps = 100;

ValidationReport validate_entries(const Matrix& m, double tol, bool check_symmetry) {
    require(tol > 0.0, ErrorKind::InvalidInput, "validation tolerance must be positive");
    require(m.square() && m.rows() >= 2, ErrorKind::InvalidInput, "validate needs a square matrix with dim >= 2");
    require(m.all_finite(), ErrorKind::InvalidInput, "matrix has non-finite entries");

    ValidationReport r;
    const std::size_t n = m.rows();
    bool asymmetric = false;
    for (std::size_t i = 0; i < n; ++i) {
        r.diag_max_dev = std::max(r.diag_max_dev, std::abs(m(i, i) - 1.0));
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            r.offdiag_max_abs = std::max(r.offdiag_max_abs, std::abs(m(i, j)));
            if (check_symmetry && m(i, j) != m(j, i)) asymmetric = true;
        }
    }
    if (asymmetric) r.failures.push_back(ValidationFailure::Asymmetry);
    if (r.diag_max_dev > kDiagonalTol) r.failures.push_back(ValidationFailure::Diagonal);
    if (r.offdiag_max_abs > 1.0 + tol) r.failures.push_back(ValidationFailure::Range);

    const auto sym = asymmetric ? SymmetricMatrix::symmetrized(m) : SymmetricMatrix(m);
    r.min_eigenvalue = eigh(sym).values.front();
    if (r.min_eigenvalue < -tol) r.failures.push_back(ValidationFailure::PSD);
    r.is_valid = r.failures.empty();
    return r;
}

}  // namespace

ValidationReport validate(const SymmetricMatrix& m, double tol) { return validate_entries(m.matrix(), tol, false); }

ValidationReport validate(const Matrix& m, double tol) { return validate_entries(m, tol, true); }

Eigensystem eigh(const SymmetricMatrix& input) {
    require(input.matrix().all_finite(), ErrorKind::InvalidInput, "eigh: non-finite entries");
    const std::size_t n = input.dim();
    Matrix a = input.matrix();
    Matrix v = Matrix::identity(n);

    const double norm = frobenius_norm(a);
    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    bool converged = norm == 0.0 || off_norm() <= kJacobiTol * norm;
    for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
        converged = off_norm() <= kJacobiTol * norm;
    }
    if (!converged) fail(ErrorKind::NumericalFailure, "eigh: Jacobi did not converge within 100 sweeps");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    Eigensystem es{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        es.values[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) es.vectors(i, k) = v(i, order[k]);
    }
    return es;
}

std::optional<Matrix> try_cholesky(const SymmetricMatrix& m) {
    const std::size_t n = m.dim();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

Matrix cholesky(const SymmetricMatrix& m) {
    auto l = try_cholesky(m);
    if (!l) fail(ErrorKind::NotPositiveDefinite, "cholesky: matrix is not positive definite");
    return *std::move(l);
}

SymmetricMatrix apply_spectral(const Eigensystem& es, const std::function<double(double)>& f) {
    const std::size_t n = es.values.size();
    std::vector<double> fv(n);
    for (std::size_t k = 0; k < n; ++k) fv[k] = f(es.values[k]);
    SymmetricMatrix out(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += es.vectors(i, k) * fv[k] * es.vectors(j, k);
            out.set(i, j, s);
        }
    return out;
}

SymmetricMatrix apply_spectral(const SymmetricMatrix& m, const std::function<double(double)>& f) {
    return apply_spectral(eigh(m), f);
}

SymmetricMatrix congruence(const SymmetricMatrix& a, const SymmetricMatrix& b) {
    return SymmetricMatrix::symmetrized(a.matrix() * b.matrix() * a.matrix());
}

ProjectionResult nearest_correlation(const SymmetricMatrix& s, double tol, int max_iter) {
    require(s.matrix().all_finite(), ErrorKind::InvalidInput, "nearest_correlation: non-finite entries");
    require(tol > 0.0 && max_iter > 0, ErrorKind::InvalidInput, "nearest_correlation: bad tolerance or iteration cap");

    const std::size_t n = s.dim();
    const Matrix& a = s.matrix();

    if (validate(s, tol).is_valid) {
        return ProjectionResult{CorrelationMatrix(s, tol), 0, true, {0.0}, 0.0};
    }

    double a_sq = 0.0;
    double a_diag_excess = 0.0;
    for (double v : a.data()) a_sq += v * v;
    for (std::size_t i = 0; i < n; ++i) a_diag_excess += a(i, i) - 1.0;

    Matrix y = a;
    Matrix x_prev(n, n);
    Matrix y_prev = a;
    Matrix ds(n, n);
    Matrix best(n, n);
    double best_primal = std::numeric_limits<double>::infinity();
    double best_dual = -std::numeric_limits<double>::infinity();

    ProjectionResult result;
    for (int it = 1; it <= max_iter; ++it) {
        Matrix r = y - ds;
        const Matrix x = apply_spectral(SymmetricMatrix::symmetrized(r), [](double l) { return l > 0.0 ? l : 0.0; })
                             .matrix();
        ds = x - r;
        y = x;
        for (std::size_t i = 0; i < n; ++i) y(i, i) = 1.0;

        // Lower bound from the dual of the unit-diagonal constraint; the
        // Dykstra correction ds plays the role of the PSD-cone multiplier.
        double y_sq = 0.0;
        for (double v : y.data()) y_sq += v * v;
        double ds_trace = 0.0;
        for (std::size_t i = 0; i < n; ++i) ds_trace += ds(i, i);
        best_dual = std::max(best_dual, 0.5 * a_sq - 0.5 * y_sq - (a_diag_excess + ds_trace));

        // Feasible point: unit-diagonal rescaling of the PSD iterate.
        bool scalable = true;
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (!(x(i, i) > 0.0)) scalable = false;
            d[i] = std::sqrt(x(i, i));
        }
        if (scalable) {
            Matrix f(n, n);
            double primal = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double v = i == j ? 1.0 : std::clamp(x(i, j) / (d[i] * d[j]), -1.0, 1.0);
                    f(i, j) = v;
                    primal += (v - a(i, j)) * (v - a(i, j));
                }
            primal *= 0.5;
            if (primal < best_primal) {
                best_primal = primal;
                best = std::move(f);
            }
        }
        const double gap = std::isfinite(best_primal) ? std::max(0.0, best_primal - best_dual)
                                                      : std::numeric_limits<double>::infinity();
        result.residuals.push_back(result.residuals.empty() ? gap : std::min(gap, result.residuals.back()));

        const double ny = frobenius_norm(y);
        const double change = std::max({frobenius_distance(x, x_prev) / std::max(frobenius_norm(x), 1e-300),
                                         frobenius_distance(y, y_prev) / ny, frobenius_distance(y, x) / ny});
        x_prev = x;
        y_prev = y;
        result.iterations = it;
        if (change <= tol && std::isfinite(best_primal)) {
            result.converged = true;
            break;
        }
    }

    if (!result.converged) {
        throw ConvergenceFailure("nearest_correlation: no convergence within " + std::to_string(max_iter) +
                                     " iterations",
                                 std::isfinite(best_primal) ? SymmetricMatrix(best) : SymmetricMatrix(y),
                                 result.residuals.back());
    }
    result.matrix = CorrelationMatrix(SymmetricMatrix(best), tol);
    result.distance = frobenius_distance(best, a);
    return result;
}

}  // namespace ecorr
