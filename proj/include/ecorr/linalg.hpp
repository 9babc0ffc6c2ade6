#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "ecorr/matrix.hpp"

namespace ecorr {

enum class ValidationFailure { Diagonal, Range, PSD, Asymmetry };

struct ValidationReport {
    bool is_valid = false;
    double diag_max_dev = 0.0;
    double offdiag_max_abs = 0.0;
    double min_eigenvalue = 0.0;
    std::vector<ValidationFailure> failures;
};

inline constexpr double kDefaultValidationTol = 1e-8;
inline constexpr double kDiagonalTol = 1e-12;

/// Checks elliptope membership. Diagonal is held to 1e-12, off-diagonal
/// range to [-1-tol, 1+tol], and the smallest eigenvalue to >= -tol.
ValidationReport validate(const SymmetricMatrix& m, double tol = kDefaultValidationTol);
/// Same as above for raw (possibly asymmetric) input, e.g. a parsed CSV.
ValidationReport validate(const Matrix& m, double tol = kDefaultValidationTol);

struct Eigensystem {
    std::vector<double> values;  ///< ascending
    Matrix vectors;              ///< orthonormal columns, column k pairs with values[k]
};

/// Cyclic Jacobi. Stops when the off-diagonal norm drops below
/// 1e-12 * ||M||_F; throws NumericalFailure after 100 sweeps.
Eigensystem eigh(const SymmetricMatrix& m);

/// Lower-triangular L with L L^T = M. Throws NotPositiveDefinite.
Matrix cholesky(const SymmetricMatrix& m);
inline Matrix cholesky(const CovarianceMatrix& m) { return cholesky(m.symmetric()); }
/// Non-throwing variant used for PD probes.
std::optional<Matrix> try_cholesky(const SymmetricMatrix& m);

/// V f(Lambda) V^T for a symmetric argument.
SymmetricMatrix apply_spectral(const SymmetricMatrix& m, const std::function<double(double)>& f);
SymmetricMatrix apply_spectral(const Eigensystem& es, const std::function<double(double)>& f);

/// A B A for symmetric A and B, symmetrized.
SymmetricMatrix congruence(const SymmetricMatrix& a, const SymmetricMatrix& b);

struct ProjectionResult {
    CorrelationMatrix matrix;
    int iterations = 0;
    bool converged = false;
    /// Certified duality gap per iteration: best feasible objective minus
    /// best dual bound. Non-increasing by construction.
    std::vector<double> residuals;
    double distance = 0.0;  ///< ||output - input||_F
};

class ConvergenceFailure : public Error {
public:
    ConvergenceFailure(const std::string& message, SymmetricMatrix last_iterate, double residual)
        : Error(ErrorKind::ConvergenceFailure, message),
          last_iterate_(std::move(last_iterate)),
          residual_(residual) {}

    const SymmetricMatrix& last_iterate() const noexcept { return last_iterate_; }
    double residual() const noexcept { return residual_; }

private:
    SymmetricMatrix last_iterate_;
    double residual_;
};

/// Nearest correlation matrix in Frobenius norm by alternating projections
/// with Dykstra's correction on the PSD cone. Valid inputs are returned
/// unchanged. Throws ConvergenceFailure after `max_iter` iterations.
ProjectionResult nearest_correlation(const SymmetricMatrix& s, double tol = 1e-8, int max_iter = 200);

}  // namespace ecorr
