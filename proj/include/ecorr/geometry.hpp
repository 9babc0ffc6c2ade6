#pragma once

#include <span>
#include <string>
#include <vector>

#include "ecorr/linalg.hpp"

namespace ecorr::geometry {

/// Affine-invariant (Fisher-Rao) distance ||log(A^{-1/2} B A^{-1/2})||_F.
double airm_distance(const CovarianceMatrix& a, const CovarianceMatrix& b);

struct GeodesicPoint {
    double t = 0.0;
    CovarianceMatrix matrix;
};

/// gamma(t) = A^{1/2} (A^{-1/2} B A^{-1/2})^t A^{1/2}, t in [0, 1].
GeodesicPoint geodesic(const CovarianceMatrix& a, const CovarianceMatrix& b, double t);

enum class MeanMethod {
    M1_Euclidean,
    M2_RiemannianBarycenter,
    M3_NormalizedBarycenter,
    M4_ConstrainedFrechet,
    M5_RiemannianProjection,
};

std::string to_string(MeanMethod m);
MeanMethod parse_mean_method(const std::string& name);

struct MeanResult {
    MeanMethod method{};
    SymmetricMatrix matrix;
    int iterations = 0;
    bool converged = true;
    /// M4/M5 stopped on a stalled line search rather than the gradient test.
    bool best_effort = false;
    double gradient_norm = 0.0;
    /// Sum of squared distances from `matrix` to the (jittered) input set.
    double objective = 0.0;
    /// Multiple of the identity added to near-singular inputs (0 if none).
    double jitter = 0.0;
};

inline constexpr double kKarcherTol = 1e-10;
inline constexpr int kKarcherMaxIter = 1000;
inline constexpr double kSingularThreshold = 1e-10;

MeanResult mean(MeanMethod method, std::span<const CorrelationMatrix> set);

/// Karcher mean of SPD matrices; throws ConvergenceFailure after 1,000 iterations.
MeanResult karcher_mean(std::span<const CovarianceMatrix> set);

/// Sum of squared affine-invariant distances from `c` to each target.
double frechet_objective(const SymmetricMatrix& c, std::span<const CovarianceMatrix> targets);

}  // namespace ecorr::geometry
