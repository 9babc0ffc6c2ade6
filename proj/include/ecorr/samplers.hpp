#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>

#include "ecorr/matrix.hpp"
#include "ecorr/rng.hpp"

namespace ecorr {

enum class RegimeLabel { Stressed = 0, Normal = 1, Rally = 2 };

inline constexpr std::array<RegimeLabel, 3> kAllRegimes{RegimeLabel::Stressed, RegimeLabel::Normal,
                                                        RegimeLabel::Rally};

std::string to_string(RegimeLabel r);
/// Accepts "stressed", "normal", "rally" (case-insensitive).
RegimeLabel parse_regime(const std::string& name);

}  // namespace ecorr

namespace ecorr::samplers {

/// Hierarchical factor recipe for the surrogate regime generator.
///
/// Each asset loads on a market factor (loading ~ U(beta_lo, beta_hi)), on
/// the factor of its top-level cluster with weight ~intra_boost, and on the
/// factors of `hierarchy_depth - 1` nested sub-clusters with geometrically
/// decaying weight. Clusters are contiguous index blocks of random size.
/// `noise_scale` is the target per-entry estimation noise: when positive,
/// the returned matrix is the sample correlation of ceil(1 / noise_scale^2)
/// Gaussian draws from the population matrix.
struct RegimeParams {
    double beta_lo = 0.3;
    double beta_hi = 0.5;
    int n_clusters = 5;
    double intra_boost = 0.5;
    double noise_scale = 0.06;
    int hierarchy_depth = 2;

    void check() const;
    static RegimeParams defaults(RegimeLabel regime);
};

/// LKJ onion method; eta = 1 is uniform over the elliptope.
CorrelationMatrix sample_onion(std::size_t dim, double eta, Seed seed);

/// C-vine with partial correlations 2 * Beta(a, b) - 1.
CorrelationMatrix sample_cvine(std::size_t dim, double beta_a, double beta_b, Seed seed);

/// Random correlation matrix with the given spectrum: Haar rotation of
/// diag(eigenvalues), then Givens rotations until the diagonal is unit.
CorrelationMatrix sample_with_spectrum(std::span<const double> eigenvalues, Seed seed);

/// beta beta^T + diag(1 - beta^2), beta_i ~ U(lo, hi). lo == hi is allowed.
CorrelationMatrix sample_one_factor(std::size_t dim, double lo, double hi, Seed seed);

CorrelationMatrix sample_regime(RegimeLabel regime, std::size_t dim, const RegimeParams& params, Seed seed);
inline CorrelationMatrix sample_regime(RegimeLabel regime, std::size_t dim, Seed seed) {
    return sample_regime(regime, dim, RegimeParams::defaults(regime), seed);
}

enum class Method { Onion, CVine, Spectrum, Factor, Regime };
Method parse_method(const std::string& name);

}  // namespace ecorr::samplers
