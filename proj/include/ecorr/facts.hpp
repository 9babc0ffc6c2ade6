#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ecorr/matrix.hpp"

namespace ecorr::facts {

/// d_ij = sqrt(2 (1 - rho_ij)), the metric used for linkage and MST.
Matrix correlation_distance(const CorrelationMatrix& c);

struct Merge {
    std::size_t left = 0;   ///< cluster id; leaves are 0..n-1, merge k creates id n+k
    std::size_t right = 0;
    double height = 0.0;
    std::size_t size = 0;
};

struct Dendrogram {
    std::size_t leaves = 0;
    std::vector<Merge> merges;
    std::vector<std::size_t> leaf_order;  ///< quasi-diagonal ordering, lower id first
};

/// UPGMA on a distance matrix; ties resolved toward the lowest cluster ids.
Dendrogram average_linkage(const Matrix& distance);
Matrix cophenetic_matrix(const Dendrogram& d);
/// Pearson correlation between the original distances and cophenetic
/// distances over i < j. Zero when either side has no spread.
double cophenetic_correlation(const Matrix& distance, const Dendrogram& d);

struct Edge {
    std::size_t i = 0;
    std::size_t j = 0;
    double weight = 0.0;
    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Kruskal on sqrt(2(1-rho)); ties broken by lexicographic (i, j), i < j.
std::vector<Edge> mst(const CorrelationMatrix& c);

struct MarchenkoPastur {
    double lambda_minus = 0.0;
    double lambda_plus = 0.0;
};
MarchenkoPastur mp_bounds(double q_ratio);

inline constexpr double kDefaultQRatio = 80.0 / 252.0;

struct StylizedFactReport {
    double sf1_mean_offdiag = 0.0;
    double sf1_skew = 0.0;
    double sf2_top_eig_share = 0.0;
    MarchenkoPastur sf2_mp_bounds;
    double sf3_outlier_eig_fraction = 0.0;
    double sf4_first_evec_sign_consistency = 0.0;
    /// Top eigenvalue is not simple, so its eigenvector (and sf4) is not unique.
    bool sf4_degenerate = false;
    double sf5_cophenetic_coeff = 0.0;
    double sf6_mst_degree_tail_exponent = 0.0;
    int sf6_max_degree = 0;
    /// dim < 4: sf5/sf6 are NaN.
    bool insufficient_dimension = false;
    std::vector<double> eigenvalues;  ///< ascending
};

StylizedFactReport stylized_report(const CorrelationMatrix& c, double q_ratio = kDefaultQRatio);

/// Power-law exponent of a degree sequence by log-log least squares over
/// distinct degrees >= 2 (degree 1 is added when fewer than two remain).
double degree_tail_exponent(std::span<const int> degrees);

inline constexpr std::size_t kFeatureCount = 8;
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "mean_corr",        "std_corr",         "eig1_share",         "top5pct_eig_share",
    "evec1_dispersion", "cophenetic_coeff", "cluster_separation", "mst_tail_exponent",
};

/// Fixed-order correlation-structure features, see kFeatureNames.
struct FeatureVector {
    std::array<double, kFeatureCount> values{};
    bool evec1_degenerate = false;

    double mean_corr() const { return values[0]; }
    double std_corr() const { return values[1]; }
    double eig1_share() const { return values[2]; }
    double top5pct_eig_share() const { return values[3]; }
    double evec1_dispersion() const { return values[4]; }
    double cophenetic_coeff() const { return values[5]; }
    double cluster_separation() const { return values[6]; }
    double mst_tail_exponent() const { return values[7]; }
};

FeatureVector feature_vector(const CorrelationMatrix& c);

struct Clustering {
    std::vector<std::size_t> medoids;
    std::vector<std::size_t> assignment;
};

/// PAM (BUILD + SWAP) k-medoids, deterministic.
Clustering k_medoids(const Matrix& distance, std::size_t k);
double mean_silhouette(const Matrix& distance, const std::vector<std::size_t>& assignment);

}  // namespace ecorr::facts
