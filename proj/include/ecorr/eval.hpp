#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ecorr/corpus.hpp"
#include "ecorr/facts.hpp"
#include "ecorr/neural.hpp"

namespace ecorr::eval {

using facts::FeatureVector;
using facts::kFeatureCount;

using Point2 = std::array<double, 2>;

/// Two principal axes of the vectorized lower triangles plus their mean.
struct PcaBasis {
    std::vector<double> mean;
    std::array<std::vector<double>, 2> axes;  ///< orthonormal
    std::array<double, 2> variance{};         ///< sample variance along each axis
    double explained_share = 0.0;             ///< (variance[0] + variance[1]) / total variance
};

struct PointCloud2D {
    std::vector<Point2> points;
};

/// Fits on `reference` only. Axis signs are fixed so the entry of largest
/// magnitude is positive. Throws DegenerateBasis below rank 2.
PcaBasis fit_pca(std::span<const CorrelationMatrix> reference);
PointCloud2D project(const PcaBasis& basis, std::span<const CorrelationMatrix> set);

struct PcaProjection {
    PcaBasis basis;
    PointCloud2D reference;
    std::vector<PointCloud2D> others;
};

PcaProjection pca_project(std::span<const CorrelationMatrix> reference,
                          const std::vector<std::vector<CorrelationMatrix>>& others);

/// Minimum-cost perfect assignment (shortest augmenting paths with
/// potentials). Returns assignment[row] = column.
std::vector<std::size_t> solve_assignment(const Matrix& cost);

inline constexpr std::size_t kExactWassersteinLimit = 512;
inline constexpr std::size_t kSlicedProjections = 100;

struct Wasserstein {
    double distance = 0.0;
    std::size_t n = 0;         ///< points per cloud actually compared
    bool approximate = false;  ///< sliced estimate, n exceeded the exact limit
};

/// 2-Wasserstein between equally weighted clouds. The larger cloud is
/// subsampled by the SHA-256 order of its points.
Wasserstein wasserstein2(const PointCloud2D& a, const PointCloud2D& b,
                         std::size_t exact_limit = kExactWassersteinLimit);

/// Sliced 2-Wasserstein over `projections` evenly spaced directions.
double sliced_wasserstein2(const PointCloud2D& a, const PointCloud2D& b, std::size_t projections = kSlicedProjections);

/// Sliced 2-Wasserstein on the raw lower triangles, random unit directions.
double sliced_wasserstein_raw(std::span<const CorrelationMatrix> a, std::span<const CorrelationMatrix> b, Seed seed,
                              std::size_t projections = kSlicedProjections);

/// First n matrices in SHA-256 order of their bytes.
std::vector<CorrelationMatrix> subsample(std::span<const CorrelationMatrix> set, std::size_t n);

struct DistanceStats {
    double mu_e = 0.0;
    double sigma_e = 0.0;
    double mu_g = 0.0;
    double sigma_g = 0.0;
    double max_within = 0.0;
    double min_between = 0.0;
    bool approximate = false;
    std::size_t real_pairs = 0;
    std::size_t synth_pairs = 0;
};

/// mu_E over all real-real pairs, mu_G over all real-synthetic pairs;
/// sigmas are population standard deviations.
DistanceStats distance_stats(const std::vector<PointCloud2D>& real, const std::vector<PointCloud2D>& synth,
                             int threads = 1);

using ConfusionMatrix = std::array<std::array<std::size_t, 3>, 3>;

double accuracy(const ConfusionMatrix& m);

/// Softmax classifier over standardized feature vectors.
struct FeatureClassifier {
    std::array<double, kFeatureCount> mean{};
    std::array<double, kFeatureCount> scale{};
    nn::Network<double> network;

    RegimeLabel predict(const FeatureVector& f) const;
    ConfusionMatrix confusion(std::span<const CorrelationMatrix> matrices, std::span<const RegimeLabel> labels) const;
};

struct ClassifierConfig {
    double holdout_fraction = 0.25;
    std::size_t hidden = 16;
    std::size_t steps = 600;
    double lr = 1e-2;
    Seed seed{0};
};

struct TrainedClassifier {
    FeatureClassifier model;
    std::vector<std::size_t> holdout;  ///< corpus indices held out, ascending
    ConfusionMatrix holdout_confusion{};
    double holdout_accuracy = 0.0;
};

/// Stratified split per class, then full-batch Adam on cross-entropy.
TrainedClassifier train_classifier(const corpus::LabeledCorpus& real, const ClassifierConfig& config = {});

inline constexpr double kWeakClassifierAccuracy = 0.4;

struct ClassifierFidelity {
    ConfusionMatrix real_confusion{};
    double real_accuracy = 0.0;
    ConfusionMatrix synthetic_confusion{};
    double synthetic_accuracy = 0.0;
    /// Real held-out accuracy below 0.4: synthetic numbers are unreliable.
    bool weak_classifier = false;
};

ClassifierFidelity classifier_fidelity(const corpus::LabeledCorpus& real, const corpus::LabeledCorpus& synth,
                                       const ClassifierConfig& config = {});

/// Per-regime means of every feature for a real and a synthetic corpus.
struct FeatureComparison {
    std::array<std::array<double, kFeatureCount>, 3> real{};
    std::array<std::array<double, kFeatureCount>, 3> synthetic{};
    std::array<std::size_t, 3> real_count{};
    std::array<std::size_t, 3> synthetic_count{};
};

FeatureComparison compare_features(const corpus::LabeledCorpus& real, const corpus::LabeledCorpus& synth,
                                   int threads = 1);

}  // namespace ecorr::eval
