#include "ecorr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "ecorr/linalg.hpp"
#include "ecorr/util.hpp"

namespace ecorr::eval {

using facts::feature_vector;

namespace {

constexpr double kRankTol = 1e-12;

void check_dims(std::span<const CorrelationMatrix> set, std::size_t dim, const char* what) {
    for (const auto& m : set)
        require(m.dim() == dim, ErrorKind::InvalidInput,
                std::string(what) + ": matrix of dim " + std::to_string(m.dim()) + ", expected " + std::to_string(dim));
}

/// Index order of items by SHA-256 of their bytes; index breaks ties.
std::vector<std::size_t> hash_order(std::size_t n, const std::function<std::string(std::size_t)>& bytes) {
    std::vector<std::string> keys(n);
    for (std::size_t i = 0; i < n; ++i) keys[i] = sha256_hex(std::string_view(bytes(i)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    return order;
}

PointCloud2D subsample_points(const PointCloud2D& c, std::size_t n) {
    if (c.points.size() <= n) return c;
    const auto order = hash_order(c.points.size(), [&](std::size_t i) {
        std::string s;
        append_f64le(s, c.points[i][0]);
        append_f64le(s, c.points[i][1]);
        return s;
    });
    PointCloud2D out;
    for (std::size_t k = 0; k < n; ++k) out.points.push_back(c.points[order[k]]);
    return out;
}

double one_dim_w2_squared(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

void mean_and_sd(const std::vector<double>& v, double& mean, double& sd) {
    mean = sd = 0.0;
    if (v.empty()) return;
    mean = compensated_sum(v) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    sd = std::sqrt(s / static_cast<double>(v.size()));
}

std::array<double, kFeatureCount> standardized(const FeatureClassifier& c, const FeatureVector& f) {
    std::array<double, kFeatureCount> z{};
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        const double v = f.values[k];
        z[k] = std::isfinite(v) ? (v - c.mean[k]) / c.scale[k] : 0.0;
    }
    return z;
}

std::vector<FeatureVector> features_of(std::span<const CorrelationMatrix> set, int threads = 1) {
    std::vector<FeatureVector> out(set.size());
    parallel_for(set.size(), threads, [&](std::size_t i) { out[i] = feature_vector(set[i]); });
    return out;
}

}  // namespace

PcaBasis fit_pca(std::span<const CorrelationMatrix> reference) {
    require(!reference.empty(), ErrorKind::InvalidInput, "pca: reference set is empty");
    const std::size_t dim = reference.front().dim(), p = triangle_size(dim), n = reference.size();
    check_dims(reference, dim, "pca");
    require(p >= 2, ErrorKind::DegenerateBasis, "pca: dim " + std::to_string(dim) + " has fewer than 2 coordinates");
    require(n >= 3, ErrorKind::DegenerateBasis, "pca: need at least 3 reference matrices for a rank-2 basis");

    PcaBasis basis;
    basis.mean.assign(p, 0.0);
    Matrix x(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = lower_triangle(reference[i].symmetric());
        for (std::size_t k = 0; k < p; ++k) {
            x(i, k) = t[k];
            basis.mean[k] += t[k];
        }
    }
    for (auto& m : basis.mean) m /= static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < p; ++k) {
            x(i, k) -= basis.mean[k];
            total += x(i, k) * x(i, k);
        }
    const double dof = static_cast<double>(n - 1);
    total /= dof;

    // Eigen-decompose whichever of X X^T and X^T X is smaller.
    const bool gram = n <= p;
    const std::size_t m = gram ? n : p;
    SymmetricMatrix s(m);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b <= a; ++b) {
            double v = 0.0;
            if (gram)
                for (std::size_t k = 0; k < p; ++k) v += x(a, k) * x(b, k);
            else
                for (std::size_t i = 0; i < n; ++i) v += x(i, a) * x(i, b);
            s.set(a, b, v / dof);
        }
    const auto es = eigh(s);
    for (int r = 0; r < 2; ++r) {
        const std::size_t col = m - 1 - static_cast<std::size_t>(r);
        const double lambda = es.values[col];
        require(total > 0.0 && lambda > kRankTol * total, ErrorKind::DegenerateBasis,
                "pca: reference set has rank below 2");
        std::vector<double> axis(p, 0.0);
        if (gram) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < p; ++k) axis[k] += x(i, k) * es.vectors(i, col);
        } else {
            for (std::size_t k = 0; k < p; ++k) axis[k] = es.vectors(k, col);
        }
        double norm = 0.0;
        for (double v : axis) norm += v * v;
        norm = std::sqrt(norm);
        std::size_t big = 0;
        for (std::size_t k = 1; k < p; ++k)
            if (std::abs(axis[k]) > std::abs(axis[big])) big = k;
        const double sign = axis[big] < 0 ? -1.0 : 1.0;
        for (auto& v : axis) v *= sign / norm;
        basis.axes[static_cast<std::size_t>(r)] = std::move(axis);
        basis.variance[static_cast<std::size_t>(r)] = lambda;
    }
    basis.explained_share = (basis.variance[0] + basis.variance[1]) / total;
    return basis;
}

PointCloud2D project(const PcaBasis& basis, std::span<const CorrelationMatrix> set) {
    const std::size_t p = basis.mean.size();
    PointCloud2D cloud;
    cloud.points.reserve(set.size());
    for (const auto& m : set) {
        const auto t = lower_triangle(m.symmetric());
        require(t.size() == p, ErrorKind::InvalidInput, "pca: matrix dim does not match the basis");
        Point2 pt{0.0, 0.0};
        for (std::size_t k = 0; k < p; ++k) {
            const double c = t[k] - basis.mean[k];
            pt[0] += c * basis.axes[0][k];
            pt[1] += c * basis.axes[1][k];
        }
        cloud.points.push_back(pt);
    }
    return cloud;
}

PcaProjection pca_project(std::span<const CorrelationMatrix> reference,
                          const std::vector<std::vector<CorrelationMatrix>>& others) {
    PcaProjection out;
    out.basis = fit_pca(reference);
    out.reference = project(out.basis, reference);
    for (const auto& set : others) out.others.push_back(project(out.basis, set));
    return out;
}

std::vector<std::size_t> solve_assignment(const Matrix& cost) {
    require(cost.square(), ErrorKind::InvalidInput, "assignment: cost matrix must be square");
    const std::size_t n = cost.rows();
    if (n == 0) return {};
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based rows/columns; column 0 is the virtual source of each search.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t row = 1; row <= n; ++row) {
        match[0] = row;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
    return assignment;
}

Wasserstein wasserstein2(const PointCloud2D& a, const PointCloud2D& b, std::size_t exact_limit) {
    require(!a.points.empty() && !b.points.empty(), ErrorKind::InvalidInput, "wasserstein: empty cloud");
    const std::size_t n = std::min(a.points.size(), b.points.size());
    const auto sa = subsample_points(a, n), sb = subsample_points(b, n);
    Wasserstein w;
    w.n = n;
    if (n > exact_limit) {
        w.approximate = true;
        w.distance = sliced_wasserstein2(sa, sb);
        return w;
    }
    Matrix cost(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double dx = sa.points[i][0] - sb.points[j][0], dy = sa.points[i][1] - sb.points[j][1];
            cost(i, j) = dx * dx + dy * dy;
        }
    const auto assignment = solve_assignment(cost);
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) terms[i] = cost(i, assignment[i]);
    w.distance = std::sqrt(std::max(0.0, compensated_sum(terms) / static_cast<double>(n)));
    return w;
}

double sliced_wasserstein2(const PointCloud2D& a, const PointCloud2D& b, std::size_t projections) {
    require(projections > 0, ErrorKind::InvalidInput, "sliced wasserstein: need at least one projection");
    const std::size_t n = std::min(a.points.size(), b.points.size());
    const auto sa = subsample_points(a, n), sb = subsample_points(b, n);
    double total = 0.0;
    for (std::size_t k = 0; k < projections; ++k) {
        const double theta = std::numbers::pi * (static_cast<double>(k) + 0.5) / static_cast<double>(projections);
        const double c = std::cos(theta), s = std::sin(theta);
        std::vector<double> pa(n), pb(n);
        for (std::size_t i = 0; i < n; ++i) {
            pa[i] = c * sa.points[i][0] + s * sa.points[i][1];
            pb[i] = c * sb.points[i][0] + s * sb.points[i][1];
        }
        total += one_dim_w2_squared(std::move(pa), std::move(pb));
    }
    return std::sqrt(total / static_cast<double>(projections));
}

std::vector<CorrelationMatrix> subsample(std::span<const CorrelationMatrix> set, std::size_t n) {
    if (set.size() <= n) return {set.begin(), set.end()};
    const auto order = hash_order(set.size(), [&](std::size_t i) {
        std::string s;
        for (double v : set[i].data()) append_f64le(s, v);
        return s;
    });
    std::vector<CorrelationMatrix> out;
    for (std::size_t k = 0; k < n; ++k) out.push_back(set[order[k]]);
    return out;
}

double sliced_wasserstein_raw(std::span<const CorrelationMatrix> a, std::span<const CorrelationMatrix> b, Seed seed,
                              std::size_t projections) {
    require(!a.empty() && !b.empty(), ErrorKind::InvalidInput, "sliced wasserstein: empty set");
    require(projections > 0, ErrorKind::InvalidInput, "sliced wasserstein: need at least one projection");
    const std::size_t dim = a.front().dim();
    check_dims(a, dim, "sliced wasserstein");
    check_dims(b, dim, "sliced wasserstein");
    const std::size_t n = std::min(a.size(), b.size()), p = triangle_size(dim);
    const auto sa = subsample(a, n), sb = subsample(b, n);
    std::vector<std::vector<double>> ta(n), tb(n);
    for (std::size_t i = 0; i < n; ++i) {
        ta[i] = lower_triangle(sa[i].symmetric());
        tb[i] = lower_triangle(sb[i].symmetric());
    }
    Rng rng(seed);
    double total = 0.0;
    for (std::size_t k = 0; k < projections; ++k) {
        const auto dir = rng.unit_vector(p);
        std::vector<double> pa(n, 0.0), pb(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < p; ++j) {
                pa[i] += dir[j] * ta[i][j];
                pb[i] += dir[j] * tb[i][j];
            }
        total += one_dim_w2_squared(std::move(pa), std::move(pb));
    }
    return std::sqrt(total / static_cast<double>(projections));
}

DistanceStats distance_stats(const std::vector<PointCloud2D>& real, const std::vector<PointCloud2D>& synth,
                             int threads) {
    require(real.size() >= 2, ErrorKind::InvalidInput, "distance stats: need at least 2 real sets");
    require(!synth.empty(), ErrorKind::InvalidInput, "distance stats: need at least 1 synthetic set");
    struct Pair {
        const PointCloud2D* a;
        const PointCloud2D* b;
        bool within;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < real.size(); ++i)
        for (std::size_t j = i + 1; j < real.size(); ++j) pairs.push_back({&real[i], &real[j], true});
    for (const auto& r : real)
        for (const auto& s : synth) pairs.push_back({&r, &s, false});
    std::vector<Wasserstein> w(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t k) { w[k] = wasserstein2(*pairs[k].a, *pairs[k].b); });

    DistanceStats st;
    std::vector<double> within, between;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        (pairs[k].within ? within : between).push_back(w[k].distance);
        st.approximate = st.approximate || w[k].approximate;
    }
    mean_and_sd(within, st.mu_e, st.sigma_e);
    mean_and_sd(between, st.mu_g, st.sigma_g);
    st.max_within = *std::max_element(within.begin(), within.end());
    st.min_between = *std::min_element(between.begin(), between.end());
    st.real_pairs = within.size();
    st.synth_pairs = between.size();
    return st;
}

double accuracy(const ConfusionMatrix& m) {
    std::size_t hit = 0, total = 0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            total += m[i][j];
            if (i == j) hit += m[i][j];
        }
    return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

RegimeLabel FeatureClassifier::predict(const FeatureVector& f) const {
    const auto z = standardized(*this, f);
    const auto logits = network.forward(nn::Tensor<double>({1, kFeatureCount}, std::vector<double>(z.begin(), z.end())));
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
        if (logits[k] > logits[best]) best = k;
    return static_cast<RegimeLabel>(best);
}

ConfusionMatrix FeatureClassifier::confusion(std::span<const CorrelationMatrix> matrices,
                                             std::span<const RegimeLabel> labels) const {
    require(matrices.size() == labels.size(), ErrorKind::InvalidInput, "confusion: label count mismatch");
    ConfusionMatrix m{};
    const auto feats = features_of(matrices);
    for (std::size_t i = 0; i < feats.size(); ++i)
        ++m[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predict(feats[i]))];
    return m;
}

TrainedClassifier train_classifier(const corpus::LabeledCorpus& real, const ClassifierConfig& config) {
    require(config.holdout_fraction > 0 && config.holdout_fraction < 1, ErrorKind::ConfigError,
            "classifier: holdout_fraction must lie in (0, 1)");
    const auto counts = real.class_counts();
    for (std::size_t r = 0; r < 3; ++r)
        require(counts[r] >= 2, ErrorKind::InvalidInput,
                "classifier: need at least 2 '" + to_string(static_cast<RegimeLabel>(r)) + "' items");

    TrainedClassifier out;
    std::vector<char> held(real.size(), 0);
    for (std::size_t r = 0; r < 3; ++r) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < real.size(); ++i)
            if (static_cast<std::size_t>(real.items[i].label) == r) idx.push_back(i);
        Rng rng(derive(config.seed, r));
        for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.index(i + 1)]);
        const auto k = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(config.holdout_fraction * static_cast<double>(idx.size()))), 1,
            idx.size() - 1);
        for (std::size_t i = 0; i < k; ++i) held[idx[i]] = 1;
    }

    const auto all = real.matrices();
    const auto feats = features_of(all);
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < real.size(); ++i) (held[i] ? out.holdout : train_idx).push_back(i);

    auto& model = out.model;
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        std::vector<double> v;
        for (auto i : train_idx)
            if (std::isfinite(feats[i].values[k])) v.push_back(feats[i].values[k]);
        double mean = 0.0, sd = 0.0;
        mean_and_sd(v, mean, sd);
        model.mean[k] = mean;
        model.scale[k] = sd > 0.0 ? sd : 1.0;
    }

    const std::size_t n = train_idx.size();
    nn::Tensor<double> x({n, kFeatureCount});
    std::vector<std::size_t> labels(n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto z = standardized(model, feats[train_idx[s]]);
        std::copy(z.begin(), z.end(), x.data.begin() + static_cast<std::ptrdiff_t>(s * kFeatureCount));
        labels[s] = static_cast<std::size_t>(real.items[train_idx[s]].label);
    }
    model.network = nn::Network<double>(
        {kFeatureCount},
        {nn::LayerSpec::dense(kFeatureCount, config.hidden), nn::LayerSpec::tanh(), nn::LayerSpec::dense(config.hidden, 3)});
    model.network.initialize(derive(config.seed, 3));
    nn::AdamState<double> opt(nn::AdamConfig{config.lr, 0.9, 0.999, 1e-8}, model.network.parameter_count());
    for (std::size_t step = 0; step < config.steps; ++step) {
        nn::Cache<double> cache;
        const auto logits = model.network.forward(x, &cache);
        nn::Tensor<double> grad;
        nn::softmax_cross_entropy(logits, labels, &grad);
        const auto g = model.network.backward(cache, grad).params;
        nn::adam_step(opt, model.network, std::span<const double>(g));
    }

    std::vector<CorrelationMatrix> hm;
    std::vector<RegimeLabel> hl;
    for (auto i : out.holdout) {
        hm.push_back(real.items[i].matrix);
        hl.push_back(real.items[i].label);
    }
    out.holdout_confusion = model.confusion(hm, hl);
    out.holdout_accuracy = accuracy(out.holdout_confusion);
    return out;
}

ClassifierFidelity classifier_fidelity(const corpus::LabeledCorpus& real, const corpus::LabeledCorpus& synth,
                                       const ClassifierConfig& config) {
    require(real.dim == synth.dim, ErrorKind::InvalidInput, "classifier fidelity: corpora differ in dim");
    const auto trained = train_classifier(real, config);
    ClassifierFidelity f;
    f.real_confusion = trained.holdout_confusion;
    f.real_accuracy = trained.holdout_accuracy;
    f.weak_classifier = f.real_accuracy < kWeakClassifierAccuracy;
    std::vector<RegimeLabel> labels;
    for (const auto& item : synth.items) labels.push_back(item.label);
    f.synthetic_confusion = trained.model.confusion(synth.matrices(), labels);
    f.synthetic_accuracy = accuracy(f.synthetic_confusion);
    return f;
}

FeatureComparison compare_features(const corpus::LabeledCorpus& real, const corpus::LabeledCorpus& synth,
                                   int threads) {
    FeatureComparison out;
    auto accumulate = [&](const corpus::LabeledCorpus& c, auto& sums, auto& counts) {
        const auto feats = features_of(c.matrices(), threads);
        for (std::size_t i = 0; i < feats.size(); ++i) {
            const auto r = static_cast<std::size_t>(c.items[i].label);
            ++counts[r];
            for (std::size_t k = 0; k < kFeatureCount; ++k) sums[r][k] += feats[i].values[k];
        }
        for (std::size_t r = 0; r < 3; ++r)
            for (auto& v : sums[r]) v = counts[r] ? v / static_cast<double>(counts[r]) : std::nan("");
    };
    accumulate(real, out.real, out.real_count);
    accumulate(synth, out.synthetic, out.synthetic_count);
    return out;
}

}  // namespace ecorr::eval
