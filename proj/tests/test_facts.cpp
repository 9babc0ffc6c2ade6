#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecorr/facts.hpp"
#include "ecorr/linalg.hpp"
#include "ecorr/samplers.hpp"

using namespace ecorr;
using namespace ecorr::facts;

namespace {

CorrelationMatrix from_fn(std::size_t n, auto rho) {
    SymmetricMatrix s = SymmetricMatrix::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) s.set(i, j, rho(i, j));
    return CorrelationMatrix(s);
}

CorrelationMatrix two_blocks() {
    return from_fn(10, [](std::size_t i, std::size_t j) { return (i < 5) == (j < 5) ? 0.8 : 0.1; });
}

/// The chain and star patterns are not PSD as written, so they are projected first.
CorrelationMatrix projected(std::size_t n, auto rho) {
    SymmetricMatrix s = SymmetricMatrix::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) s.set(i, j, rho(i, j));
    return nearest_correlation(s).matrix;
}

CorrelationMatrix permuted(const CorrelationMatrix& c, const std::vector<std::size_t>& p) {
    return from_fn(c.dim(), [&](std::size_t i, std::size_t j) { return c(p[i], p[j]); });
}

/// Minimum spanning tree weight by enumerating every (n-1)-edge subset.
double brute_force_mst_weight(const Matrix& d, std::vector<std::pair<std::size_t, std::size_t>>* best_edges) {
    const std::size_t n = d.rows();
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) all.emplace_back(i, j);
    std::vector<bool> pick(all.size(), false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(n - 1), true);
    double best = 1e300;
    do {
        std::vector<std::size_t> comp(n);
        std::iota(comp.begin(), comp.end(), 0);
        double w = 0.0;
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (std::size_t e = 0; e < all.size(); ++e) {
            if (!pick[e]) continue;
            const auto [a, b] = all[e];
            const std::size_t ca = comp[a], cb = comp[b];
            for (auto& c : comp)
                if (c == cb) c = ca;
            w += d(a, b);
            edges.push_back(all[e]);
        }
        const bool spanning = std::all_of(comp.begin(), comp.end(), [&](std::size_t c) { return c == comp[0]; });
        if (spanning && w < best - 1e-12) {
            best = w;
            *best_edges = edges;
        }
    } while (std::prev_permutation(pick.begin(), pick.end()));
    return best;
}

/// Average-linkage heights straight from the definition: mean pairwise
/// distance between member sets, recomputed every step.
std::vector<double> naive_upgma_heights(const Matrix& d) {
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < d.rows(); ++i) clusters.push_back({i});
    std::vector<double> heights;
    while (clusters.size() > 1) {
        double best = 1e300;
        std::size_t ba = 0, bb = 1;
        for (std::size_t a = 0; a < clusters.size(); ++a)
            for (std::size_t b = a + 1; b < clusters.size(); ++b) {
                double s = 0.0;
                for (auto i : clusters[a])
                    for (auto j : clusters[b]) s += d(i, j);
                s /= static_cast<double>(clusters[a].size() * clusters[b].size());
                if (s < best) {
                    best = s;
                    ba = a;
                    bb = b;
                }
            }
        heights.push_back(best);
        clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
    }
    return heights;
}

}  // namespace

TEST_CASE("identity report") {
    const auto r = stylized_report(CorrelationMatrix(SymmetricMatrix::identity(6)));
    CHECK(r.sf1_mean_offdiag == 0.0);
    CHECK(r.sf2_top_eig_share == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(r.sf4_degenerate);
    CHECK(r.sf2_mp_bounds.lambda_minus <= r.sf2_mp_bounds.lambda_plus);

    const auto f = feature_vector(CorrelationMatrix(SymmetricMatrix::identity(6)));
    CHECK(f.mean_corr() == 0.0);
    CHECK(f.evec1_degenerate);
    for (double v : f.values) CHECK(std::isfinite(v));
}

TEST_CASE("one-factor closed form") {
    const auto c = samplers::sample_one_factor(20, 0.5, 0.5, Seed{1});
    const auto r = stylized_report(c);
    CHECK(r.sf1_mean_offdiag == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(r.eigenvalues.back() == doctest::Approx(5.75).epsilon(1e-12));
    CHECK(r.sf2_top_eig_share == doctest::Approx(5.75 / 20).epsilon(1e-12));
    CHECK(r.sf4_first_evec_sign_consistency == 1.0);
    CHECK(!r.sf4_degenerate);
    CHECK(feature_vector(c).evec1_dispersion() < 1e-10);
}

TEST_CASE("marchenko-pastur bounds") {
    const auto b = mp_bounds(0.25);
    CHECK(b.lambda_minus == doctest::Approx(0.25));
    CHECK(b.lambda_plus == doctest::Approx(2.25));
    CHECK_THROWS_AS(mp_bounds(0.0), Error);
}

TEST_CASE("stressed regime draws satisfy SF1 and SF4") {
    for (int k = 0; k < 50; ++k) {
        const auto r = stylized_report(samplers::sample_regime(RegimeLabel::Stressed, 16, derive(Seed{8}, k)));
        CHECK(r.sf1_mean_offdiag > 0.4);
        CHECK(r.sf4_first_evec_sign_consistency == 1.0);
    }
}

TEST_CASE("two-block matrix is well clustered") {
    const auto f = feature_vector(two_blocks());
    CHECK(f.cluster_separation() > 0.5);
    CHECK(f.cophenetic_coeff() > 0.9);
    const auto km = k_medoids(correlation_distance(two_blocks()), 2);
    for (std::size_t i = 0; i < 10; ++i) CHECK(km.assignment[i] == km.assignment[i < 5 ? 0 : 5]);
    CHECK(km.assignment[0] != km.assignment[5]);
}

TEST_CASE("average linkage matches the naive definition") {
    for (int k = 0; k < 20; ++k) {
        const auto c = samplers::sample_onion(7, 1.0, derive(Seed{31}, k));
        const Matrix d = correlation_distance(c);
        const auto dg = average_linkage(d);
        const auto naive = naive_upgma_heights(d);
        REQUIRE(dg.merges.size() == naive.size());
        for (std::size_t m = 0; m < naive.size(); ++m) CHECK(std::abs(dg.merges[m].height - naive[m]) <= 1e-12);
        auto order = dg.leaf_order;
        std::sort(order.begin(), order.end());
        for (std::size_t i = 0; i < 7; ++i) CHECK(order[i] == i);
    }
}

TEST_CASE("mst examples against brute force") {
    const auto pair = from_fn(2, [](auto, auto) { return 0.3; });
    const auto e2 = mst(pair);
    REQUIRE(e2.size() == 1);
    CHECK((e2[0].i == 0 && e2[0].j == 1));

    const auto chain = projected(5, [](std::size_t i, std::size_t j) { return j == i + 1 ? 0.9 : 0.1; });
    auto path = mst(chain);
    std::sort(path.begin(), path.end(), [](const Edge& a, const Edge& b) { return a.i < b.i; });
    std::vector<std::pair<std::size_t, std::size_t>> oracle;
    const double w = brute_force_mst_weight(correlation_distance(chain), &oracle);
    double total = 0.0;
    for (const auto& e : path) total += e.weight;
    CHECK(total == doctest::Approx(w).epsilon(1e-12));
    for (std::size_t k = 0; k < 4; ++k) CHECK((path[k].i == k && path[k].j == k + 1));

    const auto star = projected(6, [](std::size_t i, auto) { return i == 0 ? 0.9 : 0.2; });
    const auto tree = mst(star);
    const double ws = brute_force_mst_weight(correlation_distance(star), &oracle);
    total = 0.0;
    for (const auto& e : tree) {
        total += e.weight;
        CHECK(e.i == 0);
    }
    CHECK(total == doctest::Approx(ws).epsilon(1e-12));
    CHECK(stylized_report(star).sf6_max_degree == 5);
}

TEST_CASE("mst weight matches brute force on random matrices") {
    for (int k = 0; k < 10; ++k) {
        const auto c = samplers::sample_onion(6, 1.0, derive(Seed{77}, k));
        std::vector<std::pair<std::size_t, std::size_t>> oracle;
        const double w = brute_force_mst_weight(correlation_distance(c), &oracle);
        double total = 0.0;
        for (const auto& e : mst(c)) total += e.weight;
        CHECK(total == doctest::Approx(w).epsilon(1e-12));
    }
}

TEST_CASE("degree tail exponent") {
    // Counts follow k^-2 exactly for k = 2, 4.
    const int deg[] = {2, 2, 2, 2, 4, 1, 1, 1};
    CHECK(degree_tail_exponent(deg) == doctest::Approx(2.0).epsilon(1e-12));
    const int path[] = {1, 2, 2, 2, 1};
    CHECK(std::isfinite(degree_tail_exponent(path)));
}

TEST_CASE("small dimensions are flagged") {
    const auto c = from_fn(3, [](auto, auto) { return 0.3; });
    const auto r = stylized_report(c);
    CHECK(r.insufficient_dimension);
    CHECK(std::isnan(r.sf5_cophenetic_coeff));
    CHECK(std::isnan(r.sf6_mst_degree_tail_exponent));
    CHECK_THROWS_AS(feature_vector(c), Error);
    try {
        feature_vector(c);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InsufficientDimension);
    }
    try {
        feature_vector(from_fn(5, [](auto, auto) { return 1.0; }));
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateStructure);
    }
}

TEST_CASE("permutation invariance") {
    Rng rng(Seed{5});
    for (int k = 0; k < 10; ++k) {
        const auto c = samplers::sample_regime(kAllRegimes[k % 3], 12, derive(Seed{6}, k));
        std::vector<std::size_t> p(12);
        std::iota(p.begin(), p.end(), 0);
        for (std::size_t i = 11; i > 0; --i) std::swap(p[i], p[rng.index(i + 1)]);
        const auto cp = permuted(c, p);
        const auto a = stylized_report(c), b = stylized_report(cp);
        CHECK(std::abs(a.sf1_mean_offdiag - b.sf1_mean_offdiag) <= 1e-12);
        CHECK(std::abs(a.sf2_top_eig_share - b.sf2_top_eig_share) <= 1e-12);
        CHECK(a.sf3_outlier_eig_fraction == b.sf3_outlier_eig_fraction);
        CHECK(std::abs(a.sf5_cophenetic_coeff - b.sf5_cophenetic_coeff) <= 1e-12);
        CHECK(std::abs(a.sf6_mst_degree_tail_exponent - b.sf6_mst_degree_tail_exponent) <= 1e-12);
        const auto fa = feature_vector(c), fb = feature_vector(cp);
        for (std::size_t f = 0; f < kFeatureCount; ++f) CHECK(std::abs(fa.values[f] - fb.values[f]) <= 1e-12);
        double trace = 0.0;
        for (double l : a.eigenvalues) trace += l;
        CHECK(std::abs(trace - 12.0) <= 1e-10);
    }
}

TEST_CASE("pure noise spectra stay inside the Marchenko-Pastur bulk") {
    const std::size_t dim = 40, t = 400;
    std::size_t outside = 0, total = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Rng rng(derive(Seed{909}, trial));
        Matrix x(t, dim);
        for (auto& v : x.data()) v = rng.normal();
        Matrix cov(dim, dim);
        std::vector<double> mean(dim, 0.0);
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t i = 0; i < dim; ++i) mean[i] += x(r, i) / static_cast<double>(t);
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < dim; ++j) cov(i, j) += (x(r, i) - mean[i]) * (x(r, j) - mean[j]);
        const CorrelationMatrix c(covariance_to_correlation(SymmetricMatrix::symmetrized(cov)));
        const auto r = stylized_report(c, static_cast<double>(dim) / static_cast<double>(t));
        for (double l : r.eigenvalues) outside += l < r.sf2_mp_bounds.lambda_minus || l > r.sf2_mp_bounds.lambda_plus;
        total += dim;
    }
    CHECK(static_cast<double>(outside) / static_cast<double>(total) <= 0.02);
}
