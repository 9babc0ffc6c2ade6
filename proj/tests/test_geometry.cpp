#include "doctest.h"

#include <cmath>
#include <random>

#include "ecorr/geometry.hpp"
#include "oracles.hpp"

using namespace ecorr;
using namespace ecorr::geometry;

namespace {

CorrelationMatrix corr2(double rho) {
    SymmetricMatrix s = SymmetricMatrix::identity(2);
    s.set(0, 1, rho);
    return CorrelationMatrix(s);
}

CovarianceMatrix cov(const CorrelationMatrix& c) { return CovarianceMatrix(c.symmetric()); }

CovarianceMatrix random_spd(std::size_t n, std::mt19937_64& gen) {
    std::normal_distribution<double> nd;
    Matrix g(n, n + 3);
    for (auto& v : g.data()) v = nd(gen);
    return CovarianceMatrix(SymmetricMatrix::symmetrized(g * g.transposed()));
}

/// d^2 between two 2x2 SPD matrices from the generalized eigenvalues of (B, A).
double d2_oracle(const Eigen::Matrix2d& a, const Eigen::Matrix2d& b) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix2d> ges(b, a);
    double s = 0;
    for (int k = 0; k < 2; ++k) s += std::pow(std::log(ges.eigenvalues()(k)), 2);
    return s;
}

/// Fine-grid minimizer of the constrained Frechet objective for a 2x2 pair.
double m4_rho_oracle(double r1, double r2) {
    Eigen::Matrix2d x1, x2;
    x1 << 1, r1, r1, 1;
    x2 << 1, r2, r2, 1;
    double best = 1e300, arg = 0;
    for (int k = 1; k < 200000; ++k) {
        const double rho = -1.0 + 2.0 * k / 200000.0;
        Eigen::Matrix2d c;
        c << 1, rho, rho, 1;
        const double v = d2_oracle(c, x1) + d2_oracle(c, x2);
        if (v < best) {
            best = v;
            arg = rho;
        }
    }
    return arg;
}

}  // namespace

TEST_CASE("airm distance closed forms") {
    std::mt19937_64 gen(1);
    const auto a = random_spd(4, gen);
    CHECK(airm_distance(a, a) == doctest::Approx(0.0).epsilon(1e-12));

    const double diag[] = {4.0, 1.0};
    const CovarianceMatrix d(SymmetricMatrix(Matrix::diagonal(diag)));
    CHECK(airm_distance(CovarianceMatrix(SymmetricMatrix::identity(2)), d) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-14));
    CHECK(std::abs(airm_distance(d, CovarianceMatrix(SymmetricMatrix::identity(2))) - 1.386294) < 1e-6);
}

TEST_CASE("airm distance is symmetric and affine invariant") {
    std::mt19937_64 gen(2);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + trial % 5;
        const auto a = random_spd(n, gen);
        const auto b = random_spd(n, gen);
        Matrix p(n, n);
        for (auto& v : p.data()) v = nd(gen);
        const auto pa = CovarianceMatrix(SymmetricMatrix::symmetrized(p * a.matrix() * p.transposed()));
        const auto pb = CovarianceMatrix(SymmetricMatrix::symmetrized(p * b.matrix() * p.transposed()));
        const double dab = airm_distance(a, b);
        CHECK(std::abs(dab - airm_distance(b, a)) <= 1e-9);
        CHECK(std::abs(dab - airm_distance(pa, pb)) <= 1e-9 * std::max(1.0, dab));
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(oracle::to_eigen(b.matrix()),
                                                                      oracle::to_eigen(a.matrix()));
        CHECK(dab == doctest::Approx(ges.eigenvalues().array().log().matrix().norm()).epsilon(1e-10));
    }
}

TEST_CASE("geodesic endpoints, midpoint and arc length") {
    const auto a = cov(corr2(-0.75));
    const auto b = cov(corr2(0.75));
    CHECK(geodesic(a, b, 0.0).matrix.symmetric() == a.symmetric());
    CHECK(geodesic(a, b, 1.0).matrix.symmetric() == b.symmetric());

    // A B = (1 - rho^2) I for this commuting pair, so the midpoint is sqrt(1 - rho^2) I.
    const double expected = std::sqrt(1.0 - 0.75 * 0.75);
    const auto mid = geodesic(a, b, 0.5).matrix;
    CHECK(std::abs(mid(0, 0) - expected) < 1e-12);
    CHECK(std::abs(mid(1, 1) - expected) < 1e-12);
    CHECK(std::abs(mid(0, 1)) < 1e-12);
    CHECK(std::abs(expected - 0.661438) < 1e-6);

    const std::array<CorrelationMatrix, 2> pair{corr2(-0.75), corr2(0.75)};
    const auto m2 = mean(MeanMethod::M2_RiemannianBarycenter, pair);
    CHECK(max_abs_diff(m2.matrix.matrix(), mid.matrix()) <= 1e-9);

    CHECK_THROWS_AS(geodesic(a, b, 1.5), Error);
    CHECK_THROWS_AS(geodesic(a, b, -0.1), Error);
}

TEST_CASE("geodesic distances scale linearly in t") {
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_spd(3, gen);
        const auto b = random_spd(3, gen);
        const double dab = airm_distance(a, b);
        const double s = 0.2, t = 0.7;
        const auto gs = geodesic(a, b, s).matrix;
        const auto gt = geodesic(a, b, t).matrix;
        CHECK(std::abs(airm_distance(a, gt) - t * dab) <= 1e-8);
        CHECK(std::abs(airm_distance(gs, gt) - (t - s) * dab) <= 1e-8);
    }
}

TEST_CASE("five means on the symmetric pair") {
    for (double rho : {0.75, 0.3, 0.9}) {
        const std::array<CorrelationMatrix, 2> pair{corr2(rho), corr2(-rho)};
        const auto id = Matrix::identity(2);
        CHECK(max_abs_diff(mean(MeanMethod::M1_Euclidean, pair).matrix.matrix(), id) <= 1e-8);
        CHECK(max_abs_diff(mean(MeanMethod::M2_RiemannianBarycenter, pair).matrix.matrix(),
                           id * std::sqrt(1 - rho * rho)) <= 1e-8);
        CHECK(max_abs_diff(mean(MeanMethod::M3_NormalizedBarycenter, pair).matrix.matrix(), id) <= 1e-8);
        CHECK(max_abs_diff(mean(MeanMethod::M4_ConstrainedFrechet, pair).matrix.matrix(), id) <= 1e-8);
        CHECK(max_abs_diff(mean(MeanMethod::M5_RiemannianProjection, pair).matrix.matrix(), id) <= 1e-8);
    }
}

TEST_CASE("M3 is close to but not equal to M4 on an asymmetric pair") {
    const std::array<CorrelationMatrix, 2> pair{corr2(0.9), corr2(0.2)};
    const auto m3 = mean(MeanMethod::M3_NormalizedBarycenter, pair);
    const auto m4 = mean(MeanMethod::M4_ConstrainedFrechet, pair);
    const auto m5 = mean(MeanMethod::M5_RiemannianProjection, pair);
    const double gap = frobenius_distance(m3.matrix.matrix(), m4.matrix.matrix());
    CHECK(gap > 1e-6);
    CHECK(gap < 0.1);
    CHECK(m4.objective <= m3.objective + 1e-12);
    CHECK(std::abs(m4.matrix(0, 1) - m4_rho_oracle(0.9, 0.2)) <= 2e-5);
    for (const auto* r : {&m3, &m4, &m5}) CHECK(validate(r->matrix).is_valid);
}

TEST_CASE("M4 never loses to M3 and M3-M5 stay in the elliptope") {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(-0.95, 0.95);
    for (int trial = 0; trial < 30; ++trial) {
        const std::array<CorrelationMatrix, 2> pair{corr2(u(gen)), corr2(u(gen))};
        const auto m3 = mean(MeanMethod::M3_NormalizedBarycenter, pair);
        const auto m4 = mean(MeanMethod::M4_ConstrainedFrechet, pair);
        CHECK(m4.objective <= m3.objective + 1e-12);
    }
}

TEST_CASE("higher-dimensional constrained means") {
    std::mt19937_64 gen(12);
    std::vector<CorrelationMatrix> set;
    for (int k = 0; k < 4; ++k) {
        const auto s = random_spd(4, gen);
        set.emplace_back(covariance_to_correlation(s.symmetric()));
    }
    const auto m3 = mean(MeanMethod::M3_NormalizedBarycenter, set);
    const auto m4 = mean(MeanMethod::M4_ConstrainedFrechet, set);
    const auto m5 = mean(MeanMethod::M5_RiemannianProjection, set);
    CHECK(m4.objective <= m3.objective + 1e-12);
    for (const auto* r : {&m3, &m4, &m5}) CHECK(validate(r->matrix).is_valid);
    CHECK(m4.iterations > 0);
}

TEST_CASE("singular inputs are jittered and the jitter is reported") {
    const std::array<CorrelationMatrix, 2> pair{corr2(1.0), corr2(0.2)};
    const auto m2 = mean(MeanMethod::M2_RiemannianBarycenter, pair);
    CHECK(m2.jitter > 0.0);
    CHECK(m2.jitter <= 1e-9);
    const auto m1 = mean(MeanMethod::M1_Euclidean, pair);
    CHECK(m1.jitter == 0.0);
}
