#pragma once

// Independent reference computations for tests. Nothing here calls into the
// library's numerical routines; Eigen provides the linear algebra.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "ecorr/matrix.hpp"

namespace oracle {

inline Eigen::MatrixXd to_eigen(const ecorr::Matrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
    return e;
}

inline ecorr::Matrix from_eigen(const Eigen::MatrixXd& e) {
    ecorr::Matrix m(e.rows(), e.cols());
    for (Eigen::Index i = 0; i < e.rows(); ++i)
        for (Eigen::Index j = 0; j < e.cols(); ++j) m(i, j) = e(i, j);
    return m;
}

/// Long-run alternating projections with Dykstra's correction, run to a
/// 1e-12 relative change or 10^4 iterations.
inline Eigen::MatrixXd nearest_correlation(const Eigen::MatrixXd& a, double tol = 1e-12, int max_iter = 10000) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd y = a, ds = Eigen::MatrixXd::Zero(n, n), x_prev = Eigen::MatrixXd::Zero(n, n);
    for (int it = 0; it < max_iter; ++it) {
        Eigen::MatrixXd r = y - ds;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
        Eigen::VectorXd w = es.eigenvalues().cwiseMax(0.0);
        Eigen::MatrixXd x = es.eigenvectors() * w.asDiagonal() * es.eigenvectors().transpose();
        ds = x - r;
        Eigen::MatrixXd y_prev = y;
        y = x;
        y.diagonal().setOnes();
        const double change = std::max({(x - x_prev).norm() / x.norm(), (y - y_prev).norm() / y.norm(),
                                         (y - x).norm() / y.norm()});
        x_prev = x;
        if (change <= tol) break;
    }
    return y;
}

inline double det3(const ecorr::Matrix& m) {
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

/// Exact squared-Euclidean assignment cost by enumerating all permutations.
inline double brute_force_w2(const std::vector<std::pair<double, double>>& a,
                             const std::vector<std::pair<double, double>>& b) {
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double dx = a[i].first - b[perm[i]].first;
            const double dy = a[i].second - b[perm[i]].second;
            cost += dx * dx + dy * dy;
        }
        best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / static_cast<double>(a.size()));
}

}  // namespace oracle
