#include "ecorr/portfolio.hpp"

#include <algorithm>
#include <cmath>

#include "ecorr/facts.hpp"
#include "ecorr/linalg.hpp"
#include "ecorr/util.hpp"

namespace ecorr::portfolio {

namespace {

constexpr std::array<double, 8> kJitterLadder{0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};

void normalize(std::vector<double>& w) {
    const double s = compensated_sum(w);
    for (auto& v : w) v /= s;
}

/// Variance of the inverse-variance portfolio restricted to `idx`.
double cluster_variance(const SymmetricMatrix& cov, std::span<const std::size_t> idx) {
    std::vector<double> w(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) w[a] = 1.0 / cov(idx[a], idx[a]);
    normalize(w);
    double v = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = 0; b < idx.size(); ++b) v += w[a] * w[b] * cov(idx[a], idx[b]);
    return v;
}

/// Leaf order with children sorted by (size, height, smallest variance), so
/// the bisection does not depend on how assets are labeled.
std::vector<std::size_t> canonical_order(const facts::Dendrogram& tree, const SymmetricMatrix& cov) {
    const std::size_t n = tree.leaves;
    struct Key {
        std::size_t size;
        double height;
        double min_var;
    };
    std::vector<Key> key(n + tree.merges.size());
    for (std::size_t i = 0; i < n; ++i) key[i] = {1, 0.0, cov(i, i)};
    for (std::size_t k = 0; k < tree.merges.size(); ++k) {
        const auto& m = tree.merges[k];
        key[n + k] = {m.size, m.height, std::min(key[m.left].min_var, key[m.right].min_var)};
    }
    auto before = [&](std::size_t a, std::size_t b) {
        const auto &x = key[a], &y = key[b];
        if (x.size != y.size) return x.size < y.size;
        if (x.height != y.height) return x.height < y.height;
        return x.min_var < y.min_var;
    };
    std::vector<std::size_t> order, stack{n + tree.merges.size() - 1};
    while (!stack.empty()) {
        const std::size_t c = stack.back();
        stack.pop_back();
        if (c < n) {
            order.push_back(c);
            continue;
        }
        const auto& m = tree.merges[c - n];
        const bool swap = before(m.right, m.left);
        stack.push_back(swap ? m.left : m.right);
        stack.push_back(swap ? m.right : m.left);
    }
    return order;
}

std::vector<double> portfolio_series(const Matrix& returns, const PortfolioWeights& w) {
    require(returns.cols() == w.size(), ErrorKind::InvalidInput, "portfolio: weight count does not match panel width");
    std::vector<double> r(returns.rows(), 0.0);
    for (std::size_t t = 0; t < returns.rows(); ++t)
        for (std::size_t j = 0; j < returns.cols(); ++j) r[t] += returns(t, j) * w[j];
    return r;
}

}  // namespace

std::string to_string(Method m) {
    switch (m) {
        case Method::HRP: return "hrp";
        case Method::IVP: return "ivp";
        case Method::EW: return "ew";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    for (Method m : kAllMethods)
        if (name == to_string(m)) return m;
    fail(ErrorKind::ConfigError, "unknown allocation method '" + name + "' (expected hrp, ivp or ew)");
}

PortfolioWeights hrp_weights(const CovarianceMatrix& cov) {
    const auto& s = cov.symmetric();
    const std::size_t n = s.dim();
    if (n == 1) return {{1.0}};
    const CorrelationMatrix corr(covariance_to_correlation(s), 1e-8);
    const auto tree = facts::average_linkage(facts::correlation_distance(corr));

    std::vector<double> w(n, 1.0);
    std::vector<std::vector<std::size_t>> clusters{canonical_order(tree, s)};
    while (!clusters.empty()) {
        std::vector<std::vector<std::size_t>> next;
        for (const auto& c : clusters) {
            if (c.size() < 2) continue;
            const std::size_t half = c.size() / 2;
            std::vector<std::size_t> left(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
            std::vector<std::size_t> right(c.begin() + static_cast<std::ptrdiff_t>(half), c.end());
            const double vl = cluster_variance(s, left), vr = cluster_variance(s, right);
            const double alpha = 1.0 - vl / (vl + vr);
            for (auto i : left) w[i] *= alpha;
            for (auto i : right) w[i] *= 1.0 - alpha;
            next.push_back(std::move(left));
            next.push_back(std::move(right));
        }
        clusters = std::move(next);
    }
    normalize(w);
    return {std::move(w)};
}

PortfolioWeights ivp_weights(std::span<const double> variances) {
    require(!variances.empty(), ErrorKind::InvalidInput, "ivp: no assets");
    std::vector<double> w(variances.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        require(variances[i] > 0.0 && std::isfinite(variances[i]), ErrorKind::InvalidInput,
                "ivp: asset " + std::to_string(i) + " has non-positive variance");
        w[i] = 1.0 / variances[i];
    }
    normalize(w);
    return {std::move(w)};
}

PortfolioWeights ivp_weights(const SymmetricMatrix& cov) {
    std::vector<double> d(cov.dim());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = cov(i, i);
    return ivp_weights(d);
}

PortfolioWeights ew_weights(std::size_t dim) {
    require(dim >= 1, ErrorKind::InvalidInput, "ew: dim must be >= 1");
    return {std::vector<double>(dim, 1.0 / static_cast<double>(dim))};
}

PortfolioWeights weights(Method method, const CovarianceMatrix& cov) {
    switch (method) {
        case Method::HRP: return hrp_weights(cov);
        case Method::IVP: return ivp_weights(cov.symmetric());
        case Method::EW: return ew_weights(cov.dim());
    }
    fail(ErrorKind::InvalidInput, "unknown method");
}

JitteredFactor correlation_factor(const CorrelationMatrix& corr) {
    const std::size_t n = corr.dim();
    for (double eps : kJitterLadder) {
        SymmetricMatrix s(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) s.set(i, j, i == j ? 1.0 : corr(i, j) / (1.0 + eps));
        if (auto l = try_cholesky(s)) return {std::move(*l), eps};
    }
    fail(ErrorKind::NotPositiveDefinite, "correlation matrix is not positive definite after jitter up to 1e-6");
}

Matrix simulate_returns(const JitteredFactor& factor, std::span<const double> vols, std::size_t T, Seed seed) {
    const std::size_t n = factor.lower.rows();
    require(vols.size() == n, ErrorKind::InvalidInput, "simulate_returns: vol count does not match dim");
    require(T >= 2, ErrorKind::InvalidInput, "simulate_returns: T must be >= 2");
    for (double v : vols) require(v > 0.0 && std::isfinite(v), ErrorKind::InvalidInput, "simulate_returns: vols must be > 0");
    Rng rng(seed);
    Matrix out(T, n);
    std::vector<double> z(n);
    for (std::size_t t = 0; t < T; ++t) {
        for (auto& v : z) v = rng.normal();
        for (std::size_t i = 0; i < n; ++i) {
            double x = 0.0;
            for (std::size_t k = 0; k <= i; ++k) x += factor.lower(i, k) * z[k];
            out(t, i) = vols[i] * x;
        }
    }
    return out;
}

Matrix simulate_returns(const CorrelationMatrix& corr, std::span<const double> vols, std::size_t T, Seed seed) {
    return simulate_returns(correlation_factor(corr), vols, T, seed);
}

SymmetricMatrix sample_covariance(const Matrix& returns) {
    const std::size_t T = returns.rows(), n = returns.cols();
    require(T >= 2, ErrorKind::InvalidInput, "sample covariance needs at least 2 rows");
    std::vector<double> mean(n, 0.0);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < n; ++j) mean[j] += returns(t, j);
    for (auto& m : mean) m /= static_cast<double>(T);
    SymmetricMatrix s(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double v = 0.0;
            for (std::size_t t = 0; t < T; ++t) v += (returns(t, i) - mean[i]) * (returns(t, j) - mean[j]);
            s.set(i, j, v / static_cast<double>(T - 1));
        }
    return s;
}

std::vector<double> draw_vols(std::size_t dim, Seed seed, double annual_vol, double log_sd) {
    Rng rng(seed);
    const double mu = std::log(annual_vol / std::sqrt(kAnnualization));
    std::vector<double> v(dim);
    for (auto& x : v) x = std::exp(rng.normal(mu, log_sd));
    return v;
}

double portfolio_vol(const Matrix& returns, const PortfolioWeights& w) {
    const auto r = portfolio_series(returns, w);
    const double mean = compensated_sum(r) / static_cast<double>(r.size());
    double s = 0.0;
    for (double x : r) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(r.size() - 1) * kAnnualization);
}

double max_drawdown(const Matrix& returns, const PortfolioWeights& w) {
    const auto r = portfolio_series(returns, w);
    double wealth = 1.0, peak = 1.0, dd = 0.0;
    for (double x : r) {
        wealth *= 1.0 + x;
        peak = std::max(peak, wealth);
        dd = std::max(dd, 1.0 - wealth / peak);
    }
    return std::clamp(dd, 0.0, 1.0);
}

std::array<RiskReport, 3> backtest_all(const CorrelationMatrix& corr, std::span<const double> vols,
                                       const BacktestSpec& spec, Seed seed) {
    const std::size_t n = corr.dim();
    require(spec.t_in >= n + 2 && spec.t_out >= n + 2, ErrorKind::InvalidInput,
            "backtest: t_in and t_out must be >= dim + 2");
    const auto factor = correlation_factor(corr);
    const Matrix in = simulate_returns(factor, vols, spec.t_in, derive(seed, 0));
    const Matrix out = simulate_returns(factor, vols, spec.t_out, derive(seed, 1));
    const CovarianceMatrix cov(sample_covariance(in));
    std::array<RiskReport, 3> reports;
    for (Method m : kAllMethods) {
        const auto w = weights(m, cov);
        auto& r = reports[static_cast<std::size_t>(m)];
        r.in_sample_vol = portfolio_vol(in, w);
        r.out_sample_vol = portfolio_vol(out, w);
        r.max_drawdown = max_drawdown(out, w);
        r.decay = r.out_sample_vol - r.in_sample_vol;
    }
    return reports;
}

RiskReport backtest(const CorrelationMatrix& corr, std::span<const double> vols, Method method,
                    const BacktestSpec& spec, Seed seed) {
    return backtest_all(corr, vols, spec, seed)[static_cast<std::size_t>(method)];
}

}  // namespace ecorr::portfolio
