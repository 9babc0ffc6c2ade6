#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ecorr/matrix.hpp"
#include "ecorr/rng.hpp"

namespace ecorr::portfolio {

enum class Method { HRP = 0, IVP = 1, EW = 2 };
inline constexpr std::array<Method, 3> kAllMethods{Method::HRP, Method::IVP, Method::EW};

std::string to_string(Method m);
Method parse_method(const std::string& name);

/// Long-only weights summing to one.
struct PortfolioWeights {
    std::vector<double> weights;

    std::size_t size() const { return weights.size(); }
    double operator[](std::size_t i) const { return weights[i]; }
};

/// Hierarchical risk parity: average linkage on sqrt(2(1 - rho)),
/// quasi-diagonal leaf order, recursive bisection by inverse cluster variance.
PortfolioWeights hrp_weights(const CovarianceMatrix& cov);
/// w_i proportional to 1 / variance_i. Throws InvalidInput on a
/// non-positive variance.
PortfolioWeights ivp_weights(std::span<const double> variances);
PortfolioWeights ivp_weights(const SymmetricMatrix& cov);
PortfolioWeights ew_weights(std::size_t dim);
PortfolioWeights weights(Method method, const CovarianceMatrix& cov);

struct JitteredFactor {
    Matrix lower;          ///< L with L L^T = (C + jitter I) / (1 + jitter)
    double jitter = 0.0;
};

/// Cholesky of a correlation matrix, walking a diagonal jitter ladder
/// 0, 1e-12, ..., 1e-6 until it succeeds. Throws NotPositiveDefinite.
JitteredFactor correlation_factor(const CorrelationMatrix& corr);

/// T x dim zero-mean Gaussian returns with covariance diag(v) C diag(v).
Matrix simulate_returns(const CorrelationMatrix& corr, std::span<const double> vols, std::size_t T, Seed seed);
Matrix simulate_returns(const JitteredFactor& factor, std::span<const double> vols, std::size_t T, Seed seed);

/// Unbiased sample covariance of the columns.
SymmetricMatrix sample_covariance(const Matrix& returns);

/// Daily vols, lognormal(log(0.2 / sqrt(252)), 0.25) per asset.
std::vector<double> draw_vols(std::size_t dim, Seed seed, double annual_vol = 0.2, double log_sd = 0.25);

inline constexpr double kAnnualization = 252.0;

/// Realized annualized volatility of R w.
double portfolio_vol(const Matrix& returns, const PortfolioWeights& w);
/// Largest peak-to-trough loss of the compounded wealth path, in [0, 1].
double max_drawdown(const Matrix& returns, const PortfolioWeights& w);

struct RiskReport {
    double in_sample_vol = 0.0;
    double out_sample_vol = 0.0;
    double max_drawdown = 0.0;
    double decay = 0.0;  ///< out_sample_vol - in_sample_vol
};

struct BacktestSpec {
    std::size_t t_in = 252;
    std::size_t t_out = 252;
};

/// Weights fitted on an in-sample panel (stream derive(seed, 0)), evaluated
/// there and on a fresh panel (stream derive(seed, 1)).
RiskReport backtest(const CorrelationMatrix& corr, std::span<const double> vols, Method method,
                    const BacktestSpec& spec, Seed seed);
/// All methods on the same pair of panels, indexed by Method.
std::array<RiskReport, 3> backtest_all(const CorrelationMatrix& corr, std::span<const double> vols,
                                       const BacktestSpec& spec, Seed seed);

}  // namespace ecorr::portfolio
