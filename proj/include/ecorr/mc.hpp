#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ecorr/facts.hpp"
#include "ecorr/portfolio.hpp"
#include "ecorr/samplers.hpp"

namespace ecorr::mc {

using facts::FeatureVector;
using facts::kFeatureCount;

/// Draws one regime-conditioned matrix; must be a pure function of its arguments.
using MatrixSource = std::function<CorrelationMatrix(RegimeLabel regime, std::size_t dim, Seed seed)>;

MatrixSource surrogate_source();

struct McConfig {
    std::array<std::size_t, 3> counts{100, 100, 100};  ///< simulations per regime
    std::size_t dim = 16;
    portfolio::BacktestSpec backtest;
    double annual_vol = 0.2;
    double vol_log_sd = 0.25;
    Seed seed{0};
};

struct McRecord {
    RegimeLabel regime = RegimeLabel::Normal;
    std::size_t index = 0;  ///< simulation index within the regime
    Seed seed;
    FeatureVector features;
    std::array<portfolio::RiskReport, 3> reports{};  ///< indexed by portfolio::Method
    double hrp_minus_ivp_outvol = 0.0;
};

struct SkippedDraw {
    RegimeLabel regime;
    std::size_t index;
    std::string reason;
};

struct RunResult {
    std::vector<McRecord> records;  ///< regime-major, then index
    std::vector<SkippedDraw> skipped;
};

/// Simulation (r, k) uses seed derive(derive(master, r), k): the matrix from
/// stream 0, the vols from stream 1, the return panels from stream 2.
Seed simulation_seed(Seed master, RegimeLabel regime, std::size_t index);
McRecord simulate(const McConfig& config, const MatrixSource& source, RegimeLabel regime, std::size_t index);
RunResult run(const McConfig& config, const MatrixSource& source, int threads = 1);

inline constexpr int kRecordSchema = 1;

/// NDJSON, one record per line; lines starting with '#' are comments.
void write_records(std::ostream& out, const std::vector<McRecord>& records);
std::vector<McRecord> read_records(std::istream& in);
void write_records(const std::filesystem::path& path, const std::vector<McRecord>& records);
std::vector<McRecord> read_records(const std::filesystem::path& path);

enum class Target { Outperformance, Decay };
std::string to_string(Target t);
Target parse_target(const std::string& name);

/// Per-record response for `target`; decay uses `method`.
double target_value(const McRecord& r, Target target, portfolio::Method method = portfolio::Method::HRP);

struct LinearFit {
    std::vector<double> mean;
    std::vector<double> scale;         ///< population sd, 1 when constant
    std::vector<double> coefficients;  ///< on standardized features
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};

/// OLS with intercept on standardized columns via modified Gram-Schmidt QR.
/// Throws RankDeficient naming the first column dependent on earlier ones.
LinearFit fit_linear(const Matrix& x, std::span<const double> y, const std::vector<std::string>& names);

struct SurrogateModel {
    Target target = Target::Outperformance;
    portfolio::Method method = portfolio::Method::HRP;
    std::vector<std::string> features;
    LinearFit fit;
    std::size_t dropped = 0;  ///< records with a non-finite feature

    double predict(std::span<const double> x) const;
    /// Raw-scale weights w with prediction = b + sum w_i x_i.
    std::vector<double> raw_weights() const;
};

/// Needs at least 10 usable records per feature.
SurrogateModel fit_surrogate(const std::vector<McRecord>& records, Target target,
                             portfolio::Method method = portfolio::Method::HRP);

inline constexpr std::size_t kMaxShapleyFeatures = 12;

struct ShapleyAttribution {
    std::vector<double> phi;
    double baseline = 0.0;
    double prediction = 0.0;
};

/// Interventional Shapley values by enumeration of all 2^k coalitions;
/// absent features take their background value.
ShapleyAttribution shapley(const std::function<double(std::span<const double>)>& model, std::span<const double> x,
                           std::span<const double> background);
ShapleyAttribution shapley(const SurrogateModel& model, const McRecord& record, const std::vector<McRecord>& background);

/// Mean of each feature over records whose features are all finite.
std::vector<double> background_means(const std::vector<McRecord>& records);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return lo <= v && v <= hi; }
};

struct RegimeFinding {
    RegimeLabel regime;
    std::size_t count = 0;
    double win_rate = 0.0;  ///< fraction with hrp_minus_ivp_outvol < 0
    Interval win_rate_ci;
    double mean_gap = 0.0;
    Interval mean_gap_ci;
    double corr_gap_cophenetic = 0.0;
    double corr_gap_evec1_dispersion = 0.0;
    bool insufficient = false;  ///< fewer than kMinFindingCount records
};

inline constexpr std::size_t kMinFindingCount = 100;
inline constexpr std::size_t kBootstrapResamples = 1000;

/// Percentile 95% bootstrap intervals from stream derive(seed, regime).
std::vector<RegimeFinding> regime_findings(const std::vector<McRecord>& records, Seed seed,
                                           std::size_t resamples = kBootstrapResamples);

}  // namespace ecorr::mc
