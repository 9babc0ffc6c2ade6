#include "ecorr/mc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ecorr/util.hpp"

namespace ecorr::mc {

using nlohmann::json;

namespace {

constexpr double kRankTol = 1e-10;

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

bool finite_features(const McRecord& r) {
    return std::all_of(r.features.values.begin(), r.features.values.end(), [](double v) { return std::isfinite(v); });
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

/// Linear-interpolated quantile of sorted values.
double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

json record_json(const McRecord& r) {
    json feats = json::object();
    for (std::size_t k = 0; k < kFeatureCount; ++k) feats[std::string(facts::kFeatureNames[k])] = number(r.features.values[k]);
    json reports = json::object();
    for (auto m : portfolio::kAllMethods) {
        const auto& rep = r.reports[static_cast<std::size_t>(m)];
        reports[portfolio::to_string(m)] = {{"in_sample_vol", number(rep.in_sample_vol)},
                                             {"out_sample_vol", number(rep.out_sample_vol)},
                                             {"max_drawdown", number(rep.max_drawdown)},
                                             {"decay", number(rep.decay)}};
    }
    return {{"schema", kRecordSchema},
            {"regime", to_string(r.regime)},
            {"index", r.index},
            {"seed", r.seed.master},
            {"features", feats},
            {"evec1_degenerate", r.features.evec1_degenerate},
            {"reports", reports},
            {"hrp_minus_ivp_outvol", number(r.hrp_minus_ivp_outvol)}};
}

McRecord record_from_json(const json& j) {
    if (j.at("schema").get<int>() != kRecordSchema)
        fail(ErrorKind::UnsupportedVersion, "mc record schema " + j.at("schema").dump() + " is not supported");
    McRecord r;
    r.regime = parse_regime(j.at("regime").get<std::string>());
    r.index = j.at("index").get<std::size_t>();
    r.seed = Seed{j.at("seed").get<std::uint64_t>()};
    const auto& f = j.at("features");
    for (std::size_t k = 0; k < kFeatureCount; ++k) r.features.values[k] = number(f.at(std::string(facts::kFeatureNames[k])));
    r.features.evec1_degenerate = j.at("evec1_degenerate").get<bool>();
    for (auto m : portfolio::kAllMethods) {
        const auto& rep = j.at("reports").at(portfolio::to_string(m));
        auto& out = r.reports[static_cast<std::size_t>(m)];
        out.in_sample_vol = number(rep.at("in_sample_vol"));
        out.out_sample_vol = number(rep.at("out_sample_vol"));
        out.max_drawdown = number(rep.at("max_drawdown"));
        out.decay = number(rep.at("decay"));
    }
    r.hrp_minus_ivp_outvol = number(j.at("hrp_minus_ivp_outvol"));
    return r;
}

}  // namespace

MatrixSource surrogate_source() {
    return [](RegimeLabel regime, std::size_t dim, Seed seed) { return samplers::sample_regime(regime, dim, seed); };
}

Seed simulation_seed(Seed master, RegimeLabel regime, std::size_t index) {
    return derive(derive(master, static_cast<std::uint64_t>(regime)), index);
}

McRecord simulate(const McConfig& config, const MatrixSource& source, RegimeLabel regime, std::size_t index) {
    McRecord r;
    r.regime = regime;
    r.index = index;
    r.seed = simulation_seed(config.seed, regime, index);
    const auto corr = source(regime, config.dim, derive(r.seed, 0));
    require(corr.dim() == config.dim, ErrorKind::InvalidInput, "mc: source returned the wrong dim");
    const auto vols = portfolio::draw_vols(config.dim, derive(r.seed, 1), config.annual_vol, config.vol_log_sd);
    r.features = facts::feature_vector(corr);
    r.reports = portfolio::backtest_all(corr, vols, config.backtest, derive(r.seed, 2));
    r.hrp_minus_ivp_outvol = r.reports[static_cast<std::size_t>(portfolio::Method::HRP)].out_sample_vol -
                             r.reports[static_cast<std::size_t>(portfolio::Method::IVP)].out_sample_vol;
    return r;
}

RunResult run(const McConfig& config, const MatrixSource& source, int threads) {
    struct Job {
        RegimeLabel regime;
        std::size_t index;
    };
    std::vector<Job> jobs;
    for (auto r : kAllRegimes)
        for (std::size_t k = 0; k < config.counts[static_cast<std::size_t>(r)]; ++k) jobs.push_back({r, k});
    std::vector<std::optional<McRecord>> slots(jobs.size());
    std::vector<std::string> errors(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
        try {
            slots[i] = simulate(config, source, jobs[i].regime, jobs[i].index);
        } catch (const Error& e) {
            errors[i] = std::string(to_string(e.kind())) + ": " + e.what();
        }
    });
    RunResult out;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (slots[i])
            out.records.push_back(std::move(*slots[i]));
        else
            out.skipped.push_back({jobs[i].regime, jobs[i].index, errors[i]});
    }
    return out;
}

void write_records(std::ostream& out, const std::vector<McRecord>& records) {
    for (const auto& r : records) out << record_json(r).dump() << '\n';
}

std::vector<McRecord> read_records(std::istream& in) {
    std::vector<McRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            fail(ErrorKind::ParseError, "mc records, line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_records(const std::filesystem::path& path, const std::vector<McRecord>& records) {
    std::ostringstream os;
    write_records(os, records);
    write_file(path, os.str());
}

std::vector<McRecord> read_records(const std::filesystem::path& path) {
    std::istringstream is(read_file(path));
    return read_records(is);
}

std::string to_string(Target t) { return t == Target::Outperformance ? "outperformance" : "decay"; }

Target parse_target(const std::string& name) {
    if (name == "outperformance") return Target::Outperformance;
    if (name == "decay") return Target::Decay;
    fail(ErrorKind::ConfigError, "unknown target '" + name + "' (expected outperformance or decay)");
}

double target_value(const McRecord& r, Target target, portfolio::Method method) {
    return target == Target::Outperformance ? r.hrp_minus_ivp_outvol : r.reports[static_cast<std::size_t>(method)].decay;
}

LinearFit fit_linear(const Matrix& x, std::span<const double> y, const std::vector<std::string>& names) {
    const std::size_t n = x.rows(), k = x.cols();
    require(y.size() == n, ErrorKind::InvalidInput, "fit: response length does not match the design");
    require(names.size() == k, ErrorKind::InvalidInput, "fit: one name per column required");
    require(n > k + 1, ErrorKind::InvalidInput, "fit: need more rows than columns");

    LinearFit fit;
    fit.n = n;
    fit.mean.assign(k, 0.0);
    fit.scale.assign(k, 1.0);
    // Columns: intercept, then standardized features.
    std::vector<std::vector<double>> q(k + 1, std::vector<double>(n, 0.0));
    std::fill(q[0].begin(), q[0].end(), 1.0);
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = x(i, c);
        fit.mean[c] = compensated_sum(col) / static_cast<double>(n);
        double ss = 0.0;
        for (double v : col) ss += (v - fit.mean[c]) * (v - fit.mean[c]);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        fit.scale[c] = sd > 0.0 ? sd : 1.0;
        for (std::size_t i = 0; i < n; ++i) q[c + 1][i] = (col[i] - fit.mean[c]) / fit.scale[c];
    }

    const std::size_t m = k + 1;
    Matrix r(m, m);
    for (std::size_t j = 0; j < m; ++j) {
        double orig = 0.0;
        for (double v : q[j]) orig += v * v;
        orig = std::sqrt(orig);
        for (std::size_t p = 0; p < j; ++p) {
            double d = 0.0;
            for (std::size_t i = 0; i < n; ++i) d += q[p][i] * q[j][i];
            r(p, j) = d;
            for (std::size_t i = 0; i < n; ++i) q[j][i] -= d * q[p][i];
        }
        double norm = 0.0;
        for (double v : q[j]) norm += v * v;
        norm = std::sqrt(norm);
        if (orig == 0.0 || norm <= kRankTol * std::max(orig, std::sqrt(static_cast<double>(n)))) {
            std::string msg = "fit: design is rank deficient; column '" + names[j - 1] + "'";
            msg += orig == 0.0 ? " is constant" : " is collinear with earlier columns";
            // Name the earlier columns it depends on.
            std::vector<std::string> with;
            for (std::size_t p = 1; p < j; ++p)
                if (std::abs(r(p, j)) > 1e-8 * orig) with.push_back(names[p - 1]);
            if (!with.empty()) {
                msg += " (";
                for (std::size_t w = 0; w < with.size(); ++w) msg += (w ? ", " : "") + with[w];
                msg += ")";
            }
            fail(ErrorKind::RankDeficient, msg);
        }
        r(j, j) = norm;
        for (auto& v : q[j]) v /= norm;
    }

    std::vector<double> qty(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) qty[j] += q[j][i] * y[i];
    std::vector<double> beta(m, 0.0);
    for (std::size_t jj = m; jj-- > 0;) {
        double s = qty[jj];
        for (std::size_t p = jj + 1; p < m; ++p) s -= r(jj, p) * beta[p];
        beta[jj] = s / r(jj, jj);
    }
    fit.intercept = beta[0];
    fit.coefficients.assign(beta.begin() + 1, beta.end());

    double ymean = 0.0;
    for (double v : y) ymean += v;
    ymean /= static_cast<double>(n);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double pred = fit.intercept;
        for (std::size_t c = 0; c < k; ++c) pred += fit.coefficients[c] * (x(i, c) - fit.mean[c]) / fit.scale[c];
        ss_res += (y[i] - pred) * (y[i] - pred);
        ss_tot += (y[i] - ymean) * (y[i] - ymean);
    }
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

double SurrogateModel::predict(std::span<const double> x) const {
    require(x.size() == fit.coefficients.size(), ErrorKind::InvalidInput, "predict: feature count mismatch");
    double v = fit.intercept;
    for (std::size_t k = 0; k < x.size(); ++k) v += fit.coefficients[k] * (x[k] - fit.mean[k]) / fit.scale[k];
    return v;
}

std::vector<double> SurrogateModel::raw_weights() const {
    std::vector<double> w(fit.coefficients.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = fit.coefficients[k] / fit.scale[k];
    return w;
}

SurrogateModel fit_surrogate(const std::vector<McRecord>& records, Target target, portfolio::Method method) {
    SurrogateModel model;
    model.target = target;
    model.method = method;
    for (auto name : facts::kFeatureNames) model.features.emplace_back(name);
    std::vector<const McRecord*> usable;
    for (const auto& r : records)
        if (finite_features(r) && std::isfinite(target_value(r, target, method))) usable.push_back(&r);
    model.dropped = records.size() - usable.size();
    require(usable.size() >= 10 * kFeatureCount, ErrorKind::InvalidInput,
            "fit_surrogate: need at least " + std::to_string(10 * kFeatureCount) + " usable records, got " +
                std::to_string(usable.size()));
    Matrix x(usable.size(), kFeatureCount);
    std::vector<double> y(usable.size());
    for (std::size_t i = 0; i < usable.size(); ++i) {
        for (std::size_t k = 0; k < kFeatureCount; ++k) x(i, k) = usable[i]->features.values[k];
        y[i] = target_value(*usable[i], target, method);
    }
    model.fit = fit_linear(x, y, model.features);
    return model;
}

ShapleyAttribution shapley(const std::function<double(std::span<const double>)>& model, std::span<const double> x,
                           std::span<const double> background) {
    const std::size_t k = x.size();
    require(background.size() == k, ErrorKind::InvalidInput, "shapley: background length mismatch");
    require(k <= kMaxShapleyFeatures, ErrorKind::Unsupported,
            "shapley: " + std::to_string(k) + " features exceed the exact-enumeration limit of 12");
    const std::size_t subsets = std::size_t{1} << k;
    std::vector<double> value(subsets);
    std::vector<double> z(k);
    for (std::size_t s = 0; s < subsets; ++s) {
        for (std::size_t i = 0; i < k; ++i) z[i] = (s >> i) & 1U ? x[i] : background[i];
        value[s] = model(z);
    }
    // weight[m] = m! (k - m - 1)! / k!
    std::vector<double> weight(k, 0.0);
    for (std::size_t m = 0; m < k; ++m) {
        double w = 1.0 / static_cast<double>(k);
        for (std::size_t t = 1; t <= m; ++t) w *= static_cast<double>(t) / static_cast<double>(k - t);
        weight[m] = w;
    }
    ShapleyAttribution out;
    out.phi.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        std::vector<double> terms;
        terms.reserve(subsets / 2);
        for (std::size_t s = 0; s < subsets; ++s) {
            if (s & bit) continue;
            terms.push_back(weight[static_cast<std::size_t>(std::popcount(s))] * (value[s | bit] - value[s]));
        }
        out.phi[i] = compensated_sum(terms);
    }
    out.baseline = value[0];
    out.prediction = value[subsets - 1];
    return out;
}

std::vector<double> background_means(const std::vector<McRecord>& records) {
    std::vector<double> mean(kFeatureCount, 0.0);
    std::size_t n = 0;
    for (const auto& r : records) {
        if (!finite_features(r)) continue;
        ++n;
        for (std::size_t k = 0; k < kFeatureCount; ++k) mean[k] += r.features.values[k];
    }
    require(n > 0, ErrorKind::InvalidInput, "background: no records with finite features");
    for (auto& v : mean) v /= static_cast<double>(n);
    return mean;
}

ShapleyAttribution shapley(const SurrogateModel& model, const McRecord& record, const std::vector<McRecord>& background) {
    const auto bg = background_means(background);
    const std::vector<double> x(record.features.values.begin(), record.features.values.end());
    return shapley([&](std::span<const double> z) { return model.predict(z); }, x, bg);
}

std::vector<RegimeFinding> regime_findings(const std::vector<McRecord>& records, Seed seed, std::size_t resamples) {
    require(resamples >= 1, ErrorKind::InvalidInput, "findings: resamples must be >= 1");
    std::vector<RegimeFinding> out;
    for (auto regime : kAllRegimes) {
        std::vector<double> gap, coph, disp;
        for (const auto& r : records) {
            if (r.regime != regime) continue;
            gap.push_back(r.hrp_minus_ivp_outvol);
            coph.push_back(r.features.cophenetic_coeff());
            disp.push_back(r.features.evec1_dispersion());
        }
        RegimeFinding f;
        f.regime = regime;
        f.count = gap.size();
        f.insufficient = f.count < kMinFindingCount;
        if (gap.empty()) {
            out.push_back(f);
            continue;
        }
        const auto n = static_cast<double>(gap.size());
        std::size_t wins = 0;
        for (double g : gap) wins += g < 0.0;
        f.win_rate = static_cast<double>(wins) / n;
        f.mean_gap = compensated_sum(gap) / n;

        Rng rng(derive(seed, static_cast<std::uint64_t>(regime)));
        std::vector<double> boot_win(resamples), boot_gap(resamples);
        for (std::size_t b = 0; b < resamples; ++b) {
            std::size_t w = 0;
            double s = 0.0;
            for (std::size_t i = 0; i < gap.size(); ++i) {
                const double g = gap[rng.index(gap.size())];
                w += g < 0.0;
                s += g;
            }
            boot_win[b] = static_cast<double>(w) / n;
            boot_gap[b] = s / n;
        }
        std::sort(boot_win.begin(), boot_win.end());
        std::sort(boot_gap.begin(), boot_gap.end());
        f.win_rate_ci = {quantile(boot_win, 0.025), quantile(boot_win, 0.975)};
        f.mean_gap_ci = {quantile(boot_gap, 0.025), quantile(boot_gap, 0.975)};
        f.corr_gap_cophenetic = pearson(gap, coph);
        f.corr_gap_evec1_dispersion = pearson(gap, disp);
        out.push_back(f);
    }
    return out;
}

}  // namespace ecorr::mc
