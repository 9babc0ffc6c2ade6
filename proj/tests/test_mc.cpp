#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ecorr/mc.hpp"

using namespace ecorr;
using namespace ecorr::mc;

namespace {

std::string ndjson(const std::vector<McRecord>& r) {
    std::ostringstream os;
    write_records(os, r);
    return os.str();
}

McConfig small_config(std::size_t per_regime) {
    McConfig c;
    c.counts = {per_regime, per_regime, per_regime};
    c.seed = Seed{77};
    return c;
}

std::vector<std::string> names(std::size_t k) {
    std::vector<std::string> n;
    for (std::size_t i = 0; i < k; ++i) n.push_back("x" + std::to_string(i));
    return n;
}

/// Shapley value from the permutation definition.
std::vector<double> permutation_shapley(const std::function<double(std::span<const double>)>& f,
                                        const std::vector<double>& x, const std::vector<double>& bg) {
    const std::size_t k = x.size();
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> phi(k, 0.0);
    double count = 0.0;
    do {
        auto z = bg;
        double prev = f(z);
        for (auto i : perm) {
            z[i] = x[i];
            const double cur = f(z);
            phi[i] += cur - prev;
            prev = cur;
        }
        count += 1.0;
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (auto& p : phi) p /= count;
    return phi;
}

}  // namespace

TEST_CASE("run cardinality and regime counts") {
    auto c = small_config(10);
    c.counts = {10, 4, 7};
    const auto r = run(c, surrogate_source());
    CHECK(r.records.size() == 21);
    CHECK(r.skipped.empty());
    std::array<std::size_t, 3> seen{};
    for (const auto& rec : r.records) {
        ++seen[static_cast<std::size_t>(rec.regime)];
        CHECK(rec.hrp_minus_ivp_outvol ==
              rec.reports[0].out_sample_vol - rec.reports[1].out_sample_vol);
        CHECK(rec.seed.master == simulation_seed(c.seed, rec.regime, rec.index).master);
    }
    CHECK(seen == c.counts);
}

TEST_CASE("run is independent of thread count") {
    const auto c = small_config(8);
    const auto a = run(c, surrogate_source(), 1), b = run(c, surrogate_source(), 4);
    CHECK(ndjson(a.records) == ndjson(b.records));
    const auto single = simulate(c, surrogate_source(), RegimeLabel::Rally, 5);
    CHECK(ndjson({single}) == ndjson({a.records[16 + 5]}));
}

TEST_CASE("failing draws are skipped with a reason") {
    const auto c = small_config(3);
    const MatrixSource flaky = [](RegimeLabel regime, std::size_t dim, Seed seed) {
        if (regime == RegimeLabel::Normal) fail(ErrorKind::NumericalFailure, "synthetic failure");
        return samplers::sample_regime(regime, dim, seed);
    };
    const auto r = run(c, flaky, 2);
    CHECK(r.records.size() == 6);
    REQUIRE(r.skipped.size() == 3);
    CHECK(r.skipped[0].regime == RegimeLabel::Normal);
    CHECK(r.skipped[0].reason.find("synthetic failure") != std::string::npos);
}

TEST_CASE("records round-trip through NDJSON") {
    auto recs = run(small_config(2), surrogate_source()).records;
    recs[0].features.values[7] = std::nan("");
    const auto text = ndjson(recs);
    std::istringstream is(text);
    const auto back = read_records(is);
    REQUIRE(back.size() == recs.size());
    CHECK(std::isnan(back[0].features.values[7]));
    CHECK(ndjson(back) == text);
    CHECK(back[3].reports[2].out_sample_vol == recs[3].reports[2].out_sample_vol);

    std::istringstream commented("# header\n" + text);
    CHECK(read_records(commented).size() == recs.size());

    std::istringstream bad("{\"schema\": 2}\n");
    CHECK_THROWS_AS(read_records(bad), Error);
    std::istringstream junk("not json\n");
    try {
        read_records(junk);
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ParseError);
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
}

TEST_CASE("linear fit recovers an exact linear target") {
    Rng rng(1);
    const std::size_t n = 200, k = 5;
    Matrix x(n, k);
    std::vector<double> y(n);
    const std::vector<double> w{0.5, -1.25, 2.0, 0.0, 3.5};
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = 0.7;
        for (std::size_t c = 0; c < k; ++c) {
            x(i, c) = rng.normal(static_cast<double>(c), 1.0 + static_cast<double>(c));
            y[i] += w[c] * x(i, c);
        }
    }
    const auto fit = fit_linear(x, y, names(k));
    CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t c = 0; c < k; ++c) CHECK(std::abs(fit.coefficients[c] / fit.scale[c] - w[c]) <= 1e-8);
}

TEST_CASE("pure noise has low R2") {
    Rng rng(2);
    const std::size_t n = 1000;
    Matrix x(n, kFeatureCount);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < kFeatureCount; ++c) x(i, c) = rng.normal();
        y[i] = rng.normal();
    }
    CHECK(fit_linear(x, y, names(kFeatureCount)).r2 < 0.1);
}

TEST_CASE("collinear columns are rank deficient") {
    Rng rng(3);
    const std::size_t n = 50;
    Matrix x(n, 3);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        x(i, 2) = x(i, 0);
        y[i] = rng.normal();
    }
    try {
        fit_linear(x, y, {"a", "b", "dup"});
        FAIL("expected RankDeficient");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::RankDeficient);
        const std::string msg = e.what();
        CHECK(msg.find("'dup'") != std::string::npos);
        CHECK(msg.find("(a)") != std::string::npos);
    }
    for (std::size_t i = 0; i < n; ++i) x(i, 2) = 4.0;
    CHECK_THROWS_AS(fit_linear(x, y, {"a", "b", "const"}), Error);
}

TEST_CASE("standardization absorbs affine rescaling") {
    Rng rng(4);
    const std::size_t n = 100;
    Matrix x(n, 2), z(n, 2);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        z(i, 0) = 1000.0 * x(i, 0) - 7.0;
        z(i, 1) = x(i, 1);
        y[i] = x(i, 0) + 0.3 * rng.normal();
    }
    const auto a = fit_linear(x, y, names(2)), b = fit_linear(z, y, names(2));
    CHECK(a.r2 == doctest::Approx(b.r2).epsilon(1e-12));
    for (int c = 0; c < 2; ++c) CHECK(a.coefficients[c] == doctest::Approx(b.coefficients[c]).epsilon(1e-10));
}

TEST_CASE("linear Shapley equals the closed form") {
    Rng rng(5);
    const auto recs = run(small_config(40), surrogate_source()).records;
    const auto model = fit_surrogate(recs, Target::Outperformance);
    CHECK(model.features.size() == kFeatureCount);
    const auto bg = background_means(recs);
    const auto w = model.raw_weights();
    double worst = 0.0, worst_eff = 0.0;
    for (const auto& r : recs) {
        const auto a = shapley(model, r, recs);
        double sum = 0.0;
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            worst = std::max(worst, std::abs(a.phi[k] - w[k] * (r.features.values[k] - bg[k])));
            sum += a.phi[k];
        }
        worst_eff = std::max(worst_eff, std::abs(sum - (a.prediction - a.baseline)));
    }
    CHECK(worst <= 1e-10);
    CHECK(worst_eff <= 1e-10);
}

TEST_CASE("Shapley axioms on generic models") {
    const std::function<double(std::span<const double>)> f = [](std::span<const double> z) {
        return z[0] * z[1] + std::sin(z[2]) + 0.0 * z[3] + z[0] * z[0] * z[2];
    };
    const std::vector<double> x{1.0, -2.0, 0.5, 3.0}, bg{0.2, 0.1, -0.3, 1.0};
    const auto a = shapley(f, x, bg);
    const auto ref = permutation_shapley(f, x, bg);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.phi[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    CHECK(std::abs(a.phi[3]) <= 1e-15);
    CHECK(std::abs(a.phi[0] + a.phi[1] + a.phi[2] + a.phi[3] - (a.prediction - a.baseline)) <= 1e-12);

    const std::function<double(std::span<const double>)> sym = [](std::span<const double> z) {
        return 2.0 * z[0] + 2.0 * z[1] + z[0] * z[1];
    };
    const std::vector<double> xs{1.5, 1.5}, bs{0.5, 0.5};
    const auto s = shapley(sym, xs, bs);
    CHECK(std::abs(s.phi[0] - s.phi[1]) <= 1e-10);

    const std::vector<double> big(13, 0.0);
    CHECK_THROWS_AS(shapley([](std::span<const double>) { return 0.0; }, big, big), Error);
}

TEST_CASE("surrogate fit needs enough records") {
    const auto recs = run(small_config(5), surrogate_source()).records;
    CHECK_THROWS_AS(fit_surrogate(recs, Target::Decay), Error);
    CHECK(parse_target("decay") == Target::Decay);
    CHECK_THROWS_AS(parse_target("alpha"), Error);
}

TEST_CASE("findings on degenerate and simulated records") {
    McRecord r;
    r.regime = RegimeLabel::Stressed;
    r.hrp_minus_ivp_outvol = -0.01;
    std::vector<McRecord> same(120, r);
    const auto f = regime_findings(same, Seed{1});
    REQUIRE(f.size() == 3);
    CHECK(f[0].count == 120);
    CHECK(f[0].win_rate == 1.0);
    CHECK(f[0].win_rate_ci.lo == 1.0);
    CHECK(f[0].win_rate_ci.hi == 1.0);
    CHECK(f[0].mean_gap_ci.lo == f[0].mean_gap_ci.hi);
    CHECK_FALSE(f[0].insufficient);
    CHECK(f[1].count == 0);
    CHECK(f[1].insufficient);

    const auto recs = run(small_config(30), surrogate_source()).records;
    const auto g = regime_findings(recs, Seed{2}), h = regime_findings(recs, Seed{2});
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(g[i].win_rate_ci.lo <= g[i].win_rate);
        CHECK(g[i].win_rate <= g[i].win_rate_ci.hi);
        CHECK(g[i].win_rate_ci.lo == h[i].win_rate_ci.lo);
        CHECK(std::abs(g[i].corr_gap_cophenetic) <= 1.0);
    }
}
