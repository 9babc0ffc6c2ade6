#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecorr/corpus.hpp"
#include "ecorr/facts.hpp"
#include "ecorr/linalg.hpp"
#include "ecorr/util.hpp"

using namespace ecorr;
using namespace ecorr::corpus;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("ecorr_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ReturnsTable gaussian_returns(std::size_t t, std::size_t d, Seed seed, double scale = 0.01) {
    Rng rng(seed);
    ReturnsTable table;
    for (std::size_t j = 0; j < d; ++j) table.assets.push_back("A" + std::to_string(j));
    table.returns = Matrix(t, d);
    for (auto& v : table.returns.data()) v = scale * rng.normal();
    return table;
}

std::string to_csv(const ReturnsTable& t) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t j = 0; j < t.assets.size(); ++j) os << (j ? "," : "") << t.assets[j];
    os << "\n";
    for (std::size_t r = 0; r < t.returns.rows(); ++r) {
        for (std::size_t j = 0; j < t.returns.cols(); ++j) os << (j ? "," : "") << t.returns(r, j);
        os << "\n";
    }
    return os.str();
}

void check_equal(const LabeledCorpus& a, const LabeledCorpus& b) {
    REQUIRE(a.size() == b.size());
    CHECK(a.dim == b.dim);
    CHECK(a.source == b.source);
    CHECK(a.assets == b.assets);
    CHECK(a.repairs == b.repairs);
    CHECK(a.window.has_value() == b.window.has_value());
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a.items[k].matrix == b.items[k].matrix);
        CHECK(a.items[k].label == b.items[k].label);
        CHECK(a.items[k].meta == b.items[k].meta);
    }
}

}  // namespace

TEST_CASE("window arithmetic") {
    CHECK(window_count(600, {252, 21}) == 17);
    CHECK(window_count(252, {252, 21}) == 1);
    CHECK(window_count(251, {252, 21}) == 0);
    const auto corpus = ingest_returns(gaussian_returns(600, 4, Seed{1}));
    CHECK(corpus.size() == 17);
    CHECK(corpus.items[16].meta.start == 16 * 21);
}

TEST_CASE("tercile labels are balanced") {
    for (std::size_t t : {600u, 620u, 641u}) {
        const auto c = ingest_returns(gaussian_returns(t, 5, Seed{t}), {30, 7});
        const auto counts = c.class_counts();
        const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
        CHECK(*hi - *lo <= 1);
        for (const auto& it : c.items) {
            // Label order follows the window return.
            for (const auto& other : c.items)
                if (static_cast<int>(it.label) < static_cast<int>(other.label))
                    CHECK(it.meta.ew_return <= other.meta.ew_return);
        }
    }
}

TEST_CASE("fixed thresholds") {
    const auto c = ingest_returns(gaussian_returns(400, 4, Seed{3}), {20, 5}, LabelRule{0.02});
    for (const auto& it : c.items) {
        if (it.meta.ew_return < -0.02) CHECK(it.label == RegimeLabel::Stressed);
        else if (it.meta.ew_return > 0.02) CHECK(it.label == RegimeLabel::Rally);
        else CHECK(it.label == RegimeLabel::Normal);
    }
}

TEST_CASE("labels are invariant to positive scaling") {
    auto base = gaussian_returns(500, 6, Seed{4});
    auto scaled = base;
    scaled.returns *= 7.5;
    const auto a = ingest_returns(base, {40, 10});
    const auto b = ingest_returns(scaled, {40, 10});
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a.items[k].label == b.items[k].label);
        CHECK(max_abs_diff(a.items[k].matrix.matrix(), b.items[k].matrix.matrix()) <= 1e-12);
    }
}

TEST_CASE("ingested matrices are valid and repairs are counted") {
    // Window length close to dim gives noisy estimates.
    const auto c = ingest_returns(gaussian_returns(300, 10, Seed{5}), {12, 3});
    std::size_t repaired = 0;
    for (const auto& it : c.items) {
        CHECK(validate(it.matrix.symmetric()).is_valid);
        repaired += it.meta.repaired;
    }
    CHECK(repaired == c.repairs);
}

TEST_CASE("constant column is rejected") {
    auto t = gaussian_returns(300, 4, Seed{6});
    for (std::size_t r = 0; r < 300; ++r) t.returns(r, 2) = 0.001;
    try {
        ingest_returns(t, {50, 10});
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateColumn);
        CHECK(std::string(e.what()).find("A2") != std::string::npos);
    }
}

TEST_CASE("csv parsing") {
    const auto t = gaussian_returns(50, 3, Seed{7});
    const auto parsed = parse_returns_csv(to_csv(t));
    CHECK(parsed.assets == t.assets);
    CHECK(parsed.returns == t.returns);

    try {
        parse_returns_csv("a,b\n0.1,0.2\n0.3,x\n");
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ParseError);
        CHECK(std::string(e.what()).find("row 3, column 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_returns_csv("a,b\n0.1\n"), Error);
    CHECK_THROWS_AS(parse_returns_csv("a,b\n0.1,\n"), Error);

    TempDir dir("csv");
    write_file(dir.path / "r.csv", to_csv(gaussian_returns(300, 4, Seed{8})));
    CHECK(ingest_returns(dir.path / "r.csv").size() == 3);
}

TEST_CASE("surrogate corpus") {
    SurrogateSpec spec;
    spec.count_per_regime = 100;
    spec.dim = 12;
    const auto c = build_surrogate(spec, Seed{9});
    CHECK(c.size() == 300);
    CHECK(c.class_counts() == std::array<std::size_t, 3>{100, 100, 100});
    std::array<double, 3> mean{};
    for (const auto& it : c.items) {
        CHECK(validate(it.matrix.symmetric()).is_valid);
        mean[static_cast<int>(it.label)] += facts::stylized_report(it.matrix).sf1_mean_offdiag / 100.0;
    }
    CHECK(mean[0] > mean[1]);
    CHECK(mean[1] > mean[2]);

    const auto threaded = build_surrogate(spec, Seed{9}, 3);
    check_equal(c, threaded);
}

TEST_CASE("container round trip") {
    TempDir dir("roundtrip");
    for (int k = 0; k < 100; ++k) {
        SurrogateSpec spec;
        spec.count_per_regime = 1 + k % 3;
        spec.dim = 4 + k % 5;
        const auto c = build_surrogate(spec, derive(Seed{10}, k));
        write_corpus(c, dir.path / std::to_string(k));
        check_equal(c, read_corpus(dir.path / std::to_string(k)));
    }
    const auto ingested = ingest_returns(gaussian_returns(300, 5, Seed{11}), {40, 20});
    write_corpus(ingested, dir.path / "ingested");
    check_equal(ingested, read_corpus(dir.path / "ingested"));

    LabeledCorpus empty;
    empty.dim = 6;
    write_corpus(empty, dir.path / "empty");
    const auto e = read_corpus(dir.path / "empty");
    CHECK(e.size() == 0);
    CHECK(e.dim == 6);
}

TEST_CASE("container corruption and versioning") {
    TempDir dir("corrupt");
    SurrogateSpec spec;
    spec.count_per_regime = 2;
    spec.dim = 5;
    write_corpus(build_surrogate(spec, Seed{12}), dir.path);

    auto payload = read_file(dir.path / "matrices.f64le");
    write_file(dir.path / "matrices.f64le", payload.substr(0, payload.size() - 8));
    try {
        read_corpus(dir.path);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::CorruptData);
    }
    payload[17] ^= 1;
    write_file(dir.path / "matrices.f64le", payload);
    CHECK_THROWS_AS(read_corpus(dir.path), Error);

    write_corpus(build_surrogate(spec, Seed{12}), dir.path);
    auto manifest = read_file(dir.path / "manifest.json");
    const auto pos = manifest.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    manifest.replace(pos, 12, "\"version\": 2");
    write_file(dir.path / "manifest.json", manifest);
    try {
        read_corpus(dir.path);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UnsupportedVersion);
    }
}
