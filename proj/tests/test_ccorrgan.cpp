#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "ecorr/ccorrgan.hpp"
#include "ecorr/linalg.hpp"
#include "ecorr/util.hpp"

using namespace ecorr;
using namespace ecorr::gan;
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

corpus::LabeledCorpus small_corpus(std::size_t per_regime, std::size_t dim = 16) {
    corpus::SurrogateSpec spec;
    spec.count_per_regime = per_regime;
    spec.dim = dim;
    return corpus::build_surrogate(spec, Seed{5});
}

GanConfig tiny(Arch arch = Arch::Dense) {
    GanConfig c;
    c.arch = arch;
    c.noise_dim = 8;
    c.epochs = 1;
    c.batch_size = 8;
    c.monitor_samples = 4;
    c.seed = Seed{11};
    return c;
}

}  // namespace

TEST_CASE("generator output length is the strict lower triangle") {
    for (Arch a : {Arch::Dense, Arch::Conv}) {
        auto c = tiny(a);
        c.dim = 16;
        CHECK(build(c).generator.output_shape() == nn::Shape{120});
        c.dim = 80;
        CHECK(build(c).generator.output_shape() == nn::Shape{3160});
    }
}

TEST_CASE("raw samples are symmetric unit-diagonal with entries in (-1, 1)") {
    const auto ckpt = build(tiny(Arch::Conv));
    const auto s = sample(ckpt, RegimeLabel::Normal, 5, Seed{3});
    CHECK(s.untrained);
    REQUIRE(s.raw.size() == 5);
    for (const auto& m : s.raw) {
        for (std::size_t i = 0; i < 16; ++i) {
            CHECK(m(i, i) == 1.0);
            for (std::size_t j = 0; j < i; ++j) {
                CHECK(m(i, j) == m(j, i));
                CHECK(std::abs(m(i, j)) < 1.0);
            }
        }
    }
    for (const auto& m : s.matrices) CHECK(validate(m.symmetric(), 1e-8).is_valid);
}

TEST_CASE("sampling is deterministic and prefix-stable") {
    const auto ckpt = build(tiny());
    const auto a = sample(ckpt, RegimeLabel::Rally, 6, Seed{9}, false);
    const auto b = sample(ckpt, RegimeLabel::Rally, 3, Seed{9}, false, 2);
    CHECK(a.matrices.empty());
    for (std::size_t k = 0; k < 3; ++k) CHECK(a.raw[k] == b.raw[k]);
}

TEST_CASE("conditioning label changes the output") {
    const auto ckpt = build(tiny());
    const auto s = sample(ckpt, RegimeLabel::Stressed, 1, Seed{1}, false);
    const auto r = sample(ckpt, RegimeLabel::Rally, 1, Seed{1}, false);
    CHECK(!(s.raw[0] == r.raw[0]));
}

TEST_CASE("one epoch smoke run and determinism") {
    const auto corpus = small_corpus(10);
    REQUIRE(corpus.size() == 30);
    std::size_t calls = 0;
    const auto a = train(build(tiny()), corpus, [&](const GanCheckpoint& c) {
        ++calls;
        CHECK(c.epoch == calls);
    });
    const auto b = train(build(tiny()), corpus);
    CHECK(calls == 1);
    CHECK(a.trained());
    REQUIRE(a.history.size() == 1);
    CHECK(std::isfinite(a.history[0].g_loss));
    CHECK(std::isfinite(a.history[0].d_loss));
    CHECK(a.history[0].d_loss > 0.0);
    CHECK(std::vector<float>(a.generator.parameters().begin(), a.generator.parameters().end()) ==
          std::vector<float>(b.generator.parameters().begin(), b.generator.parameters().end()));
    const auto untrained = build(tiny());
    CHECK(std::vector<float>(a.generator.parameters().begin(), a.generator.parameters().end()) !=
          std::vector<float>(untrained.generator.parameters().begin(), untrained.generator.parameters().end()));
    CHECK_FALSE(sample(a, RegimeLabel::Normal, 1, Seed{0}).untrained);
    const double acc = discriminator_accuracy(a, corpus, Seed{2});
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
}

TEST_CASE("conv architecture trains one epoch") {
    const auto corpus = small_corpus(10);
    const auto a = train(build(tiny(Arch::Conv)), corpus);
    CHECK(std::isfinite(a.history.at(0).g_loss));
}

TEST_CASE("training continues from a checkpoint") {
    const auto corpus = small_corpus(10);
    const auto a = train(train(build(tiny()), corpus), corpus);
    CHECK(a.epoch == 2);
    CHECK(a.history.size() == 2);
}

TEST_CASE("configuration errors") {
    auto c = tiny();
    c.dim = 20;
    CHECK_THROWS_AS(build(c), Error);
    c = tiny();
    c.batch_size = 4;
    CHECK_THROWS_AS(build(c), Error);
    CHECK_THROWS_AS(parse_arch("mlp"), Error);

    auto corpus = small_corpus(10);
    std::erase_if(corpus.items, [](const corpus::Item& i) { return i.label == RegimeLabel::Rally; });
    try {
        train(build(tiny()), corpus);
        FAIL("expected ConfigError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConfigError);
        CHECK(std::string(e.what()).find("rally") != std::string::npos);
    }
    auto c32 = tiny();
    c32.dim = 32;
    try {
        train(build(c32), small_corpus(10));
        FAIL("expected ConfigError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConfigError);
    }
}

TEST_CASE("checkpoint round trip reproduces samples") {
    TempDir dir("gan_ckpt");
    const auto ckpt = train(build(tiny()), small_corpus(10));
    save(ckpt, dir.path);
    CHECK(fs::exists(dir.path / "generator" / "weights.f32le"));
    const auto back = load(dir.path);
    CHECK(back.epoch == ckpt.epoch);
    CHECK(back.history.size() == 1);
    CHECK(back.history[0].g_loss == ckpt.history[0].g_loss);
    CHECK(back.config.noise_dim == 8);
    const auto a = sample(ckpt, RegimeLabel::Stressed, 4, Seed{77}, false);
    const auto b = sample(back, RegimeLabel::Stressed, 4, Seed{77}, false);
    for (std::size_t k = 0; k < 4; ++k) CHECK(a.raw[k] == b.raw[k]);

    write_file(dir.path / "gan.json", "{not json");
    CHECK_THROWS_AS(load(dir.path), Error);
}
