#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "ecorr/neural.hpp"
#include "ecorr/util.hpp"

using namespace ecorr;
using namespace ecorr::nn;
namespace fs = std::filesystem;

namespace {

Tensor<double> random_input(Shape item, std::size_t batch, Seed seed) {
    Shape s{batch};
    s.insert(s.end(), item.begin(), item.end());
    Tensor<double> t(s);
    Rng rng(seed);
    for (auto& v : t.data) v = rng.normal();
    return t;
}

Network<double> built(Shape in, std::vector<LayerSpec> layers, std::uint64_t seed) {
    Network<double> n(std::move(in), std::move(layers));
    n.initialize(Seed{seed});
    // Non-zero biases so that bias gradients are exercised.
    auto p = n.mutable_parameters();
    Rng rng(Seed{seed + 1});
    for (std::size_t l = 0; l < n.layers().size(); ++l)
        for (std::size_t k = 0; k < n.layer_parameter_count(l); ++k)
            if (p[n.layer_offset(l) + k] == 0.0) p[n.layer_offset(l) + k] = 0.1 * rng.normal();
    return n;
}

void check_gradients(const Network<double>& net, const Tensor<double>& x) {
    const auto r = gradient_check(net, x, 100, Seed{17});
    CHECK(r.probes > 0);
    CHECK(r.failures == 0);
    CHECK(r.max_rel_error <= 1e-4);
}

}  // namespace

TEST_CASE("dense identity and tanh range") {
    Network<double> n({3}, {LayerSpec::dense(3, 3)});
    auto p = n.mutable_parameters();
    for (std::size_t i = 0; i < 3; ++i) p[i * 3 + i] = 1.0;
    const auto x = random_input({3}, 4, Seed{1});
    CHECK(n.forward(x).data == x.data);

    Network<float> t({5}, {LayerSpec::tanh()});
    Tensor<float> big({2, 5});
    for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<float>(i) - 4.5f;
    for (float v : t.forward(big).data) CHECK((v > -1.0f && v < 1.0f));
}

TEST_CASE("1x1 convolution with identity weights") {
    Network<double> n({2, 3, 3}, {LayerSpec::conv2d(2, 2, 1, 1, 0)});
    auto p = n.mutable_parameters();
    p[0] = 1.0;  // out 0 <- in 0
    p[3] = 1.0;  // out 1 <- in 1
    const auto x = random_input({2, 3, 3}, 2, Seed{2});
    CHECK(n.forward(x).data == x.data);
}

TEST_CASE("hand-computed 3x3 convolution") {
    Network<double> n({1, 3, 3}, {LayerSpec::conv2d(1, 1, 2, 1, 0)});
    auto p = n.mutable_parameters();
    p[0] = 1, p[1] = 2, p[2] = 3, p[3] = 4, p[4] = 0.5;
    Tensor<double> x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const auto y = n.forward(x);
    REQUIRE(y.shape == Shape{1, 1, 2, 2});
    // [1 2; 4 5] . [1 2; 3 4] = 1 + 4 + 12 + 20 = 37, plus bias.
    CHECK(y[0] == 37.5);
    CHECK(y[1] == 47.5);
    CHECK(y[2] == 67.5);
    CHECK(y[3] == 77.5);
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
    Network<double> convt({3, 3, 3}, {LayerSpec::conv_transpose2d(3, 2, 3, 2, 1)});
    CHECK(convt.output_shape() == Shape{2, 5, 5});
    // <conv(x), y> == <x, conv^T(y)> with shared zero-bias weights on a 5x5 input.
    Network<double> c5({2, 5, 5}, {LayerSpec::conv2d(2, 3, 3, 2, 1)});
    c5.initialize(Seed{4});
    auto pt = convt.mutable_parameters();
    const auto pc = c5.parameters();
    for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < 9; ++k) pt[(o * 2 + c) * 9 + k] = pc[(o * 2 + c) * 9 + k];
    const auto x = random_input({2, 5, 5}, 1, Seed{5});
    const auto y = random_input({3, 3, 3}, 1, Seed{6});
    const auto cx = c5.forward(x);
    const auto ty = convt.forward(y);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
    for (std::size_t i = 0; i < ty.size(); ++i) rhs += x[i] * ty[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("symmetric image and lower triangle") {
    Network<double> n({3 + 2}, {LayerSpec::symmetric_image(3, 2)});
    Tensor<double> x({1, 5}, {0.1, 0.2, 0.3, 7, -1});
    const auto y = n.forward(x);
    REQUIRE(y.shape == Shape{1, 3, 3, 3});
    const double expect[] = {1, 0.1, 0.2, 0.1, 1, 0.3, 0.2, 0.3, 1};
    for (int k = 0; k < 9; ++k) CHECK(y[k] == expect[k]);
    for (int k = 9; k < 18; ++k) CHECK(y[k] == 7);
    for (int k = 18; k < 27; ++k) CHECK(y[k] == -1);

    Network<double> t({1, 3, 3}, {LayerSpec::lower_triangle(3)});
    Tensor<double> img({1, 1, 3, 3}, {1, 2, 4, 0, 1, 6, 2, 0, 1});
    const auto tri = t.forward(img);
    CHECK(tri.data == std::vector<double>{1, 3, 3});
}

TEST_CASE("shape errors name the layer") {
    try {
        Network<float>({4}, {LayerSpec::dense(4, 8), LayerSpec::relu(), LayerSpec::dense(7, 1)});
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ShapeError);
        CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
    }
    Network<float> n({4}, {LayerSpec::dense(4, 2)});
    CHECK_THROWS_AS(n.forward(Tensor<float>({3, 5})), Error);
    CHECK_THROWS_AS(Network<float>({4}, {LayerSpec::reshape({3})}), Error);
}

TEST_CASE("backward: zero gradient, hand derivative, stale cache") {
    Network<double> n({1}, {LayerSpec::dense(1, 1)});
    auto p = n.mutable_parameters();
    p[0] = 1.5;
    p[1] = -0.25;
    Tensor<double> x({1, 1}, {2.0});
    Cache<double> cache;
    const auto y = n.forward(x, &cache);
    const auto zero = n.backward(cache, Tensor<double>(y.shape));
    for (double g : zero.params) CHECK(g == 0.0);

    // Squared loss (wx + b - t)^2 with t = 1.
    const double t = 1.0;
    const Tensor<double> dl({1, 1}, {2.0 * (y[0] - t)});
    const auto g = n.backward(cache, dl);
    CHECK(g.params[0] == doctest::Approx(2.0 * (1.5 * 2.0 - 0.25 - t) * 2.0));
    CHECK(g.params[1] == doctest::Approx(2.0 * (1.5 * 2.0 - 0.25 - t)));

    n.mutable_parameters()[0] = 1.0;
    try {
        n.backward(cache, dl);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::CacheError);
    }
    const Network<double> other = n;
    CHECK_THROWS_AS(other.backward(cache, dl), Error);
}

TEST_CASE("gradient check for every layer kind") {
    check_gradients(built({6}, {LayerSpec::dense(6, 4)}, 1), random_input({6}, 3, Seed{10}));
    check_gradients(built({2, 5, 5}, {LayerSpec::conv2d(2, 3, 3, 1, 1)}, 2), random_input({2, 5, 5}, 2, Seed{11}));
    check_gradients(built({2, 6, 6}, {LayerSpec::conv2d(2, 2, 3, 2, 0)}, 3), random_input({2, 6, 6}, 2, Seed{12}));
    check_gradients(built({3, 3, 3}, {LayerSpec::conv_transpose2d(3, 2, 4, 2, 1)}, 4),
                    random_input({3, 3, 3}, 2, Seed{13}));
    check_gradients(built({7}, {LayerSpec::leaky_relu(0.2)}, 5), random_input({7}, 3, Seed{14}));
    check_gradients(built({7}, {LayerSpec::relu()}, 6), random_input({7}, 3, Seed{15}));
    check_gradients(built({7}, {LayerSpec::tanh()}, 7), random_input({7}, 3, Seed{16}));
    check_gradients(built({7}, {LayerSpec::sigmoid()}, 8), random_input({7}, 3, Seed{17}));
    check_gradients(built({2, 2, 2}, {LayerSpec::flatten()}, 9), random_input({2, 2, 2}, 3, Seed{18}));
    check_gradients(built({8}, {LayerSpec::reshape({2, 2, 2})}, 10), random_input({8}, 3, Seed{19}));
    check_gradients(built({10 + 3}, {LayerSpec::symmetric_image(5, 3)}, 11), random_input({13}, 2, Seed{20}));
    check_gradients(built({1, 5, 5}, {LayerSpec::lower_triangle(5)}, 12), random_input({1, 5, 5}, 2, Seed{21}));
}

TEST_CASE("composed stacks pass the gradient check") {
    const auto disc = built({6 + 3},
                            {LayerSpec::symmetric_image(4, 3), LayerSpec::conv2d(4, 4, 3, 1, 1), LayerSpec::leaky_relu(),
                             LayerSpec::flatten(), LayerSpec::dense(64, 8), LayerSpec::tanh(), LayerSpec::dense(8, 1),
                             LayerSpec::sigmoid()},
                            22);
    check_gradients(disc, random_input({9}, 3, Seed{30}));
    const auto gen = built({5}, {LayerSpec::dense(5, 32), LayerSpec::relu(), LayerSpec::reshape({2, 4, 4}),
                                 LayerSpec::conv_transpose2d(2, 1, 3, 1, 1), LayerSpec::lower_triangle(4),
                                 LayerSpec::tanh()},
                           23);
    check_gradients(gen, random_input({5}, 3, Seed{31}));
}

TEST_CASE("adam") {
    AdamState<double> s(AdamConfig{0.01, 0.9, 0.999, 1e-8}, 3);
    std::vector<double> p{1.0, -2.0, 3.0};
    const std::vector<double> zero(3, 0.0);
    adam_step(s, std::span(p), std::span<const double>(zero));
    CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
    CHECK(s.step == 1);

    const std::vector<double> g{0.5, -3.0, 100.0};
    for (int k = 0; k < 200; ++k) {
        const auto before = p;
        adam_step(s, std::span(p), std::span<const double>(g));
        if (k > 100)
            for (int i = 0; i < 3; ++i) CHECK(std::abs(before[i] - p[i]) == doctest::Approx(0.01).epsilon(1e-3));
    }

    const std::vector<double> bad{0.0, std::nan(""), 0.0};
    const auto kept = p;
    CHECK_THROWS_AS(adam_step(s, std::span(p), std::span<const double>(bad)), Error);
    CHECK(p == kept);
    CHECK_THROWS_AS((AdamState<double>(AdamConfig{0.1, 1.0, 0.9, 1e-8}, 1)), Error);
}

TEST_CASE("adam fits a line") {
    Network<float> n({1}, {LayerSpec::dense(1, 1)});
    n.initialize(Seed{5});
    AdamState<float> s(AdamConfig{1e-2, 0.9, 0.999, 1e-8}, n.parameter_count());
    Tensor<float> x({100, 1}), y({100, 1});
    for (int i = 0; i < 100; ++i) {
        x[i] = static_cast<float>(i) / 50.0f - 1.0f;
        y[i] = 2.0f * x[i];
    }
    double loss = 1.0;
    for (int step = 0; step < 2000; ++step) {
        Cache<float> cache;
        Tensor<float> grad;
        loss = mse(n.forward(x, &cache), y, &grad);
        adam_step(s, n, std::span<const float>(n.backward(cache, grad).params));
    }
    CHECK(loss < 1e-3);
}

TEST_CASE("losses") {
    Tensor<double> z({2, 1}, {0.0, 3.0});
    Tensor<double> g;
    const double l = bce_with_logits(z, 1.0, &g);
    CHECK(l == doctest::Approx((std::log(2.0) + std::log1p(std::exp(-3.0))) / 2));
    CHECK(g[0] == doctest::Approx((0.5 - 1.0) / 2));
    CHECK(std::isfinite(bce_with_logits(Tensor<double>({1, 1}, {-800.0}), 1.0, &g)));

    Tensor<double> logits({1, 3}, {1.0, 2.0, 3.0});
    const std::size_t label[] = {2};
    const double ce = softmax_cross_entropy(logits, label, &g);
    const double z3 = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(ce == doctest::Approx(-std::log(std::exp(3.0) / z3)));
    CHECK(g[2] == doctest::Approx(std::exp(3.0) / z3 - 1.0));
}

TEST_CASE("training is deterministic and checkpoints round trip") {
    auto run = [] {
        Network<float> n({4}, {LayerSpec::dense(4, 8), LayerSpec::leaky_relu(), LayerSpec::dense(8, 2)});
        n.initialize(Seed{9});
        AdamState<float> s(AdamConfig{}, n.parameter_count());
        Rng rng(Seed{10});
        for (int step = 0; step < 50; ++step) {
            Tensor<float> x({8, 4}), y({8, 2});
            for (auto& v : x.data) v = static_cast<float>(rng.normal());
            for (auto& v : y.data) v = static_cast<float>(rng.normal());
            Cache<float> c;
            Tensor<float> g;
            mse(n.forward(x, &c), y, &g);
            adam_step(s, n, std::span<const float>(n.backward(c, g).params));
        }
        return n;
    };
    const auto a = run(), b = run();
    CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));

    const auto dir = fs::temp_directory_path() / "ecorr_test_nnck";
    fs::remove_all(dir);
    save(a, CheckpointInfo{AdamConfig{}, 9, 50}, dir);
    CheckpointInfo info;
    const auto loaded = load(dir, &info);
    CHECK(loaded.layers() == a.layers());
    CHECK(std::equal(a.parameters().begin(), a.parameters().end(), loaded.parameters().begin()));
    CHECK(info.step == 50);
    CHECK(info.seed == 9);

    auto w = read_file(dir / "weights.f32le");
    w[3] ^= 0x10;
    write_file(dir / "weights.f32le", w);
    try {
        load(dir);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::CorruptData);
    }
    fs::remove_all(dir);
}

TEST_CASE("forward leaves parameters untouched") {
    Network<float> n({3}, {LayerSpec::dense(3, 3), LayerSpec::sigmoid()});
    n.initialize(Seed{1});
    const std::vector<float> before(n.parameters().begin(), n.parameters().end());
    Cache<float> c;
    n.forward(Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}), &c);
    CHECK(std::equal(before.begin(), before.end(), n.parameters().begin()));
}
