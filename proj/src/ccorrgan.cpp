#include "ecorr/ccorrgan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ecorr/linalg.hpp"
#include "ecorr/util.hpp"

namespace ecorr::gan {

using nlohmann::json;
using nn::LayerSpec;
using nn::Tensor;

namespace {

constexpr double kCollapseGap = 0.01;
constexpr std::size_t kCollapseEpochs = 50;

std::size_t tri(std::size_t dim) { return dim * (dim - 1) / 2; }

std::size_t dense_width(std::size_t dim) { return dim <= 16 ? 256 : dim <= 32 ? 512 : 1024; }

std::vector<LayerSpec> generator_layers(const GanConfig& c) {
    const std::size_t in = c.noise_dim + c.regime_count, t = tri(c.dim);
    if (c.arch == Arch::Dense) {
        const std::size_t h = dense_width(c.dim);
        return {LayerSpec::dense(in, h), LayerSpec::leaky_relu(0.2), LayerSpec::dense(h, h), LayerSpec::leaky_relu(0.2),
                LayerSpec::dense(h, t), LayerSpec::tanh()};
    }
    const std::size_t q = c.dim / 4, ch = 32;
    return {LayerSpec::dense(in, ch * q * q),
            LayerSpec::leaky_relu(0.2),
            LayerSpec::reshape({ch, q, q}),
            LayerSpec::conv_transpose2d(ch, ch / 2, 4, 2, 1),
            LayerSpec::leaky_relu(0.2),
            LayerSpec::conv_transpose2d(ch / 2, 1, 4, 2, 1),
            LayerSpec::lower_triangle(c.dim),
            LayerSpec::tanh()};
}

std::vector<LayerSpec> discriminator_layers(const GanConfig& c) {
    const std::size_t in = tri(c.dim) + c.regime_count;
    if (c.arch == Arch::Dense) {
        const std::size_t h = dense_width(c.dim);
        return {LayerSpec::dense(in, h),         LayerSpec::leaky_relu(0.2), LayerSpec::dense(h, h / 2),
                LayerSpec::leaky_relu(0.2),      LayerSpec::dense(h / 2, 1), LayerSpec::sigmoid()};
    }
    const std::size_t q = c.dim / 4;
    return {LayerSpec::symmetric_image(c.dim, c.regime_count),
            LayerSpec::conv2d(1 + c.regime_count, 16, 4, 2, 1),
            LayerSpec::leaky_relu(0.2),
            LayerSpec::conv2d(16, 32, 4, 2, 1),
            LayerSpec::leaky_relu(0.2),
            LayerSpec::flatten(),
            LayerSpec::dense(32 * q * q, 1),
            LayerSpec::sigmoid()};
}

Tensor<float> generator_input(const GanConfig& c, std::span<const std::size_t> labels, Rng& rng) {
    const std::size_t w = c.noise_dim + c.regime_count;
    Tensor<float> x({labels.size(), w});
    for (std::size_t s = 0; s < labels.size(); ++s) {
        for (std::size_t k = 0; k < c.noise_dim; ++k) x[s * w + k] = static_cast<float>(rng.normal());
        x[s * w + c.noise_dim + labels[s]] = 1.0f;
    }
    return x;
}

/// Appends the one-hot label to each triangle row.
Tensor<float> discriminator_input(const GanConfig& c, const Tensor<float>& triangles,
                                  std::span<const std::size_t> labels) {
    const std::size_t t = tri(c.dim), w = t + c.regime_count;
    Tensor<float> x({labels.size(), w});
    for (std::size_t s = 0; s < labels.size(); ++s) {
        std::copy_n(triangles.data.begin() + static_cast<std::ptrdiff_t>(s * t), t,
                    x.data.begin() + static_cast<std::ptrdiff_t>(s * w));
        x[s * w + t + labels[s]] = 1.0f;
    }
    return x;
}

std::size_t logits_layer_skip(const nn::Network<float>& d) {
    return d.layers().back().kind == nn::LayerKind::Sigmoid ? 1 : 0;
}

/// Logits from a cached forward pass (input of the trailing Sigmoid).
Tensor<float> logits_of(const nn::Cache<float>& cache, std::size_t skip) {
    return cache.activations[cache.activations.size() - 1 - skip];
}

json config_json(const GanConfig& c) {
    return {{"dim", c.dim},
            {"noise_dim", c.noise_dim},
            {"regime_count", c.regime_count},
            {"arch", to_string(c.arch)},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr_g", c.lr_g},
            {"lr_d", c.lr_d},
            {"beta1", c.beta1},
            {"d_steps_per_g", c.d_steps_per_g},
            {"seed", c.seed.master},
            {"monitor_samples", c.monitor_samples}};
}

GanConfig config_from_json(const json& j) {
    GanConfig c;
    c.dim = j.at("dim").get<std::size_t>();
    c.noise_dim = j.at("noise_dim").get<std::size_t>();
    c.regime_count = j.at("regime_count").get<std::size_t>();
    c.arch = parse_arch(j.at("arch").get<std::string>());
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr_g = j.at("lr_g").get<double>();
    c.lr_d = j.at("lr_d").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.d_steps_per_g = j.at("d_steps_per_g").get<std::size_t>();
    c.seed = Seed{j.at("seed").get<std::uint64_t>()};
    c.monitor_samples = j.at("monitor_samples").get<std::size_t>();
    return c;
}

double sf1_gap(const GanCheckpoint& ckpt, std::size_t epoch) {
    const auto& c = ckpt.config;
    if (c.monitor_samples == 0) return 0.0;
    double lo = 1e300, hi = -1e300;
    const std::size_t t = tri(c.dim);
    for (std::size_t r = 0; r < c.regime_count; ++r) {
        Rng rng(derive(derive(c.seed, 0x4D4F4E49ULL), epoch * 16 + r));
        const std::vector<std::size_t> labels(c.monitor_samples, r);
        const auto out = ckpt.generator.forward(generator_input(c, labels, rng));
        const double m = std::accumulate(out.data.begin(), out.data.end(), 0.0) /
                         static_cast<double>(t * c.monitor_samples);
        lo = std::min(lo, m);
        hi = std::max(hi, m);
    }
    return hi - lo;
}

}  // namespace

std::string to_string(Arch a) { return a == Arch::Dense ? "dense" : "conv"; }

Arch parse_arch(const std::string& name) {
    if (name == "dense" || name == "Dense") return Arch::Dense;
    if (name == "conv" || name == "Conv") return Arch::Conv;
    fail(ErrorKind::ConfigError, "unknown GAN architecture '" + name + "'");
}

void GanConfig::check() const {
    require(dim == 16 || dim == 32 || dim == 80, ErrorKind::ConfigError, "gan: dim must be 16, 32 or 80");
    require(regime_count == 3, ErrorKind::ConfigError, "gan: regime_count must be 3");
    require(noise_dim >= 1, ErrorKind::ConfigError, "gan: noise_dim must be positive");
    require(batch_size >= 8, ErrorKind::ConfigError, "gan: batch_size must be >= 8");
    require(d_steps_per_g >= 1, ErrorKind::ConfigError, "gan: d_steps_per_g must be >= 1");
    require(lr_g > 0 && lr_d > 0, ErrorKind::ConfigError, "gan: learning rates must be positive");
    require(beta1 > 0 && beta1 < 1, ErrorKind::ConfigError, "gan: beta1 must lie in (0, 1)");
    if (arch == Arch::Conv) require(dim % 4 == 0, ErrorKind::ConfigError, "gan: conv arch needs dim divisible by 4");
}

GanCheckpoint build(const GanConfig& config) {
    config.check();
    GanCheckpoint ckpt;
    ckpt.config = config;
    ckpt.generator = nn::Network<float>({config.noise_dim + config.regime_count}, generator_layers(config));
    ckpt.discriminator = nn::Network<float>({tri(config.dim) + config.regime_count}, discriminator_layers(config));
    ckpt.generator.initialize(derive(config.seed, 1));
    ckpt.discriminator.initialize(derive(config.seed, 2));
    return ckpt;
}

GanCheckpoint train(GanCheckpoint ckpt, const corpus::LabeledCorpus& corpus, const EpochCallback& on_epoch) {
    const auto& c = ckpt.config;
    c.check();
    require(corpus.dim == c.dim, ErrorKind::ConfigError,
            "gan: corpus dim " + std::to_string(corpus.dim) + " does not match config dim " + std::to_string(c.dim));
    const auto counts = corpus.class_counts();
    for (std::size_t r = 0; r < 3; ++r)
        require(counts[r] > 0, ErrorKind::ConfigError,
                "gan: corpus has no '" + to_string(static_cast<RegimeLabel>(r)) + "' items");

    const std::size_t t = tri(c.dim), n = corpus.size();
    std::vector<float> triangles(n * t);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto lt = lower_triangle(corpus.items[i].matrix.symmetric());
        std::transform(lt.begin(), lt.end(), triangles.begin() + static_cast<std::ptrdiff_t>(i * t),
                       [](double v) { return static_cast<float>(v); });
        labels[i] = static_cast<std::size_t>(corpus.items[i].label);
    }

    nn::AdamState<float> opt_g(nn::AdamConfig{c.lr_g, c.beta1, 0.999, 1e-8}, ckpt.generator.parameter_count());
    nn::AdamState<float> opt_d(nn::AdamConfig{c.lr_d, c.beta1, 0.999, 1e-8}, ckpt.discriminator.parameter_count());
    const std::size_t skip = logits_layer_skip(ckpt.discriminator);
    const std::size_t batches = std::max<std::size_t>(1, n / c.batch_size);

    std::size_t low_gap_run = 0;
    for (std::size_t k = ckpt.history.size(); k > 0 && ckpt.history[k - 1].sf1_gap < kCollapseGap; --k) ++low_gap_run;

    const std::size_t first = ckpt.epoch;
    for (std::size_t e = first; e < first + c.epochs; ++e) {
        GanCheckpoint stable = ckpt;
        Rng rng(derive(derive(c.seed, 0x545241494EULL), e));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);

        double g_sum = 0.0, d_sum = 0.0;
        std::size_t g_count = 0, d_count = 0;
        std::size_t cursor = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            for (std::size_t ds = 0; ds < c.d_steps_per_g; ++ds) {
                const std::size_t m = std::min(c.batch_size, n);
                Tensor<float> real({m, t});
                std::vector<std::size_t> lab(m);
                for (std::size_t s = 0; s < m; ++s, ++cursor) {
                    const std::size_t idx = order[cursor % n];
                    std::copy_n(triangles.begin() + static_cast<std::ptrdiff_t>(idx * t), t,
                                real.data.begin() + static_cast<std::ptrdiff_t>(s * t));
                    lab[s] = labels[idx];
                }
                const auto fake = ckpt.generator.forward(generator_input(c, lab, rng));

                nn::Cache<float> cr, cf;
                ckpt.discriminator.forward(discriminator_input(c, real, lab), &cr);
                ckpt.discriminator.forward(discriminator_input(c, fake, lab), &cf);
                Tensor<float> gr, gf;
                const double lr = nn::bce_with_logits(logits_of(cr, skip), 1.0, &gr);
                const double lf = nn::bce_with_logits(logits_of(cf, skip), 0.0, &gf);
                auto grad = ckpt.discriminator.backward(cr, gr, skip).params;
                const auto grad_f = ckpt.discriminator.backward(cf, gf, skip).params;
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += grad_f[i];
                if (!std::isfinite(lr + lf))
                    throw TrainingDiverged("gan: discriminator loss is not finite at epoch " + std::to_string(e),
                                           stable);
                nn::adam_step(opt_d, ckpt.discriminator, std::span<const float>(grad));
                d_sum += lr + lf;
                ++d_count;
            }

            std::vector<std::size_t> lab(c.batch_size);
            for (auto& l : lab) l = rng.index(c.regime_count);
            nn::Cache<float> cg, cd;
            const auto fake = ckpt.generator.forward(generator_input(c, lab, rng), &cg);
            ckpt.discriminator.forward(discriminator_input(c, fake, lab), &cd);
            Tensor<float> gl;
            // Non-saturating: the generator maximizes log D(G(z)).
            const double lg = nn::bce_with_logits(logits_of(cd, skip), 1.0, &gl);
            if (!std::isfinite(lg))
                throw TrainingDiverged("gan: generator loss is not finite at epoch " + std::to_string(e), stable);
            const auto through = ckpt.discriminator.backward(cd, gl, skip).input;
            Tensor<float> g_out(fake.shape);
            const std::size_t w = t + c.regime_count;
            for (std::size_t s = 0; s < c.batch_size; ++s)
                std::copy_n(through.data.begin() + static_cast<std::ptrdiff_t>(s * w), t,
                            g_out.data.begin() + static_cast<std::ptrdiff_t>(s * t));
            const auto grad = ckpt.generator.backward(cg, g_out).params;
            nn::adam_step(opt_g, ckpt.generator, std::span<const float>(grad));
            g_sum += lg;
            ++g_count;
        }

        ckpt.epoch = e + 1;
        EpochStats stats{g_sum / static_cast<double>(g_count), d_sum / static_cast<double>(d_count), 0.0};
        stats.sf1_gap = sf1_gap(ckpt, e);
        ckpt.history.push_back(stats);
        low_gap_run = stats.sf1_gap < kCollapseGap ? low_gap_run + 1 : 0;
        if (low_gap_run >= kCollapseEpochs) ckpt.mode_collapse = true;
        if (on_epoch) on_epoch(ckpt);
    }
    return ckpt;
}

Samples sample(const GanCheckpoint& ckpt, RegimeLabel regime, std::size_t count, Seed seed, bool project,
               int threads) {
    const auto& c = ckpt.config;
    Samples out;
    out.untrained = !ckpt.trained();
    out.raw.resize(count);
    if (project) {
        out.matrices.resize(count);
        out.displacement.resize(count);
    }
    const std::vector<std::size_t> label{static_cast<std::size_t>(regime)};
    parallel_for(count, threads, [&](std::size_t k) {
        Rng rng(derive(seed, k));
        const auto y = ckpt.generator.forward(generator_input(c, label, rng));
        std::vector<double> tri_values(y.data.begin(), y.data.end());
        out.raw[k] = from_lower_triangle(tri_values, c.dim);
        if (project) {
            auto p = nearest_correlation(out.raw[k]);
            out.displacement[k] = p.distance;
            out.matrices[k] = std::move(p.matrix);
        }
    });
    return out;
}

double discriminator_accuracy(const GanCheckpoint& ckpt, const corpus::LabeledCorpus& real, Seed seed) {
    const auto& c = ckpt.config;
    const std::size_t n = real.size(), t = tri(c.dim);
    require(n > 0, ErrorKind::InvalidInput, "discriminator accuracy needs real items");
    Tensor<float> tris({n, t});
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto lt = lower_triangle(real.items[i].matrix.symmetric());
        for (std::size_t k = 0; k < t; ++k) tris[i * t + k] = static_cast<float>(lt[k]);
        labels[i] = static_cast<std::size_t>(real.items[i].label);
    }
    Rng rng(seed);
    const auto fake = ckpt.generator.forward(generator_input(c, labels, rng));
    const auto pr = ckpt.discriminator.forward(discriminator_input(c, tris, labels));
    const auto pf = ckpt.discriminator.forward(discriminator_input(c, fake, labels));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += (pr[i] > 0.5f) + (pf[i] <= 0.5f);
    return static_cast<double>(correct) / static_cast<double>(2 * n);
}

void save(const GanCheckpoint& ckpt, const std::filesystem::path& dir) {
    const std::uint64_t steps = ckpt.epoch;
    nn::save(ckpt.generator, {{ckpt.config.lr_g, ckpt.config.beta1, 0.999, 1e-8}, ckpt.config.seed.master, steps},
             dir / "generator");
    nn::save(ckpt.discriminator, {{ckpt.config.lr_d, ckpt.config.beta1, 0.999, 1e-8}, ckpt.config.seed.master, steps},
             dir / "discriminator");
    json history = json::array();
    for (const auto& h : ckpt.history) history.push_back({h.g_loss, h.d_loss, h.sf1_gap});
    const json m = {{"format", "CCORRGAN"},
                    {"version", kGanVersion},
                    {"config", config_json(ckpt.config)},
                    {"epoch", ckpt.epoch},
                    {"mode_collapse", ckpt.mode_collapse},
                    {"loss_history", history}};
    write_file(dir / "gan.json", m.dump(2) + "\n");
}

GanCheckpoint load(const std::filesystem::path& dir) {
    json m;
    try {
        m = json::parse(read_file(dir / "gan.json"));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::CorruptData, std::string("gan.json: ") + e.what());
    }
    try {
        if (m.at("format") != "CCORRGAN" || m.at("version").get<int>() != kGanVersion)
            fail(ErrorKind::UnsupportedVersion, "unsupported GAN checkpoint");
        GanCheckpoint ckpt = build(config_from_json(m.at("config")));
        auto g = nn::load(dir / "generator");
        auto d = nn::load(dir / "discriminator");
        if (g.layers() != ckpt.generator.layers() || d.layers() != ckpt.discriminator.layers())
            fail(ErrorKind::CorruptData, "GAN networks do not match the stored config");
        ckpt.generator = std::move(g);
        ckpt.discriminator = std::move(d);
        ckpt.epoch = m.at("epoch").get<std::size_t>();
        ckpt.mode_collapse = m.at("mode_collapse").get<bool>();
        for (const auto& h : m.at("loss_history"))
            ckpt.history.push_back({h.at(0).get<double>(), h.at(1).get<double>(), h.at(2).get<double>()});
        return ckpt;
    } catch (const json::exception& e) {
        fail(ErrorKind::CorruptData, std::string("gan.json: ") + e.what());
    }
}

}  // namespace ecorr::gan
