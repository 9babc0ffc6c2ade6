#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ecorr/matrix.hpp"
#include "ecorr/rng.hpp"
#include "ecorr/samplers.hpp"

namespace ecorr::corpus {

enum class Source { Ingested, Surrogate };
std::string to_string(Source s);

struct WindowSpec {
    std::size_t length = 252;
    std::size_t step = 21;
    // Pearson is the only estimator.
};

/// Per-item window descriptor. For surrogate items `start` is the draw index
/// and `length` is zero.
struct WindowMeta {
    std::size_t start = 0;
    std::size_t length = 0;
    double ew_return = 0.0;
    bool repaired = false;
    friend bool operator==(const WindowMeta&, const WindowMeta&) = default;
};

struct Item {
    CorrelationMatrix matrix;
    RegimeLabel label;
    WindowMeta meta;
};

struct LabeledCorpus {
    std::size_t dim = 0;
    Source source = Source::Surrogate;
    std::vector<Item> items;
    std::vector<std::string> assets;  ///< ingested column names, empty for surrogates
    std::optional<WindowSpec> window;
    std::size_t repairs = 0;

    std::size_t size() const { return items.size(); }
    std::vector<CorrelationMatrix> matrices(std::optional<RegimeLabel> only = std::nullopt) const;
    std::array<std::size_t, 3> class_counts() const;
};

/// Labeling rule. Terciles of the equal-weight window return by default;
/// with `threshold` set, returns below -r are stressed and above +r rally.
struct LabelRule {
    std::optional<double> threshold;
};

struct ReturnsTable {
    std::vector<std::string> assets;
    Matrix returns;  ///< T x d
};

/// Header row of asset names, then one row of decimal returns per step.
ReturnsTable read_returns_csv(const std::filesystem::path& path);
ReturnsTable parse_returns_csv(const std::string& text);

std::size_t window_count(std::size_t observations, const WindowSpec& w);

LabeledCorpus ingest_returns(const ReturnsTable& table, const WindowSpec& window = {}, const LabelRule& rule = {});
inline LabeledCorpus ingest_returns(const std::filesystem::path& csv, const WindowSpec& window = {},
                                    const LabelRule& rule = {}) {
    return ingest_returns(read_returns_csv(csv), window, rule);
}

struct SurrogateSpec {
    std::size_t count_per_regime = 100;
    std::size_t dim = 16;
    std::array<samplers::RegimeParams, 3> params{samplers::RegimeParams::defaults(RegimeLabel::Stressed),
                                                 samplers::RegimeParams::defaults(RegimeLabel::Normal),
                                                 samplers::RegimeParams::defaults(RegimeLabel::Rally)};
};

/// Items are ordered stressed, normal, rally; draw k of regime r uses
/// stream derive(seed, r * count + k).
LabeledCorpus build_surrogate(const SurrogateSpec& spec, Seed seed, int threads = 1);

inline constexpr int kCorpusVersion = 1;

/// ECORP v1: manifest.json + matrices.f64le in `dir`.
void write_corpus(const LabeledCorpus& corpus, const std::filesystem::path& dir);
LabeledCorpus read_corpus(const std::filesystem::path& dir);

}  // namespace ecorr::corpus
