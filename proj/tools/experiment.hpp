#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "ecorr/ccorrgan.hpp"
#include "ecorr/eval.hpp"
#include "ecorr/mc.hpp"

namespace ecorr::cli {

using json = nlohmann::json;

inline constexpr const char* kConfigFormat = "ecorr-experiment";
inline constexpr int kConfigVersion = 1;

struct CorpusSection {
    std::size_t count_per_regime = 300;
    std::size_t dim = 16;
};

struct EvalSection {
    std::size_t samples_per_regime = 100;
    std::size_t real_sets = 4;
    std::size_t synth_sets = 4;
    std::size_t sliced_projections = 100;
    eval::ClassifierConfig classifier;  ///< seed is derived from the master seed
};

enum class McSource { Surrogate, Gan };
std::string to_string(McSource s);

struct McSection {
    McSource source = McSource::Gan;
    std::size_t count_per_regime = 300;
    std::size_t t_in = 252;
    std::size_t t_out = 252;
    double annual_vol = 0.2;
    double vol_log_sd = 0.25;
    std::size_t bootstrap_resamples = 1000;
};

/// Fully resolved experiment configuration. Omitted keys take defaults;
/// unknown keys and wrong types are ConfigErrors.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    CorpusSection corpus;
    gan::GanConfig gan;  ///< dim and seed are filled from corpus.dim and the master seed
    EvalSection eval;
    McSection mc;

    json to_json() const;
    /// SHA-256 of the canonical (sorted-key, defaults filled) JSON form.
    std::string sha256() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Independent streams of the master seed, one per pipeline stage.
enum class Stream : std::uint64_t {
    Corpus = 1,
    Gan = 2,
    RealSets = 3,
    SynthSets = 4,
    Classifier = 5,
    Mc = 6,
    Findings = 7,
    SlicedRaw = 8,
    Discriminator = 9,
};

inline Seed stream(const ExperimentConfig& c, Stream s) {
    return derive(Seed{c.seed}, static_cast<std::uint64_t>(s));
}

mc::McConfig mc_config(const ExperimentConfig& c);

}  // namespace ecorr::cli
