#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ecorr/corpus.hpp"
#include "ecorr/neural.hpp"

namespace ecorr::gan {

enum class Arch { Dense, Conv };
std::string to_string(Arch a);
Arch parse_arch(const std::string& name);

struct GanConfig {
    std::size_t dim = 16;
    std::size_t noise_dim = 64;
    std::size_t regime_count = 3;
    Arch arch = Arch::Dense;
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    double lr_g = 2e-4;
    double lr_d = 2e-4;
    double beta1 = 0.5;
    std::size_t d_steps_per_g = 1;
    Seed seed{0};
    /// Samples per regime drawn each epoch for the mode-collapse monitor.
    std::size_t monitor_samples = 16;

    /// Throws ConfigError on an unsupported combination.
    void check() const;
};

struct EpochStats {
    double g_loss = 0.0;
    double d_loss = 0.0;
    /// Max minus min over regimes of the mean raw off-diagonal.
    double sf1_gap = 0.0;
};

struct GanCheckpoint {
    GanConfig config;
    nn::Network<float> generator;
    nn::Network<float> discriminator;
    std::size_t epoch = 0;
    std::vector<EpochStats> history;
    /// Raised once the sf1 gap stays below 0.01 for 50 consecutive epochs.
    bool mode_collapse = false;

    bool trained() const { return epoch > 0; }
};

/// Untrained networks for `config`, initialized from config.seed.
GanCheckpoint build(const GanConfig& config);

/// Raised when a loss turns non-finite; carries the last checkpoint whose
/// epoch completed with finite losses.
class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& message, GanCheckpoint last)
        : Error(ErrorKind::TrainingDiverged, message), last_(std::move(last)) {}
    const GanCheckpoint& last_stable() const noexcept { return last_; }

private:
    GanCheckpoint last_;
};

using EpochCallback = std::function<void(const GanCheckpoint&)>;

/// Trains for config.epochs more epochs. Deterministic given the seed.
GanCheckpoint train(GanCheckpoint ckpt, const corpus::LabeledCorpus& corpus, const EpochCallback& on_epoch = {});

struct Samples {
    std::vector<SymmetricMatrix> raw;        ///< unit diagonal, off-diagonals in (-1, 1)
    std::vector<CorrelationMatrix> matrices; ///< projected; empty when projection is off
    std::vector<double> displacement;        ///< Frobenius raw -> projected
    bool untrained = false;
};

/// Draw k uses noise stream derive(seed, k), so any prefix of a larger
/// request is reproduced exactly.
Samples sample(const GanCheckpoint& ckpt, RegimeLabel regime, std::size_t count, Seed seed, bool project = true,
               int threads = 1);

/// Fraction of correct real-vs-fake calls by the discriminator on the given
/// real items and an equal number of generated ones.
double discriminator_accuracy(const GanCheckpoint& ckpt, const corpus::LabeledCorpus& real, Seed seed);

inline constexpr int kGanVersion = 1;

/// generator/ and discriminator/ as NNCK v1 plus gan.json.
void save(const GanCheckpoint& ckpt, const std::filesystem::path& dir);
GanCheckpoint load(const std::filesystem::path& dir);

}  // namespace ecorr::gan
