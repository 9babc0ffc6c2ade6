#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "experiment.hpp"

#include "ecorr/corpus.hpp"
#include "ecorr/facts.hpp"

namespace ecorr::cli {

/// Tool version, config hash and seed stamped on every artifact.
struct Provenance {
    std::string config_sha256;
    std::optional<std::uint64_t> seed;

    /// Hash of the canonical JSON of the effective parameters.
    static Provenance of(const json& params, std::optional<std::uint64_t> seed);
    static Provenance of(const ExperimentConfig& config);

    json to_json() const;
    /// '#'-prefixed single line for CSV and NDJSON outputs.
    std::string comment() const;
};

/// Pretty JSON with a leading "provenance" object, trailing newline.
void write_report(const std::filesystem::path& path, const Provenance& prov, json body);
std::string render_report(const Provenance& prov, json body);
void write_corpus_artifact(const corpus::LabeledCorpus& c, const std::filesystem::path& dir, const Provenance& prov);
/// Config hash recorded next to a cached artifact, if any.
std::optional<std::string> recorded_config_hash(const std::filesystem::path& dir);

json to_json(const facts::StylizedFactReport& r);
json to_json(const facts::FeatureVector& f);

json metrics_report(const std::vector<CorrelationMatrix>& matrices, const std::vector<std::optional<RegimeLabel>>& labels,
                    double q_ratio, int threads);

struct EvaluationInput {
    const corpus::LabeledCorpus* basis = nullptr;  ///< PCA reference and classifier training set
    std::vector<corpus::LabeledCorpus> real;
    std::vector<corpus::LabeledCorpus> synth;
    eval::ClassifierConfig classifier;
    Seed sliced_seed{0};
    std::size_t sliced_projections = eval::kSlicedProjections;
    int threads = 1;
};

struct Evaluation {
    json report;
    std::string clouds_csv;  ///< set,kind,regime,x,y
};

Evaluation evaluate(const EvaluationInput& in);

/// Fits the surrogate and attributes every record. Throws NumericalFailure
/// if an attribution breaks the efficiency identity by more than 1e-10.
json explain_report(const std::vector<mc::McRecord>& records, mc::Target target, portfolio::Method method);
json findings_report(const std::vector<mc::RegimeFinding>& findings);

inline constexpr double kEfficiencyTol = 1e-10;

mc::MatrixSource gan_source(std::shared_ptr<const gan::GanCheckpoint> ckpt);

std::string loss_csv(const gan::GanCheckpoint& ckpt);

struct ReproOptions {
    std::filesystem::path out;
    int threads = 1;
};

/// Surrogate corpus, training, generation, evaluation, Monte Carlo,
/// attribution and findings. Reports land in out/reports.
void repro(const ExperimentConfig& config, const ReproOptions& options);

}  // namespace ecorr::cli
