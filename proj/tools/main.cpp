#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"

#include "experiment.hpp"
#include "pipeline.hpp"

#include "ecorr/geometry.hpp"
#include "ecorr/linalg.hpp"
#include "ecorr/util.hpp"

namespace fs = std::filesystem;
using namespace ecorr;
using namespace ecorr::cli;

namespace {

struct Options {
    int threads = 1;

    // sample
    std::string method;
    std::size_t dim = 0;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    std::string out;
    double eta = 1.0;
    double beta_a = 1.0;
    double beta_b = 1.0;
    std::vector<double> spectrum;
    double beta_lo = 0.3;
    double beta_hi = 0.7;
    std::string regime;
    std::string label = "normal";

    // shared paths
    std::string in;
    std::string report;
    std::string config;
    std::string ckpt;
    std::string corpus;

    // project
    double tol = kDefaultValidationTol;
    int max_iter = 200;

    // metrics
    double q_ratio = facts::kDefaultQRatio;

    // geometry
    std::string a;
    std::string b;
    double t = 0.5;
    std::vector<std::string> inputs;

    // corpus build
    std::string returns;
    std::size_t window = 252;
    std::size_t step = 21;
    std::optional<double> threshold;

    // generate
    bool no_project = false;

    // evaluate
    std::vector<std::string> real;
    std::vector<std::string> synth;
    std::string basis;
    std::string clouds;

    // portfolio
    std::string cov;

    // mc
    std::string records;
    std::string target = "outperformance";
    std::string alloc = "hrp";
    std::size_t resamples = mc::kBootstrapResamples;
};

void emit(const std::string& report_path, const std::string& text) {
    if (report_path.empty() || report_path == "-")
        std::cout << text;
    else
        write_file(report_path, text);
}

CorrelationMatrix as_correlation(const Matrix& m, const std::string& origin) {
    try {
        return CorrelationMatrix(SymmetricMatrix(m));
    } catch (const Error& e) {
        fail(ErrorKind::CorruptData, origin + ": " + e.what());
    }
}

CovarianceMatrix as_covariance(const Matrix& m, const std::string& origin) {
    SymmetricMatrix s;
    try {
        s = SymmetricMatrix(m);
    } catch (const Error& e) {
        fail(ErrorKind::CorruptData, origin + ": " + e.what());
    }
    return CovarianceMatrix(s);
}

/// A corpus directory or a single matrix CSV.
struct MatrixSet {
    std::vector<CorrelationMatrix> matrices;
    std::vector<std::optional<RegimeLabel>> labels;
};

MatrixSet load_matrices(const std::string& path) {
    MatrixSet set;
    if (fs::is_directory(path)) {
        const auto c = corpus::read_corpus(path);
        for (const auto& it : c.items) {
            set.matrices.push_back(it.matrix);
            set.labels.emplace_back(it.label);
        }
    } else {
        set.matrices.push_back(as_correlation(read_matrix_csv(path), path));
        set.labels.emplace_back(std::nullopt);
    }
    return set;
}

void log_skipped(const std::vector<mc::SkippedDraw>& skipped) {
    for (const auto& s : skipped)
        std::cerr << "ecorr: warning skipped regime=" << to_string(s.regime) << " index=" << s.index
                  << " reason=" << json(s.reason).dump() << '\n';
}

// --- subcommands -----------------------------------------------------------

void cmd_sample(const Options& o) {
    const auto method = samplers::parse_method(o.method);
    require(o.count >= 1, ErrorKind::InvalidInput, "sample: --count must be >= 1");
    json params = {{"command", "sample"}, {"method", o.method}, {"dim", o.dim}, {"count", o.count}, {"seed", o.seed}};
    const Seed seed{o.seed};
    corpus::LabeledCorpus c;
    if (method == samplers::Method::Regime && o.regime.empty()) {
        c = corpus::build_surrogate({o.count, o.dim}, seed, o.threads);
    } else {
        const RegimeLabel label = parse_regime(method == samplers::Method::Regime ? o.regime : o.label);
        std::size_t dim = o.dim;
        switch (method) {
            case samplers::Method::Onion: params["eta"] = o.eta; break;
            case samplers::Method::CVine: params["beta"] = {o.beta_a, o.beta_b}; break;
            case samplers::Method::Spectrum:
                require(!o.spectrum.empty(), ErrorKind::InvalidInput, "sample: spectrum method needs --spectrum");
                require(dim == 0 || dim == o.spectrum.size(), ErrorKind::InvalidInput,
                        "sample: --dim does not match the --spectrum length");
                dim = o.spectrum.size();
                params["spectrum"] = o.spectrum;
                break;
            case samplers::Method::Factor: params["loadings"] = {o.beta_lo, o.beta_hi}; break;
            case samplers::Method::Regime: break;
        }
        params["label"] = to_string(label);
        require(dim >= 2, ErrorKind::InvalidInput, "sample: --dim must be >= 2");
        std::vector<CorrelationMatrix> draws(o.count);
        parallel_for(o.count, o.threads, [&](std::size_t k) {
            const Seed s = derive(seed, k);
            switch (method) {
                case samplers::Method::Onion: draws[k] = samplers::sample_onion(dim, o.eta, s); break;
                case samplers::Method::CVine: draws[k] = samplers::sample_cvine(dim, o.beta_a, o.beta_b, s); break;
                case samplers::Method::Spectrum: draws[k] = samplers::sample_with_spectrum(o.spectrum, s); break;
                case samplers::Method::Factor: draws[k] = samplers::sample_one_factor(dim, o.beta_lo, o.beta_hi, s); break;
                case samplers::Method::Regime: draws[k] = samplers::sample_regime(label, dim, s); break;
            }
        });
        c.dim = dim;
        c.source = corpus::Source::Surrogate;
        for (std::size_t k = 0; k < o.count; ++k) c.items.push_back({std::move(draws[k]), label, {k, 0, 0.0, false}});
    }
    write_corpus_artifact(c, o.out, Provenance::of(params, o.seed));
}

void cmd_project(const Options& o) {
    const Matrix m = read_matrix_csv(o.in);
    require(m.square() && m.rows() >= 2, ErrorKind::CorruptData, o.in + ": expected a square matrix of dim >= 2");
    const auto before = validate(m, o.tol);
    const auto sym = SymmetricMatrix::symmetrized(m);
    const auto p = nearest_correlation(sym, o.tol, o.max_iter);
    const json params = {{"command", "project"}, {"input_sha256", sha256_hex(m.data())}, {"tol", o.tol},
                         {"max_iter", o.max_iter}};
    write_matrix_csv(o.out, p.matrix.matrix());
    emit(o.report, render_report(Provenance::of(params, std::nullopt),
                                 {{"method", "alternating_projections_dykstra"},
                                  {"tolerance", o.tol},
                                  {"iterations", p.iterations},
                                  {"converged", p.converged},
                                  {"input_valid", before.is_valid},
                                  {"asymmetry", max_abs_diff(m, m.transposed())},
                                  {"frobenius_distance", p.distance},
                                  {"residuals", p.residuals},
                                  {"output", o.out}}));
}

void cmd_metrics(const Options& o) {
    const auto set = load_matrices(o.in);
    const json params = {{"command", "metrics"}, {"q_ratio", o.q_ratio}, {"count", set.matrices.size()}};
    emit(o.report, render_report(Provenance::of(params, std::nullopt),
                                 metrics_report(set.matrices, set.labels, o.q_ratio, o.threads)));
}

json symmetric_summary(const SymmetricMatrix& s) {
    double diag_dev = 0.0;
    for (std::size_t i = 0; i < s.dim(); ++i) diag_dev = std::max(diag_dev, std::abs(s(i, i) - 1.0));
    const auto v = validate(s);
    return {{"max_abs_diag_minus_one", diag_dev}, {"min_eigenvalue", v.min_eigenvalue}, {"in_elliptope", v.is_valid}};
}

void cmd_geodesic(const Options& o) {
    const auto a = as_covariance(read_matrix_csv(o.a), o.a), b = as_covariance(read_matrix_csv(o.b), o.b);
    require(o.t >= 0.0 && o.t <= 1.0, ErrorKind::InvalidInput, "geodesic: --t must lie in [0, 1]");
    const auto g = geometry::geodesic(a, b, o.t);
    write_matrix_csv(o.out, g.matrix.matrix());
    const json params = {{"command", "geometry geodesic"},
                         {"a_sha256", sha256_hex(a.matrix().data())},
                         {"b_sha256", sha256_hex(b.matrix().data())},
                         {"t", o.t}};
    json meta = {{"method", "affine_invariant_geodesic"}, {"tolerance", 0.0}, {"iterations", 0}, {"converged", true},
                 {"t", o.t}, {"airm_distance", geometry::airm_distance(a, b)}, {"output", o.out}};
    meta.update(symmetric_summary(g.matrix.symmetric()));
    emit(o.report, render_report(Provenance::of(params, std::nullopt), meta));
}

void cmd_mean(const Options& o) {
    const auto method = geometry::parse_mean_method(o.method);
    std::vector<CorrelationMatrix> set;
    std::vector<std::string> hashes;
    for (const auto& p : o.inputs) {
        auto part = load_matrices(p);
        for (auto& m : part.matrices) {
            hashes.push_back(sha256_hex(m.data()));
            set.push_back(std::move(m));
        }
    }
    require(!set.empty(), ErrorKind::InvalidInput, "mean: no input matrices");
    const auto r = geometry::mean(method, set);
    write_matrix_csv(o.out, r.matrix.matrix());
    const json params = {{"command", "geometry mean"}, {"method", geometry::to_string(method)}, {"inputs", hashes}};
    json meta = {{"method", geometry::to_string(method)},
                 {"tolerance", geometry::kKarcherTol},
                 {"iterations", r.iterations},
                 {"converged", r.converged},
                 {"best_effort", r.best_effort},
                 {"gradient_norm", r.gradient_norm},
                 {"objective", r.objective},
                 {"jitter", r.jitter},
                 {"count", set.size()},
                 {"output", o.out}};
    meta.update(symmetric_summary(r.matrix));
    emit(o.report, render_report(Provenance::of(params, std::nullopt), meta));
}

void cmd_corpus_build(const Options& o) {
    corpus::LabelRule rule;
    rule.threshold = o.threshold;
    const corpus::WindowSpec w{o.window, o.step};
    const auto table = corpus::read_returns_csv(o.returns);
    const auto c = corpus::ingest_returns(table, w, rule);
    json params = {{"command", "corpus build"}, {"returns_sha256", sha256_hex(read_file(o.returns))},
                   {"window", o.window}, {"step", o.step}};
    params["threshold"] = o.threshold ? json(*o.threshold) : json(nullptr);
    write_corpus_artifact(c, o.out, Provenance::of(params, std::nullopt));
}

void cmd_corpus_synth(const Options& o) {
    const auto c = corpus::build_surrogate({o.count, o.dim}, Seed{o.seed}, o.threads);
    const json params = {{"command", "corpus synth"}, {"count", o.count}, {"dim", o.dim}, {"seed", o.seed}};
    write_corpus_artifact(c, o.out, Provenance::of(params, o.seed));
}

void cmd_corpus_inspect(const Options& o) {
    const auto c = corpus::read_corpus(o.in);
    const auto counts = c.class_counts();
    json body = {{"dim", c.dim},
                 {"source", corpus::to_string(c.source)},
                 {"count", c.size()},
                 {"class_counts", {{"stressed", counts[0]}, {"normal", counts[1]}, {"rally", counts[2]}}},
                 {"repairs", c.repairs},
                 {"assets", c.assets}};
    if (c.window) body["window"] = {{"length", c.window->length}, {"step", c.window->step}};
    const auto recorded = recorded_config_hash(o.in);
    body["recorded_config_sha256"] = recorded ? json(*recorded) : json(nullptr);
    emit(o.report, render_report(Provenance::of({{"command", "corpus inspect"}}, std::nullopt), body));
}

void cmd_train(const Options& o) {
    const auto config = load_config(o.config);
    const auto c = corpus::read_corpus(o.corpus);
    require(c.dim == config.corpus.dim, ErrorKind::ConfigError,
            "train: corpus dim " + std::to_string(c.dim) + " does not match config corpus.dim " +
                std::to_string(config.corpus.dim));
    const auto prov = Provenance::of(config);
    gan::GanCheckpoint ckpt;
    try {
        ckpt = gan::train(gan::build(config.gan), c, [](const gan::GanCheckpoint& k) {
            if (k.epoch % 25 == 0) std::cerr << "ecorr: info epoch " << k.epoch << '\n';
        });
    } catch (const gan::TrainingDiverged& e) {
        gan::save(e.last_stable(), o.out);
        write_file(fs::path(o.out) / "provenance.json", prov.to_json().dump(2) + "\n");
        throw;
    }
    fs::remove_all(o.out);
    gan::save(ckpt, o.out);
    write_file(fs::path(o.out) / "provenance.json", prov.to_json().dump(2) + "\n");
    write_file(fs::path(o.out) / "loss.csv", prov.comment() + "\n" + loss_csv(ckpt));
    if (ckpt.mode_collapse) std::cerr << "ecorr: warning mode_collapse=true\n";
}

void cmd_generate(const Options& o) {
    const auto ckpt = gan::load(o.ckpt);
    const RegimeLabel regime = parse_regime(o.regime);
    const auto recorded = recorded_config_hash(o.ckpt);
    const json params = {{"command", "generate"},
                         {"checkpoint_config_sha256", recorded ? json(*recorded) : json(nullptr)},
                         {"regime", to_string(regime)},
                         {"count", o.count},
                         {"seed", o.seed},
                         {"project", !o.no_project}};
    const auto prov = Provenance::of(params, o.seed);
    const auto s = gan::sample(ckpt, regime, o.count, Seed{o.seed}, !o.no_project, o.threads);
    if (s.untrained) std::cerr << "ecorr: warning checkpoint is untrained\n";
    if (o.no_project) {
        std::string csv = prov.comment() + "\n";
        for (const auto& m : s.raw) {
            Matrix row(1, triangle_size(m.dim()), lower_triangle(m));
            csv += format_matrix_csv(row);
        }
        write_file(fs::path(o.out) / "raw.csv", csv);
        return;
    }
    corpus::LabeledCorpus c;
    c.dim = ckpt.config.dim;
    for (std::size_t k = 0; k < o.count; ++k) c.items.push_back({s.matrices[k], regime, {k, 0, 0.0, false}});
    write_corpus_artifact(c, o.out, prov);
}

void cmd_evaluate(const Options& o) {
    EvaluationInput in;
    for (const auto& p : o.real) in.real.push_back(corpus::read_corpus(p));
    for (const auto& p : o.synth) in.synth.push_back(corpus::read_corpus(p));
    corpus::LabeledCorpus basis;
    if (!o.basis.empty()) basis = corpus::read_corpus(o.basis);
    in.basis = o.basis.empty() ? &in.real.front() : &basis;
    in.classifier.seed = derive(Seed{o.seed}, 5);
    in.sliced_seed = derive(Seed{o.seed}, 8);
    in.threads = o.threads;
    const auto e = evaluate(in);

    std::vector<std::string> hashes;
    for (const auto* list : {&o.real, &o.synth})
        for (const auto& p : *list) hashes.push_back(recorded_config_hash(p).value_or(sha256_hex(read_file(fs::path(p) / "manifest.json"))));
    const json params = {{"command", "evaluate"}, {"inputs", hashes}, {"basis", o.basis}, {"seed", o.seed}};
    const auto prov = Provenance::of(params, o.seed);
    emit(o.report, render_report(prov, e.report));
    if (!o.clouds.empty()) write_file(o.clouds, prov.comment() + "\n" + e.clouds_csv);
}

void cmd_portfolio_weights(const Options& o) {
    const auto method = portfolio::parse_method(o.method);
    const Matrix m = read_matrix_csv(o.cov);
    const auto cov = as_covariance(m, o.cov);
    const auto w = portfolio::weights(method, cov);
    const json params = {{"command", "portfolio weights"}, {"method", o.method}, {"cov_sha256", sha256_hex(m.data())}};
    emit(o.report, render_report(Provenance::of(params, std::nullopt),
                                 {{"method", portfolio::to_string(method)}, {"weights", w.weights}}));
}

void cmd_mc_run(const Options& o) {
    const auto config = load_config(o.config);
    mc::MatrixSource source;
    if (config.mc.source == McSource::Gan) {
        require(!o.ckpt.empty(), ErrorKind::ConfigError, "mc run: mc.source is 'gan' but no --ckpt was given");
        source = gan_source(std::make_shared<const gan::GanCheckpoint>(gan::load(o.ckpt)));
    } else {
        source = mc::surrogate_source();
    }
    const auto run = mc::run(mc_config(config), source, o.threads);
    log_skipped(run.skipped);
    std::ostringstream os;
    os << Provenance::of(config).comment() << '\n';
    mc::write_records(os, run.records);
    write_file(o.out, os.str());
}

json records_params(const std::string& command, const std::string& path) {
    return {{"command", command}, {"records_sha256", sha256_hex(read_file(path))}};
}

void cmd_mc_explain(const Options& o) {
    const auto records = mc::read_records(fs::path(o.records));
    const auto target = mc::parse_target(o.target);
    const auto method = portfolio::parse_method(o.alloc);
    json params = records_params("mc explain", o.records);
    params["target"] = mc::to_string(target);
    params["method"] = portfolio::to_string(method);
    emit(o.report, render_report(Provenance::of(params, std::nullopt), explain_report(records, target, method)));
}

void cmd_mc_findings(const Options& o) {
    const auto records = mc::read_records(fs::path(o.records));
    json params = records_params("mc findings", o.records);
    params["seed"] = o.seed;
    params["resamples"] = o.resamples;
    const auto f = mc::regime_findings(records, Seed{o.seed}, o.resamples);
    emit(o.report, render_report(Provenance::of(params, o.seed), findings_report(f)));
}

void cmd_repro(const Options& o) {
    const auto config = load_config(o.config);
    repro(config, {o.out.empty() ? fs::path("ecorr-repro") : fs::path(o.out), o.threads});
}

// --- error reporting -------------------------------------------------------

int report_error(std::string_view kind, int code, const std::string& message) {
    std::cerr << "ecorr: error kind=" << kind << " exit=" << code << " message=" << json(message).dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Correlation-matrix lab: elliptope geometry, samplers, stylized facts, conditional GAN, "
                 "evaluation and HRP/IVP Monte Carlo.",
                 "ecorr"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--threads", o.threads, "Worker threads; results do not depend on it")
        ->check(CLI::Range(1, 256))
        ->default_val(1);

    std::function<void()> action;
    auto on = [&](CLI::App* sub, void (*fn)(const Options&)) {
        sub->callback([&action, &o, fn] { action = [&o, fn] { fn(o); }; });
    };

    auto* sample = app.add_subcommand("sample", "Draw random correlation matrices into a corpus directory");
    sample->add_option("--method", o.method, "onion|cvine|spectrum|factor|regime")->required();
    sample->add_option("--dim", o.dim, "Matrix dimension (implied by --spectrum)");
    sample->add_option("--count", o.count, "Draws (per regime for regime without --regime)")->required();
    sample->add_option("--seed", o.seed, "Master seed")->required();
    sample->add_option("--out", o.out, "Output corpus directory")->required();
    sample->add_option("--eta", o.eta, "Onion concentration")->default_val(1.0);
    sample->add_option("--beta-a", o.beta_a, "C-vine Beta shape a")->default_val(1.0);
    sample->add_option("--beta-b", o.beta_b, "C-vine Beta shape b")->default_val(1.0);
    sample->add_option("--spectrum", o.spectrum, "Eigenvalues for the spectrum method")->delimiter(',');
    sample->add_option("--beta-lo", o.beta_lo, "One-factor loading lower bound")->default_val(0.3);
    sample->add_option("--beta-hi", o.beta_hi, "One-factor loading upper bound")->default_val(0.7);
    sample->add_option("--regime", o.regime, "stressed|normal|rally for the regime method (default: all three)");
    sample->add_option("--label", o.label, "Regime label stored for non-regime methods")->default_val("normal");
    on(sample, cmd_sample);

    auto* project = app.add_subcommand("project", "Nearest correlation matrix of a CSV matrix");
    project->add_option("--in", o.in, "Input matrix CSV")->required();
    project->add_option("--out", o.out, "Output matrix CSV")->required();
    project->add_option("--tol", o.tol, "Convergence tolerance")->default_val(kDefaultValidationTol);
    project->add_option("--max-iter", o.max_iter, "Iteration cap")->default_val(200);
    project->add_option("--report", o.report, "Metadata JSON path (default stdout)");
    on(project, cmd_project);

    auto* metrics = app.add_subcommand("metrics", "Stylized facts and features per matrix plus aggregates");
    metrics->add_option("--in", o.in, "Corpus directory or matrix CSV")->required();
    metrics->add_option("--report", o.report, "Output JSON (default stdout)");
    metrics->add_option("--q-ratio", o.q_ratio, "Marchenko-Pastur dim/T ratio")->default_val(facts::kDefaultQRatio);
    on(metrics, cmd_metrics);

    auto* geometry = app.add_subcommand("geometry", "Affine-invariant geodesics and means");
    geometry->require_subcommand(1);
    auto* geodesic = geometry->add_subcommand("geodesic", "Point on the geodesic between two SPD matrices");
    geodesic->add_option("--a", o.a, "Start matrix CSV")->required();
    geodesic->add_option("--b", o.b, "End matrix CSV")->required();
    geodesic->add_option("--t", o.t, "Position in [0, 1]")->default_val(0.5);
    geodesic->add_option("--out", o.out, "Output matrix CSV")->required();
    geodesic->add_option("--report", o.report, "Metadata JSON path (default stdout)");
    on(geodesic, cmd_geodesic);
    auto* mean = geometry->add_subcommand("mean", "Mean of correlation matrices (M1..M5)");
    mean->add_option("--method", o.method, "M1|M2|M3|M4|M5 or euclidean|karcher|normalized|constrained|projection")
        ->required();
    mean->add_option("--in", o.inputs, "Corpus directories or matrix CSVs")->required();
    mean->add_option("--out", o.out, "Output matrix CSV")->required();
    mean->add_option("--report", o.report, "Metadata JSON path (default stdout)");
    on(mean, cmd_mean);

    auto* corpus_cmd = app.add_subcommand("corpus", "Build, synthesize and inspect labeled corpora");
    corpus_cmd->require_subcommand(1);
    auto* build = corpus_cmd->add_subcommand("build", "Rolling-window corpus from a returns CSV");
    build->add_option("--returns", o.returns, "Returns CSV with a header row")->required();
    build->add_option("--window", o.window, "Window length")->default_val(252);
    build->add_option("--step", o.step, "Window step")->default_val(21);
    build->add_option("--threshold", o.threshold, "Label by +/- return threshold instead of terciles");
    build->add_option("--out", o.out, "Output corpus directory")->required();
    on(build, cmd_corpus_build);
    auto* synth = corpus_cmd->add_subcommand("synth", "Surrogate regime corpus");
    synth->add_option("--count", o.count, "Matrices per regime")->required();
    synth->add_option("--dim", o.dim, "Matrix dimension")->required();
    synth->add_option("--seed", o.seed, "Master seed")->required();
    synth->add_option("--out", o.out, "Output corpus directory")->required();
    on(synth, cmd_corpus_synth);
    auto* inspect = corpus_cmd->add_subcommand("inspect", "Summarize a corpus directory");
    inspect->add_option("--in", o.in, "Corpus directory")->required();
    inspect->add_option("--report", o.report, "Output JSON (default stdout)");
    on(inspect, cmd_corpus_inspect);

    auto* train = app.add_subcommand("train", "Train the conditional GAN");
    train->add_option("--corpus", o.corpus, "Training corpus directory")->required();
    train->add_option("--config", o.config, "Experiment config JSON")->required();
    train->add_option("--out", o.out, "Checkpoint directory")->required();
    on(train, cmd_train);

    auto* generate = app.add_subcommand("generate", "Sample a trained checkpoint");
    generate->add_option("--ckpt", o.ckpt, "Checkpoint directory")->required();
    generate->add_option("--regime", o.regime, "stressed|normal|rally")->required();
    generate->add_option("--count", o.count, "Number of matrices")->required();
    generate->add_option("--seed", o.seed, "Noise seed")->required();
    generate->add_option("--out", o.out, "Output directory")->required();
    generate->add_flag("--no-project", o.no_project, "Write raw lower triangles to raw.csv instead of a corpus");
    on(generate, cmd_generate);

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare real and synthetic corpora");
    evaluate_cmd->add_option("--real", o.real, "Real corpus directories")->required();
    evaluate_cmd->add_option("--synth", o.synth, "Synthetic corpus directories")->required();
    evaluate_cmd->add_option("--basis", o.basis, "PCA and classifier reference corpus (default: first --real)");
    evaluate_cmd->add_option("--seed", o.seed, "Seed for the classifier and sliced distances")->default_val(0);
    evaluate_cmd->add_option("--report", o.report, "Output JSON (default stdout)");
    evaluate_cmd->add_option("--clouds", o.clouds, "PCA clouds CSV");
    on(evaluate_cmd, cmd_evaluate);

    auto* portfolio_cmd = app.add_subcommand("portfolio", "Allocation weights");
    portfolio_cmd->require_subcommand(1);
    auto* weights = portfolio_cmd->add_subcommand("weights", "Weights for a covariance matrix CSV");
    weights->add_option("--method", o.method, "hrp|ivp|ew")->required();
    weights->add_option("--cov", o.cov, "Covariance matrix CSV")->required();
    weights->add_option("--report", o.report, "Output JSON (default stdout)");
    on(weights, cmd_portfolio_weights);

    auto* mc_cmd = app.add_subcommand("mc", "Monte Carlo allocation study");
    mc_cmd->require_subcommand(1);
    auto* mc_run = mc_cmd->add_subcommand("run", "Simulate and backtest");
    mc_run->add_option("--config", o.config, "Experiment config JSON")->required();
    mc_run->add_option("--out", o.out, "Records file (NDJSON)")->required();
    mc_run->add_option("--ckpt", o.ckpt, "Checkpoint directory when mc.source is gan");
    on(mc_run, cmd_mc_run);
    auto* explain = mc_cmd->add_subcommand("explain", "Linear surrogate plus exact Shapley attributions");
    explain->add_option("--records", o.records, "Records file")->required();
    explain->add_option("--target", o.target, "outperformance|decay")->default_val("outperformance");
    explain->add_option("--method", o.alloc, "Allocation method for the decay target")->default_val("hrp");
    explain->add_option("--report", o.report, "Output JSON (default stdout)");
    on(explain, cmd_mc_explain);
    auto* findings = mc_cmd->add_subcommand("findings", "Per-regime HRP versus IVP summary");
    findings->add_option("--records", o.records, "Records file")->required();
    findings->add_option("--seed", o.seed, "Bootstrap seed")->default_val(0);
    findings->add_option("--resamples", o.resamples, "Bootstrap resamples")->default_val(mc::kBootstrapResamples);
    findings->add_option("--report", o.report, "Output JSON (default stdout)");
    on(findings, cmd_mc_findings);

    auto* repro_cmd = app.add_subcommand("repro", "Full pipeline from one experiment config");
    repro_cmd->add_option("--config", o.config, "Experiment config JSON")->required();
    repro_cmd->add_option("--out", o.out, "Output directory")->default_val("ecorr-repro");
    on(repro_cmd, cmd_repro);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help();
        return report_error("UsageError", 2, e.what());
    }

    try {
        action();
    } catch (const Error& e) {
        return report_error(to_string(e.kind()), exit_code_for(e.kind()), e.what());
    } catch (const fs::filesystem_error& e) {
        return report_error(to_string(ErrorKind::IoError), exit_code_for(ErrorKind::IoError), e.what());
    } catch (const nlohmann::json::exception& e) {
        return report_error(to_string(ErrorKind::ParseError), exit_code_for(ErrorKind::ParseError), e.what());
    } catch (const std::exception& e) {
        return report_error("InternalError", 4, e.what());
    }
    return 0;
}
