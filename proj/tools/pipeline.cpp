#include "pipeline.hpp"

#include <charconv>
#include <cmath>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "ecorr/util.hpp"

namespace ecorr::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kProvenanceFile = "provenance.json";

std::string num(double v) {
    if (!std::isfinite(v)) return "nan";
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json confusion_json(const eval::ConfusionMatrix& m) {
    json rows = json::array();
    for (const auto& row : m) rows.push_back(row);
    return rows;
}

void info(const std::string& msg) { std::cerr << "ecorr: info " << msg << '\n'; }

corpus::LabeledCorpus concat(const std::vector<corpus::LabeledCorpus>& sets) {
    corpus::LabeledCorpus out;
    out.dim = sets.front().dim;
    out.source = sets.front().source;
    for (const auto& s : sets)
        for (const auto& it : s.items) out.items.push_back(it);
    return out;
}

corpus::LabeledCorpus generated_corpus(const gan::GanCheckpoint& ckpt, std::size_t per_regime, Seed seed, int threads) {
    corpus::LabeledCorpus c;
    c.dim = ckpt.config.dim;
    c.source = corpus::Source::Surrogate;
    for (RegimeLabel r : kAllRegimes) {
        auto s = gan::sample(ckpt, r, per_regime, derive(seed, static_cast<std::uint64_t>(r)), true, threads);
        for (std::size_t k = 0; k < per_regime; ++k)
            c.items.push_back({std::move(s.matrices[k]), r, {k, 0, 0.0, false}});
    }
    return c;
}

void append_cloud(std::string& csv, const std::string& set, const std::string& kind,
                  const corpus::LabeledCorpus& c, const eval::PcaBasis& basis) {
    const auto cloud = eval::project(basis, c.matrices());
    for (std::size_t i = 0; i < cloud.points.size(); ++i)
        csv += set + ',' + kind + ',' + to_string(c.items[i].label) + ',' + num(cloud.points[i][0]) + ',' +
               num(cloud.points[i][1]) + '\n';
}

}  // namespace

Provenance Provenance::of(const json& params, std::optional<std::uint64_t> seed) {
    return {sha256_hex(params.dump()), seed};
}

Provenance Provenance::of(const ExperimentConfig& config) { return {config.sha256(), config.seed}; }

json Provenance::to_json() const {
    return {{"tool", "ecorr"},
            {"version", kToolVersion},
            {"config_sha256", config_sha256},
            {"seed", seed ? json(*seed) : json(nullptr)}};
}

std::string Provenance::comment() const { return "# " + to_json().dump(); }

std::string render_report(const Provenance& prov, json body) {
    // Provenance first, then the body in sorted key order.
    auto out = nlohmann::ordered_json::object();
    out["provenance"] = nlohmann::ordered_json::parse(prov.to_json().dump());
    for (const auto& [k, v] : body.items()) out[k] = nlohmann::ordered_json::parse(v.dump());
    return out.dump(2) + "\n";
}

void write_report(const fs::path& path, const Provenance& prov, json body) {
    write_file(path, render_report(prov, std::move(body)));
}

void write_corpus_artifact(const corpus::LabeledCorpus& c, const fs::path& dir, const Provenance& prov) {
    corpus::write_corpus(c, dir);
    write_file(dir / kProvenanceFile, prov.to_json().dump(2) + "\n");
}

std::optional<std::string> recorded_config_hash(const fs::path& dir) {
    const auto p = dir / kProvenanceFile;
    if (!fs::exists(p)) return std::nullopt;
    try {
        return json::parse(read_file(p)).at("config_sha256").get<std::string>();
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

json to_json(const facts::StylizedFactReport& r) {
    return {{"sf1_mean_offdiag", finite_or_null(r.sf1_mean_offdiag)},
            {"sf1_skew", finite_or_null(r.sf1_skew)},
            {"sf2_top_eig_share", finite_or_null(r.sf2_top_eig_share)},
            {"sf2_mp_lambda_minus", r.sf2_mp_bounds.lambda_minus},
            {"sf2_mp_lambda_plus", r.sf2_mp_bounds.lambda_plus},
            {"sf3_outlier_eig_fraction", finite_or_null(r.sf3_outlier_eig_fraction)},
            {"sf4_first_evec_sign_consistency", finite_or_null(r.sf4_first_evec_sign_consistency)},
            {"sf4_degenerate", r.sf4_degenerate},
            {"sf5_cophenetic_coeff", finite_or_null(r.sf5_cophenetic_coeff)},
            {"sf6_mst_degree_tail_exponent", finite_or_null(r.sf6_mst_degree_tail_exponent)},
            {"sf6_max_degree", r.sf6_max_degree},
            {"insufficient_dimension", r.insufficient_dimension}};
}

json to_json(const facts::FeatureVector& f) {
    json j = json::object();
    for (std::size_t k = 0; k < facts::kFeatureCount; ++k)
        j[std::string(facts::kFeatureNames[k])] = finite_or_null(f.values[k]);
    return j;
}

json metrics_report(const std::vector<CorrelationMatrix>& matrices, const std::vector<std::optional<RegimeLabel>>& labels,
                    double q_ratio, int threads) {
    const std::size_t n = matrices.size();
    std::vector<facts::StylizedFactReport> reports(n);
    std::vector<facts::FeatureVector> features(n);
    parallel_for(n, threads, [&](std::size_t i) {
        reports[i] = facts::stylized_report(matrices[i], q_ratio);
        if (matrices[i].dim() >= 4)
            features[i] = facts::feature_vector(matrices[i]);
        else
            features[i].values.fill(std::nan(""));
    });

    json records = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        json r = {{"index", i}, {"stylized", to_json(reports[i])}, {"features", to_json(features[i])}};
        r["regime"] = labels[i] ? json(to_string(*labels[i])) : json(nullptr);
        records.push_back(std::move(r));
    }

    // Means over finite values of every numeric field, overall and per regime.
    auto summarize = [&](const std::optional<RegimeLabel>& only) {
        std::map<std::string, std::pair<double, std::size_t>> acc;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (only && labels[i] != only) continue;
            ++count;
            for (const auto& group : {records[i]["stylized"], records[i]["features"]})
                for (const auto& [k, v] : group.items())
                    if (v.is_number() && !v.is_boolean()) {
                        auto& a = acc[k];
                        a.first += v.get<double>();
                        ++a.second;
                    }
        }
        json means = json::object();
        for (const auto& [k, a] : acc) means[k] = a.first / static_cast<double>(a.second);
        return json{{"count", count}, {"mean", means}};
    };
    json aggregate = summarize(std::nullopt);
    json per_regime = json::object();
    for (RegimeLabel r : kAllRegimes) {
        bool any = false;
        for (const auto& l : labels) any = any || l == r;
        if (any) per_regime[to_string(r)] = summarize(r);
    }
    aggregate["per_regime"] = std::move(per_regime);
    return {{"q_ratio", q_ratio}, {"records", std::move(records)}, {"aggregate", std::move(aggregate)}};
}

Evaluation evaluate(const EvaluationInput& in) {
    require(in.basis != nullptr && !in.real.empty() && !in.synth.empty(), ErrorKind::InvalidInput,
            "evaluate: needs a basis corpus, real sets and synthetic sets");
    Evaluation out;
    const auto basis_set = in.basis->matrices();
    const auto basis = eval::fit_pca(basis_set);

    std::vector<eval::PointCloud2D> real_clouds, synth_clouds;
    for (const auto& c : in.real) real_clouds.push_back(eval::project(basis, c.matrices()));
    for (const auto& c : in.synth) synth_clouds.push_back(eval::project(basis, c.matrices()));

    json wasserstein = json::object();
    if (in.real.size() >= 2) {
        const auto ds = eval::distance_stats(real_clouds, synth_clouds, in.threads);
        wasserstein = {{"mu_e", ds.mu_e},
                       {"sigma_e", ds.sigma_e},
                       {"mu_g", ds.mu_g},
                       {"sigma_g", ds.sigma_g},
                       {"ratio_mu_g_mu_e", ds.mu_e > 0 ? json(ds.mu_g / ds.mu_e) : json(nullptr)},
                       {"max_within", ds.max_within},
                       {"min_between", ds.min_between},
                       {"approximate", ds.approximate},
                       {"real_pairs", ds.real_pairs},
                       {"synth_pairs", ds.synth_pairs}};
    } else {
        const auto w = eval::wasserstein2(real_clouds[0], synth_clouds[0]);
        wasserstein = {{"mu_e", nullptr}, {"mu_g", w.distance}, {"ratio_mu_g_mu_e", nullptr},
                       {"approximate", w.approximate}, {"real_pairs", 0}, {"synth_pairs", 1}};
    }
    json per_regime = json::object();
    for (RegimeLabel r : kAllRegimes) {
        const auto a = in.real[0].matrices(r), b = in.synth[0].matrices(r);
        if (a.empty() || b.empty()) continue;
        const auto w = eval::wasserstein2(eval::project(basis, a), eval::project(basis, b));
        per_regime[to_string(r)] = {{"distance", w.distance}, {"n", w.n}, {"approximate", w.approximate}};
    }
    wasserstein["per_regime"] = std::move(per_regime);
    wasserstein["sliced_raw"] = eval::sliced_wasserstein_raw(in.real[0].matrices(), in.synth[0].matrices(),
                                                             in.sliced_seed, in.sliced_projections);

    const auto synth_all = concat(in.synth);
    const auto fid = eval::classifier_fidelity(*in.basis, synth_all, in.classifier);
    const json classifier = {{"real_confusion", confusion_json(fid.real_confusion)},
                             {"real_accuracy", fid.real_accuracy},
                             {"synthetic_confusion", confusion_json(fid.synthetic_confusion)},
                             {"synthetic_accuracy", fid.synthetic_accuracy},
                             {"weak_classifier", fid.weak_classifier}};

    const auto cmp = eval::compare_features(*in.basis, synth_all, in.threads);
    json features = json::object(), stylized = json::object();
    for (RegimeLabel r : kAllRegimes) {
        const auto i = static_cast<std::size_t>(r);
        if (cmp.real_count[i] == 0 || cmp.synthetic_count[i] == 0) continue;
        json f = json::object();
        for (std::size_t k = 0; k < facts::kFeatureCount; ++k)
            f[std::string(facts::kFeatureNames[k])] = {{"real", finite_or_null(cmp.real[i][k])},
                                                       {"synthetic", finite_or_null(cmp.synthetic[i][k])}};
        features[to_string(r)] = {{"real_count", cmp.real_count[i]},
                                  {"synthetic_count", cmp.synthetic_count[i]},
                                  {"means", std::move(f)}};
        const double s1r = cmp.real[i][0], s1s = cmp.synthetic[i][0];
        const double s2r = cmp.real[i][2], s2s = cmp.synthetic[i][2];
        stylized[to_string(r)] = {{"sf1_mean_offdiag", {{"real", s1r}, {"synthetic", s1s}, {"abs_gap", std::abs(s1s - s1r)}}},
                                  {"sf2_top_eig_share",
                                   {{"real", s2r}, {"synthetic", s2s}, {"rel_gap", std::abs(s2s - s2r) / s2r}}}};
    }

    out.report = {{"pca",
                   {{"explained_share", basis.explained_share},
                    {"variance", basis.variance},
                    {"reference_count", basis_set.size()}}},
                  {"wasserstein", std::move(wasserstein)},
                  {"classifier", classifier},
                  {"stylized_facts", std::move(stylized)},
                  {"features", std::move(features)}};

    out.clouds_csv = "set,kind,regime,x,y\n";
    append_cloud(out.clouds_csv, "basis", "reference", *in.basis, basis);
    for (std::size_t s = 0; s < in.real.size(); ++s)
        append_cloud(out.clouds_csv, std::to_string(s), "real", in.real[s], basis);
    for (std::size_t s = 0; s < in.synth.size(); ++s)
        append_cloud(out.clouds_csv, std::to_string(s), "synthetic", in.synth[s], basis);
    return out;
}

json explain_report(const std::vector<mc::McRecord>& records, mc::Target target, portfolio::Method method) {
    const auto model = mc::fit_surrogate(records, target, method);
    const auto bg = mc::background_means(records);
    const auto raw = model.raw_weights();

    json attributions = json::array();
    std::vector<double> mean_abs(model.features.size(), 0.0);
    double worst = 0.0;
    std::size_t skipped = 0, count = 0;
    for (const auto& r : records) {
        bool finite = true;
        for (double v : r.features.values) finite = finite && std::isfinite(v);
        if (!finite) {
            ++skipped;
            continue;
        }
        const auto a = mc::shapley(model, r, records);
        double sum = 0.0;
        for (std::size_t k = 0; k < a.phi.size(); ++k) {
            sum += a.phi[k];
            mean_abs[k] += std::abs(a.phi[k]);
        }
        const double residual = std::abs(sum - (a.prediction - a.baseline));
        worst = std::max(worst, residual);
        ++count;
        attributions.push_back({{"regime", to_string(r.regime)},
                                {"index", r.index},
                                {"target", mc::target_value(r, target, method)},
                                {"prediction", a.prediction},
                                {"baseline", a.baseline},
                                {"phi", a.phi},
                                {"efficiency_residual", residual}});
    }
    if (!(worst <= kEfficiencyTol))
        fail(ErrorKind::NumericalFailure, "Shapley efficiency residual " + num(worst) + " exceeds 1e-10");

    json importance = json::object();
    for (std::size_t k = 0; k < mean_abs.size(); ++k)
        importance[model.features[k]] = count ? mean_abs[k] / static_cast<double>(count) : 0.0;
    return {{"model",
             {{"kind", "linear"},
              {"target", mc::to_string(target)},
              {"method", portfolio::to_string(method)},
              {"features", model.features},
              {"coefficients", model.fit.coefficients},
              {"raw_weights", raw},
              {"intercept", model.fit.intercept},
              {"mean", model.fit.mean},
              {"scale", model.fit.scale},
              {"r2", model.fit.r2},
              {"n", model.fit.n},
              {"dropped", model.dropped}}},
            {"background_means", bg},
            {"summary",
             {{"attributions", count},
              {"skipped_nonfinite", skipped},
              {"max_efficiency_residual", worst},
              {"mean_abs_phi", importance}}},
            {"attributions", std::move(attributions)}};
}

json findings_report(const std::vector<mc::RegimeFinding>& findings) {
    json regimes = json::array();
    for (const auto& f : findings) {
        regimes.push_back({{"regime", to_string(f.regime)},
                           {"count", f.count},
                           {"insufficient", f.insufficient},
                           {"hrp_win_rate", finite_or_null(f.win_rate)},
                           {"hrp_win_rate_ci95", {finite_or_null(f.win_rate_ci.lo), finite_or_null(f.win_rate_ci.hi)}},
                           {"mean_gap", finite_or_null(f.mean_gap)},
                           {"mean_gap_ci95", {finite_or_null(f.mean_gap_ci.lo), finite_or_null(f.mean_gap_ci.hi)}},
                           {"corr_gap_cophenetic", finite_or_null(f.corr_gap_cophenetic)},
                           {"corr_gap_evec1_dispersion", finite_or_null(f.corr_gap_evec1_dispersion)}});
    }
    return {{"gap", "hrp_out_sample_vol - ivp_out_sample_vol"}, {"regimes", std::move(regimes)}};
}

mc::MatrixSource gan_source(std::shared_ptr<const gan::GanCheckpoint> ckpt) {
    return [ckpt](RegimeLabel regime, std::size_t dim, Seed seed) {
        require(dim == ckpt->config.dim, ErrorKind::ConfigError, "mc: dim does not match the checkpoint");
        auto s = gan::sample(*ckpt, regime, 1, seed, true, 1);
        return std::move(s.matrices.front());
    };
}

std::string loss_csv(const gan::GanCheckpoint& ckpt) {
    std::string csv = "epoch,g_loss,d_loss,sf1_gap\n";
    for (std::size_t e = 0; e < ckpt.history.size(); ++e) {
        const auto& h = ckpt.history[e];
        csv += std::to_string(e + 1) + ',' + num(h.g_loss) + ',' + num(h.d_loss) + ',' + num(h.sf1_gap) + '\n';
    }
    return csv;
}

void repro(const ExperimentConfig& config, const ReproOptions& options) {
    const auto prov = Provenance::of(config);
    const fs::path corpus_dir = options.out / "corpus", ckpt_dir = options.out / "ckpt",
                   synth_dir = options.out / "synthetic", reports = options.out / "reports";
    const int threads = options.threads;
    write_file(options.out / "config.json", config.to_json().dump(2) + "\n");

    corpus::LabeledCorpus train_set;
    if (recorded_config_hash(corpus_dir) == prov.config_sha256) {
        info("reusing corpus " + corpus_dir.string());
        train_set = corpus::read_corpus(corpus_dir);
    } else {
        info("building surrogate corpus");
        train_set = corpus::build_surrogate({config.corpus.count_per_regime, config.corpus.dim},
                                            stream(config, Stream::Corpus), threads);
        write_corpus_artifact(train_set, corpus_dir, prov);
    }

    auto ckpt = std::make_shared<gan::GanCheckpoint>();
    if (recorded_config_hash(ckpt_dir) == prov.config_sha256) {
        info("reusing checkpoint " + ckpt_dir.string());
        *ckpt = gan::load(ckpt_dir);
    } else {
        info("training for " + std::to_string(config.gan.epochs) + " epochs");
        *ckpt = gan::train(gan::build(config.gan), train_set, [&](const gan::GanCheckpoint& c) {
            if (c.epoch % 25 == 0) info("epoch " + std::to_string(c.epoch));
        });
        fs::remove_all(ckpt_dir);
        gan::save(*ckpt, ckpt_dir);
        write_file(ckpt_dir / kProvenanceFile, prov.to_json().dump(2) + "\n");
    }
    write_file(reports / "loss.csv", prov.comment() + "\n" + loss_csv(*ckpt));

    info("generating and evaluating");
    const std::size_t n = config.eval.samples_per_regime;
    EvaluationInput ev;
    ev.basis = &train_set;
    for (std::size_t s = 0; s < config.eval.real_sets; ++s)
        ev.real.push_back(corpus::build_surrogate({n, config.corpus.dim}, derive(stream(config, Stream::RealSets), s),
                                                  threads));
    for (std::size_t s = 0; s < config.eval.synth_sets; ++s)
        ev.synth.push_back(generated_corpus(*ckpt, n, derive(stream(config, Stream::SynthSets), s), threads));
    write_corpus_artifact(ev.synth[0], synth_dir, prov);
    ev.classifier = config.eval.classifier;
    ev.sliced_seed = stream(config, Stream::SlicedRaw);
    ev.sliced_projections = config.eval.sliced_projections;
    ev.threads = threads;
    auto evaluation = evaluate(ev);
    evaluation.report["gan"] = {
        {"epochs_trained", ckpt->epoch},
        {"mode_collapse", ckpt->mode_collapse},
        {"discriminator_accuracy", gan::discriminator_accuracy(*ckpt, ev.real[0], stream(config, Stream::Discriminator))}};
    write_report(reports / "evaluate.json", prov, evaluation.report);
    write_file(reports / "clouds.csv", prov.comment() + "\n" + evaluation.clouds_csv);

    info("running Monte Carlo (" + to_string(config.mc.source) + " source)");
    const auto source = config.mc.source == McSource::Gan ? gan_source(ckpt) : mc::surrogate_source();
    const auto run = mc::run(mc_config(config), source, threads);
    std::ostringstream records;
    records << prov.comment() << '\n';
    mc::write_records(records, run.records);
    write_file(reports / "records.ecrec", records.str());

    json skipped = json::array();
    for (const auto& s : run.skipped)
        skipped.push_back({{"regime", to_string(s.regime)}, {"index", s.index}, {"reason", s.reason}});

    info("attributing and summarizing");
    const auto shap_out = explain_report(run.records, mc::Target::Outperformance, portfolio::Method::HRP);
    const auto shap_decay = explain_report(run.records, mc::Target::Decay, portfolio::Method::HRP);
    write_report(reports / "shap_outperformance.json", prov, shap_out);
    write_report(reports / "shap_decay.json", prov, shap_decay);
    const auto findings = findings_report(
        mc::regime_findings(run.records, stream(config, Stream::Findings), config.mc.bootstrap_resamples));
    write_report(reports / "findings.json", prov, findings);

    const auto& w = evaluation.report["wasserstein"];
    const auto& k = evaluation.report["classifier"];
    write_report(reports / "summary.json", prov,
                 {{"config", config.to_json()},
                  {"stylized_facts", evaluation.report["stylized_facts"]},
                  {"classifier", {{"real_accuracy", k["real_accuracy"]}, {"synthetic_accuracy", k["synthetic_accuracy"]}}},
                  {"wasserstein", {{"mu_e", w["mu_e"]}, {"mu_g", w["mu_g"]}, {"ratio_mu_g_mu_e", w["ratio_mu_g_mu_e"]}}},
                  {"gan", evaluation.report["gan"]},
                  {"mc", {{"records", run.records.size()}, {"skipped", std::move(skipped)}}},
                  {"shapley_max_efficiency_residual",
                   std::max(shap_out["summary"]["max_efficiency_residual"].get<double>(),
                            shap_decay["summary"]["max_efficiency_residual"].get<double>())},
                  {"findings", findings["regimes"]}});
    info("reports written to " + reports.string());
}

}  // namespace ecorr::cli
