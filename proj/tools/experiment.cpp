#include "experiment.hpp"

#include <set>

#include "ecorr/util.hpp"

namespace ecorr::cli {

namespace {

/// Object reader that remembers which keys were consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(ErrorKind::ConfigError, "config: '" + label() + "' must be an object");
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void read(const std::string& key, std::size_t& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_unsigned()) type_error(key, "a non-negative integer");
            out = v->get<std::size_t>();
        }
    }

    void read(const std::string& key, std::uint64_t& out, bool required) {
        const json* v = find(key);
        if (!v) {
            if (required) fail(ErrorKind::ConfigError, "config: missing required key '" + where(key) + "'");
            return;
        }
        if (!v->is_number_unsigned()) type_error(key, "a non-negative integer");
        out = v->get<std::uint64_t>();
    }

    void read(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) type_error(key, "a number");
            out = v->get<double>();
        }
    }

    void read(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) type_error(key, "a string");
            out = v->get<std::string>();
        }
    }

    /// Rejects every key that was never asked for.
    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) fail(ErrorKind::ConfigError, "config: unknown key '" + where(k) + "'");
    }

    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string label() const { return path_.empty() ? "<root>" : path_; }

    [[noreturn]] void type_error(const std::string& key, const char* expected) const {
        fail(ErrorKind::ConfigError, "config: '" + where(key) + "' must be " + expected);
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

McSource parse_source(const std::string& s) {
    if (s == "surrogate") return McSource::Surrogate;
    if (s == "gan") return McSource::Gan;
    fail(ErrorKind::ConfigError, "config: mc.source must be 'surrogate' or 'gan'");
}

void check(const ExperimentConfig& c) {
    auto need = [](bool ok, const std::string& msg) { require(ok, ErrorKind::ConfigError, "config: " + msg); };
    need(c.corpus.count_per_regime >= 2, "corpus.count_per_regime must be >= 2");
    need(c.corpus.dim >= 2, "corpus.dim must be >= 2");
    need(c.eval.samples_per_regime >= 2, "eval.samples_per_regime must be >= 2");
    need(c.eval.real_sets >= 2, "eval.real_sets must be >= 2");
    need(c.eval.synth_sets >= 1, "eval.synth_sets must be >= 1");
    need(c.eval.sliced_projections >= 1, "eval.sliced_projections must be >= 1");
    need(c.eval.classifier.holdout_fraction > 0 && c.eval.classifier.holdout_fraction < 1,
         "eval.classifier.holdout_fraction must lie in (0, 1)");
    need(c.eval.classifier.hidden >= 1 && c.eval.classifier.steps >= 1, "eval.classifier sizes must be positive");
    need(c.eval.classifier.lr > 0, "eval.classifier.lr must be positive");
    need(c.mc.count_per_regime >= 1, "mc.count_per_regime must be >= 1");
    need(c.mc.t_in >= c.corpus.dim + 2 && c.mc.t_out >= c.corpus.dim + 2, "mc.t_in and mc.t_out must be >= dim + 2");
    need(c.mc.annual_vol > 0 && c.mc.vol_log_sd >= 0, "mc vol parameters out of range");
    need(c.mc.bootstrap_resamples >= 1, "mc.bootstrap_resamples must be >= 1");
    c.gan.check();
}

}  // namespace

std::string to_string(McSource s) { return s == McSource::Gan ? "gan" : "surrogate"; }

ExperimentConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::ConfigError, std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig c;
    Section top(root, "");
    std::string format;
    std::uint64_t version = 0;
    top.read("format", format);
    if (!format.empty() && format != kConfigFormat)
        fail(ErrorKind::ConfigError, "config: format must be '" + std::string(kConfigFormat) + "'");
    top.read("version", version, true);
    if (version != kConfigVersion)
        fail(ErrorKind::ConfigError, "config: unsupported version " + std::to_string(version));
    top.read("seed", c.seed, true);

    if (const json* j = top.find("corpus")) {
        Section s(*j, "corpus");
        s.read("count_per_regime", c.corpus.count_per_regime);
        s.read("dim", c.corpus.dim);
        s.finish();
    }
    if (const json* j = top.find("gan")) {
        Section s(*j, "gan");
        std::string arch = to_string(c.gan.arch);
        s.read("arch", arch);
        c.gan.arch = gan::parse_arch(arch);
        s.read("noise_dim", c.gan.noise_dim);
        s.read("epochs", c.gan.epochs);
        s.read("batch_size", c.gan.batch_size);
        s.read("lr_g", c.gan.lr_g);
        s.read("lr_d", c.gan.lr_d);
        s.read("beta1", c.gan.beta1);
        s.read("d_steps_per_g", c.gan.d_steps_per_g);
        s.read("monitor_samples", c.gan.monitor_samples);
        s.finish();
    }
    if (const json* j = top.find("eval")) {
        Section s(*j, "eval");
        s.read("samples_per_regime", c.eval.samples_per_regime);
        s.read("real_sets", c.eval.real_sets);
        s.read("synth_sets", c.eval.synth_sets);
        s.read("sliced_projections", c.eval.sliced_projections);
        if (const json* k = s.find("classifier")) {
            Section cs(*k, "eval.classifier");
            cs.read("holdout_fraction", c.eval.classifier.holdout_fraction);
            cs.read("hidden", c.eval.classifier.hidden);
            cs.read("steps", c.eval.classifier.steps);
            cs.read("lr", c.eval.classifier.lr);
            cs.finish();
        }
        s.finish();
    }
    if (const json* j = top.find("mc")) {
        Section s(*j, "mc");
        std::string source = to_string(c.mc.source);
        s.read("source", source);
        c.mc.source = parse_source(source);
        s.read("count_per_regime", c.mc.count_per_regime);
        s.read("t_in", c.mc.t_in);
        s.read("t_out", c.mc.t_out);
        s.read("annual_vol", c.mc.annual_vol);
        s.read("vol_log_sd", c.mc.vol_log_sd);
        s.read("bootstrap_resamples", c.mc.bootstrap_resamples);
        s.finish();
    }
    top.finish();

    c.gan.dim = c.corpus.dim;
    c.gan.seed = stream(c, Stream::Gan);
    c.eval.classifier.seed = stream(c, Stream::Classifier);
    check(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

json ExperimentConfig::to_json() const {
    const auto& g = gan;
    const auto& k = eval.classifier;
    return {
        {"format", kConfigFormat},
        {"version", kConfigVersion},
        {"seed", seed},
        {"corpus", {{"count_per_regime", corpus.count_per_regime}, {"dim", corpus.dim}}},
        {"gan",
         {{"arch", gan::to_string(g.arch)},
          {"noise_dim", g.noise_dim},
          {"epochs", g.epochs},
          {"batch_size", g.batch_size},
          {"lr_g", g.lr_g},
          {"lr_d", g.lr_d},
          {"beta1", g.beta1},
          {"d_steps_per_g", g.d_steps_per_g},
          {"monitor_samples", g.monitor_samples}}},
        {"eval",
         {{"samples_per_regime", eval.samples_per_regime},
          {"real_sets", eval.real_sets},
          {"synth_sets", eval.synth_sets},
          {"sliced_projections", eval.sliced_projections},
          {"classifier",
           {{"holdout_fraction", k.holdout_fraction}, {"hidden", k.hidden}, {"steps", k.steps}, {"lr", k.lr}}}}},
        {"mc",
         {{"source", to_string(mc.source)},
          {"count_per_regime", mc.count_per_regime},
          {"t_in", mc.t_in},
          {"t_out", mc.t_out},
          {"annual_vol", mc.annual_vol},
          {"vol_log_sd", mc.vol_log_sd},
          {"bootstrap_resamples", mc.bootstrap_resamples}}},
    };
}

std::string ExperimentConfig::sha256() const { return sha256_hex(to_json().dump()); }

mc::McConfig mc_config(const ExperimentConfig& c) {
    mc::McConfig m;
    m.counts = {c.mc.count_per_regime, c.mc.count_per_regime, c.mc.count_per_regime};
    m.dim = c.corpus.dim;
    m.backtest = {c.mc.t_in, c.mc.t_out};
    m.annual_vol = c.mc.annual_vol;
    m.vol_log_sd = c.mc.vol_log_sd;
    m.seed = stream(c, Stream::Mc);
    return m;
}

}  // namespace ecorr::cli
