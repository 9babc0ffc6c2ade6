#include "ecorr/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ecorr/linalg.hpp"
#include "ecorr/util.hpp"

namespace ecorr::corpus {

using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kPayload = "matrices.f64le";
constexpr const char* kFormat = "ECORP";

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? comma : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return cells;
}

/// Pearson correlation of rows [start, start + length). Throws
/// DegenerateColumn naming the first zero-variance asset.
SymmetricMatrix window_correlation(const ReturnsTable& t, std::size_t start, std::size_t length,
                                   std::size_t window_index) {
    const std::size_t d = t.returns.cols();
    std::vector<double> mean(d, 0.0);
    for (std::size_t r = start; r < start + length; ++r)
        for (std::size_t j = 0; j < d; ++j) mean[j] += t.returns(r, j);
    for (auto& m : mean) m /= static_cast<double>(length);
    Matrix cov(d, d);
    for (std::size_t r = start; r < start + length; ++r)
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = t.returns(r, i) - mean[i];
            for (std::size_t j = i; j < d; ++j) cov(i, j) += xi * (t.returns(r, j) - mean[j]);
        }
    for (std::size_t j = 0; j < d; ++j) {
        bool constant = true;
        for (std::size_t r = start + 1; r < start + length && constant; ++r)
            constant = t.returns(r, j) == t.returns(start, j);
        if (constant || !(cov(j, j) > 0.0))
            fail(ErrorKind::DegenerateColumn,
                 "asset '" + t.assets[j] + "' is constant in window " + std::to_string(window_index));
    }
    SymmetricMatrix c = SymmetricMatrix::identity(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            c.set(i, j, std::clamp(cov(i, j) / std::sqrt(cov(i, i) * cov(j, j)), -1.0, 1.0));
    return c;
}

std::vector<RegimeLabel> tercile_labels(const std::vector<double>& returns) {
    const std::size_t n = returns.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return returns[a] < returns[b]; });
    std::vector<RegimeLabel> labels(n);
    for (std::size_t rank = 0; rank < n; ++rank) {
        // Bucket sizes differ by at most one.
        const std::size_t bucket = rank * 3 / n;
        labels[order[rank]] = static_cast<RegimeLabel>(bucket);
    }
    return labels;
}

json window_json(const WindowSpec& w) { return {{"length", w.length}, {"step", w.step}, {"estimator", "pearson"}}; }

Source parse_source(const std::string& s) {
    if (s == "ingested") return Source::Ingested;
    if (s == "surrogate") return Source::Surrogate;
    fail(ErrorKind::CorruptData, "unknown corpus source '" + s + "'");
}

}  // namespace

std::string to_string(Source s) { return s == Source::Ingested ? "ingested" : "surrogate"; }

std::vector<CorrelationMatrix> LabeledCorpus::matrices(std::optional<RegimeLabel> only) const {
    std::vector<CorrelationMatrix> out;
    for (const auto& it : items)
        if (!only || it.label == *only) out.push_back(it.matrix);
    return out;
}

std::array<std::size_t, 3> LabeledCorpus::class_counts() const {
    std::array<std::size_t, 3> c{};
    for (const auto& it : items) ++c[static_cast<std::size_t>(it.label)];
    return c;
}

ReturnsTable parse_returns_csv(const std::string& text) {
    ReturnsTable t;
    std::vector<double> values;
    std::size_t row = 0, pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
        pos = end + 1;
        ++row;
        if (line.empty()) continue;
        const auto cells = split(line);
        if (t.assets.empty()) {
            for (auto c : cells) t.assets.emplace_back(c);
            continue;
        }
        if (cells.size() != t.assets.size())
            fail(ErrorKind::ParseError, "row " + std::to_string(row) + ": expected " + std::to_string(t.assets.size()) +
                                            " columns, found " + std::to_string(cells.size()));
        for (std::size_t col = 0; col < cells.size(); ++col) {
            double v = 0.0;
            const auto cell = cells[col];
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v) || cell.empty())
                fail(ErrorKind::ParseError, "row " + std::to_string(row) + ", column " + std::to_string(col + 1) +
                                                ": not a number '" + std::string(cell) + "'");
            values.push_back(v);
        }
    }
    if (t.assets.empty()) fail(ErrorKind::ParseError, "returns file has no header");
    const std::size_t rows = values.size() / t.assets.size();
    t.returns = Matrix(rows, t.assets.size(), std::move(values));
    return t;
}

ReturnsTable read_returns_csv(const std::filesystem::path& path) { return parse_returns_csv(read_file(path)); }

std::size_t window_count(std::size_t observations, const WindowSpec& w) {
    if (observations < w.length) return 0;
    return (observations - w.length) / w.step + 1;
}

LabeledCorpus ingest_returns(const ReturnsTable& table, const WindowSpec& window, const LabelRule& rule) {
    const std::size_t d = table.returns.cols();
    const std::size_t t = table.returns.rows();
    require(d >= 2, ErrorKind::InvalidInput, "ingest: need at least two assets");
    require(window.step >= 1, ErrorKind::InvalidInput, "ingest: window step must be >= 1");
    require(window.length >= d + 2, ErrorKind::InvalidInput, "ingest: window length must be >= dim + 2");
    require(t >= window.length, ErrorKind::InvalidInput,
            "ingest: " + std::to_string(t) + " observations is shorter than the window");
    if (rule.threshold) require(*rule.threshold >= 0.0, ErrorKind::InvalidInput, "ingest: threshold must be >= 0");

    LabeledCorpus out;
    out.dim = d;
    out.source = Source::Ingested;
    out.assets = table.assets;
    out.window = window;

    const std::size_t n = window_count(t, window);
    std::vector<double> ew(n, 0.0);
    for (std::size_t w = 0; w < n; ++w) {
        const std::size_t start = w * window.step;
        auto c = window_correlation(table, start, window.length, w);
        // Arithmetic cumulative equal-weight return; ranks are invariant to
        // positive rescaling of all returns.
        std::vector<double> daily(window.length);
        for (std::size_t r = 0; r < window.length; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += table.returns(start + r, j);
            daily[r] = s / static_cast<double>(d);
        }
        ew[w] = compensated_sum(daily);

        WindowMeta meta{start, window.length, ew[w], false};
        if (!validate(c, 1e-10).is_valid) {
            c = nearest_correlation(c, 1e-10, 1000).matrix.symmetric();
            meta.repaired = true;
            ++out.repairs;
        }
        out.items.push_back({CorrelationMatrix(std::move(c)), RegimeLabel::Normal, meta});
    }

    if (rule.threshold) {
        for (auto& it : out.items)
            it.label = it.meta.ew_return < -*rule.threshold  ? RegimeLabel::Stressed
                       : it.meta.ew_return > *rule.threshold ? RegimeLabel::Rally
                                                             : RegimeLabel::Normal;
    } else {
        const auto labels = tercile_labels(ew);
        for (std::size_t w = 0; w < n; ++w) out.items[w].label = labels[w];
    }
    return out;
}

LabeledCorpus build_surrogate(const SurrogateSpec& spec, Seed seed, int threads) {
    require(spec.count_per_regime >= 1, ErrorKind::InvalidInput, "surrogate: count per regime must be >= 1");
    for (const auto& p : spec.params) p.check();
    const std::size_t count = spec.count_per_regime;
    std::vector<CorrelationMatrix> draws(3 * count);
    parallel_for(draws.size(), threads, [&](std::size_t k) {
        const auto regime = static_cast<RegimeLabel>(k / count);
        draws[k] = samplers::sample_regime(regime, spec.dim, spec.params[k / count], derive(seed, k));
    });
    LabeledCorpus out;
    out.dim = spec.dim;
    out.source = Source::Surrogate;
    for (std::size_t k = 0; k < draws.size(); ++k)
        out.items.push_back({std::move(draws[k]), static_cast<RegimeLabel>(k / count), WindowMeta{k % count, 0, 0.0, false}});
    return out;
}

void write_corpus(const LabeledCorpus& corpus, const std::filesystem::path& dir) {
    std::string payload;
    payload.reserve(corpus.size() * corpus.dim * corpus.dim * 8);
    json labels = json::array(), windows = json::array();
    for (const auto& it : corpus.items) {
        require(it.matrix.dim() == corpus.dim, ErrorKind::ShapeError, "corpus: item dimension mismatch");
        for (double v : it.matrix.data()) append_f64le(payload, v);
        labels.push_back(to_string(it.label));
        windows.push_back({{"start", it.meta.start},
                           {"length", it.meta.length},
                           {"ew_return", it.meta.ew_return},
                           {"repaired", it.meta.repaired}});
    }
    json m = {
        {"format", kFormat},
        {"version", kCorpusVersion},
        {"dim", corpus.dim},
        {"count", corpus.size()},
        {"source", to_string(corpus.source)},
        {"labels", labels},
        {"windows", windows},
        {"assets", corpus.assets},
        {"repairs", corpus.repairs},
        {"payload_sha256", sha256_hex(std::string_view(payload))},
    };
    m["window"] = corpus.window ? window_json(*corpus.window) : json(nullptr);
    std::filesystem::create_directories(dir);
    write_file(dir / kPayload, payload);
    write_file(dir / kManifest, m.dump(2) + "\n");
}

LabeledCorpus read_corpus(const std::filesystem::path& dir) {
    json m;
    try {
        m = json::parse(read_file(dir / kManifest));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::CorruptData, std::string("corpus manifest: ") + e.what());
    }
    try {
        if (m.at("format") != kFormat) fail(ErrorKind::UnsupportedVersion, "not an ECORP container");
        const int version = m.at("version").get<int>();
        if (version != kCorpusVersion)
            fail(ErrorKind::UnsupportedVersion, "ECORP version " + std::to_string(version) + " is not supported");

        LabeledCorpus out;
        out.dim = m.at("dim").get<std::size_t>();
        const auto count = m.at("count").get<std::size_t>();
        out.source = parse_source(m.at("source").get<std::string>());
        out.assets = m.at("assets").get<std::vector<std::string>>();
        out.repairs = m.at("repairs").get<std::size_t>();
        if (!m.at("window").is_null())
            out.window = WindowSpec{m["window"].at("length").get<std::size_t>(), m["window"].at("step").get<std::size_t>()};

        const std::string payload = read_file(dir / kPayload);
        const std::size_t per = out.dim * out.dim;
        if (payload.size() != count * per * 8 || sha256_hex(std::string_view(payload)) != m.at("payload_sha256"))
            fail(ErrorKind::CorruptData, "corpus payload does not match its manifest checksum");
        const auto& labels = m.at("labels");
        const auto& windows = m.at("windows");
        if (labels.size() != count || windows.size() != count)
            fail(ErrorKind::CorruptData, "corpus manifest arrays do not match count");

        const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
        for (std::size_t k = 0; k < count; ++k) {
            Matrix a(out.dim, out.dim);
            for (std::size_t e = 0; e < per; ++e) a.data()[e] = read_f64le(bytes + (k * per + e) * 8);
            const auto& w = windows[k];
            out.items.push_back({CorrelationMatrix(SymmetricMatrix(std::move(a))),
                                 parse_regime(labels[k].get<std::string>()),
                                 WindowMeta{w.at("start").get<std::size_t>(), w.at("length").get<std::size_t>(),
                                            w.at("ew_return").get<double>(), w.at("repaired").get<bool>()}});
        }
        return out;
    } catch (const json::exception& e) {
        fail(ErrorKind::CorruptData, std::string("corpus manifest: ") + e.what());
    }
}

}  // namespace ecorr::corpus
