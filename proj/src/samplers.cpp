#include "ecorr/samplers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <vector>

#include "ecorr/linalg.hpp"

namespace ecorr {

std::string to_string(RegimeLabel r) {
    switch (r) {
        case RegimeLabel::Stressed: return "stressed";
        case RegimeLabel::Normal: return "normal";
        case RegimeLabel::Rally: return "rally";
    }
    return "unknown";
}

RegimeLabel parse_regime(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "stressed") return RegimeLabel::Stressed;
    if (lower == "normal") return RegimeLabel::Normal;
    if (lower == "rally") return RegimeLabel::Rally;
    fail(ErrorKind::InvalidInput, "unknown regime '" + name + "'");
}

}  // namespace ecorr

namespace ecorr::samplers {

namespace {

SymmetricMatrix with_unit_diagonal(Matrix m) {
    for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) = 1.0;
    return SymmetricMatrix::symmetrized(m);
}

/// Q factor of a Gaussian matrix by modified Gram-Schmidt (Haar distributed).
Matrix haar_orthogonal(std::size_t n, Rng& rng) {
    Matrix q(n, n);
    for (auto& v : q.data()) v = rng.normal();
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += q(i, k) * q(i, j);
            for (std::size_t i = 0; i < n; ++i) q(i, j) -= dot * q(i, k);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
    }
    return q;
}

/// Contiguous blocks with at least two members each.
std::vector<std::size_t> block_sizes(std::size_t total, std::size_t blocks, Rng& rng) {
    blocks = std::max<std::size_t>(1, std::min(blocks, total / 2));
    std::vector<std::size_t> sizes(blocks, 2);
    for (std::size_t extra = total - 2 * blocks; extra > 0; --extra) ++sizes[rng.index(blocks)];
    return sizes;
}

/// Splits [begin, end) recursively; appends one group id per asset per level.
void assign_levels(std::size_t begin, std::size_t end, int level, int depth, Rng& rng,
                   std::vector<std::vector<int>>& groups, int& next_group) {
    if (level >= depth) return;
    const int gid = next_group++;
    for (std::size_t i = begin; i < end; ++i) groups[i][level] = gid;
    const std::size_t size = end - begin;
    if (size >= 4) {
        const std::size_t cut = begin + 2 + rng.index(size - 3);
        assign_levels(begin, cut, level + 1, depth, rng, groups, next_group);
        assign_levels(cut, end, level + 1, depth, rng, groups, next_group);
    }
}

SymmetricMatrix sample_correlation(const SymmetricMatrix& population, std::size_t observations, Rng& rng) {
    const std::size_t n = population.dim();
    const Matrix l = cholesky(population);
    std::vector<double> mean(n, 0.0);
    Matrix cross(n, n);
    std::vector<double> z(n), x(n);
    for (std::size_t t = 0; t < observations; ++t) {
        for (auto& v : z) v = rng.normal();
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k <= i; ++k) s += l(i, k) * z[k];
            x[i] = s;
        }
        for (std::size_t i = 0; i < n; ++i) {
            mean[i] += x[i];
            for (std::size_t j = 0; j <= i; ++j) cross(i, j) += x[i] * x[j];
        }
    }
    const double tn = static_cast<double>(observations);
    for (auto& m : mean) m /= tn;
    SymmetricMatrix cov(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) cov.set(i, j, cross(i, j) / tn - mean[i] * mean[j]);
    auto c = covariance_to_correlation(cov);
    for (std::size_t i = 0; i < n; ++i) c.set(i, i, 1.0);
    return c;
}

}  // namespace

void RegimeParams::check() const {
    require(beta_lo > 0.0 && beta_hi < 1.0 && beta_lo < beta_hi, ErrorKind::InvalidInput,
            "regime params: need 0 < beta_lo < beta_hi < 1");
    require(n_clusters >= 1, ErrorKind::InvalidInput, "regime params: n_clusters >= 1");
    require(intra_boost >= 0.0, ErrorKind::InvalidInput, "regime params: intra_boost >= 0");
    require(noise_scale >= 0.0 && noise_scale < 1.0, ErrorKind::InvalidInput, "regime params: noise_scale in [0, 1)");
    require(hierarchy_depth >= 1, ErrorKind::InvalidInput, "regime params: hierarchy_depth >= 1");
}

RegimeParams RegimeParams::defaults(RegimeLabel regime) {
    switch (regime) {
        case RegimeLabel::Stressed: return {0.6, 0.8, 2, 0.2, 0.06, 1};
        case RegimeLabel::Normal: return {0.3, 0.5, 5, 0.6, 0.06, 2};
        case RegimeLabel::Rally: return {0.2, 0.4, 5, 0.55, 0.06, 3};
    }
    return {};
}

CorrelationMatrix sample_onion(std::size_t dim, double eta, Seed seed) {
    require(dim >= 2, ErrorKind::InvalidInput, "onion: dim >= 2");
    require(eta > 0.0, ErrorKind::InvalidInput, "onion: eta > 0");
    Rng rng(seed);
    double beta = eta + (static_cast<double>(dim) - 2.0) / 2.0;
    Matrix c = Matrix::identity(dim);
    const double r12 = 2.0 * rng.beta(beta, beta) - 1.0;
    c(0, 1) = c(1, 0) = r12;
    for (std::size_t k = 2; k < dim; ++k) {
        beta -= 0.5;
        const double y = rng.beta(static_cast<double>(k) / 2.0, beta);
        auto u = rng.unit_vector(k);
        Matrix block(k, k);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) block(i, j) = c(i, j);
        const Matrix a = cholesky(SymmetricMatrix(block));
        for (auto& e : u) e *= std::sqrt(y);
        const auto z = a * std::span<const double>(u);
        for (std::size_t i = 0; i < k; ++i) c(i, k) = c(k, i) = z[i];
    }
    return CorrelationMatrix(with_unit_diagonal(std::move(c)));
}

CorrelationMatrix sample_cvine(std::size_t dim, double beta_a, double beta_b, Seed seed) {
    require(dim >= 2, ErrorKind::InvalidInput, "cvine: dim >= 2");
    require(beta_a > 0.0 && beta_b > 0.0, ErrorKind::InvalidInput, "cvine: beta parameters > 0");
    Rng rng(seed);
    Matrix partial(dim, dim);
    Matrix c = Matrix::identity(dim);
    for (std::size_t k = 0; k + 1 < dim; ++k) {
        for (std::size_t i = k + 1; i < dim; ++i) {
            partial(k, i) = 2.0 * rng.beta(beta_a, beta_b) - 1.0;
            double p = partial(k, i);
            for (std::size_t l = k; l-- > 0;)
                p = p * std::sqrt((1.0 - partial(l, i) * partial(l, i)) * (1.0 - partial(l, k) * partial(l, k))) +
                    partial(l, i) * partial(l, k);
            c(k, i) = c(i, k) = p;
        }
    }
    return CorrelationMatrix(with_unit_diagonal(std::move(c)));
}

CorrelationMatrix sample_with_spectrum(std::span<const double> eigenvalues, Seed seed) {
    const std::size_t n = eigenvalues.size();
    require(n >= 2, ErrorKind::InvalidInput, "spectrum: need at least two eigenvalues");
    for (double l : eigenvalues) require(l >= 0.0 && std::isfinite(l), ErrorKind::InvalidInput, "spectrum: eigenvalues must be >= 0");
    const double trace = std::accumulate(eigenvalues.begin(), eigenvalues.end(), 0.0);
    require(std::abs(trace - static_cast<double>(n)) <= 1e-10, ErrorKind::InvalidInput,
            "spectrum: eigenvalues must sum to the dimension");

    Rng rng(seed);
    const Matrix q = haar_orthogonal(n, rng);
    Matrix a = q * Matrix::diagonal(eigenvalues) * q.transposed();
    a = SymmetricMatrix::symmetrized(a).matrix();

    for (std::size_t guard = 0; guard < 10 * n; ++guard) {
        // Pivot pair: the entry furthest below 1 and the entry furthest above 1.
        std::size_t lo = 0, hi = 0;
        for (std::size_t k = 1; k < n; ++k) {
            if (a(k, k) < a(lo, lo)) lo = k;
            if (a(k, k) > a(hi, hi)) hi = k;
        }
        if (std::max(1.0 - a(lo, lo), a(hi, hi) - 1.0) <= 1e-12) break;
        const std::size_t i = lo, j = hi;
        const double aii = a(i, i), ajj = a(j, j), aij = a(i, j);
        const double disc = std::sqrt(std::max(0.0, aij * aij - (aii - 1.0) * (ajj - 1.0)));
        const double t = (aij + (aij >= 0.0 ? disc : -disc)) / (ajj - 1.0);
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < n; ++k) {
            const double aki = a(k, i), akj = a(k, j);
            a(k, i) = c * aki - s * akj;
            a(k, j) = s * aki + c * akj;
        }
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a(i, k), ajk = a(j, k);
            a(i, k) = c * aik - s * ajk;
            a(j, k) = s * aik + c * ajk;
        }
    }
    return CorrelationMatrix(with_unit_diagonal(std::move(a)));
}

CorrelationMatrix sample_one_factor(std::size_t dim, double lo, double hi, Seed seed) {
    require(dim >= 2, ErrorKind::InvalidInput, "one-factor: dim >= 2");
    require(lo > 0.0 && hi < 1.0 && lo <= hi, ErrorKind::InvalidInput, "one-factor: need 0 < lo <= hi < 1");
    Rng rng(seed);
    std::vector<double> beta(dim);
    for (auto& b : beta) b = lo == hi ? lo : rng.uniform(lo, hi);
    SymmetricMatrix c(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        c.set(i, i, 1.0);
        for (std::size_t j = i + 1; j < dim; ++j) c.set(i, j, beta[i] * beta[j]);
    }
    return CorrelationMatrix(std::move(c));
}

CorrelationMatrix sample_regime(RegimeLabel regime, std::size_t dim, const RegimeParams& params, Seed seed) {
    require(dim >= 4, ErrorKind::InvalidInput, "regime: dim >= 4");
    params.check();
    // Regime enters the stream so that equal seeds give unrelated draws across regimes.
    Rng rng(derive(seed, 0x5245474D45ULL + static_cast<std::uint64_t>(regime)));

    const int depth = params.hierarchy_depth;
    std::vector<std::vector<int>> groups(dim, std::vector<int>(depth, -1));
    int next_group = 0;
    std::size_t begin = 0;
    for (std::size_t size : block_sizes(dim, static_cast<std::size_t>(params.n_clusters), rng)) {
        assign_levels(begin, begin + size, 0, depth, rng, groups, next_group);
        begin += size;
    }

    // Loadings: column 0 is the market, then one column per group.
    const std::size_t factors = 1 + static_cast<std::size_t>(next_group);
    Matrix loadings(dim, factors);
    for (std::size_t i = 0; i < dim; ++i) {
        const double beta = rng.uniform(params.beta_lo, params.beta_hi);
        loadings(i, 0) = beta;
        double cluster_var = 0.0;
        for (int level = 0; level < depth; ++level) {
            if (groups[i][level] < 0) continue;
            const double g = params.intra_boost * std::pow(0.75, level) * rng.uniform(0.7, 1.0);
            loadings(i, 1 + static_cast<std::size_t>(groups[i][level])) = g;
            cluster_var += g * g;
        }
        const double budget = 0.97 - beta * beta;
        if (cluster_var > budget) {
            const double scale = std::sqrt(budget / cluster_var);
            for (std::size_t f = 1; f < factors; ++f) loadings(i, f) *= scale;
        }
    }

    SymmetricMatrix population(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        population.set(i, i, 1.0);
        for (std::size_t j = i + 1; j < dim; ++j) {
            double s = 0.0;
            for (std::size_t f = 0; f < factors; ++f) s += loadings(i, f) * loadings(j, f);
            population.set(i, j, s);
        }
    }
    if (params.noise_scale == 0.0) return CorrelationMatrix(std::move(population));

    const auto observations = std::max<std::size_t>(
        dim + 2, static_cast<std::size_t>(std::ceil(1.0 / (params.noise_scale * params.noise_scale))));
    return CorrelationMatrix(sample_correlation(population, observations, rng));
}

Method parse_method(const std::string& name) {
    if (name == "onion") return Method::Onion;
    if (name == "cvine") return Method::CVine;
    if (name == "spectrum") return Method::Spectrum;
    if (name == "factor") return Method::Factor;
    if (name == "regime") return Method::Regime;
    fail(ErrorKind::InvalidInput, "unknown sampling method '" + name + "'");
}

}  // namespace ecorr::samplers
