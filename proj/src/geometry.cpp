#include "ecorr/geometry.hpp"

#include <cmath>
#include <limits>

namespace ecorr::geometry {

namespace {

constexpr int kConstrainedMaxIter = 500;
constexpr double kConstrainedGradTol = 1e-9;
constexpr int kGridPoints = 400;

struct SqrtPair {
    SymmetricMatrix root;
    SymmetricMatrix inv_root;
};

SqrtPair sqrt_pair(const SymmetricMatrix& a) {
    const auto es = eigh(a);
    if (!(es.values.front() > 0.0)) fail(ErrorKind::NotPositiveDefinite, "matrix function needs a PD argument");
    return {apply_spectral(es, [](double l) { return std::sqrt(l); }),
            apply_spectral(es, [](double l) { return 1.0 / std::sqrt(l); })};
}

double squared_log_norm(const SymmetricMatrix& m) {
    const auto es = eigh(m);
    double s = 0.0;
    for (double l : es.values) {
        if (!(l > 0.0)) return std::numeric_limits<double>::infinity();
        s += std::log(l) * std::log(l);
    }
    return s;
}

SymmetricMatrix average(std::span<const SymmetricMatrix> set) {
    SymmetricMatrix out(set.front().dim(), 0.0);
    const std::size_t n = out.dim();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (const auto& m : set) s += m(i, j);
            out.set(i, j, s / static_cast<double>(set.size()));
        }
    return out;
}

struct Jittered {
    std::vector<CovarianceMatrix> set;
    double jitter = 0.0;
};

Jittered jitter_if_singular(std::span<const CorrelationMatrix> set) {
    double min_eig = std::numeric_limits<double>::infinity();
    for (const auto& c : set) min_eig = std::min(min_eig, eigh(c.symmetric()).values.front());
    Jittered out;
    if (min_eig < kSingularThreshold) out.jitter = kSingularThreshold - std::min(min_eig, 0.0);
    for (const auto& c : set) {
        SymmetricMatrix s = c.symmetric();
        for (std::size_t i = 0; i < s.dim(); ++i) s.set(i, i, s(i, i) + out.jitter);
        out.set.emplace_back(std::move(s));
    }
    return out;
}

SymmetricMatrix correlation_2x2(double rho) {
    SymmetricMatrix c = SymmetricMatrix::identity(2);
    c.set(0, 1, rho);
    return c;
}

/// Euclidean gradient of sum_i d^2(C, X_i):
/// 2 X^{-1/2} M^{-1} log(M) X^{-1/2}, M = X^{-1/2} C X^{-1/2}.
Matrix frechet_gradient(const SymmetricMatrix& c, std::span<const SqrtPair> targets) {
    Matrix g(c.dim(), c.dim());
    for (const auto& t : targets) {
        const auto m = congruence(t.inv_root, c);
        const auto f = apply_spectral(m, [](double l) { return std::log(l) / l; });
        g += congruence(t.inv_root, f).matrix() * 2.0;
    }
    return g;
}

struct ConstrainedResult {
    SymmetricMatrix matrix;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    bool best_effort = false;
    double gradient_norm = 0.0;
};

/// Minimizes the summed squared distance to `targets` over the elliptope.
ConstrainedResult constrained_minimize(std::span<const CovarianceMatrix> targets, const SymmetricMatrix& start) {
    const std::size_t n = start.dim();
    ConstrainedResult r;
    r.matrix = start;
    r.objective = frechet_objective(start, targets);

    if (n == 2) {
        // Coarse scan then golden-section refinement on the bracketing cell.
        auto f = [&](double rho) { return frechet_objective(correlation_2x2(rho), targets); };
        const double h = 2.0 / kGridPoints;
        int best_k = 0;
        double best_f = std::numeric_limits<double>::infinity();
        for (int k = 0; k < kGridPoints; ++k) {
            const double v = f(-1.0 + (k + 0.5) * h);
            if (v < best_f) {
                best_f = v;
                best_k = k;
            }
        }
        double lo = std::max(-1.0 + 1e-15, -1.0 + (best_k - 0.5) * h);
        double hi = std::min(1.0 - 1e-15, -1.0 + (best_k + 1.5) * h);
        const double g = (std::sqrt(5.0) - 1.0) / 2.0;
        double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
        double f1 = f(x1), f2 = f(x2);
        int it = 0;
        while (hi - lo > 1e-13 && it < 200) {
            ++it;
            if (f1 < f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        const double rho = 0.5 * (lo + hi);
        const double v = f(rho);
        r.iterations = it;
        r.converged = true;
        if (v <= r.objective) {
            r.matrix = correlation_2x2(rho);
            r.objective = v;
        }
        return r;
    }

    std::vector<SqrtPair> roots;
    roots.reserve(targets.size());
    for (const auto& t : targets) roots.push_back(sqrt_pair(t.symmetric()));

    double step = 0.1;
    for (int it = 1; it <= kConstrainedMaxIter; ++it) {
        r.iterations = it;
        Matrix g = frechet_gradient(r.matrix, roots);
        for (std::size_t i = 0; i < n; ++i) g(i, i) = 0.0;
        const double gnorm = frobenius_norm(g);
        r.gradient_norm = gnorm;
        if (gnorm <= kConstrainedGradTol * std::max(1.0, r.objective)) {
            r.converged = true;
            return r;
        }
        bool accepted = false;
        step = std::min(step * 2.0, 1.0);
        for (int halving = 0; halving < 50 && !accepted; ++halving, step *= 0.5) {
            SymmetricMatrix trial = SymmetricMatrix::symmetrized(r.matrix.matrix() - g * step);
            if (!try_cholesky(trial) || eigh(trial).values.front() < kSingularThreshold) {
                try {
                    trial = nearest_correlation(trial).matrix.symmetric();
                } catch (const ConvergenceFailure&) {
                    continue;
                }
            }
            const double v = frechet_objective(trial, targets);
            if (std::isfinite(v) && v <= r.objective - 1e-4 * step * gnorm * gnorm) {
                r.matrix = std::move(trial);
                r.objective = v;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            r.best_effort = true;
            return r;
        }
    }
    r.best_effort = true;
    return r;
}

MeanResult finish(MeanMethod method, SymmetricMatrix m, std::span<const CovarianceMatrix> set, double jitter) {
    MeanResult r;
    r.method = method;
    r.objective = frechet_objective(m, set);
    r.matrix = std::move(m);
    r.jitter = jitter;
    return r;
}

}  // namespace

std::string to_string(MeanMethod m) {
    switch (m) {
        case MeanMethod::M1_Euclidean: return "M1_Euclidean";
        case MeanMethod::M2_RiemannianBarycenter: return "M2_RiemannianBarycenter";
        case MeanMethod::M3_NormalizedBarycenter: return "M3_NormalizedBarycenter";
        case MeanMethod::M4_ConstrainedFrechet: return "M4_ConstrainedFrechet";
        case MeanMethod::M5_RiemannianProjection: return "M5_RiemannianProjection";
    }
    return "unknown";
}

MeanMethod parse_mean_method(const std::string& name) {
    if (name == "M1" || name == "euclidean" || name == "M1_Euclidean") return MeanMethod::M1_Euclidean;
    if (name == "M2" || name == "karcher" || name == "M2_RiemannianBarycenter") return MeanMethod::M2_RiemannianBarycenter;
    if (name == "M3" || name == "normalized" || name == "M3_NormalizedBarycenter") return MeanMethod::M3_NormalizedBarycenter;
    if (name == "M4" || name == "constrained" || name == "M4_ConstrainedFrechet") return MeanMethod::M4_ConstrainedFrechet;
    if (name == "M5" || name == "projection" || name == "M5_RiemannianProjection") return MeanMethod::M5_RiemannianProjection;
    fail(ErrorKind::InvalidInput, "unknown mean method '" + name + "'");
}

double airm_distance(const CovarianceMatrix& a, const CovarianceMatrix& b) {
    require(a.dim() == b.dim(), ErrorKind::InvalidInput, "airm_distance: dimension mismatch");
    if (a.symmetric() == b.symmetric()) return 0.0;
    const auto roots = sqrt_pair(a.symmetric());
    return std::sqrt(squared_log_norm(congruence(roots.inv_root, b.symmetric())));
}

GeodesicPoint geodesic(const CovarianceMatrix& a, const CovarianceMatrix& b, double t) {
    require(a.dim() == b.dim(), ErrorKind::InvalidInput, "geodesic: dimension mismatch");
    require(t >= 0.0 && t <= 1.0, ErrorKind::InvalidInput, "geodesic: t must lie in [0, 1]");
    if (t == 0.0) return {t, a};
    if (t == 1.0) return {t, b};
    const auto roots = sqrt_pair(a.symmetric());
    const auto inner = congruence(roots.inv_root, b.symmetric());
    const auto powered = apply_spectral(inner, [t](double l) { return std::pow(l, t); });
    return {t, CovarianceMatrix(congruence(roots.root, powered))};
}

double frechet_objective(const SymmetricMatrix& c, std::span<const CovarianceMatrix> targets) {
    const auto ce = eigh(c);
    if (!(ce.values.front() > 0.0)) return std::numeric_limits<double>::infinity();
    const auto inv_root = apply_spectral(ce, [](double l) { return 1.0 / std::sqrt(l); });
    double s = 0.0;
    for (const auto& t : targets) s += squared_log_norm(congruence(inv_root, t.symmetric()));
    return s;
}

MeanResult karcher_mean(std::span<const CovarianceMatrix> set) {
    require(!set.empty(), ErrorKind::InvalidInput, "karcher_mean: empty set");
    std::vector<SymmetricMatrix> plain;
    for (const auto& c : set) plain.push_back(c.symmetric());
    SymmetricMatrix x = average(plain);

    MeanResult r;
    r.method = MeanMethod::M2_RiemannianBarycenter;
    r.converged = false;
    double fx = frechet_objective(x, set);
    for (int it = 1; it <= kKarcherMaxIter; ++it) {
        r.iterations = it;
        const auto roots = sqrt_pair(x);
        Matrix g(x.dim(), x.dim());
        for (const auto& c : set)
            g += apply_spectral(congruence(roots.inv_root, c.symmetric()), [](double l) { return std::log(l); })
                     .matrix();
        g *= 1.0 / static_cast<double>(set.size());
        r.gradient_norm = frobenius_norm(g);
        if (r.gradient_norm <= kKarcherTol) {
            r.converged = true;
            break;
        }
        const auto tangent = SymmetricMatrix::symmetrized(g);
        const auto tangent_es = eigh(tangent);
        double step = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
            const auto candidate =
                congruence(roots.root, apply_spectral(tangent_es, [step](double l) { return std::exp(step * l); }));
            const double fc = frechet_objective(candidate, set);
            if (fc <= fx) {
                x = candidate;
                fx = fc;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // Objective is flat to rounding; the gradient test is as good as it gets.
            r.converged = r.gradient_norm <= 1e3 * kKarcherTol;
            break;
        }
    }
    if (!r.converged)
        throw ConvergenceFailure("karcher_mean: no convergence within iteration cap", x, r.gradient_norm);
    r.matrix = std::move(x);
    r.objective = fx;
    return r;
}

MeanResult mean(MeanMethod method, std::span<const CorrelationMatrix> set) {
    require(!set.empty(), ErrorKind::InvalidInput, "mean: empty set");
    const std::size_t n = set.front().dim();
    for (const auto& c : set) require(c.dim() == n, ErrorKind::InvalidInput, "mean: dimension mismatch");

    if (method == MeanMethod::M1_Euclidean) {
        std::vector<SymmetricMatrix> plain;
        for (const auto& c : set) plain.push_back(c.symmetric());
        auto m = average(plain);
        MeanResult r;
        r.method = method;
        r.matrix = std::move(m);
        std::vector<CovarianceMatrix> cov;
        bool pd = true;
        for (const auto& c : set) {
            if (!try_cholesky(c.symmetric())) pd = false;
            else cov.emplace_back(c.symmetric());
        }
        r.objective = pd ? frechet_objective(r.matrix, cov) : std::numeric_limits<double>::quiet_NaN();
        return r;
    }

    const auto jittered = jitter_if_singular(set);
    const auto& cov = jittered.set;
    MeanResult karcher = karcher_mean(cov);
    karcher.jitter = jittered.jitter;
    if (method == MeanMethod::M2_RiemannianBarycenter) return karcher;

    const SymmetricMatrix m3 = covariance_to_correlation(karcher.matrix);
    if (method == MeanMethod::M3_NormalizedBarycenter) {
        MeanResult r = finish(method, m3, cov, jittered.jitter);
        r.iterations = karcher.iterations;
        return r;
    }

    ConstrainedResult cr;
    if (method == MeanMethod::M4_ConstrainedFrechet) {
        cr = constrained_minimize(cov, m3);
    } else {
        const CovarianceMatrix star(karcher.matrix);
        cr = constrained_minimize(std::span(&star, 1), m3);
    }
    MeanResult r = finish(method, cr.matrix, cov, jittered.jitter);
    r.iterations = cr.iterations;
    r.converged = cr.converged;
    r.best_effort = cr.best_effort;
    r.gradient_norm = cr.gradient_norm;
    return r;
}

}  // namespace ecorr::geometry
