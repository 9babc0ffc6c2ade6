#include "ecorr/facts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "ecorr/linalg.hpp"

namespace ecorr::facts {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> off_diagonal(const CorrelationMatrix& c) {
    std::vector<double> v;
    v.reserve(triangle_size(c.dim()));
    for (std::size_t i = 0; i < c.dim(); ++i)
        for (std::size_t j = i + 1; j < c.dim(); ++j) v.push_back(c(i, j));
    return v;
}

struct Moments {
    double mean = 0.0;
    double sd = 0.0;
    double skew = 0.0;
};

Moments moments(std::span<const double> x) {
    Moments m;
    const double n = static_cast<double>(x.size());
    for (double v : x) m.mean += v;
    m.mean /= n;
    double m2 = 0.0, m3 = 0.0;
    for (double v : x) {
        const double d = v - m.mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m.sd = std::sqrt(m2);
    m.skew = m2 > 1e-300 ? m3 / std::pow(m2, 1.5) : 0.0;
    return m;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    const auto mx = moments(x), my = moments(y);
    if (mx.sd <= 1e-15 || my.sd <= 1e-15) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - mx.mean) * (y[k] - my.mean);
    return s / (static_cast<double>(x.size()) * mx.sd * my.sd);
}

struct TopEigen {
    std::vector<double> values;  // ascending
    std::vector<double> vector;  // unit norm, sign fixed to a non-negative sum
    bool degenerate = false;
};

TopEigen top_eigen(const CorrelationMatrix& c) {
    const auto es = eigh(c.symmetric());
    const std::size_t n = c.dim();
    TopEigen t;
    t.values = es.values;
    t.vector.resize(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        t.vector[i] = es.vectors(i, n - 1);
        sum += t.vector[i];
    }
    if (sum < 0.0)
        for (auto& v : t.vector) v = -v;
    t.degenerate = es.values[n - 1] - es.values[n - 2] <= 1e-10 * std::max(1.0, es.values[n - 1]);
    return t;
}

std::vector<int> mst_degrees(const std::vector<Edge>& edges, std::size_t n) {
    std::vector<int> deg(n, 0);
    for (const auto& e : edges) {
        ++deg[e.i];
        ++deg[e.j];
    }
    return deg;
}

}  // namespace

Matrix correlation_distance(const CorrelationMatrix& c) {
    const std::size_t n = c.dim();
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            d(i, j) = i == j ? 0.0 : std::sqrt(std::max(0.0, 2.0 * (1.0 - c(i, j))));
    return d;
}

Dendrogram average_linkage(const Matrix& distance) {
    const std::size_t n = distance.rows();
    require(n >= 2 && distance.square(), ErrorKind::InvalidInput, "average_linkage: need a square matrix, n >= 2");
    Dendrogram dg;
    dg.leaves = n;

    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), 0);
    std::vector<std::size_t> sizes(2 * n - 1, 1);
    std::vector<std::vector<double>> dist(2 * n - 1, std::vector<double>(2 * n - 1, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) dist[i][j] = distance(i, j);

    for (std::size_t step = 0; step + 1 < n; ++step) {
        std::size_t best_a = 0, best_b = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t x = 0; x < active.size(); ++x)
            for (std::size_t y = x + 1; y < active.size(); ++y) {
                const double d = dist[active[x]][active[y]];
                if (d < best) {
                    best = d;
                    best_a = x;
                    best_b = y;
                }
            }
        const std::size_t a = active[best_a], b = active[best_b];
        const std::size_t id = n + step;
        sizes[id] = sizes[a] + sizes[b];
        for (std::size_t k : active) {
            if (k == a || k == b) continue;
            const double d = (static_cast<double>(sizes[a]) * dist[a][k] + static_cast<double>(sizes[b]) * dist[b][k]) /
                             static_cast<double>(sizes[id]);
            dist[id][k] = dist[k][id] = d;
        }
        dg.merges.push_back({a, b, best, sizes[id]});
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_a));
        active.push_back(id);
    }

    // Depth-first leaf order from the root.
    std::vector<std::size_t> stack{2 * n - 2};
    while (!stack.empty()) {
        const std::size_t id = stack.back();
        stack.pop_back();
        if (id < n) {
            dg.leaf_order.push_back(id);
            continue;
        }
        const auto& m = dg.merges[id - n];
        stack.push_back(m.right);
        stack.push_back(m.left);
    }
    return dg;
}

Matrix cophenetic_matrix(const Dendrogram& dg) {
    const std::size_t n = dg.leaves;
    Matrix coph(n, n);
    std::vector<std::vector<std::size_t>> members(2 * n - 1);
    for (std::size_t i = 0; i < n; ++i) members[i] = {i};
    for (std::size_t k = 0; k < dg.merges.size(); ++k) {
        const auto& m = dg.merges[k];
        for (std::size_t i : members[m.left])
            for (std::size_t j : members[m.right]) coph(i, j) = coph(j, i) = m.height;
        auto& joined = members[n + k];
        joined = members[m.left];
        joined.insert(joined.end(), members[m.right].begin(), members[m.right].end());
    }
    return coph;
}

double cophenetic_correlation(const Matrix& distance, const Dendrogram& dg) {
    const Matrix coph = cophenetic_matrix(dg);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < dg.leaves; ++i)
        for (std::size_t j = i + 1; j < dg.leaves; ++j) {
            x.push_back(distance(i, j));
            y.push_back(coph(i, j));
        }
    return pearson(x, y);
}

std::vector<Edge> mst(const CorrelationMatrix& c) {
    const std::size_t n = c.dim();
    const Matrix d = correlation_distance(c);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) edges.push_back({i, j, d(i, j)});
    std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.weight < b.weight; });

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<Edge> tree;
    for (const auto& e : edges) {
        const std::size_t ri = find(e.i), rj = find(e.j);
        if (ri == rj) continue;
        parent[std::max(ri, rj)] = std::min(ri, rj);
        tree.push_back(e);
        if (tree.size() + 1 == n) break;
    }
    return tree;
}

MarchenkoPastur mp_bounds(double q) {
    require(q > 0.0, ErrorKind::InvalidInput, "Marchenko-Pastur ratio must be positive");
    const double r = std::sqrt(q);
    return {(1.0 - r) * (1.0 - r), (1.0 + r) * (1.0 + r)};
}

double degree_tail_exponent(std::span<const int> degrees) {
    std::map<int, int> counts;
    for (int d : degrees) ++counts[d];
    std::vector<std::pair<double, double>> pts;
    const double n = static_cast<double>(degrees.size());
    for (auto [k, cnt] : counts)
        if (k >= 2) pts.emplace_back(std::log(k), std::log(cnt / n));
    if (pts.size() < 2 && counts.count(1)) pts.emplace_back(0.0, std::log(counts[1] / n));
    if (pts.size() < 2) return 0.0;
    double mx = 0.0, my = 0.0;
    for (auto [x, y] : pts) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxy = 0.0, sxx = 0.0;
    for (auto [x, y] : pts) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    return sxx > 0.0 ? -sxy / sxx : 0.0;
}

StylizedFactReport stylized_report(const CorrelationMatrix& c, double q_ratio) {
    const std::size_t n = c.dim();
    StylizedFactReport r;
    const auto off = off_diagonal(c);
    const auto m = moments(off);
    r.sf1_mean_offdiag = m.mean;
    r.sf1_skew = m.skew;

    const auto top = top_eigen(c);
    r.eigenvalues = top.values;
    const double dim = static_cast<double>(n);
    r.sf2_top_eig_share = top.values.back() / dim;
    r.sf2_mp_bounds = mp_bounds(q_ratio);
    std::size_t outliers = 0;
    for (std::size_t k = 0; k + 1 < n; ++k)
        if (top.values[k] > r.sf2_mp_bounds.lambda_plus) ++outliers;
    r.sf3_outlier_eig_fraction = static_cast<double>(outliers) / dim;

    std::size_t pos = 0, neg = 0;
    for (double v : top.vector) {
        if (v > 0.0) ++pos;
        else if (v < 0.0) ++neg;
    }
    r.sf4_first_evec_sign_consistency = static_cast<double>(std::max(pos, neg)) / dim;
    r.sf4_degenerate = top.degenerate;

    if (n < 4) {
        r.insufficient_dimension = true;
        r.sf5_cophenetic_coeff = kNaN;
        r.sf6_mst_degree_tail_exponent = kNaN;
        r.sf6_max_degree = 0;
        return r;
    }
    const Matrix d = correlation_distance(c);
    r.sf5_cophenetic_coeff = cophenetic_correlation(d, average_linkage(d));
    const auto deg = mst_degrees(mst(c), n);
    r.sf6_mst_degree_tail_exponent = degree_tail_exponent(deg);
    r.sf6_max_degree = *std::max_element(deg.begin(), deg.end());
    return r;
}

Clustering k_medoids(const Matrix& d, std::size_t k) {
    const std::size_t n = d.rows();
    require(k >= 1 && k <= n, ErrorKind::InvalidInput, "k_medoids: need 1 <= k <= n");
    std::vector<std::size_t> med;
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

    // BUILD
    {
        std::size_t best = 0;
        double best_cost = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += d(i, j);
            if (s < best_cost) {
                best_cost = s;
                best = i;
            }
        }
        med.push_back(best);
        for (std::size_t j = 0; j < n; ++j) nearest[j] = d(best, j);
    }
    while (med.size() < k) {
        std::size_t best = n;
        double best_gain = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (std::find(med.begin(), med.end(), i) != med.end()) continue;
            double gain = 0.0;
            for (std::size_t j = 0; j < n; ++j) gain += std::max(0.0, nearest[j] - d(i, j));
            if (gain > best_gain) {
                best_gain = gain;
                best = i;
            }
        }
        med.push_back(best);
        for (std::size_t j = 0; j < n; ++j) nearest[j] = std::min(nearest[j], d(best, j));
    }

    auto total_cost = [&](const std::vector<std::size_t>& m) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t x : m) best = std::min(best, d(x, j));
            s += best;
        }
        return s;
    };

    // SWAP
    double cost = total_cost(med);
    for (int iter = 0; iter < 100; ++iter) {
        double best_cost = cost;
        std::size_t best_slot = k, best_point = n;
        for (std::size_t slot = 0; slot < k; ++slot)
            for (std::size_t o = 0; o < n; ++o) {
                if (std::find(med.begin(), med.end(), o) != med.end()) continue;
                auto trial = med;
                trial[slot] = o;
                const double c = total_cost(trial);
                if (c < best_cost - 1e-12) {
                    best_cost = c;
                    best_slot = slot;
                    best_point = o;
                }
            }
        if (best_slot == k) break;
        med[best_slot] = best_point;
        cost = best_cost;
    }

    Clustering out;
    std::sort(med.begin(), med.end());
    out.medoids = med;
    out.assignment.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t arg = 0;
        for (std::size_t x = 1; x < k; ++x)
            if (d(med[x], j) < d(med[arg], j)) arg = x;
        out.assignment[j] = arg;
    }
    return out;
}

double mean_silhouette(const Matrix& d, const std::vector<std::size_t>& assignment) {
    const std::size_t n = d.rows();
    const std::size_t k = *std::max_element(assignment.begin(), assignment.end()) + 1;
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : assignment) ++sizes[a];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = assignment[i];
        if (sizes[own] <= 1) continue;
        std::vector<double> sum(k, 0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) sum[assignment[j]] += d(i, j);
        const double a = sum[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c)
            if (c != own && sizes[c] > 0) b = std::min(b, sum[c] / static_cast<double>(sizes[c]));
        const double denom = std::max(a, b);
        if (std::isfinite(b) && denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

FeatureVector feature_vector(const CorrelationMatrix& c) {
    const std::size_t n = c.dim();
    require(n >= 4, ErrorKind::InsufficientDimension, "feature_vector: dim >= 4 required");
    const auto off = off_diagonal(c);
    if (std::all_of(off.begin(), off.end(), [](double v) { return v >= 1.0 - 1e-12; }))
        fail(ErrorKind::DegenerateStructure, "feature_vector: all columns are identical");

    FeatureVector f;
    const auto m = moments(off);
    f.values[0] = m.mean;
    f.values[1] = m.sd;

    const auto top = top_eigen(c);
    const double dim = static_cast<double>(n);
    f.values[2] = top.values.back() / dim;
    const auto next = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.05 * dim)));
    double tail = 0.0;
    for (std::size_t k = 0; k < next && k + 1 < n; ++k) tail += top.values[n - 2 - k];
    f.values[3] = tail / dim;

    f.evec1_degenerate = top.degenerate;
    if (!top.degenerate) {
        std::vector<double> scaled(n);
        for (std::size_t i = 0; i < n; ++i) scaled[i] = top.vector[i] * std::sqrt(dim);
        f.values[4] = moments(scaled).sd;
    }

    const Matrix d = correlation_distance(c);
    f.values[5] = cophenetic_correlation(d, average_linkage(d));

    double best_sil = -1.0;
    for (std::size_t k = 2; k <= std::min<std::size_t>(6, n - 1); ++k) {
        const double s = mean_silhouette(d, k_medoids(d, k).assignment);
        if (s > best_sil) best_sil = s;
    }
    f.values[6] = best_sil;

    const auto deg = mst_degrees(mst(c), n);
    f.values[7] = degree_tail_exponent(deg);
    return f;
}

}  // namespace ecorr::facts
