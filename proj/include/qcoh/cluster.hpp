#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "coherence.hpp"
#include "errors.hpp"
#include "parallel.hpp"

namespace qcoh {

/// Coherence values over a quantile sub-range, flattened frequency-major.
struct FeatureVector {
    std::string id;
    std::vector<double> values;
    std::vector<double> freqs;
    std::vector<double> quantiles; ///< levels retained by the slice
};

/// Keeps the quantile columns with lo <= alpha <= hi.
inline FeatureVector feature_vector(const CoherenceField& field, double lo, double hi, std::string id = {}) {
    if (!(lo < hi)) throw InputError("feature_vector: need lo < hi");
    constexpr double eps = 1e-9;
    FeatureVector f;
    f.id = std::move(id);
    f.freqs = field.freqs;
    std::vector<Eigen::Index> cols;
    for (std::size_t m = 0; m < field.n_quantiles(); ++m)
        if (field.quantiles[m] >= lo - eps && field.quantiles[m] <= hi + eps) {
            cols.push_back(static_cast<Eigen::Index>(m));
            f.quantiles.push_back(field.quantiles[m]);
        }
    if (cols.empty()) throw InputError("feature_vector: quantile range selects no levels");
    f.values.reserve(static_cast<std::size_t>(field.values.rows()) * cols.size());
    for (Eigen::Index l = 0; l < field.values.rows(); ++l)
        for (Eigen::Index m : cols) f.values.push_back(field.values(l, m));
    return f;
}

/// Feature vector from an ordinary coherence curve (a single column).
inline FeatureVector feature_vector(const CoherenceCurve& curve, std::string id = {}) {
    FeatureVector f;
    f.id = std::move(id);
    f.freqs = curve.freqs;
    f.values.assign(curve.values.data(), curve.values.data() + curve.values.size());
    return f;
}

/// Pairwise Euclidean distances.
inline Eigen::MatrixXd distance_matrix(std::span<const FeatureVector> features) {
    const std::size_t n = features.size();
    for (const auto& f : features)
        if (f.values.size() != features[0].values.size()) throw InputError("distance_matrix: feature lengths differ");
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < features[i].values.size(); ++c) {
                const double diff = features[i].values[c] - features[j].values[c];
                s += diff * diff;
            }
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::sqrt(s);
        }
    });
    d.triangularView<Eigen::StrictlyLower>() = d.transpose();
    return d;
}

inline Eigen::MatrixXd distance_matrix(const std::vector<FeatureVector>& features) {
    return distance_matrix(std::span<const FeatureVector>(features));
}

enum class Linkage { Ward, Complete, Average };

inline Linkage parse_linkage(std::string_view name) {
    if (name == "ward") return Linkage::Ward;
    if (name == "complete") return Linkage::Complete;
    if (name == "average") return Linkage::Average;
    throw ConfigError("unknown linkage '" + std::string(name) + "' (expected ward, complete, average)");
}

/// One agglomeration step. Items are 0..N-1; the cluster created by merge i is N + i.
struct Merge {
    int left = 0;
    int right = 0;
    double height = 0.0;
    int size = 0;
};

struct ClusterResult {
    int n_items = 0;
    std::vector<Merge> merges;

    /// Cluster labels 0..K-1 after undoing the last K-1 merges, numbered by
    /// first appearance in item order.
    std::vector<int> labels_at(int k) const {
        if (k < 1 || k > n_items) throw InputError("labels_at: K must lie in [1, number of items]");
        std::vector<int> parent(static_cast<std::size_t>(2 * n_items - 1));
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](int x) {
            while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
            return x;
        };
        for (int i = 0; i < n_items - k; ++i) {
            const int node = n_items + i;
            parent[static_cast<std::size_t>(find(merges[static_cast<std::size_t>(i)].left))] = node;
            parent[static_cast<std::size_t>(find(merges[static_cast<std::size_t>(i)].right))] = node;
        }
        std::map<int, int> label_of_root;
        std::vector<int> labels(static_cast<std::size_t>(n_items));
        for (int i = 0; i < n_items; ++i) {
            const int root = find(i);
            auto it = label_of_root.find(root);
            if (it == label_of_root.end()) it = label_of_root.emplace(root, static_cast<int>(label_of_root.size())).first;
            labels[static_cast<std::size_t>(i)] = it->second;
        }
        return labels;
    }
};

/**
 * Agglomerative clustering by Lance-Williams updates. Ward linkage works on
 * squared distances and reports heights on the distance scale (R's ward.D2).
 * Exact ties go to the pair with the smallest indices.
 */
inline ClusterResult hierarchical_cluster(const Eigen::MatrixXd& distances, Linkage linkage = Linkage::Ward) {
    const Eigen::Index n = distances.rows();
    if (n < 2 || distances.cols() != n) throw InputError("hierarchical_cluster: need a square matrix of at least 2 items");
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double v = distances(i, j);
            if (!std::isfinite(v) || v < 0.0 || std::abs(v - distances(j, i)) > 1e-12 * (1.0 + std::abs(v)))
                throw InputError("hierarchical_cluster: distances must be finite, nonnegative and symmetric");
        }

    Eigen::MatrixXd d = distances;
    if (linkage == Linkage::Ward) d = d.cwiseProduct(d);
    std::vector<int> node(static_cast<std::size_t>(n));
    std::vector<int> size(static_cast<std::size_t>(n), 1);
    std::vector<bool> active(static_cast<std::size_t>(n), true);
    std::iota(node.begin(), node.end(), 0);

    ClusterResult res;
    res.n_items = static_cast<int>(n);
    for (Eigen::Index step = 0; step + 1 < n; ++step) {
        Eigen::Index bi = -1, bj = -1;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!active[static_cast<std::size_t>(i)]) continue;
            for (Eigen::Index j = i + 1; j < n; ++j)
                if (active[static_cast<std::size_t>(j)] && d(i, j) < best) {
                    best = d(i, j);
                    bi = i;
                    bj = j;
                }
        }
        const double ni = size[static_cast<std::size_t>(bi)], nj = size[static_cast<std::size_t>(bj)];
        for (Eigen::Index x = 0; x < n; ++x) {
            if (!active[static_cast<std::size_t>(x)] || x == bi || x == bj) continue;
            const double nx = size[static_cast<std::size_t>(x)];
            double v = 0.0;
            switch (linkage) {
            case Linkage::Ward: v = ((ni + nx) * d(x, bi) + (nj + nx) * d(x, bj) - nx * best) / (ni + nj + nx); break;
            case Linkage::Complete: v = std::max(d(x, bi), d(x, bj)); break;
            case Linkage::Average: v = (ni * d(x, bi) + nj * d(x, bj)) / (ni + nj); break;
            }
            d(x, bi) = d(bi, x) = v;
        }
        const int a = node[static_cast<std::size_t>(bi)], b = node[static_cast<std::size_t>(bj)];
        const int merged = static_cast<int>(ni + nj);
        res.merges.push_back({std::min(a, b), std::max(a, b), linkage == Linkage::Ward ? std::sqrt(std::max(best, 0.0)) : best, merged});
        node[static_cast<std::size_t>(bi)] = static_cast<int>(n + step);
        size[static_cast<std::size_t>(bi)] = merged;
        active[static_cast<std::size_t>(bj)] = false;
    }
    return res;
}

/// Total within-cluster sum of squares for a partition.
inline double within_cluster_ss(std::span<const FeatureVector> features, const std::vector<int>& labels) {
    const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    const std::size_t dim = features.empty() ? 0 : features[0].values.size();
    std::vector<std::vector<double>> centroid(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < features.size(); ++i) {
        auto& c = centroid[static_cast<std::size_t>(labels[i])];
        for (std::size_t x = 0; x < dim; ++x) c[x] += features[i].values[x];
        ++count[static_cast<std::size_t>(labels[i])];
    }
    for (int g = 0; g < k; ++g)
        for (double& v : centroid[static_cast<std::size_t>(g)]) v /= count[static_cast<std::size_t>(g)];
    double wss = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto& c = centroid[static_cast<std::size_t>(labels[i])];
        for (std::size_t x = 0; x < dim; ++x) {
            const double diff = features[i].values[x] - c[x];
            wss += diff * diff;
        }
    }
    return wss;
}

/// WSS for K = 1..k_max; entry K-1.
inline std::vector<double> wss_curve(std::span<const FeatureVector> features, const ClusterResult& result, int k_max) {
    if (k_max < 1 || k_max > result.n_items) throw InputError("wss_curve: K_max must lie in [1, number of items]");
    if (static_cast<int>(features.size()) != result.n_items) throw InputError("wss_curve: feature count does not match the tree");
    std::vector<double> curve(static_cast<std::size_t>(k_max));
    for (int k = 1; k <= k_max; ++k) curve[static_cast<std::size_t>(k - 1)] = within_cluster_ss(features, result.labels_at(k));
    return curve;
}

inline std::vector<double> wss_curve(const std::vector<FeatureVector>& features, const ClusterResult& result, int k_max) {
    return wss_curve(std::span<const FeatureVector>(features), result, k_max);
}

/// K maximizing W(K-1) - 2W(K) + W(K+1) over interior K; ties go to the smallest K.
inline int elbow(const std::vector<double>& wss) {
    if (wss.size() < 3) throw InputError("elbow: need a WSS curve with at least 3 points");
    int best = 2;
    double best_val = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 2; k < wss.size(); ++k) {
        const double d2 = wss[k - 2] - 2.0 * wss[k - 1] + wss[k];
        if (d2 > best_val) {
            best_val = d2;
            best = static_cast<int>(k);
        }
    }
    return best;
}

/// Entrywise mean of the member features, reshaped to (freq x quantile-range).
inline CoherenceField centroid_field(std::span<const FeatureVector> members) {
    if (members.empty()) throw InputError("centroid_field: empty cluster");
    const FeatureVector& first = members[0];
    const std::size_t nf = first.freqs.size();
    const std::size_t nq = first.quantiles.empty() ? 1 : first.quantiles.size();
    if (first.values.size() != nf * nq) throw InputError("centroid_field: feature does not match its grid");
    CoherenceField out;
    out.freqs = first.freqs;
    out.quantiles = first.quantiles;
    out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(nq));
    for (const auto& f : members) {
        if (f.values.size() != first.values.size()) throw InputError("centroid_field: feature lengths differ");
        for (std::size_t l = 0; l < nf; ++l)
            for (std::size_t m = 0; m < nq; ++m)
                out.values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) += f.values[l * nq + m];
    }
    out.values /= static_cast<double>(members.size());
    out.values = out.values.cwiseMax(0.0).cwiseMin(1.0);
    return out;
}

/// OLS slope of stock returns on market returns.
inline double capm_beta(std::span<const double> stock, std::span<const double> market) {
    if (stock.size() != market.size()) throw InputError("capm_beta: series differ in length");
    if (stock.size() < 30) throw InputError("capm_beta: need at least 30 observations");
    for (std::size_t i = 0; i < stock.size(); ++i)
        if (!std::isfinite(stock[i]) || !std::isfinite(market[i])) throw InputError("capm_beta: non-finite returns");
    const double n = static_cast<double>(stock.size());
    const double ms = std::accumulate(stock.begin(), stock.end(), 0.0) / n;
    const double mm = std::accumulate(market.begin(), market.end(), 0.0) / n;
    double cov = 0.0, var = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < stock.size(); ++i) {
        cov += (stock[i] - ms) * (market[i] - mm);
        var += (market[i] - mm) * (market[i] - mm);
        scale += market[i] * market[i];
    }
    if (!(var > 1e-20 * scale) || !(var > 0.0)) throw NumericalError("capm_beta: market returns have zero variance");
    return cov / var;
}

/// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size() || a.empty()) throw InputError("adjusted_rand_index: labelings must be nonempty and equal length");
    if (a.size() == 1) return 1.0;
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ra[a[i]] += 1.0;
        rb[b[i]] += 1.0;
    }
    auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
    double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, c] : joint) sum_joint += pairs(c);
    for (const auto& [key, c] : ra) sum_a += pairs(c);
    for (const auto& [key, c] : rb) sum_b += pairs(c);
    const double total = pairs(static_cast<double>(a.size()));
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_joint - expected) / (max_index - expected);
}

} // namespace qcoh
