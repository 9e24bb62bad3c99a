#pragma once

// Reference implementations written independently of the library code, used
// to check the optimized versions against first principles. Everything here
// favors directness over speed.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cw/clustering.hpp"

namespace oracle {

inline double point_dist(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(sum);
}

// Rousseeuw's silhouette, directly from the definition: for each point i,
// a(i) is the mean distance to the other members of its cluster, b(i) the
// smallest mean distance to any other cluster, s(i) = (b-a)/max(a,b), with
// s(i) = 0 for singletons. Returns the mean over all points.
inline double silhouette(const cw::EmbeddingMatrix& m, const std::vector<int>& labels) {
    std::size_t n = m.n;
    if (labels.size() != n) throw std::invalid_argument("labels/matrix mismatch");
    int k = 0;
    for (int label : labels) k = std::max(k, label + 1);

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sum[static_cast<std::size_t>(labels[j])] += point_dist(m.row(i), m.row(j));
            ++count[static_cast<std::size_t>(labels[j])];
        }
        std::size_t own = static_cast<std::size_t>(labels[i]);
        if (count[own] == 0) continue; // singleton contributes 0
        double a = sum[own] / static_cast<double>(count[own]);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
            if (c == own || count[c] == 0) continue;
            b = std::min(b, sum[c] / static_cast<double>(count[c]));
        }
        double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

// Sum of squared distances from each point to the mean of its part.
inline double partition_inertia(const cw::EmbeddingMatrix& m, const std::vector<int>& labels,
                                std::size_t k) {
    std::vector<double> mean(k * m.d, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < m.n; ++i) {
        auto row = m.row(i);
        std::size_t label = static_cast<std::size_t>(labels[i]);
        ++count[label];
        for (std::size_t c = 0; c < m.d; ++c) mean[label * m.d + c] += row[c];
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (count[j] == 0) return std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < m.d; ++c) mean[j * m.d + c] /= static_cast<double>(count[j]);
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < m.n; ++i) {
        auto row = m.row(i);
        std::size_t label = static_cast<std::size_t>(labels[i]);
        for (std::size_t c = 0; c < m.d; ++c) {
            double diff = row[c] - mean[label * m.d + c];
            inertia += diff * diff;
        }
    }
    return inertia;
}

// Global k-means optimum by exhaustive enumeration of all partitions of n
// points into exactly k non-empty parts, generated as restricted growth
// strings. Only feasible for small n.
inline double best_partition_inertia(const cw::EmbeddingMatrix& m, std::size_t k) {
    if (m.n == 0 || k == 0 || k > m.n) throw std::invalid_argument("bad enumeration input");
    if (m.n > 14) throw std::invalid_argument("enumeration limited to small n");
    std::vector<int> labels(m.n, 0);
    double best = std::numeric_limits<double>::infinity();

    // rec(i, mx): labels[0..i) fixed, mx is the largest label used so far.
    auto rec = [&](auto&& self, std::size_t i, int mx) -> void {
        if (i == m.n) {
            if (static_cast<std::size_t>(mx) + 1 == k) {
                best = std::min(best, partition_inertia(m, labels, k));
            }
            return;
        }
        int limit = std::min(mx + 1, static_cast<int>(k) - 1);
        for (int j = 0; j <= limit; ++j) {
            labels[i] = j;
            self(self, i + 1, std::max(mx, j));
        }
    };
    rec(rec, 0, -1);
    return best;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace oracle
