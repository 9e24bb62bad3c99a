#include "cw/clustering.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "cw/errors.hpp"
#include "cw/log.hpp"
#include "cw/util.hpp"

namespace cw {

using nlohmann::json;

EmbeddingMatrix EmbeddingMatrix::from_rows(const std::vector<std::vector<double>>& rows,
                                           std::vector<std::string> doc_ids) {
    EmbeddingMatrix m;
    m.n = rows.size();
    m.d = rows.empty() ? 0 : rows[0].size();
    m.data.reserve(m.n * m.d);
    for (const auto& row : rows) {
        if (row.size() != m.d) throw Error("embedding rows differ in dimension");
        m.data.insert(m.data.end(), row.begin(), row.end());
    }
    m.doc_ids = std::move(doc_ids);
    return m;
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        sum += diff * diff;
    }
    return sum;
}

// Data-derived point order: distance from the data mean descending, then
// lexicographic row content, then row index. Seeding walks this order, which
// makes the whole algorithm invariant under row permutation (identical rows
// are interchangeable).
std::vector<std::size_t> canonical_order(const EmbeddingMatrix& m) {
    std::vector<double> mean(m.d, 0.0);
    for (std::size_t i = 0; i < m.n; ++i) {
        auto row = m.row(i);
        for (std::size_t j = 0; j < m.d; ++j) mean[j] += row[j];
    }
    for (double& v : mean) v /= static_cast<double>(m.n);

    std::vector<double> dist(m.n);
    for (std::size_t i = 0; i < m.n; ++i) {
        dist[i] = sq_dist(m.row(i), {mean.data(), mean.size()});
    }

    std::vector<std::size_t> order(m.n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dist[a] != dist[b]) return dist[a] > dist[b];
        auto ra = m.row(a);
        auto rb = m.row(b);
        if (auto cmp = std::lexicographical_compare_three_way(ra.begin(), ra.end(), rb.begin(),
                                                              rb.end());
            cmp != 0) {
            return cmp < 0;
        }
        return a < b;
    });
    return order;
}

// Farthest-point seeding: the given point leads, each next centroid maximizes
// the distance to the nearest chosen one, ties to the earlier canonical
// position.
std::vector<double> seed_centroids(const EmbeddingMatrix& m, std::size_t k,
                                   std::size_t first_point,
                                   const std::vector<std::size_t>& canon) {
    std::vector<std::size_t> chosen{first_point};
    std::vector<bool> is_chosen(m.n, false);
    is_chosen[first_point] = true;
    std::vector<double> min_d(m.n);
    for (std::size_t i = 0; i < m.n; ++i) min_d[i] = sq_dist(m.row(i), m.row(first_point));

    while (chosen.size() < k) {
        std::size_t best = m.n;
        double best_d = -1.0;
        for (std::size_t pos = 0; pos < m.n; ++pos) {
            std::size_t i = canon[pos];
            if (is_chosen[i]) continue;
            if (min_d[i] > best_d) {
                best_d = min_d[i];
                best = i;
            }
        }
        chosen.push_back(best);
        is_chosen[best] = true;
        for (std::size_t i = 0; i < m.n; ++i) {
            min_d[i] = std::min(min_d[i], sq_dist(m.row(i), m.row(best)));
        }
    }

    std::vector<double> centroids(k * m.d);
    for (std::size_t j = 0; j < k; ++j) {
        auto row = m.row(chosen[j]);
        std::copy(row.begin(), row.end(), centroids.begin() + j * m.d);
    }
    return centroids;
}

struct LloydOutcome {
    std::vector<int> labels;
    std::vector<double> centroids;
    double inertia = 0.0;
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
};

LloydOutcome run_lloyd(const EmbeddingMatrix& m, std::size_t k, std::vector<double> centroids,
                       const std::vector<std::size_t>& canon) {
    const std::size_t d = m.d;
    std::vector<int> labels(m.n, 0);
    std::vector<std::size_t> counts(k, 0);
    LloydOutcome out;

    auto centroid = [&](std::size_t j) {
        return std::span<const double>{centroids.data() + j * d, d};
    };

    for (int iter = 0; iter < 300; ++iter) {
        // Assignment; nearest centroid, ties to the lower index.
        double inertia = 0.0;
        std::fill(counts.begin(), counts.end(), std::size_t{0});
        for (std::size_t i = 0; i < m.n; ++i) {
            double best_d = std::numeric_limits<double>::infinity();
            int best_j = 0;
            for (std::size_t j = 0; j < k; ++j) {
                double dist = sq_dist(m.row(i), centroid(j));
                if (dist < best_d) {
                    best_d = dist;
                    best_j = static_cast<int>(j);
                }
            }
            labels[i] = best_j;
            counts[best_j] += 1;
            inertia += best_d;
        }
        out.trace.push_back(inertia);

        // Reseed each empty cluster with the point farthest from its current
        // centroid, taken from a cluster that can spare one.
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) continue;
            std::size_t donor = m.n;
            double donor_d = -1.0;
            for (std::size_t pos = 0; pos < m.n; ++pos) {
                std::size_t i = canon[pos];
                if (counts[labels[i]] < 2) continue;
                double dist = sq_dist(m.row(i), centroid(static_cast<std::size_t>(labels[i])));
                if (dist > donor_d) {
                    donor_d = dist;
                    donor = i;
                }
            }
            if (donor == m.n) break; // nothing can donate; leave empty
            counts[labels[donor]] -= 1;
            labels[donor] = static_cast<int>(j);
            counts[j] = 1;
        }

        // Update step; means of the assigned points.
        std::vector<double> next(k * d, 0.0);
        for (std::size_t i = 0; i < m.n; ++i) {
            auto row = m.row(i);
            double* c = next.data() + static_cast<std::size_t>(labels[i]) * d;
            for (std::size_t x = 0; x < d; ++x) c[x] += row[x];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) {
                std::copy(centroids.begin() + j * d, centroids.begin() + (j + 1) * d,
                          next.begin() + j * d);
                continue;
            }
            double inv = 1.0 / static_cast<double>(counts[j]);
            for (std::size_t x = 0; x < d; ++x) next[j * d + x] *= inv;
        }

        double shift_sq = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            shift_sq = std::max(shift_sq, sq_dist(centroid(j), {next.data() + j * d, d}));
        }
        centroids = std::move(next);
        out.iterations = iter + 1;
        if (std::sqrt(shift_sq) < 1e-6) {
            out.converged = true;
            break;
        }
    }

    // Report the partition with its own means, so inertia is exactly the
    // within-cluster sum of squares of what we return.
    double inertia = 0.0;
    for (std::size_t i = 0; i < m.n; ++i) {
        inertia += sq_dist(m.row(i), centroid(static_cast<std::size_t>(labels[i])));
    }
    out.labels = std::move(labels);
    out.centroids = std::move(centroids);
    out.inertia = inertia;
    return out;
}

// Number of k-subsets of n points, saturating at cap + 1.
std::size_t subset_count(std::size_t n, std::size_t k, std::size_t cap) {
    double count = 1.0;
    for (std::size_t i = 1; i <= k; ++i) {
        count = count * static_cast<double>(n - k + i) / static_cast<double>(i);
        if (count > static_cast<double>(cap)) return cap + 1;
    }
    return static_cast<std::size_t>(count + 0.5);
}

} // namespace

ClusterAssignment kmeans(const EmbeddingMatrix& matrix, std::size_t k, std::uint64_t seed) {
    if (k < 1 || k > matrix.n) {
        throw InvalidK("k=" + std::to_string(k) + " outside [1, " + std::to_string(matrix.n) +
                       "]");
    }
    std::vector<std::size_t> canon = canonical_order(matrix);

    constexpr std::size_t kSubsetCap = 600;
    LloydOutcome best;
    bool have_best = false;
    auto consider = [&](LloydOutcome outcome) {
        if (!have_best || outcome.inertia < best.inertia) {
            best = std::move(outcome);
            have_best = true;
        }
    };

    if (matrix.n <= 16 && subset_count(matrix.n, k, kSubsetCap) <= kSubsetCap) {
        // Small instance: every k-subset of points serves as a starting set,
        // enumerated over canonical positions so the result is permutation
        // invariant and independent of the seed.
        std::vector<std::size_t> pos(k);
        std::iota(pos.begin(), pos.end(), std::size_t{0});
        while (true) {
            std::vector<double> centroids(k * matrix.d);
            for (std::size_t j = 0; j < k; ++j) {
                auto row = matrix.row(canon[pos[j]]);
                std::copy(row.begin(), row.end(), centroids.begin() + j * matrix.d);
            }
            consider(run_lloyd(matrix, k, std::move(centroids), canon));

            std::size_t i = k;
            while (i > 0 && pos[i - 1] == matrix.n - k + i - 1) --i;
            if (i == 0) break;
            ++pos[i - 1];
            for (std::size_t j = i; j < k; ++j) pos[j] = pos[j - 1] + 1;
        }
    } else {
        std::size_t restarts = matrix.n <= 16 ? matrix.n : 10;
        for (std::size_t r = 0; r < restarts; ++r) {
            std::size_t first = canon[(seed + r) % matrix.n];
            consider(run_lloyd(matrix, k, seed_centroids(matrix, k, first, canon), canon));
        }
    }

    ClusterAssignment result;
    result.labels = std::move(best.labels);
    result.centroids = std::move(best.centroids);
    result.k = k;
    result.d = matrix.d;
    result.inertia = best.inertia;
    result.inertia_trace = std::move(best.trace);
    result.iterations = best.iterations;
    result.converged = best.converged;
    return result;
}

double silhouette(const EmbeddingMatrix& matrix, const std::vector<int>& labels,
                  std::optional<std::size_t> sample_size, std::uint64_t seed) {
    const std::size_t n = matrix.n;
    if (labels.size() != n) throw Error("silhouette: labels do not align to rows");

    int max_label = -1;
    for (int l : labels) {
        if (l < 0) throw Error("silhouette: negative label");
        max_label = std::max(max_label, l);
    }
    std::size_t k = static_cast<std::size_t>(max_label) + 1;
    std::vector<std::size_t> counts(k, 0);
    for (int l : labels) counts[static_cast<std::size_t>(l)] += 1;
    if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
        throw SingleCluster("silhouette needs at least two clusters");
    }

    std::vector<std::size_t> points;
    if (!sample_size || *sample_size >= n) {
        points.resize(n);
        std::iota(points.begin(), points.end(), std::size_t{0});
    } else {
        std::mt19937_64 rng(seed);
        points = util::sample_without_replacement(rng, n, *sample_size);
    }

    double total = 0.0;
    std::vector<double> dist_sum(k);
    for (std::size_t i : points) {
        std::size_t own = static_cast<std::size_t>(labels[i]);
        if (counts[own] == 1) continue; // singleton: s = 0
        std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            dist_sum[static_cast<std::size_t>(labels[j])] +=
                std::sqrt(sq_dist(matrix.row(i), matrix.row(j)));
        }
        double a = dist_sum[own] / static_cast<double>(counts[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == own || counts[c] == 0) continue;
            b = std::min(b, dist_sum[c] / static_cast<double>(counts[c]));
        }
        double denom = std::max(a, b);
        total += denom == 0.0 ? 0.0 : (b - a) / denom;
    }
    return total / static_cast<double>(points.size());
}

KSelection select_optimal_k(const EmbeddingMatrix& matrix, std::size_t k_min, std::size_t k_max,
                            std::uint64_t seed, std::optional<std::size_t> silhouette_sample,
                            std::size_t workers) {
    KSelection sel;
    if (matrix.n <= 2) {
        sel.k_star = 1;
        sel.best = kmeans(matrix, 1, seed);
        sel.degenerate = true;
        return sel;
    }
    if (k_min < 2) throw InvalidK("k_min must be at least 2");
    std::size_t k_hi = std::min(k_max, matrix.n - 1);
    if (k_min > k_hi) {
        throw InvalidK("empty k range [" + std::to_string(k_min) + ", " + std::to_string(k_hi) +
                       "]");
    }

    std::size_t count = k_hi - k_min + 1;
    std::vector<double> scores(count);
    std::vector<ClusterAssignment> runs(count);
    util::parallel_for(count, std::max<std::size_t>(1, workers), [&](std::size_t idx) {
        std::size_t k = k_min + idx;
        std::string tag = "k=" + std::to_string(k);
        runs[idx] = kmeans(matrix, k, util::split_seed(seed, "kmeans/" + tag));
        scores[idx] = silhouette(matrix, runs[idx].labels, silhouette_sample,
                                 util::split_seed(seed, "silhouette/" + tag));
    });

    std::size_t best_idx = 0;
    for (std::size_t idx = 1; idx < count; ++idx) {
        if (scores[idx] > scores[best_idx]) best_idx = idx;
    }
    sel.k_star = k_min + best_idx;
    for (std::size_t idx = 0; idx < count; ++idx) sel.scores.emplace_back(k_min + idx, scores[idx]);
    sel.best = std::move(runs[best_idx]);
    return sel;
}

ClusterRun cluster_corpus(const CorpusSnapshot& snapshot, Gateway& gateway,
                          const ClusteringConfig& config) {
    if (snapshot.documents.empty()) throw EmptyCorpus("cannot cluster an empty corpus");

    std::vector<std::string> texts;
    std::vector<std::string> doc_ids;
    texts.reserve(snapshot.documents.size());
    for (const auto& doc : snapshot.documents) {
        texts.push_back(doc.title + "\n" + doc.text);
        doc_ids.push_back(doc.doc_id);
    }
    auto vectors = gateway.embed(texts);

    EmbeddingMatrix matrix;
    matrix.n = vectors.size();
    matrix.d = vectors[0].dim();
    matrix.doc_ids = doc_ids;
    matrix.data.reserve(matrix.n * matrix.d);
    for (const auto& v : vectors) matrix.data.insert(matrix.data.end(), v.values.begin(), v.values.end());

    ClusterRun run;
    run.doc_ids = std::move(doc_ids);
    run.seed = config.seed;

    if (matrix.n < 4) {
        log::warn("corpus of {} documents is too small to cluster; using one cluster",
                  matrix.n);
        run.labels.assign(matrix.n, 0);
        run.k_star = 1;
        run.degenerate = true;
    } else {
        KSelection sel = select_optimal_k(matrix, config.k_min, config.k_max, config.seed,
                                          config.silhouette_sample, config.workers);
        run.labels = sel.best.labels;
        run.k_star = sel.k_star;
        run.scores = std::move(sel.scores);
        run.degenerate = sel.degenerate;
    }

    run.clusters.resize(run.k_star);
    for (std::size_t j = 0; j < run.k_star; ++j) {
        run.clusters[j].cluster_id = static_cast<int>(j);
    }
    for (std::size_t i = 0; i < run.doc_ids.size(); ++i) {
        run.clusters[static_cast<std::size_t>(run.labels[i])].doc_ids.push_back(run.doc_ids[i]);
    }
    return run;
}

void save_cluster_run(const ClusterRun& run, const std::filesystem::path& path) {
    json doc;
    doc["k_star"] = run.k_star;
    doc["seed"] = run.seed;
    doc["degenerate"] = run.degenerate;
    json table = json::array();
    for (const auto& [k, score] : run.scores) {
        table.push_back({{"k", k}, {"silhouette", score}});
    }
    doc["silhouette_by_k"] = table;
    json assignments = json::array();
    for (std::size_t i = 0; i < run.doc_ids.size(); ++i) {
        assignments.push_back({{"doc_id", run.doc_ids[i]}, {"cluster", run.labels[i]}});
    }
    doc["assignments"] = assignments;
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    util::atomic_write_file(path, doc.dump(2) + "\n");
}

ClusterRun load_cluster_run(const std::filesystem::path& path) {
    json doc = json::parse(util::read_file(path));
    ClusterRun run;
    run.k_star = doc.at("k_star").get<std::size_t>();
    run.seed = doc.at("seed").get<std::uint64_t>();
    run.degenerate = doc.at("degenerate").get<bool>();
    for (const auto& row : doc.at("silhouette_by_k")) {
        run.scores.emplace_back(row.at("k").get<std::size_t>(),
                                row.at("silhouette").get<double>());
    }
    for (const auto& row : doc.at("assignments")) {
        run.doc_ids.push_back(row.at("doc_id").get<std::string>());
        run.labels.push_back(row.at("cluster").get<int>());
    }
    run.clusters.resize(run.k_star);
    for (std::size_t j = 0; j < run.k_star; ++j) {
        run.clusters[j].cluster_id = static_cast<int>(j);
    }
    for (std::size_t i = 0; i < run.doc_ids.size(); ++i) {
        run.clusters[static_cast<std::size_t>(run.labels[i])].doc_ids.push_back(run.doc_ids[i]);
    }
    return run;
}

} // namespace cw
