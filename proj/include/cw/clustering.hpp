#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cw/retrieval.hpp"

namespace cw {

// Row-major n x d matrix of document embeddings. doc_ids align to rows and
// may be empty for purely numeric uses.
struct EmbeddingMatrix {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> data;
    std::vector<std::string> doc_ids;

    std::span<const double> row(std::size_t i) const { return {data.data() + i * d, d}; }
    std::span<double> row(std::size_t i) { return {data.data() + i * d, d}; }

    static EmbeddingMatrix from_rows(const std::vector<std::vector<double>>& rows,
                                     std::vector<std::string> doc_ids = {});
};

struct ClusterAssignment {
    std::vector<int> labels;       // n entries, each in [0, k)
    std::vector<double> centroids; // k x d row-major; cluster mean rows
    std::size_t k = 0;
    std::size_t d = 0;
    double inertia = 0.0;
    // Inertia measured at each assignment step of the winning restart;
    // non-increasing by construction.
    std::vector<double> inertia_trace;
    int iterations = 0;
    bool converged = false;

    std::span<const double> centroid(std::size_t j) const { return {centroids.data() + j * d, d}; }
};

// Lloyd's algorithm with deterministic restarts, keeping the lowest-inertia
// result. Small instances (n <= 16 with few enough k-subsets) start once from
// every k-subset of points; otherwise farthest-point seeding runs with every
// point leading once when n <= 16 and ten leads otherwise. Deterministic for
// fixed (matrix, k, seed) and invariant under row permutation. Empty clusters
// are reseeded with the point farthest from its centroid. Throws InvalidK
// unless 1 <= k <= n.
ClusterAssignment kmeans(const EmbeddingMatrix& matrix, std::size_t k, std::uint64_t seed);

// Mean silhouette over all points, or over a uniform sample without
// replacement of min(sample_size, n) points; a(i)/b(i) always use all points.
// Singleton clusters contribute s = 0. Throws SingleCluster when labels hold
// fewer than two distinct values.
double silhouette(const EmbeddingMatrix& matrix, const std::vector<int>& labels,
                  std::optional<std::size_t> sample_size = std::nullopt, std::uint64_t seed = 0);

struct KSelection {
    std::size_t k_star = 1;
    // (k, mean silhouette) for every candidate k, ascending.
    std::vector<std::pair<std::size_t, double>> scores;
    ClusterAssignment best; // the kmeans result at k_star
    bool degenerate = false;
};

// Scores every k in [k_min, min(k_max, n-1)] and returns the silhouette
// argmax, ties to the smaller k. n <= 2 skips selection: k* = 1, degenerate.
KSelection select_optimal_k(const EmbeddingMatrix& matrix, std::size_t k_min, std::size_t k_max,
                            std::uint64_t seed,
                            std::optional<std::size_t> silhouette_sample = 512,
                            std::size_t workers = 1);

struct KnowledgeCluster {
    int cluster_id = 0;
    std::vector<std::string> doc_ids;
    std::string summary; // filled by the summarizer
};

struct ClusteringConfig {
    std::size_t k_min = 2;
    std::size_t k_max = 8;
    std::size_t silhouette_sample = 512;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct ClusterRun {
    std::vector<KnowledgeCluster> clusters; // ordered by cluster_id
    std::vector<std::string> doc_ids;       // snapshot order
    std::vector<int> labels;                // aligned to doc_ids
    std::size_t k_star = 1;
    std::vector<std::pair<std::size_t, double>> scores;
    bool degenerate = false;
    std::uint64_t seed = 0;
};

// Embeds the snapshot documents via the gateway, picks k*, and partitions the
// corpus. Corpora with fewer than 4 documents skip clustering and land in one
// cluster, flagged degenerate.
ClusterRun cluster_corpus(const CorpusSnapshot& snapshot, Gateway& gateway,
                          const ClusteringConfig& config);

void save_cluster_run(const ClusterRun& run, const std::filesystem::path& path);
ClusterRun load_cluster_run(const std::filesystem::path& path);

} // namespace cw
