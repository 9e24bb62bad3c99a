#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cw/clustering.hpp"
#include "cw/gateway.hpp"

namespace cw {

struct LeafSummary {
    std::string doc_id;
    std::string text;        // non-empty, within the leaf budget
    std::size_t token_count = 0;
};

struct ClusterSummary {
    int cluster_id = 0;
    std::string text;
    std::vector<std::string> source_leaf_ids; // the cluster's full doc list
};

struct SummarizerConfig {
    std::size_t leaf_budget_tokens = 300;
    std::size_t cluster_budget_tokens = 800;
    // A summarization call whose material exceeds this is split map-reduce
    // style: documents into chunks, clusters into leaf batches.
    std::size_t max_input_tokens = 6000;
};

// Leaf summary for one document. Oversized documents are chunked, each chunk
// summarized, and the chunk summaries reduced in one extra call. Summaries
// over budget are truncated with a trailing ellipsis and a warning.
LeafSummary summarize_document(const Document& doc, Gateway& gateway,
                               const SummarizerConfig& config);

// Root summary over the cluster's leaves, concatenated in doc_id order. When
// the concatenation exceeds the input cap, leaves are reduced in batches
// first (one extra tree level). Throws MissingLeaf when a cluster document
// has no leaf summary.
ClusterSummary summarize_cluster(const KnowledgeCluster& cluster,
                                 const std::vector<LeafSummary>& leaves,
                                 const std::string& topic, Gateway& gateway,
                                 const SummarizerConfig& config);

struct SummarySet {
    std::vector<LeafSummary> leaves;             // snapshot document order
    std::vector<ClusterSummary> cluster_summaries; // cluster_id order
};

// Every document gets exactly one leaf, every cluster exactly one root.
SummarySet summarize_corpus(const CorpusSnapshot& snapshot,
                            const std::vector<KnowledgeCluster>& clusters, Gateway& gateway,
                            const SummarizerConfig& config);

void save_summaries(const SummarySet& summaries, const std::filesystem::path& path);
SummarySet load_summaries(const std::filesystem::path& path);

} // namespace cw
