#include "cw/summarizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>

#include "cw/errors.hpp"
#include "cw/log.hpp"
#include "cw/util.hpp"

namespace cw {

using nlohmann::json;

namespace {

// Shrink to the budget under the gateway's token counter, marking the cut.
std::string enforce_budget(std::string text, std::size_t budget, Gateway& gateway,
                           const std::string& what) {
    if (gateway.count_tokens(text) <= budget) return text;
    log::warn("{} exceeds its budget of {} tokens; truncating", what, budget);
    std::size_t bytes = budget * 4;
    std::string cut = util::utf8_truncate(text, bytes);
    while (!cut.empty() && gateway.count_tokens(cut + "…") > budget) {
        bytes = bytes > 32 ? bytes - 32 : 0;
        cut = util::utf8_truncate(cut, bytes);
    }
    return cut + "…";
}

// Near-even split into ceil(tokens / cap) pieces at UTF-8-safe boundaries.
std::vector<std::string> chunk_text(const std::string& text, std::size_t cap_tokens,
                                    Gateway& gateway) {
    std::size_t total = gateway.count_tokens(text);
    std::size_t pieces = (total + cap_tokens - 1) / cap_tokens;
    if (pieces <= 1) return {text};
    std::size_t target_bytes = (text.size() + pieces - 1) / pieces;
    std::vector<std::string> chunks;
    std::string_view rest = text;
    while (!rest.empty()) {
        std::string chunk = util::utf8_truncate(rest, target_bytes);
        if (chunk.empty()) break; // defensive: malformed leading bytes
        rest.remove_prefix(chunk.size());
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

std::string summarize_call(Gateway& gateway, const std::string& title, const std::string& text,
                           std::size_t budget) {
    ChatRequest request{TemplateId::summarize,
                        {{"title", title},
                         {"text", text},
                         {"budget", std::to_string(budget)}}};
    return util::trim(gateway.complete(request));
}

} // namespace

LeafSummary summarize_document(const Document& doc, Gateway& gateway,
                               const SummarizerConfig& config) {
    if (doc.text.empty()) throw Error("cannot summarize empty document " + doc.doc_id);

    std::string summary;
    if (gateway.count_tokens(doc.text) <= config.max_input_tokens) {
        summary = summarize_call(gateway, doc.title, doc.text, config.leaf_budget_tokens);
    } else {
        auto chunks = chunk_text(doc.text, config.max_input_tokens, gateway);
        log::info("document {} split into {} chunks for summarization", doc.doc_id,
                  chunks.size());
        std::string concatenated;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            std::string part = summarize_call(gateway, doc.title, chunks[i],
                                              config.leaf_budget_tokens);
            if (!concatenated.empty()) concatenated += "\n";
            concatenated += part;
        }
        summary = summarize_call(gateway, doc.title, concatenated, config.leaf_budget_tokens);
    }

    if (summary.empty()) {
        log::warn("empty summary for {}; falling back to the document head", doc.doc_id);
        summary = util::utf8_truncate(doc.text, config.leaf_budget_tokens * 4);
    }
    summary = enforce_budget(std::move(summary), config.leaf_budget_tokens, gateway,
                             "leaf summary of " + doc.doc_id);
    return LeafSummary{doc.doc_id, summary, gateway.count_tokens(summary)};
}

namespace {

std::string leaves_block(const std::vector<const LeafSummary*>& leaves) {
    std::string block;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        block += std::to_string(i + 1) + ". " + leaves[i]->text + "\n";
    }
    return block;
}

std::string reduce_call(Gateway& gateway, const std::string& topic, const std::string& block,
                        std::size_t budget) {
    ChatRequest request{TemplateId::cluster_summarize,
                        {{"topic", topic},
                         {"summaries", block},
                         {"budget", std::to_string(budget)}}};
    return util::trim(gateway.complete(request));
}

} // namespace

ClusterSummary summarize_cluster(const KnowledgeCluster& cluster,
                                 const std::vector<LeafSummary>& leaves,
                                 const std::string& topic, Gateway& gateway,
                                 const SummarizerConfig& config) {
    std::map<std::string, const LeafSummary*> by_id;
    for (const auto& leaf : leaves) by_id[leaf.doc_id] = &leaf;

    // doc_id ascending fixes the concatenation order.
    std::vector<std::string> ordered_ids = cluster.doc_ids;
    std::sort(ordered_ids.begin(), ordered_ids.end());
    std::vector<const LeafSummary*> members;
    for (const auto& doc_id : ordered_ids) {
        auto it = by_id.find(doc_id);
        if (it == by_id.end()) throw MissingLeaf(doc_id);
        members.push_back(it->second);
    }
    if (members.empty()) throw Error("cluster " + std::to_string(cluster.cluster_id) +
                                     " has no documents");

    std::size_t total_tokens = 0;
    for (const auto* leaf : members) total_tokens += leaf->token_count;

    std::string text;
    if (total_tokens <= config.max_input_tokens || members.size() == 1) {
        text = reduce_call(gateway, topic, leaves_block(members),
                           config.cluster_budget_tokens);
    } else {
        // One extra tree level: greedy batches of whole leaves, then a final
        // reduce over the batch summaries.
        std::vector<std::string> batch_summaries;
        std::vector<const LeafSummary*> batch;
        std::size_t batch_tokens = 0;
        auto flush = [&]() {
            if (batch.empty()) return;
            batch_summaries.push_back(reduce_call(gateway, topic, leaves_block(batch),
                                                  config.cluster_budget_tokens));
            batch.clear();
            batch_tokens = 0;
        };
        for (const auto* leaf : members) {
            if (!batch.empty() && batch_tokens + leaf->token_count > config.max_input_tokens) {
                flush();
            }
            batch.push_back(leaf);
            batch_tokens += leaf->token_count;
        }
        flush();
        log::info("cluster {} reduced in {} batches", cluster.cluster_id,
                  batch_summaries.size());

        std::string block;
        for (std::size_t i = 0; i < batch_summaries.size(); ++i) {
            block += std::to_string(i + 1) + ". " + batch_summaries[i] + "\n";
        }
        text = reduce_call(gateway, topic, block, config.cluster_budget_tokens);
    }

    if (text.empty()) {
        log::warn("empty summary for cluster {}; falling back to the first leaf",
                  cluster.cluster_id);
        text = members.front()->text;
    }
    text = enforce_budget(std::move(text), config.cluster_budget_tokens, gateway,
                          "summary of cluster " + std::to_string(cluster.cluster_id));
    return ClusterSummary{cluster.cluster_id, text, cluster.doc_ids};
}

SummarySet summarize_corpus(const CorpusSnapshot& snapshot,
                            const std::vector<KnowledgeCluster>& clusters, Gateway& gateway,
                            const SummarizerConfig& config) {
    SummarySet out;
    out.leaves.resize(snapshot.documents.size());
    util::parallel_for(snapshot.documents.size(), gateway.concurrency(), [&](std::size_t i) {
        out.leaves[i] = summarize_document(snapshot.documents[i], gateway, config);
    });

    out.cluster_summaries.resize(clusters.size());
    util::parallel_for(clusters.size(), gateway.concurrency(), [&](std::size_t j) {
        out.cluster_summaries[j] =
            summarize_cluster(clusters[j], out.leaves, snapshot.topic, gateway, config);
    });
    return out;
}

void save_summaries(const SummarySet& summaries, const std::filesystem::path& path) {
    json doc;
    json leaves = json::array();
    for (const auto& leaf : summaries.leaves) {
        leaves.push_back({{"doc_id", leaf.doc_id},
                          {"text", leaf.text},
                          {"token_count", leaf.token_count}});
    }
    doc["leaves"] = leaves;
    json cluster_entries = json::array();
    for (const auto& cs : summaries.cluster_summaries) {
        cluster_entries.push_back({{"cluster_id", cs.cluster_id},
                                   {"text", cs.text},
                                   {"source_leaf_ids", cs.source_leaf_ids}});
    }
    doc["clusters"] = cluster_entries;
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    util::atomic_write_file(path, doc.dump(2) + "\n");
}

SummarySet load_summaries(const std::filesystem::path& path) {
    json doc = json::parse(util::read_file(path));
    SummarySet out;
    for (const auto& entry : doc.at("leaves")) {
        out.leaves.push_back(LeafSummary{entry.at("doc_id").get<std::string>(),
                                         entry.at("text").get<std::string>(),
                                         entry.at("token_count").get<std::size_t>()});
    }
    for (const auto& entry : doc.at("clusters")) {
        out.cluster_summaries.push_back(
            ClusterSummary{entry.at("cluster_id").get<int>(),
                           entry.at("text").get<std::string>(),
                           entry.at("source_leaf_ids").get<std::vector<std::string>>()});
    }
    return out;
}

} // namespace cw
