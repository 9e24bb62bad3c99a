#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cw {

enum class DocSource { wikipedia, local };
enum class Relevance { unjudged, relevant, irrelevant };

// One retrieved knowledge-base unit with provenance. retrieval_round is 0
// until the document is admitted to a corpus (1 = first stage, 2 = expansion
// stage).
struct Document {
    std::string doc_id;
    std::string title;
    std::optional<std::string> url;
    std::string text;
    DocSource source = DocSource::local;
    int retrieval_round = 0;
    Relevance relevance = Relevance::unjudged;

    bool operator==(const Document&) const = default;
};

struct SearchQuery {
    std::string keyword;
    int max_results = 5;
};

const char* to_string(DocSource s);
const char* to_string(Relevance r);
DocSource doc_source_from_string(const std::string& s);
Relevance relevance_from_string(const std::string& s);

// Union of the batches keyed by doc_id. The first occurrence wins for every
// field except retrieval_round, which keeps the minimum round seen. Output
// order is first-seen order.
std::vector<Document> dedup_merge(const std::vector<std::vector<Document>>& batches);

// JSON Lines persistence: one object per line with doc_id, title, text,
// source, retrieval_round, relevance, and url when present.
std::string documents_to_jsonl(const std::vector<Document>& docs);
std::vector<Document> documents_from_jsonl(const std::string& jsonl);

} // namespace cw
