#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cw/document.hpp"
#include "cw/gateway.hpp"
#include "cw/knowledge_source.hpp"

namespace cw {

enum class KeywordOrigin { initial, expanded };

const char* to_string(KeywordOrigin origin);
KeywordOrigin keyword_origin_from_string(const std::string& s);

// One keyword batch. Expansion sets recorded per source document carry that
// document's id; the merged expansion set spans documents and carries none.
struct KeywordSet {
    std::vector<std::string> keywords; // ordered, unique under case folding
    KeywordOrigin origin = KeywordOrigin::initial;
    std::optional<std::string> parent_doc_id;
};

// The retrieved grounding corpus: every document passed the relevance filter.
// stage1_ids and stage2_ids are disjoint and together cover documents.
struct CorpusSnapshot {
    std::string topic;
    std::vector<Document> documents;
    std::vector<std::string> stage1_ids;
    std::vector<std::string> stage2_ids;
    std::vector<KeywordSet> keyword_log;
};

struct RetrievalConfig {
    int max_results_per_keyword = 5;
    // The relevance judge sees at most this many tokens of a document.
    std::size_t judge_excerpt_tokens = 1500;
    std::size_t max_keywords_per_doc = 5;
    std::size_t max_expanded_keywords = 40;
};

// Splits model output into keyword items on newlines, commas, and
// semicolons; strips numbering and bullets; drops empties, items longer
// than 80 characters or 8 words, and case-folded duplicates.
std::vector<std::string> parse_keyword_list(const std::string& text);

// Seed keywords for the topic. Re-asks once if nothing parses, then throws
// ParseFailure.
KeywordSet generate_initial_keywords(Gateway& gateway, const std::string& topic);

struct RelevancePartition {
    std::vector<Document> relevant;
    std::vector<Document> irrelevant;
};

// Judges every document once and records the verdict on it. Unparseable
// verdicts are re-asked once; still unparseable or erroring judgments mark
// the document irrelevant (fail-closed).
RelevancePartition filter_relevant(Gateway& gateway, const std::string& topic,
                                   std::vector<Document> docs, const RetrievalConfig& config);

// Union of per-document expansion keywords, deduplicated against themselves
// and against `prior` (case-folded). Per-document sets are appended to
// `per_doc_log` when given. A document whose expansion fails to parse is
// skipped with a warning.
KeywordSet expand_keywords(Gateway& gateway, const std::string& topic,
                           const std::vector<Document>& relevant_docs,
                           const std::vector<std::string>& prior, const RetrievalConfig& config,
                           std::vector<KeywordSet>* per_doc_log = nullptr);

// Runs the full two-stage retrieval: initial keywords, breadth retrieval,
// relevance filter, depth expansion, second retrieval + filter, merge with
// stage-1 winning duplicates. Throws EmptyCorpus when nothing survives.
CorpusSnapshot build_corpus(Gateway& gateway, KnowledgeSource& source, const std::string& topic,
                            const RetrievalConfig& config);

// corpus/documents.jsonl + corpus/keywords.json under run_dir.
void save_snapshot(const CorpusSnapshot& snapshot, const std::filesystem::path& run_dir);
CorpusSnapshot load_snapshot(const std::filesystem::path& run_dir);

} // namespace cw
