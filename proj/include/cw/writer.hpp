#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cw/outline.hpp"
#include "cw/summarizer.hpp"

namespace cw {

struct SectionDraft {
    std::size_t section_index = 0;
    std::string title;
    SectionKind kind = SectionKind::body;
    std::string text;                      // prose with [n] citation markers
    std::vector<std::string> evidence_ids; // docs shown to the model, rank order
    std::map<int, std::string> citation_map; // marker -> doc_id, markers in text only
    bool polish_reverted = false;
};

struct BibliographyEntry {
    int marker = 0;
    std::string doc_id;
    std::string title;
    std::optional<std::string> url;
};

struct FinalArticle {
    std::string topic;
    std::string markdown;
    std::vector<SectionDraft> section_drafts; // outline order, globally renumbered
    std::vector<BibliographyEntry> bibliography; // contiguous markers from 1
};

struct WriterConfig {
    int top_m = 6;                          // evidence docs per section
    std::size_t evidence_body_tokens = 800; // doc body shown beyond its summary
    std::size_t style_context_bytes = 400;  // polish window into the previous section
};

// All [n] markers in order of appearance, duplicates included.
std::vector<int> citation_markers(const std::string& text);

// Top-ranked cluster documents for the section, never anything outside the
// cluster. The rerank query is the section title plus its subpoints.
std::vector<Document> select_section_evidence(const OutlineSection& section,
                                              const KnowledgeCluster& cluster,
                                              const std::vector<Document>& corpus,
                                              Gateway& gateway, int top_m);

// Drafts one body section grounded in the numbered evidence. Out-of-range
// markers are stripped with a warning. A blank answer is re-asked once, then
// replaced by an extractive fallback citing each evidence document.
SectionDraft generate_section(const std::string& topic, const OutlineSection& section,
                              const std::vector<Document>& evidence,
                              const std::vector<LeafSummary>& leaves, Gateway& gateway,
                              const WriterConfig& config);

// Introduction and conclusion from per-section digests (never full text);
// both come back citation-free.
std::pair<SectionDraft, SectionDraft> frame_article(const std::string& topic,
                                                    const std::vector<SectionDraft>& body_drafts,
                                                    Gateway& gateway);

// Full first pass: body sections (concurrent), then framing. Output is in
// outline order.
std::vector<SectionDraft> draft_sections(const Outline& outline,
                                         const std::vector<KnowledgeCluster>& clusters,
                                         const CorpusSnapshot& snapshot,
                                         const std::vector<LeafSummary>& leaves,
                                         Gateway& gateway, const WriterConfig& config);

std::string assemble_draft(const std::string& topic, const std::vector<SectionDraft>& drafts);

// Per-section polish with the previous section's tail as style context; a
// section whose citation-marker multiset changes (or whose polish call fails)
// reverts to its unpolished text. Then markers are renumbered globally in
// reading order and the bibliography is attached.
FinalArticle polish_and_finalize(const std::string& topic, std::vector<SectionDraft> drafts,
                                 const std::vector<Document>& corpus, Gateway& gateway,
                                 const WriterConfig& config);

// sections/<index>_<slug>.md + sections/drafts.json + article_draft.md.
void save_drafts(const std::string& topic, const std::vector<SectionDraft>& drafts,
                 const std::filesystem::path& run_dir);
std::vector<SectionDraft> load_drafts(const std::filesystem::path& run_dir);

// article_final.md + citations.json.
void save_final_article(const FinalArticle& article, const std::filesystem::path& run_dir);

} // namespace cw
