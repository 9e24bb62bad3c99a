#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cw/gateway.hpp"
#include "cw/retrieval.hpp"
#include "cw/writer.hpp"

namespace cw {

struct RubricDimension {
    std::string name;
    std::string definition;
};

// Relevance, breadth, depth, novelty with their grading definitions.
std::vector<RubricDimension> default_rubric();

struct RubricScores {
    // Dimension order follows the configured rubric; a dimension is absent
    // when its score never parsed.
    std::vector<std::string> names;
    std::vector<std::optional<double>> scores; // clamped to [0, 5]
    double average = 0.0;                      // mean over present dimensions
    bool incomplete = false;

    std::optional<double> score(const std::string& name) const;
};

// Round-half-up to two decimals, the report's display precision.
double round_2dp(double value);

struct CoverageJudgment {
    std::size_t paragraph_index = 0;
    std::string paragraph;
    std::vector<std::string> top_doc_ids;  // at most 2
    std::vector<bool> per_doc_verdicts;    // aligned to top_doc_ids
    bool supported = false;                // any verdict true
};

struct EvalReport {
    std::size_t word_length = 0;
    std::size_t cited_docs = 0;
    RubricScores rubric;
    double coverage_percent = 0.0; // 100 * supported / eligible paragraphs
    std::vector<CoverageJudgment> judgments;
    std::string embedding_provider; // coverage scores depend on it
};

struct EvalConfig {
    std::vector<RubricDimension> rubric = default_rubric();
    std::size_t judge_excerpt_tokens = 1500; // document text shown to the judge
    std::size_t min_paragraph_words = 20;
};

// Approximate Unicode word segmentation: maximal runs of alphanumeric or
// non-ASCII characters, apostrophes kept word-internal. Counts markers and
// headings like any other text.
std::size_t word_count(std::string_view text);

std::pair<std::size_t, std::size_t> basic_stats(const FinalArticle& article);

RubricScores grade_rubric(const std::string& topic, const std::string& article_markdown,
                          Gateway& gateway, const EvalConfig& config);

// Blank-line paragraph split; headings, everything under a References
// heading, and paragraphs below the word threshold are dropped.
std::vector<std::string> split_paragraphs(const std::string& markdown,
                                          std::size_t min_words = 20);

// Steps: split paragraphs, embed each, take the two most similar corpus
// documents by cosine, judge support per document; a paragraph counts as
// covered when at least one document supports it. Throws NoParagraphs when
// no paragraph is eligible.
std::pair<double, std::vector<CoverageJudgment>> compute_coverage(
    const std::string& article_markdown, const std::vector<Document>& corpus, Gateway& gateway,
    const EvalConfig& config);

// Full report. cited_docs_override carries the bibliography size of a run
// artifact; without it distinct citation markers in the text are counted.
EvalReport evaluate_article(const std::string& topic, const std::string& article_markdown,
                            std::optional<std::size_t> cited_docs_override,
                            const std::vector<Document>& corpus, Gateway& gateway,
                            const EvalConfig& config);

void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

} // namespace cw
