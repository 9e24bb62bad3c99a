#include "cw/evaluator.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

#include "cw/errors.hpp"
#include "cw/log.hpp"
#include "cw/util.hpp"

namespace cw {

using nlohmann::json;

std::vector<RubricDimension> default_rubric() {
    return {
        {"relevance",
         "How directly the article addresses the given topic and stays on subject "
         "throughout."},
        {"breadth",
         "How completely the article covers the distinct aspects and subtopics of the "
         "subject."},
        {"depth",
         "How much substantive detail, explanation, and analysis the article provides "
         "beyond surface statements."},
        {"novelty",
         "How much insight or synthesis the article offers beyond an obvious restatement "
         "of commonly known facts."},
    };
}

std::optional<double> RubricScores::score(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return scores[i];
    }
    return std::nullopt;
}

double round_2dp(double value) {
    return std::floor(value * 100.0 + 0.5) / 100.0;
}

std::size_t word_count(std::string_view text) {
    std::size_t words = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        bool wordish = std::isalnum(c) || c >= 0x80;
        if (!wordish && c == '\'' && in_word && i + 1 < text.size() &&
            std::isalnum(static_cast<unsigned char>(text[i + 1]))) {
            wordish = true; // keep contractions as one segment
        }
        if (wordish && !in_word) ++words;
        in_word = wordish;
    }
    return words;
}

std::pair<std::size_t, std::size_t> basic_stats(const FinalArticle& article) {
    std::set<std::string> distinct;
    for (const auto& entry : article.bibliography) distinct.insert(entry.doc_id);
    return {word_count(article.markdown), distinct.size()};
}

namespace {

std::optional<double> parse_score(const std::string& response) {
    std::string upper = util::to_lower(response);
    std::size_t at = upper.find("score");
    if (at == std::string::npos) return std::nullopt;
    std::size_t i = at + 5;
    while (i < response.size() && !std::isdigit(static_cast<unsigned char>(response[i]))) {
        if (std::isalpha(static_cast<unsigned char>(response[i]))) return std::nullopt;
        ++i;
    }
    if (i == response.size()) return std::nullopt;
    std::size_t end = i;
    while (end < response.size() &&
           (std::isdigit(static_cast<unsigned char>(response[end])) || response[end] == '.')) {
        ++end;
    }
    try {
        return std::stod(response.substr(i, end - i));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

} // namespace

RubricScores grade_rubric(const std::string& topic, const std::string& article_markdown,
                          Gateway& gateway, const EvalConfig& config) {
    RubricScores result;
    result.names.reserve(config.rubric.size());
    result.scores.assign(config.rubric.size(), std::nullopt);
    for (const auto& dim : config.rubric) result.names.push_back(dim.name);

    util::parallel_for(config.rubric.size(), gateway.concurrency(), [&](std::size_t i) {
        const RubricDimension& dim = config.rubric[i];
        ChatRequest request{TemplateId::rubric_judge,
                            {{"dimension", dim.name},
                             {"definition", dim.definition},
                             {"topic", topic},
                             {"article", article_markdown}}};
        auto parsed = parse_score(gateway.complete(request));
        if (!parsed) {
            request.nudge = "Answer with exactly one line of the form SCORE: <number>.";
            parsed = parse_score(gateway.complete(request));
        }
        if (!parsed) {
            log::warn("no parseable {} score; dimension omitted from the average", dim.name);
            return;
        }
        result.scores[i] = std::clamp(*parsed, 0.0, 5.0);
    });

    double sum = 0.0;
    std::size_t present = 0;
    for (const auto& score : result.scores) {
        if (score) {
            sum += *score;
            ++present;
        }
    }
    result.incomplete = present != config.rubric.size();
    result.average = present == 0 ? 0.0 : sum / static_cast<double>(present);
    return result;
}

std::vector<std::string> split_paragraphs(const std::string& markdown,
                                          std::size_t min_words) {
    std::vector<std::string> paragraphs;
    std::string block;
    bool in_references = false;
    auto flush = [&]() {
        std::string paragraph = util::trim(block);
        block.clear();
        if (!paragraph.empty() && word_count(paragraph) >= min_words) {
            paragraphs.push_back(std::move(paragraph));
        }
    };
    for (const auto& line : util::split_lines(markdown)) {
        std::string t = util::trim(line);
        if (!t.empty() && t[0] == '#') {
            flush();
            std::size_t at = t.find_first_not_of("# ");
            std::string title = at == std::string::npos ? "" : util::to_lower(t.substr(at));
            in_references = title == "references";
            continue;
        }
        if (t.empty()) {
            flush();
            continue;
        }
        if (in_references) continue;
        if (!block.empty()) block += " ";
        block += t;
    }
    flush();
    return paragraphs;
}

std::pair<double, std::vector<CoverageJudgment>> compute_coverage(
    const std::string& article_markdown, const std::vector<Document>& corpus, Gateway& gateway,
    const EvalConfig& config) {
    if (corpus.empty()) throw EmptyCorpus("coverage needs a corpus to check against");
    std::vector<std::string> paragraphs =
        split_paragraphs(article_markdown, config.min_paragraph_words);
    if (paragraphs.empty()) {
        throw NoParagraphs("the article contains no paragraph eligible for coverage");
    }

    std::vector<std::string> texts;
    texts.reserve(corpus.size() + paragraphs.size());
    for (const auto& doc : corpus) texts.push_back(doc.title + "\n" + doc.text);
    for (const auto& paragraph : paragraphs) texts.push_back(paragraph);
    std::vector<EmbeddingVector> vectors = gateway.embed(texts);

    auto cosine = [&](std::size_t a, std::size_t b) {
        double dot = 0.0;
        for (std::size_t x = 0; x < vectors[a].values.size(); ++x) {
            dot += vectors[a].values[x] * vectors[b].values[x];
        }
        return dot;
    };

    std::vector<CoverageJudgment> judgments(paragraphs.size());
    util::parallel_for(paragraphs.size(), gateway.concurrency(), [&](std::size_t p) {
        // Two most similar corpus documents, ties to the smaller doc_id.
        std::vector<std::size_t> order(corpus.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::vector<double> scores(corpus.size());
        for (std::size_t i = 0; i < corpus.size(); ++i) scores[i] = cosine(corpus.size() + p, i);
        std::size_t take = std::min<std::size_t>(2, corpus.size());
        std::partial_sort(order.begin(), order.begin() + take, order.end(),
                          [&](std::size_t a, std::size_t b) {
                              if (scores[a] != scores[b]) return scores[a] > scores[b];
                              return corpus[a].doc_id < corpus[b].doc_id;
                          });

        CoverageJudgment judgment;
        judgment.paragraph_index = p;
        judgment.paragraph = paragraphs[p];
        for (std::size_t r = 0; r < take; ++r) {
            const Document& doc = corpus[order[r]];
            std::string excerpt =
                doc.title + "\n" +
                util::utf8_truncate(doc.text, config.judge_excerpt_tokens * 4);
            bool verdict = false;
            try {
                ChatRequest request{TemplateId::support_judge,
                                    {{"paragraph", paragraphs[p]}, {"document", excerpt}}};
                auto parsed =
                    util::parse_verdict(gateway.complete(request), "SUPPORTED", "UNSUPPORTED");
                if (!parsed) {
                    request.nudge =
                        "Answer with exactly one line: VERDICT: SUPPORTED or VERDICT: "
                        "UNSUPPORTED.";
                    parsed = util::parse_verdict(gateway.complete(request), "SUPPORTED",
                                                 "UNSUPPORTED");
                }
                verdict = parsed.value_or(false);
            } catch (const ProviderError& e) {
                log::warn("support judgment failed ({}); counting as unsupported", e.what());
            }
            judgment.top_doc_ids.push_back(doc.doc_id);
            judgment.per_doc_verdicts.push_back(verdict);
        }
        judgment.supported = std::any_of(judgment.per_doc_verdicts.begin(),
                                         judgment.per_doc_verdicts.end(),
                                         [](bool v) { return v; });
        judgments[p] = std::move(judgment);
    });

    std::size_t supported = static_cast<std::size_t>(
        std::count_if(judgments.begin(), judgments.end(),
                      [](const CoverageJudgment& j) { return j.supported; }));
    double percent =
        100.0 * static_cast<double>(supported) / static_cast<double>(judgments.size());
    return {percent, std::move(judgments)};
}

EvalReport evaluate_article(const std::string& topic, const std::string& article_markdown,
                            std::optional<std::size_t> cited_docs_override,
                            const std::vector<Document>& corpus, Gateway& gateway,
                            const EvalConfig& config) {
    EvalReport report;
    report.word_length = word_count(article_markdown);
    if (cited_docs_override) {
        report.cited_docs = *cited_docs_override;
    } else {
        std::vector<int> markers = citation_markers(article_markdown);
        report.cited_docs = std::set<int>(markers.begin(), markers.end()).size();
    }
    report.rubric = grade_rubric(topic, article_markdown, gateway, config);
    auto [percent, judgments] = compute_coverage(article_markdown, corpus, gateway, config);
    report.coverage_percent = percent;
    report.judgments = std::move(judgments);
    report.embedding_provider = gateway.embedding_provider_id();
    return report;
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
    json doc;
    doc["word_length"] = report.word_length;
    doc["word_count_method"] = "unicode-approx";
    doc["cited_docs"] = report.cited_docs;
    json rubric;
    json dims = json::array();
    for (std::size_t i = 0; i < report.rubric.names.size(); ++i) {
        json dim;
        dim["name"] = report.rubric.names[i];
        if (report.rubric.scores[i]) dim["score"] = *report.rubric.scores[i];
        dims.push_back(std::move(dim));
    }
    rubric["dimensions"] = dims;
    rubric["average"] = report.rubric.average;
    rubric["average_2dp"] = round_2dp(report.rubric.average);
    rubric["incomplete"] = report.rubric.incomplete;
    doc["rubric"] = rubric;
    doc["coverage_percent"] = report.coverage_percent;
    doc["embedding_provider"] = report.embedding_provider;
    json judgments = json::array();
    for (const auto& j : report.judgments) {
        judgments.push_back({{"paragraph_index", j.paragraph_index},
                             {"paragraph", j.paragraph},
                             {"top_doc_ids", j.top_doc_ids},
                             {"verdicts", j.per_doc_verdicts},
                             {"supported", j.supported}});
    }
    doc["judgments"] = judgments;
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    util::atomic_write_file(path, doc.dump(2) + "\n");
}

EvalReport load_report(const std::filesystem::path& path) {
    json doc = json::parse(util::read_file(path));
    EvalReport report;
    report.word_length = doc.at("word_length").get<std::size_t>();
    report.cited_docs = doc.at("cited_docs").get<std::size_t>();
    for (const auto& dim : doc.at("rubric").at("dimensions")) {
        report.rubric.names.push_back(dim.at("name").get<std::string>());
        if (dim.contains("score")) {
            report.rubric.scores.push_back(dim.at("score").get<double>());
        } else {
            report.rubric.scores.push_back(std::nullopt);
        }
    }
    report.rubric.average = doc.at("rubric").at("average").get<double>();
    report.rubric.incomplete = doc.at("rubric").at("incomplete").get<bool>();
    report.coverage_percent = doc.at("coverage_percent").get<double>();
    report.embedding_provider = doc.at("embedding_provider").get<std::string>();
    for (const auto& j : doc.at("judgments")) {
        CoverageJudgment judgment;
        judgment.paragraph_index = j.at("paragraph_index").get<std::size_t>();
        judgment.paragraph = j.at("paragraph").get<std::string>();
        judgment.top_doc_ids = j.at("top_doc_ids").get<std::vector<std::string>>();
        judgment.per_doc_verdicts = j.at("verdicts").get<std::vector<bool>>();
        judgment.supported = j.at("supported").get<bool>();
        report.judgments.push_back(std::move(judgment));
    }
    return report;
}

} // namespace cw
