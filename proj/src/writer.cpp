#include "cw/writer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <functional>
#include <set>

#include "cw/errors.hpp"
#include "cw/log.hpp"
#include "cw/util.hpp"

namespace cw {

using nlohmann::json;

namespace {

// Rebuilds text around every [n] marker: fn returns the replacement for the
// whole marker, or nullopt to strip it (eating one preceding space).
std::string transform_markers(const std::string& text,
                              const std::function<std::optional<std::string>(int)>& fn) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '[') {
            std::size_t j = i + 1;
            while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
            if (j > i + 1 && j - i - 1 <= 9 && j < text.size() && text[j] == ']') {
                int n = std::stoi(text.substr(i + 1, j - i - 1));
                if (auto replacement = fn(n)) {
                    out += *replacement;
                } else if (!out.empty() && out.back() == ' ') {
                    out.pop_back();
                }
                i = j + 1;
                continue;
            }
        }
        out.push_back(text[i]);
        ++i;
    }
    return out;
}

std::string strip_all_markers(const std::string& text) {
    return transform_markers(text, [](int) { return std::nullopt; });
}

// Last max_bytes of text without starting inside a UTF-8 sequence.
std::string utf8_tail(const std::string& text, std::size_t max_bytes) {
    if (text.size() <= max_bytes) return text;
    std::size_t start = text.size() - max_bytes;
    while (start < text.size() &&
           (static_cast<unsigned char>(text[start]) & 0xC0) == 0x80) {
        ++start;
    }
    return text.substr(start);
}

} // namespace

std::vector<int> citation_markers(const std::string& text) {
    std::vector<int> markers;
    transform_markers(text, [&](int n) -> std::optional<std::string> {
        markers.push_back(n);
        return "[" + std::to_string(n) + "]";
    });
    return markers;
}

std::vector<Document> select_section_evidence(const OutlineSection& section,
                                              const KnowledgeCluster& cluster,
                                              const std::vector<Document>& corpus,
                                              Gateway& gateway, int top_m) {
    if (section.kind != SectionKind::body) {
        throw Error("evidence selection applies to body sections only");
    }
    std::vector<Document> candidates;
    for (const auto& doc_id : cluster.doc_ids) {
        auto it = std::find_if(corpus.begin(), corpus.end(),
                               [&](const Document& d) { return d.doc_id == doc_id; });
        if (it == corpus.end()) throw Error("cluster references unknown document " + doc_id);
        candidates.push_back(*it);
    }
    std::string query = section.title;
    for (const auto& point : section.subpoints) query += "\n" + point;
    return gateway.rerank(query, candidates, top_m);
}

namespace {

std::string evidence_block(const std::vector<Document>& evidence,
                           const std::vector<LeafSummary>& leaves,
                           const WriterConfig& config) {
    std::string block;
    for (std::size_t i = 0; i < evidence.size(); ++i) {
        block += "[" + std::to_string(i + 1) + "] " + evidence[i].title + "\n";
        auto leaf = std::find_if(leaves.begin(), leaves.end(), [&](const LeafSummary& l) {
            return l.doc_id == evidence[i].doc_id;
        });
        if (leaf != leaves.end()) block += leaf->text + "\n";
        block += util::utf8_truncate(evidence[i].text, config.evidence_body_tokens * 4);
        block += "\n\n";
    }
    return block;
}

std::string extractive_fallback(const std::vector<Document>& evidence,
                                const std::vector<LeafSummary>& leaves) {
    std::string text;
    for (std::size_t i = 0; i < evidence.size(); ++i) {
        auto leaf = std::find_if(leaves.begin(), leaves.end(), [&](const LeafSummary& l) {
            return l.doc_id == evidence[i].doc_id;
        });
        std::string sentence =
            util::first_sentence(leaf != leaves.end() ? leaf->text : evidence[i].text);
        while (!sentence.empty() &&
               (sentence.back() == '.' || sentence.back() == '!' || sentence.back() == '?')) {
            sentence.pop_back();
        }
        if (sentence.empty()) continue;
        if (!text.empty()) text += " ";
        text += sentence + " [" + std::to_string(i + 1) + "].";
    }
    return text;
}

} // namespace

SectionDraft generate_section(const std::string& topic, const OutlineSection& section,
                              const std::vector<Document>& evidence,
                              const std::vector<LeafSummary>& leaves, Gateway& gateway,
                              const WriterConfig& config) {
    if (evidence.empty()) throw Error("section \"" + section.title + "\" has no evidence");

    std::string subpoints;
    for (const auto& point : section.subpoints) subpoints += "- " + point + "\n";

    ChatRequest request{TemplateId::section_gen,
                        {{"topic", topic},
                         {"title", section.title},
                         {"subpoints", subpoints},
                         {"evidence", evidence_block(evidence, leaves, config)}}};
    std::string text = util::trim(gateway.complete(request));
    if (text.empty()) {
        request.nudge = "Your previous answer was empty. Write the section prose now.";
        text = util::trim(gateway.complete(request));
    }
    if (text.empty()) {
        log::warn("model produced no text for section \"{}\"; using extractive fallback",
                  section.title);
        text = extractive_fallback(evidence, leaves);
    }

    // Markers that do not point at presented evidence are dropped.
    std::set<int> stripped;
    int max_marker = static_cast<int>(evidence.size());
    text = transform_markers(text, [&](int n) -> std::optional<std::string> {
        if (n >= 1 && n <= max_marker) return "[" + std::to_string(n) + "]";
        stripped.insert(n);
        return std::nullopt;
    });
    for (int n : stripped) {
        log::warn("section \"{}\" cited nonexistent evidence [{}]; marker removed",
                  section.title, n);
    }

    SectionDraft draft;
    draft.section_index = section.index;
    draft.title = section.title;
    draft.kind = SectionKind::body;
    draft.text = std::move(text);
    for (const auto& doc : evidence) draft.evidence_ids.push_back(doc.doc_id);
    for (int n : citation_markers(draft.text)) {
        draft.citation_map[n] = evidence[static_cast<std::size_t>(n) - 1].doc_id;
    }
    return draft;
}

std::pair<SectionDraft, SectionDraft> frame_article(const std::string& topic,
                                                    const std::vector<SectionDraft>& body_drafts,
                                                    Gateway& gateway) {
    if (body_drafts.empty()) throw Error("framing needs at least one body section");

    std::string digests;
    for (const auto& draft : body_drafts) {
        digests += "- " + draft.title + ": " +
                   util::first_sentence(strip_all_markers(draft.text)) + "\n";
    }

    auto frame = [&](TemplateId id, const char* name) {
        ChatRequest request{id, {{"topic", topic}, {"digests", digests}}};
        std::string text = util::trim(gateway.complete(request));
        if (!citation_markers(text).empty()) {
            log::warn("{} contained citation markers; removing them", name);
            text = util::trim(strip_all_markers(text));
        }
        return text;
    };

    SectionDraft intro;
    intro.title = "Introduction";
    intro.kind = SectionKind::introduction;
    intro.text = frame(TemplateId::intro_gen, "introduction");

    SectionDraft conclusion;
    conclusion.title = "Conclusion";
    conclusion.kind = SectionKind::conclusion;
    conclusion.text = frame(TemplateId::conclusion_gen, "conclusion");
    return {std::move(intro), std::move(conclusion)};
}

std::vector<SectionDraft> draft_sections(const Outline& outline,
                                         const std::vector<KnowledgeCluster>& clusters,
                                         const CorpusSnapshot& snapshot,
                                         const std::vector<LeafSummary>& leaves,
                                         Gateway& gateway, const WriterConfig& config) {
    std::vector<const OutlineSection*> body_sections;
    for (const auto& section : outline.sections) {
        if (section.kind == SectionKind::body) body_sections.push_back(&section);
    }

    std::vector<SectionDraft> body_drafts(body_sections.size());
    util::parallel_for(body_sections.size(), gateway.concurrency(), [&](std::size_t i) {
        const OutlineSection& section = *body_sections[i];
        if (!section.cluster_id) {
            throw Error("body section \"" + section.title + "\" is not mapped to a cluster");
        }
        auto cluster = std::find_if(clusters.begin(), clusters.end(), [&](const auto& c) {
            return c.cluster_id == *section.cluster_id;
        });
        if (cluster == clusters.end()) {
            throw Error("outline maps to unknown cluster " +
                        std::to_string(*section.cluster_id));
        }
        std::vector<Document> evidence = select_section_evidence(
            section, *cluster, snapshot.documents, gateway, config.top_m);
        body_drafts[i] =
            generate_section(outline.topic, section, evidence, leaves, gateway, config);
    });

    auto [intro, conclusion] = frame_article(outline.topic, body_drafts, gateway);
    intro.section_index = outline.sections.front().index;
    intro.title = outline.sections.front().title;
    conclusion.section_index = outline.sections.back().index;
    conclusion.title = outline.sections.back().title;

    std::vector<SectionDraft> drafts;
    drafts.push_back(std::move(intro));
    for (auto& draft : body_drafts) drafts.push_back(std::move(draft));
    drafts.push_back(std::move(conclusion));
    return drafts;
}

std::string assemble_draft(const std::string& topic, const std::vector<SectionDraft>& drafts) {
    std::string out = "# " + topic + "\n\n";
    for (const auto& draft : drafts) {
        out += "## " + draft.title + "\n\n" + draft.text + "\n\n";
    }
    out.pop_back();
    return out;
}

FinalArticle polish_and_finalize(const std::string& topic, std::vector<SectionDraft> drafts,
                                 const std::vector<Document>& corpus, Gateway& gateway,
                                 const WriterConfig& config) {
    // Polish in reading order so each section sees its predecessor's final
    // form.
    std::string previous_tail = "(beginning of the article)";
    for (auto& draft : drafts) {
        std::vector<int> before = citation_markers(draft.text);
        std::sort(before.begin(), before.end());
        try {
            ChatRequest request{TemplateId::refine,
                                {{"style_context", previous_tail}, {"section", draft.text}}};
            std::string polished = util::trim(gateway.complete(request));
            std::vector<int> after = citation_markers(polished);
            std::sort(after.begin(), after.end());
            if (polished.empty() || before != after) {
                log::warn("polish changed the citations of \"{}\"; keeping the draft text",
                          draft.title);
                draft.polish_reverted = true;
            } else {
                draft.text = std::move(polished);
            }
        } catch (const ProviderError& e) {
            log::warn("polish of \"{}\" failed ({}); keeping the draft text", draft.title,
                      e.what());
            draft.polish_reverted = true;
        }
        previous_tail = utf8_tail(draft.text, config.style_context_bytes);
    }

    // Global renumbering: a document gets its number at its first citation in
    // reading order.
    std::map<std::string, int> doc_to_global;
    std::vector<std::string> global_docs;
    for (auto& draft : drafts) {
        std::map<int, std::string> renumbered;
        draft.text = transform_markers(draft.text, [&](int n) -> std::optional<std::string> {
            auto it = draft.citation_map.find(n);
            if (it == draft.citation_map.end()) {
                log::warn("unmapped citation [{}] in \"{}\"; marker removed", n, draft.title);
                return std::nullopt;
            }
            auto [entry, inserted] =
                doc_to_global.try_emplace(it->second, static_cast<int>(global_docs.size()) + 1);
            if (inserted) global_docs.push_back(it->second);
            renumbered[entry->second] = it->second;
            return "[" + std::to_string(entry->second) + "]";
        });
        draft.citation_map = std::move(renumbered);
    }

    FinalArticle article;
    article.topic = topic;
    for (std::size_t g = 0; g < global_docs.size(); ++g) {
        BibliographyEntry entry;
        entry.marker = static_cast<int>(g) + 1;
        entry.doc_id = global_docs[g];
        auto doc = std::find_if(corpus.begin(), corpus.end(),
                                [&](const Document& d) { return d.doc_id == global_docs[g]; });
        if (doc != corpus.end()) {
            entry.title = doc->title;
            entry.url = doc->url;
        } else {
            entry.title = global_docs[g];
        }
        article.bibliography.push_back(std::move(entry));
    }

    article.markdown = assemble_draft(topic, drafts);
    if (!article.bibliography.empty()) {
        article.markdown += "\n## References\n\n";
        for (const auto& entry : article.bibliography) {
            article.markdown += "[" + std::to_string(entry.marker) + "] " + entry.title;
            if (entry.url) article.markdown += " — " + *entry.url;
            article.markdown += "\n";
        }
    }
    article.section_drafts = std::move(drafts);
    return article;
}

// -- persistence ---------------------------------------------------------------

namespace {

json draft_to_json(const SectionDraft& draft) {
    json entry;
    entry["section_index"] = draft.section_index;
    entry["title"] = draft.title;
    entry["kind"] = to_string(draft.kind);
    entry["text"] = draft.text;
    entry["evidence_ids"] = draft.evidence_ids;
    json map = json::object();
    for (const auto& [marker, doc_id] : draft.citation_map) {
        map[std::to_string(marker)] = doc_id;
    }
    entry["citation_map"] = map;
    entry["polish_reverted"] = draft.polish_reverted;
    return entry;
}

SectionDraft draft_from_json(const json& entry) {
    SectionDraft draft;
    draft.section_index = entry.at("section_index").get<std::size_t>();
    draft.title = entry.at("title").get<std::string>();
    draft.kind = section_kind_from_string(entry.at("kind").get<std::string>());
    draft.text = entry.at("text").get<std::string>();
    draft.evidence_ids = entry.at("evidence_ids").get<std::vector<std::string>>();
    for (const auto& [key, value] : entry.at("citation_map").items()) {
        draft.citation_map[std::stoi(key)] = value.get<std::string>();
    }
    draft.polish_reverted = entry.at("polish_reverted").get<bool>();
    return draft;
}

} // namespace

void save_drafts(const std::string& topic, const std::vector<SectionDraft>& drafts,
                 const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir / "sections");
    json list = json::array();
    for (const auto& draft : drafts) {
        util::atomic_write_file(run_dir / "sections" /
                                    (std::to_string(draft.section_index) + "_" +
                                     util::slugify(draft.title) + ".md"),
                                "## " + draft.title + "\n\n" + draft.text + "\n");
        list.push_back(draft_to_json(draft));
    }
    util::atomic_write_file(run_dir / "sections" / "drafts.json", list.dump(2) + "\n");
    util::atomic_write_file(run_dir / "article_draft.md", assemble_draft(topic, drafts));
}

std::vector<SectionDraft> load_drafts(const std::filesystem::path& run_dir) {
    json list = json::parse(util::read_file(run_dir / "sections" / "drafts.json"));
    std::vector<SectionDraft> drafts;
    for (const auto& entry : list) drafts.push_back(draft_from_json(entry));
    return drafts;
}

void save_final_article(const FinalArticle& article, const std::filesystem::path& run_dir) {
    util::atomic_write_file(run_dir / "article_final.md", article.markdown);
    json doc;
    doc["topic"] = article.topic;
    json bibliography = json::array();
    for (const auto& entry : article.bibliography) {
        json item;
        item["marker"] = entry.marker;
        item["doc_id"] = entry.doc_id;
        item["title"] = entry.title;
        if (entry.url) item["url"] = *entry.url;
        bibliography.push_back(std::move(item));
    }
    doc["bibliography"] = bibliography;
    json sections = json::array();
    for (const auto& draft : article.section_drafts) sections.push_back(draft_to_json(draft));
    doc["sections"] = sections;
    util::atomic_write_file(run_dir / "citations.json", doc.dump(2) + "\n");
}

} // namespace cw
