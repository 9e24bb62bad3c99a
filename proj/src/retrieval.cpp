#include "cw/retrieval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

#include "cw/errors.hpp"
#include "cw/log.hpp"
#include "cw/util.hpp"

namespace cw {

using nlohmann::json;

const char* to_string(KeywordOrigin origin) {
    return origin == KeywordOrigin::initial ? "initial" : "expanded";
}

KeywordOrigin keyword_origin_from_string(const std::string& s) {
    if (s == "initial") return KeywordOrigin::initial;
    if (s == "expanded") return KeywordOrigin::expanded;
    throw ParseFailure("unknown keyword origin: " + s);
}

namespace {

std::string strip_list_decoration(std::string item) {
    std::size_t start = 0;
    while (start < item.size() && std::isdigit(static_cast<unsigned char>(item[start]))) ++start;
    if (start > 0 && start < item.size() && (item[start] == '.' || item[start] == ')')) {
        ++start;
    } else if (start > 0) {
        start = 0; // digits not followed by a list marker belong to the item
    }
    while (start < item.size() &&
           (item[start] == ' ' || item[start] == '-' || item[start] == '*')) {
        ++start;
    }
    return util::trim(item.substr(start));
}

std::size_t word_count(std::string_view s) {
    std::size_t words = 0;
    bool in_word = false;
    for (char c : s) {
        bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    return words;
}

std::string truncated_excerpt(const Document& doc, const RetrievalConfig& config) {
    return util::utf8_truncate(doc.text, config.judge_excerpt_tokens * 4);
}

} // namespace

std::vector<std::string> parse_keyword_list(const std::string& text) {
    std::vector<std::string> keywords;
    std::set<std::string> seen;
    for (const auto& line : util::split_lines(text)) {
        std::size_t start = 0;
        while (start <= line.size()) {
            std::size_t end = line.find_first_of(",;", start);
            if (end == std::string::npos) end = line.size();
            std::string item = strip_list_decoration(line.substr(start, end - start));
            start = end + 1;
            if (item.empty() || item.size() > 80 || word_count(item) > 8) continue;
            if (item.back() == ':') continue; // prose header, not a keyword
            std::string folded = util::to_lower(item);
            if (seen.insert(folded).second) keywords.push_back(item);
        }
    }
    return keywords;
}

KeywordSet generate_initial_keywords(Gateway& gateway, const std::string& topic) {
    if (util::trim(topic).empty()) throw Error("topic must not be empty");
    ChatRequest request{TemplateId::keyword_gen, {{"topic", topic}}};
    std::vector<std::string> keywords = parse_keyword_list(gateway.complete(request));
    if (keywords.empty()) {
        request.nudge =
            "The previous answer contained no usable keywords. Output only a numbered "
            "list of short search keywords, one per line.";
        keywords = parse_keyword_list(gateway.complete(request));
    }
    if (keywords.empty()) {
        throw ParseFailure("no keywords could be parsed for topic: " + topic);
    }
    return KeywordSet{std::move(keywords), KeywordOrigin::initial, std::nullopt};
}

RelevancePartition filter_relevant(Gateway& gateway, const std::string& topic,
                                   std::vector<Document> docs, const RetrievalConfig& config) {
    std::vector<Relevance> verdicts(docs.size(), Relevance::irrelevant);
    util::parallel_for(docs.size(), gateway.concurrency(), [&](std::size_t i) {
        ChatRequest request{TemplateId::rel_filter,
                            {{"topic", topic},
                             {"title", docs[i].title},
                             {"excerpt", truncated_excerpt(docs[i], config)}}};
        try {
            auto verdict = util::parse_verdict(gateway.complete(request), "RELEVANT",
                                               "IRRELEVANT");
            if (!verdict) {
                request.nudge =
                    "Answer with exactly one line: VERDICT: RELEVANT or VERDICT: "
                    "IRRELEVANT.";
                verdict =
                    util::parse_verdict(gateway.complete(request), "RELEVANT", "IRRELEVANT");
            }
            if (!verdict) {
                log::warn("relevance verdict for {} unparseable twice; treating as irrelevant",
                          docs[i].doc_id);
                verdict = false;
            }
            verdicts[i] = *verdict ? Relevance::relevant : Relevance::irrelevant;
        } catch (const ProviderError& e) {
            log::warn("relevance judgment for {} failed ({}); treating as irrelevant",
                      docs[i].doc_id, e.what());
            verdicts[i] = Relevance::irrelevant;
        }
    });

    RelevancePartition partition;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        docs[i].relevance = verdicts[i];
        if (verdicts[i] == Relevance::relevant) {
            partition.relevant.push_back(std::move(docs[i]));
        } else {
            partition.irrelevant.push_back(std::move(docs[i]));
        }
    }
    return partition;
}

KeywordSet expand_keywords(Gateway& gateway, const std::string& topic,
                           const std::vector<Document>& relevant_docs,
                           const std::vector<std::string>& prior, const RetrievalConfig& config,
                           std::vector<KeywordSet>* per_doc_log) {
    if (relevant_docs.empty()) throw Error("expand_keywords needs at least one document");

    std::vector<std::vector<std::string>> per_doc(relevant_docs.size());
    util::parallel_for(relevant_docs.size(), gateway.concurrency(), [&](std::size_t i) {
        ChatRequest request{TemplateId::depth_exp,
                            {{"topic", topic},
                             {"title", relevant_docs[i].title},
                             {"excerpt", truncated_excerpt(relevant_docs[i], config)}}};
        try {
            per_doc[i] = parse_keyword_list(gateway.complete(request));
            if (per_doc[i].size() > config.max_keywords_per_doc) {
                per_doc[i].resize(config.max_keywords_per_doc);
            }
        } catch (const ProviderError& e) {
            log::warn("keyword expansion for {} failed ({}); skipping its contribution",
                      relevant_docs[i].doc_id, e.what());
        }
    });

    std::set<std::string> taken;
    for (const auto& keyword : prior) taken.insert(util::to_lower(keyword));

    KeywordSet merged{{}, KeywordOrigin::expanded, std::nullopt};
    for (std::size_t i = 0; i < relevant_docs.size(); ++i) {
        if (per_doc_log) {
            per_doc_log->push_back(
                KeywordSet{per_doc[i], KeywordOrigin::expanded, relevant_docs[i].doc_id});
        }
        for (auto& keyword : per_doc[i]) {
            if (merged.keywords.size() >= config.max_expanded_keywords) break;
            if (taken.insert(util::to_lower(keyword)).second) {
                merged.keywords.push_back(std::move(keyword));
            }
        }
    }
    return merged;
}

namespace {

// One search per keyword, concurrently, merged in keyword order with
// first-wins dedup.
std::vector<Document> retrieve_round(KnowledgeSource& source,
                                     const std::vector<std::string>& keywords, int round,
                                     const RetrievalConfig& config, std::size_t workers) {
    std::vector<std::vector<Document>> batches(keywords.size());
    util::parallel_for(keywords.size(), workers, [&](std::size_t i) {
        batches[i] = source.search({keywords[i], config.max_results_per_keyword});
    });
    std::vector<Document> merged = dedup_merge(batches);
    for (auto& doc : merged) doc.retrieval_round = round;
    return merged;
}

} // namespace

CorpusSnapshot build_corpus(Gateway& gateway, KnowledgeSource& source, const std::string& topic,
                            const RetrievalConfig& config) {
    CorpusSnapshot snapshot;
    snapshot.topic = topic;

    KeywordSet initial = generate_initial_keywords(gateway, topic);
    log::info("stage 1: {} keywords for \"{}\"", initial.keywords.size(), topic);

    std::vector<Document> stage1_docs =
        retrieve_round(source, initial.keywords, 1, config, gateway.concurrency());
    log::info("stage 1: {} unique documents retrieved", stage1_docs.size());

    RelevancePartition stage1 = filter_relevant(gateway, topic, std::move(stage1_docs), config);
    log::info("stage 1: {} relevant, {} filtered out", stage1.relevant.size(),
              stage1.irrelevant.size());
    snapshot.keyword_log.push_back(initial);
    if (stage1.relevant.empty()) {
        throw EmptyCorpus("no relevant documents for topic: " + topic);
    }

    std::set<std::string> judged_ids;
    for (const auto& doc : stage1.relevant) judged_ids.insert(doc.doc_id);
    for (const auto& doc : stage1.irrelevant) judged_ids.insert(doc.doc_id);

    KeywordSet expanded = expand_keywords(gateway, topic, stage1.relevant, initial.keywords,
                                          config, &snapshot.keyword_log);

    RelevancePartition stage2;
    if (!expanded.keywords.empty()) {
        log::info("stage 2: {} expansion keywords", expanded.keywords.size());
        std::vector<Document> stage2_docs =
            retrieve_round(source, expanded.keywords, 2, config, gateway.concurrency());
        // A document already judged in stage 1 keeps that judgment.
        std::erase_if(stage2_docs,
                      [&](const Document& doc) { return judged_ids.count(doc.doc_id) > 0; });
        log::info("stage 2: {} new documents retrieved", stage2_docs.size());
        stage2 = filter_relevant(gateway, topic, std::move(stage2_docs), config);
        log::info("stage 2: {} relevant, {} filtered out", stage2.relevant.size(),
                  stage2.irrelevant.size());
    } else {
        log::info("stage 2 skipped: every expansion keyword was already covered");
    }

    snapshot.documents = stage1.relevant;
    for (const auto& doc : stage1.relevant) snapshot.stage1_ids.push_back(doc.doc_id);
    for (auto& doc : stage2.relevant) {
        snapshot.stage2_ids.push_back(doc.doc_id);
        snapshot.documents.push_back(std::move(doc));
    }
    if (snapshot.documents.empty()) {
        throw EmptyCorpus("no relevant documents for topic: " + topic);
    }
    return snapshot;
}

void save_snapshot(const CorpusSnapshot& snapshot, const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir / "corpus");
    util::atomic_write_file(run_dir / "corpus" / "documents.jsonl",
                            documents_to_jsonl(snapshot.documents));

    json doc;
    doc["topic"] = snapshot.topic;
    doc["stage1_ids"] = snapshot.stage1_ids;
    doc["stage2_ids"] = snapshot.stage2_ids;
    json log_entries = json::array();
    for (const auto& set : snapshot.keyword_log) {
        json entry;
        entry["keywords"] = set.keywords;
        entry["origin"] = to_string(set.origin);
        if (set.parent_doc_id) entry["parent_doc_id"] = *set.parent_doc_id;
        log_entries.push_back(std::move(entry));
    }
    doc["keyword_log"] = log_entries;
    util::atomic_write_file(run_dir / "corpus" / "keywords.json", doc.dump(2) + "\n");
}

CorpusSnapshot load_snapshot(const std::filesystem::path& run_dir) {
    CorpusSnapshot snapshot;
    snapshot.documents =
        documents_from_jsonl(util::read_file(run_dir / "corpus" / "documents.jsonl"));
    json doc = json::parse(util::read_file(run_dir / "corpus" / "keywords.json"));
    snapshot.topic = doc.at("topic").get<std::string>();
    snapshot.stage1_ids = doc.at("stage1_ids").get<std::vector<std::string>>();
    snapshot.stage2_ids = doc.at("stage2_ids").get<std::vector<std::string>>();
    for (const auto& entry : doc.at("keyword_log")) {
        KeywordSet set;
        set.keywords = entry.at("keywords").get<std::vector<std::string>>();
        set.origin = keyword_origin_from_string(entry.at("origin").get<std::string>());
        if (entry.contains("parent_doc_id")) {
            set.parent_doc_id = entry.at("parent_doc_id").get<std::string>();
        }
        snapshot.keyword_log.push_back(std::move(set));
    }
    return snapshot;
}

} // namespace cw
