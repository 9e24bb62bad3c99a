#include "cw/document.hpp"

#include <nlohmann/json.hpp>

#include <sstream>
#include <unordered_map>

#include "cw/errors.hpp"
#include "cw/util.hpp"

namespace cw {

using nlohmann::json;

const char* to_string(DocSource s) {
    return s == DocSource::wikipedia ? "wikipedia" : "local";
}

const char* to_string(Relevance r) {
    switch (r) {
        case Relevance::unjudged: return "unjudged";
        case Relevance::relevant: return "relevant";
        case Relevance::irrelevant: return "irrelevant";
    }
    return "unjudged";
}

DocSource doc_source_from_string(const std::string& s) {
    if (s == "wikipedia") return DocSource::wikipedia;
    if (s == "local") return DocSource::local;
    throw Error("unknown document source: " + s);
}

Relevance relevance_from_string(const std::string& s) {
    if (s == "unjudged") return Relevance::unjudged;
    if (s == "relevant") return Relevance::relevant;
    if (s == "irrelevant") return Relevance::irrelevant;
    throw Error("unknown relevance value: " + s);
}

std::vector<Document> dedup_merge(const std::vector<std::vector<Document>>& batches) {
    std::vector<Document> out;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& batch : batches) {
        for (const auto& doc : batch) {
            auto it = index.find(doc.doc_id);
            if (it == index.end()) {
                index.emplace(doc.doc_id, out.size());
                out.push_back(doc);
            } else {
                Document& kept = out[it->second];
                kept.retrieval_round = std::min(kept.retrieval_round, doc.retrieval_round);
            }
        }
    }
    return out;
}

std::string documents_to_jsonl(const std::vector<Document>& docs) {
    std::ostringstream out;
    for (const auto& doc : docs) {
        json j;
        j["doc_id"] = doc.doc_id;
        j["title"] = doc.title;
        if (doc.url) j["url"] = *doc.url;
        j["text"] = doc.text;
        j["source"] = to_string(doc.source);
        j["retrieval_round"] = doc.retrieval_round;
        j["relevance"] = to_string(doc.relevance);
        out << j.dump() << '\n';
    }
    return out.str();
}

std::vector<Document> documents_from_jsonl(const std::string& jsonl) {
    std::vector<Document> docs;
    for (const auto& line : util::split_lines(jsonl)) {
        if (util::trim(line).empty()) continue;
        json j = json::parse(line);
        Document doc;
        doc.doc_id = j.at("doc_id").get<std::string>();
        doc.title = j.value("title", "");
        if (j.contains("url") && !j["url"].is_null()) doc.url = j["url"].get<std::string>();
        doc.text = j.value("text", "");
        doc.source = doc_source_from_string(j.value("source", "local"));
        doc.retrieval_round = j.value("retrieval_round", 0);
        doc.relevance = relevance_from_string(j.value("relevance", "unjudged"));
        docs.push_back(std::move(doc));
    }
    return docs;
}

} // namespace cw
