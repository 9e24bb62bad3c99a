#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cw/knowledge_source.hpp"

#include <algorithm>
#include <chrono>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "cw/errors.hpp"
#include "cw/log.hpp"
#include "cw/util.hpp"

namespace cw {

using nlohmann::json;

// -- LocalCorpusSource -------------------------------------------------------

namespace {

std::vector<Document> load_local_jsonl(const std::filesystem::path& path) {
    std::string content;
    try {
        content = util::read_file(path);
    } catch (const std::exception& e) {
        throw SourceUnavailable(e.what());
    }
    std::vector<Document> docs;
    std::size_t line_no = 0;
    for (const auto& line : util::split_lines(content)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SourceUnavailable(path.string() + ":" + std::to_string(line_no) +
                                    ": bad JSON line: " + e.what());
        }
        Document doc;
        doc.text = j.value("text", "");
        if (util::trim(doc.text).empty()) {
            log::warn("local corpus {}:{}: skipping entry with empty text",
                      path.string(), line_no);
            continue;
        }
        if (j.contains("id")) {
            doc.doc_id = "local:" + j["id"].get<std::string>();
        } else {
            doc.doc_id = "local:" + util::sha256_hex(doc.text).substr(0, 12);
        }
        doc.title = j.value("title", "");
        if (j.contains("url") && !j["url"].is_null()) doc.url = j["url"].get<std::string>();
        doc.source = DocSource::local;
        docs.push_back(std::move(doc));
    }
    return docs;
}

} // namespace

LocalCorpusSource::LocalCorpusSource(const std::filesystem::path& jsonl_path)
    : docs_(load_local_jsonl(jsonl_path)) {}

LocalCorpusSource::LocalCorpusSource(std::vector<Document> docs) : docs_(std::move(docs)) {}

std::vector<Document> LocalCorpusSource::search(const SearchQuery& query) const {
    ++search_calls_;
    std::string keyword = util::trim(query.keyword);
    if (keyword.empty()) throw Error("search keyword must not be empty");
    std::vector<Document> title_hits;
    std::vector<Document> body_hits;
    for (const auto& doc : docs_) {
        if (util::contains_ci(doc.title, keyword)) {
            title_hits.push_back(doc);
        } else if (util::contains_ci(doc.text, keyword)) {
            body_hits.push_back(doc);
        }
    }
    std::vector<Document> out = std::move(title_hits);
    out.insert(out.end(), body_hits.begin(), body_hits.end());
    if (out.size() > static_cast<std::size_t>(query.max_results)) {
        out.resize(static_cast<std::size_t>(query.max_results));
    }
    return out;
}

Document LocalCorpusSource::fetch_document(const std::string& doc_id) const {
    ++fetch_calls_;
    for (const auto& doc : docs_) {
        if (doc.doc_id == doc_id) return doc;
    }
    throw NotFound("local corpus has no document " + doc_id);
}

// -- WikipediaSource ----------------------------------------------------------

namespace {

struct ParsedUrl {
    std::string origin; // scheme://host[:port]
    std::string path;   // /w/api.php
};

ParsedUrl parse_api_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("wikipedia api_url must include a scheme: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/w/api.php"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string url_encode(const std::string& value) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : value) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xf]);
        }
    }
    return out;
}

// Canonical query string: sorted keys, so fixture hashes do not depend on
// parameter order.
std::string build_query(std::vector<std::pair<std::string, std::string>> params) {
    std::sort(params.begin(), params.end());
    std::string out;
    for (const auto& [k, v] : params) {
        if (!out.empty()) out.push_back('&');
        out += url_encode(k) + "=" + url_encode(v);
    }
    return out;
}

} // namespace

struct WikipediaSource::Impl {
    WikipediaConfig config;
    ParsedUrl url;
    mutable std::mutex fixture_mutex;

    explicit Impl(WikipediaConfig cfg) : config(std::move(cfg)), url(parse_api_url(config.api_url)) {}

    std::filesystem::path fixture_path(const std::string& query) const {
        return *config.fixture_dir / (util::sha256_hex(url.path + "?" + query) + ".json");
    }

    std::optional<std::string> fixture_lookup(const std::string& query) const {
        if (!config.fixture_dir) return std::nullopt;
        std::lock_guard<std::mutex> lock(fixture_mutex);
        auto path = fixture_path(query);
        if (!std::filesystem::exists(path)) return std::nullopt;
        return util::read_file(path);
    }

    void fixture_store(const std::string& query, const std::string& body) const {
        if (!config.fixture_dir) return;
        std::lock_guard<std::mutex> lock(fixture_mutex);
        std::filesystem::create_directories(*config.fixture_dir);
        util::atomic_write_file(fixture_path(query), body);
    }

    std::string get(const std::string& query) const {
        if (auto canned = fixture_lookup(query)) return *canned;
        if (config.offline) {
            throw SourceUnavailable("offline mode and no recorded fixture for query: " + query);
        }
        std::string last_error;
        for (int attempt = 0; attempt < std::max(1, config.max_retries); ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(
                    config.retry_backoff_ms * (1 << (attempt - 1))));
            }
            httplib::Client client(url.origin);
            client.set_connection_timeout(std::chrono::milliseconds(config.timeout_ms));
            client.set_read_timeout(std::chrono::milliseconds(config.timeout_ms));
            client.set_default_headers({{"User-Agent", config.user_agent}});
            auto res = client.Get(url.path + "?" + query);
            if (res && res->status == 200) {
                fixture_store(query, res->body);
                return res->body;
            }
            last_error = res ? "HTTP " + std::to_string(res->status)
                             : "transport error: " + httplib::to_string(res.error());
        }
        throw SourceUnavailable("wikipedia request failed after " +
                                std::to_string(config.max_retries) + " attempts (" +
                                last_error + ")");
    }

    json get_json(const std::string& query) const {
        std::string body = get(query);
        try {
            return json::parse(body);
        } catch (const json::exception& e) {
            throw SourceUnavailable(std::string("wikipedia returned malformed JSON: ") + e.what());
        }
    }

    Document fetch_page(long long pageid) const {
        auto j = get_json(build_query({{"action", "query"},
                                       {"format", "json"},
                                       {"prop", "extracts|info"},
                                       {"inprop", "url"},
                                       {"explaintext", "1"},
                                       {"pageids", std::to_string(pageid)}}));
        const auto pages = j.value("query", json::object()).value("pages", json::object());
        auto it = pages.find(std::to_string(pageid));
        if (it == pages.end() || it->contains("missing")) {
            throw NotFound("wikipedia page " + std::to_string(pageid) + " does not exist");
        }
        Document doc;
        doc.doc_id = "wikipedia:" + std::to_string(pageid);
        doc.title = it->value("title", "");
        doc.text = it->value("extract", "");
        if (it->contains("fullurl")) doc.url = (*it)["fullurl"].get<std::string>();
        doc.source = DocSource::wikipedia;
        return doc;
    }
};

WikipediaSource::WikipediaSource(WikipediaConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

WikipediaSource::~WikipediaSource() = default;

std::vector<Document> WikipediaSource::search(const SearchQuery& query) const {
    ++search_calls_;
    std::string keyword = util::trim(query.keyword);
    if (keyword.empty()) throw Error("search keyword must not be empty");
    auto j = impl_->get_json(build_query({{"action", "query"},
                                          {"format", "json"},
                                          {"list", "search"},
                                          {"srsearch", keyword},
                                          {"srlimit", std::to_string(query.max_results)}}));
    std::vector<long long> pageids;
    for (const auto& hit : j.value("query", json::object()).value("search", json::array())) {
        if (hit.contains("pageid")) pageids.push_back(hit["pageid"].get<long long>());
    }
    // Full text needs one extract request per page; fetch under the
    // configured concurrency cap and keep the ranking order.
    std::vector<std::optional<Document>> fetched(pageids.size());
    util::parallel_for(pageids.size(), static_cast<std::size_t>(impl_->config.concurrency),
                       [&](std::size_t i) { fetched[i] = impl_->fetch_page(pageids[i]); });
    std::vector<Document> out;
    for (auto& slot : fetched) {
        if (!slot) continue;
        if (util::trim(slot->text).empty()) {
            log::warn("wikipedia page {} has an empty extract; dropped", slot->doc_id);
            continue;
        }
        out.push_back(std::move(*slot));
    }
    return out;
}

Document WikipediaSource::fetch_document(const std::string& doc_id) const {
    ++fetch_calls_;
    const std::string prefix = "wikipedia:";
    if (doc_id.rfind(prefix, 0) != 0) {
        throw NotFound("not a wikipedia doc id: " + doc_id);
    }
    long long pageid = 0;
    try {
        pageid = std::stoll(doc_id.substr(prefix.size()));
    } catch (const std::exception&) {
        throw NotFound("malformed wikipedia doc id: " + doc_id);
    }
    return impl_->fetch_page(pageid);
}

} // namespace cw
