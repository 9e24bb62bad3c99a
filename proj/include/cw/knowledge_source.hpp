#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cw/document.hpp"

namespace cw {

// Uniform retrieval interface over external knowledge bases. Implementations
// are immutable after construction and safe to share across threads.
class KnowledgeSource {
public:
    virtual ~KnowledgeSource() = default;

    // Returns at most query.max_results documents with full text, in the
    // source's ranking order. An empty result is not an error.
    virtual std::vector<Document> search(const SearchQuery& query) const = 0;

    // Fetch one document by id. Idempotent. Throws NotFound for unknown ids.
    virtual Document fetch_document(const std::string& doc_id) const = 0;

    virtual std::string name() const = 0;

    std::size_t search_calls() const { return search_calls_.load(); }
    std::size_t fetch_calls() const { return fetch_calls_.load(); }

protected:
    mutable std::atomic<std::size_t> search_calls_{0};
    mutable std::atomic<std::size_t> fetch_calls_{0};
};

// -- local corpus ---------------------------------------------------------
// Reads a JSON Lines file: one object per line with fields id, title, text,
// and optional url. Lines with empty text are skipped with a warning.
// Search matches the keyword case-insensitively; title matches rank ahead of
// body matches, file order breaks ties.
class LocalCorpusSource : public KnowledgeSource {
public:
    explicit LocalCorpusSource(const std::filesystem::path& jsonl_path);
    explicit LocalCorpusSource(std::vector<Document> docs);

    std::vector<Document> search(const SearchQuery& query) const override;
    Document fetch_document(const std::string& doc_id) const override;
    std::string name() const override { return "local"; }

    const std::vector<Document>& documents() const { return docs_; }

private:
    std::vector<Document> docs_;
};

// -- Wikipedia ---------------------------------------------------------------

struct WikipediaConfig {
    std::string api_url = "https://en.wikipedia.org/w/api.php";
    std::string user_agent = "convergewriter/0.1";
    int timeout_ms = 30000;
    int max_retries = 3;
    int retry_backoff_ms = 250; // doubles per attempt
    int concurrency = 4;        // parallel full-text fetches per search
    // When set, every HTTP response body is stored under
    // fixture_dir/<sha256(query)>.json; offline mode answers from that
    // directory only.
    std::optional<std::filesystem::path> fixture_dir;
    bool offline = false;
};

// Client for the MediaWiki action API: list=search for ranking,
// prop=extracts&explaintext=1 (plus inprop=url) for full text. Only these
// two read endpoints are used. doc_id scheme: "wikipedia:<pageid>".
class WikipediaSource : public KnowledgeSource {
public:
    explicit WikipediaSource(WikipediaConfig config);
    ~WikipediaSource() override;

    std::vector<Document> search(const SearchQuery& query) const override;
    Document fetch_document(const std::string& doc_id) const override;
    std::string name() const override { return "wikipedia"; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace cw
