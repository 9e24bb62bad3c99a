#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cw/document.hpp"

namespace cw {

// Every instruction the pipeline sends to a model goes through one of these
// templates.
enum class TemplateId {
    keyword_gen,
    rel_filter,
    depth_exp,
    summarize,
    cluster_summarize,
    outline_gen,
    section_gen,
    intro_gen,
    conclusion_gen,
    refine,
    rubric_judge,
    support_judge,
};

const char* to_string(TemplateId id);

using Bindings = std::map<std::string, std::string>;

struct PromptTemplate {
    TemplateId id;
    std::string body; // text with {placeholder} slots
    double default_temperature = 0.0;
    int default_max_output_tokens = 1024;
    bool judge_route = false; // rubric/support judgments use the judge provider
};

class TemplateRegistry {
public:
    static const TemplateRegistry& builtin();
    const PromptTemplate& get(TemplateId id) const;

    // Single-pass placeholder substitution; substituted values are never
    // re-scanned. Throws MissingBinding naming the first unbound placeholder.
    static std::string render(const PromptTemplate& tmpl, const Bindings& bindings);

private:
    TemplateRegistry();
    std::map<TemplateId, PromptTemplate> templates_;
};

struct ChatRequest {
    TemplateId template_id;
    Bindings bindings;
    std::optional<double> temperature;     // defaults from the template
    std::optional<int> max_output_tokens;  // defaults from the template
    // Appended to the rendered prompt on a re-ask after a parse failure.
    // A non-empty nudge yields a different cache key than the first attempt.
    std::string nudge;
};

// What a chat provider receives. Mock providers dispatch on template_id and
// bindings; HTTP providers use only the rendered prompt and sampling params.
struct ChatCall {
    std::string template_id;
    std::string prompt;
    Bindings bindings;
    std::string nudge;
    double temperature = 0.0;
    int max_output_tokens = 1024;
};

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string complete(const ChatCall& call) = 0;
    virtual std::string id() const = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string id() const = 0;
    virtual std::size_t max_batch() const { return 64; }
};

struct EmbeddingVector {
    std::vector<double> values;
    std::size_t dim() const { return values.size(); }
};

// External reranker endpoint; when absent the gateway ranks by embedding
// cosine similarity.
class RerankProvider {
public:
    virtual ~RerankProvider() = default;
    virtual std::vector<double> score(const std::string& query,
                                      const std::vector<std::string>& documents) = 0;
    virtual std::string id() const = 0;
};

struct TranscriptEntry {
    std::string template_id;
    std::size_t prompt_tokens = 0;
    std::string prompt;
};

using TokenCounter = std::function<std::size_t(std::string_view)>;

struct GatewayConfig {
    std::size_t max_context_tokens = 24000;
    std::optional<std::filesystem::path> cache_dir; // unset disables the cache
    bool record_transcript = false;
    std::size_t concurrency = 4; // advisory cap callers use for parallel calls
    TokenCounter token_counter;  // unset -> approx_token_count
    int max_retries = 3;
    int retry_backoff_ms = 250;
};

// Single access point for model calls: prompt rendering, context-cap
// enforcement, a content-addressed response cache, and reranking. Shareable
// across threads.
class Gateway {
public:
    Gateway(GatewayConfig config,
            std::shared_ptr<ChatProvider> chat,
            std::shared_ptr<EmbeddingProvider> embedder,
            std::shared_ptr<ChatProvider> judge = nullptr,
            std::shared_ptr<RerankProvider> reranker = nullptr);

    std::string render_prompt(TemplateId id, const Bindings& bindings) const;

    // Renders, enforces the context cap, consults the cache, then calls the
    // provider (with bounded retries). Throws ContextOverflow or ProviderError.
    std::string complete(const ChatRequest& request);

    // One L2-normalized vector per input, same order. Batches are chunked to
    // the provider limit; individual texts are cached by content.
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts);

    // Top min(top_m, |candidates|) documents by descending relevance;
    // candidates are deduplicated by doc_id and ties break by doc_id
    // ascending.
    std::vector<Document> rerank(const std::string& query,
                                 const std::vector<Document>& candidates,
                                 int top_m);

    std::size_t count_tokens(std::string_view text) const;
    std::size_t max_context_tokens() const { return config_.max_context_tokens; }
    std::size_t concurrency() const { return config_.concurrency; }
    std::string embedding_provider_id() const { return embedder_->id(); }
    const TemplateRegistry& templates() const { return TemplateRegistry::builtin(); }

    std::vector<TranscriptEntry> transcript() const;
    void clear_transcript();

private:
    std::string cached_or_call(const std::string& digest, const ChatCall& call,
                               ChatProvider& provider);
    std::optional<std::string> cache_read(const std::string& digest) const;
    void cache_write(const std::string& digest, const std::string& request_canonical,
                     const std::string& response) const;

    GatewayConfig config_;
    std::shared_ptr<ChatProvider> chat_;
    std::shared_ptr<EmbeddingProvider> embedder_;
    std::shared_ptr<ChatProvider> judge_;
    std::shared_ptr<RerankProvider> reranker_;
    mutable std::mutex transcript_mutex_;
    std::vector<TranscriptEntry> transcript_;
    mutable std::mutex dim_mutex_;
    mutable std::size_t embedding_dim_ = 0; // fixed by the first embed call
};

} // namespace cw
