#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "cw/gateway.hpp"

namespace cw {

// Scriptable chat provider for tests and offline runs. Resolution order:
// exact-prompt responses, then the handler registered for the call's
// template id. An unhandled call throws ProviderError.
class MockChatProvider : public ChatProvider {
public:
    using Handler = std::function<std::string(const ChatCall&)>;

    std::string id() const override { return "mock-chat"; }
    std::string complete(const ChatCall& call) override;

    void on_template(const std::string& template_id, Handler handler);
    void on_prompt(const std::string& prompt, std::string response);

    std::vector<ChatCall> calls() const;
    std::size_t call_count(const std::string& template_id) const;
    void clear_calls();

private:
    std::map<std::string, Handler> handlers_;
    std::unordered_map<std::string, std::string> exact_by_digest_;
    std::vector<ChatCall> calls_;
    mutable std::mutex mutex_;
};

// A mock wired with rules for every pipeline template, so any topic/corpus
// combination runs end to end without a network. The rules key off call
// bindings, not prompt wording:
//   keyword_gen       topic plus its longer words (at most 5 keywords)
//   rel_filter        RELEVANT iff a topic word appears in title+excerpt
//   depth_exp         keywords taken from "See also:" lines in the excerpt
//   summarize         "Summary of <title>: <first sentence>"
//   cluster_summarize first sentence of each member summary, joined
//   outline_gen       one body section per cluster id found in the prompt
//   section_gen       one sentence per evidence entry, citing it
//   intro/conclusion  short uncited frame text
//   refine            identity
//   rubric_judge      fixed score per dimension
//   support_judge     SUPPORTED iff the paragraph overlaps the document
std::shared_ptr<MockChatProvider> make_pipeline_mock_chat();

// Deterministic local embedder: signed bag-of-words hashing into `dim`
// buckets. Raw counts; the gateway applies L2 normalization.
class HashEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HashEmbeddingProvider(std::size_t dim = 8) : dim_(dim) {}

    std::string id() const override { return "hash-embed-" + std::to_string(dim_); }
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    std::size_t max_batch() const override { return 16; }

private:
    std::size_t dim_;
};

} // namespace cw
