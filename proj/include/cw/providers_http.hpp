#pragma once

#include <memory>
#include <string>

#include "cw/gateway.hpp"

namespace cw {

// OpenAI-style endpoints: POST {base_url}/chat/completions, /embeddings,
// /rerank. The api_key is sent as a bearer token when non-empty.
struct HttpProviderConfig {
    std::string base_url; // e.g. https://api.example.com/v1
    std::string api_key;
    std::string model;
    int timeout_ms = 60000;
};

std::shared_ptr<ChatProvider> make_http_chat_provider(HttpProviderConfig config);
std::shared_ptr<EmbeddingProvider> make_http_embedding_provider(HttpProviderConfig config);
std::shared_ptr<RerankProvider> make_http_rerank_provider(HttpProviderConfig config);

} // namespace cw
