#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "cw/providers_http.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cw/errors.hpp"

namespace cw {

using nlohmann::json;

namespace {

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string prefix; // path under the origin, no trailing slash
};

Endpoint parse_base_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("provider base_url must include a scheme: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    Endpoint ep;
    if (path_start == std::string::npos) {
        ep.origin = url;
    } else {
        ep.origin = url.substr(0, path_start);
        ep.prefix = url.substr(path_start);
    }
    while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
    return ep;
}

json post_json(const HttpProviderConfig& config, const std::string& route, const json& body) {
    Endpoint ep = parse_base_url(config.base_url);
    httplib::Client client(ep.origin);
    client.set_connection_timeout(0, config.timeout_ms * 1000LL);
    client.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (!config.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config.api_key);
    }
    auto result =
        client.Post(ep.prefix + route, headers, body.dump(), "application/json");
    if (!result) {
        throw ProviderError("POST " + route + " failed: " + httplib::to_string(result.error()));
    }
    if (result->status < 200 || result->status >= 300) {
        throw ProviderError("POST " + route + " returned status " +
                            std::to_string(result->status) + ": " + result->body);
    }
    try {
        return json::parse(result->body);
    } catch (const json::exception& e) {
        throw ProviderError("POST " + route + " returned unparseable body: " +
                            std::string(e.what()));
    }
}

class HttpChatProvider : public ChatProvider {
public:
    explicit HttpChatProvider(HttpProviderConfig config) : config_(std::move(config)) {}

    std::string id() const override { return "http-chat:" + config_.model; }

    std::string complete(const ChatCall& call) override {
        json body;
        body["model"] = config_.model;
        body["messages"] = json::array({{{"role", "user"}, {"content", call.prompt}}});
        body["temperature"] = call.temperature;
        body["max_tokens"] = call.max_output_tokens;
        json response = post_json(config_, "/chat/completions", body);
        try {
            return response.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw ProviderError("chat response missing choices[0].message.content: " +
                                std::string(e.what()));
        }
    }

private:
    HttpProviderConfig config_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(HttpProviderConfig config) : config_(std::move(config)) {}

    std::string id() const override { return "http-embed:" + config_.model; }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        json body;
        body["model"] = config_.model;
        body["input"] = texts;
        json response = post_json(config_, "/embeddings", body);
        std::vector<std::vector<double>> out(texts.size());
        try {
            for (const auto& item : response.at("data")) {
                std::size_t index = item.at("index").get<std::size_t>();
                if (index >= out.size()) throw ProviderError("embedding index out of range");
                out[index] = item.at("embedding").get<std::vector<double>>();
            }
        } catch (const json::exception& e) {
            throw ProviderError("embeddings response malformed: " + std::string(e.what()));
        }
        return out;
    }

private:
    HttpProviderConfig config_;
};

class HttpRerankProvider : public RerankProvider {
public:
    explicit HttpRerankProvider(HttpProviderConfig config) : config_(std::move(config)) {}

    std::string id() const override { return "http-rerank:" + config_.model; }

    std::vector<double> score(const std::string& query,
                              const std::vector<std::string>& documents) override {
        json body;
        body["model"] = config_.model;
        body["query"] = query;
        body["documents"] = documents;
        json response = post_json(config_, "/rerank", body);
        std::vector<double> out(documents.size(), 0.0);
        try {
            for (const auto& item : response.at("results")) {
                std::size_t index = item.at("index").get<std::size_t>();
                if (index >= out.size()) throw ProviderError("rerank index out of range");
                out[index] = item.at("relevance_score").get<double>();
            }
        } catch (const json::exception& e) {
            throw ProviderError("rerank response malformed: " + std::string(e.what()));
        }
        return out;
    }

private:
    HttpProviderConfig config_;
};

} // namespace

std::shared_ptr<ChatProvider> make_http_chat_provider(HttpProviderConfig config) {
    return std::make_shared<HttpChatProvider>(std::move(config));
}

std::shared_ptr<EmbeddingProvider> make_http_embedding_provider(HttpProviderConfig config) {
    return std::make_shared<HttpEmbeddingProvider>(std::move(config));
}

std::shared_ptr<RerankProvider> make_http_rerank_provider(HttpProviderConfig config) {
    return std::make_shared<HttpRerankProvider>(std::move(config));
}

} // namespace cw
