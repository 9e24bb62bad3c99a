#include "cw/gateway.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "cw/errors.hpp"
#include "cw/log.hpp"
#include "cw/util.hpp"

namespace cw {

using nlohmann::json;

const char* to_string(TemplateId id) {
    switch (id) {
        case TemplateId::keyword_gen: return "keyword_gen";
        case TemplateId::rel_filter: return "rel_filter";
        case TemplateId::depth_exp: return "depth_exp";
        case TemplateId::summarize: return "summarize";
        case TemplateId::cluster_summarize: return "cluster_summarize";
        case TemplateId::outline_gen: return "outline_gen";
        case TemplateId::section_gen: return "section_gen";
        case TemplateId::intro_gen: return "intro_gen";
        case TemplateId::conclusion_gen: return "conclusion_gen";
        case TemplateId::refine: return "refine";
        case TemplateId::rubric_judge: return "rubric_judge";
        case TemplateId::support_judge: return "support_judge";
    }
    return "?";
}

// -- TemplateRegistry ---------------------------------------------------------

TemplateRegistry::TemplateRegistry() {
    auto add = [this](TemplateId id, double temp, int max_out, bool judge, std::string body) {
        templates_[id] = PromptTemplate{id, std::move(body), temp, max_out, judge};
    };

    add(TemplateId::keyword_gen, 0.0, 256, false,
        R"(You are preparing to research the topic below before writing an article about it.

Topic: {topic}

List the search keywords that together cover the main aspects of the topic.
Output one keyword per line, numbered, with no commentary, for example:
1. first keyword
2. second keyword)");

    add(TemplateId::rel_filter, 0.0, 16, false,
        R"(Topic: {topic}

Document title: {title}
Document excerpt:
{excerpt}

Decide whether this document contains information useful for an article on the
topic. Answer with exactly one line:
VERDICT: RELEVANT
or
VERDICT: IRRELEVANT)");

    add(TemplateId::depth_exp, 0.0, 256, false,
        R"(Topic: {topic}

The document below is relevant to the topic. Identify subtopics, entities, or
details it mentions that deserve deeper research of their own.

Document title: {title}
Document excerpt:
{excerpt}

Output up to five new search keywords, one per line, numbered. Do not repeat
the topic itself. If nothing deserves deeper research, output nothing.)");

    add(TemplateId::summarize, 0.0, 512, false,
        R"(Summarize the document below in at most {budget} words. Keep concrete facts,
names, and figures. Output only the summary text.

Title: {title}

{text})");

    add(TemplateId::cluster_summarize, 0.0, 1024, false,
        R"(The following are summaries of documents that belong to one thematic group
collected for the topic "{topic}".

{summaries}

Write a single consolidated summary of what this group of documents covers, in
at most {budget} words. Mention every major subtopic that appears. Output only
the summary text.)");

    add(TemplateId::outline_gen, 0.7, 2048, false,
        R"(Design the outline of a long-form article about "{topic}".

The available source material has been organized into the knowledge clusters
listed below. Each cluster is identified by a numeric id and described by a
summary of its contents.

{cluster_block}

Rules:
- Output the outline in Markdown, one "## " heading line per section.
- The first section must be "## Introduction" and the last "## Conclusion".
- Every other section must cover exactly one knowledge cluster and its heading
  line must end with the tag <!-- cluster: ID -->. Use every cluster exactly
  once.
- Order the body sections so the article reads logically.
- Under a heading you may add "- " bullet lines for key points.
- Output only the outline.
{feedback})");

    add(TemplateId::section_gen, 0.7, 2048, false,
        R"(Write the section "{title}" of a long-form article about "{topic}".

Key points to cover:
{subpoints}

Use ONLY the numbered evidence documents below. After each claim, cite the
evidence that supports it with its bracketed number, for example [2]. Do not
state anything that is not in the evidence. Do not output a heading; output
only the section prose.

Evidence:
{evidence})");

    add(TemplateId::intro_gen, 0.7, 1024, false,
        R"(Write the introduction of an article about "{topic}".

The body of the article covers the following sections:
{digests}

Write one or two paragraphs that motivate the topic and preview the structure
of the article. Do not use citations. Output only the introduction text.)");

    add(TemplateId::conclusion_gen, 0.7, 1024, false,
        R"(Write the conclusion of an article about "{topic}".

The body of the article covered the following sections:
{digests}

Write one or two paragraphs that draw together the main findings. Do not use
citations. Output only the conclusion text.)");

    add(TemplateId::refine, 0.7, 4096, false,
        R"(Polish the article section below: fix grammar, smooth transitions, and keep
the style consistent with the preceding context. Keep every citation marker
such as [3] exactly where it stands; do not add, remove, or renumber
citations. Output only the polished text.

End of the preceding section:
{style_context}

Section:
{section})");

    add(TemplateId::rubric_judge, 0.0, 64, true,
        R"(You are grading an article about "{topic}".

Dimension: {dimension}
Definition: {definition}

Article:
{article}

Give a score from 0 to 5 (decimals allowed) for that dimension only. Answer
with exactly one line:
SCORE: <number>)");

    add(TemplateId::support_judge, 0.0, 16, true,
        R"(Paragraph:
{paragraph}

Document:
{document}

Judge strictly whether the document supports the paragraph: the paragraph must
be relevant to the document's content and must not conflict with it. Answer
with exactly one line:
VERDICT: SUPPORTED
or
VERDICT: UNSUPPORTED)");
}

const TemplateRegistry& TemplateRegistry::builtin() {
    static TemplateRegistry registry;
    return registry;
}

const PromptTemplate& TemplateRegistry::get(TemplateId id) const {
    return templates_.at(id);
}

std::string TemplateRegistry::render(const PromptTemplate& tmpl, const Bindings& bindings) {
    const std::string& body = tmpl.body;
    std::string out;
    out.reserve(body.size());
    std::size_t i = 0;
    while (i < body.size()) {
        if (body[i] != '{') {
            out.push_back(body[i]);
            ++i;
            continue;
        }
        std::size_t close = body.find('}', i + 1);
        if (close == std::string::npos) {
            out.append(body.substr(i));
            break;
        }
        std::string name = body.substr(i + 1, close - i - 1);
        auto it = bindings.find(name);
        if (it == bindings.end()) throw MissingBinding(name);
        out.append(it->second);
        i = close + 1;
    }
    return out;
}

// -- Gateway ------------------------------------------------------------------

Gateway::Gateway(GatewayConfig config,
                 std::shared_ptr<ChatProvider> chat,
                 std::shared_ptr<EmbeddingProvider> embedder,
                 std::shared_ptr<ChatProvider> judge,
                 std::shared_ptr<RerankProvider> reranker)
    : config_(std::move(config)),
      chat_(std::move(chat)),
      embedder_(std::move(embedder)),
      judge_(std::move(judge)),
      reranker_(std::move(reranker)) {
    if (!config_.token_counter) config_.token_counter = util::approx_token_count;
}

std::string Gateway::render_prompt(TemplateId id, const Bindings& bindings) const {
    return TemplateRegistry::render(templates().get(id), bindings);
}

std::size_t Gateway::count_tokens(std::string_view text) const {
    return config_.token_counter(text);
}

std::vector<TranscriptEntry> Gateway::transcript() const {
    std::lock_guard<std::mutex> lock(transcript_mutex_);
    return transcript_;
}

void Gateway::clear_transcript() {
    std::lock_guard<std::mutex> lock(transcript_mutex_);
    transcript_.clear();
}

std::optional<std::string> Gateway::cache_read(const std::string& digest) const {
    if (!config_.cache_dir) return std::nullopt;
    auto path = *config_.cache_dir / (digest + ".json");
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        json entry = json::parse(util::read_file(path));
        return entry.at("response").get<std::string>();
    } catch (const std::exception& e) {
        log::warn("unreadable cache entry {}: {}", path.string(), e.what());
        return std::nullopt;
    }
}

void Gateway::cache_write(const std::string& digest, const std::string& request_canonical,
                          const std::string& response) const {
    if (!config_.cache_dir) return;
    std::filesystem::create_directories(*config_.cache_dir);
    // No timestamp: identical requests must produce byte-identical entries.
    json entry;
    entry["request"] = request_canonical;
    entry["response"] = response;
    util::atomic_write_file(*config_.cache_dir / (digest + ".json"), entry.dump());
}

std::string Gateway::cached_or_call(const std::string& digest, const ChatCall& call,
                                    ChatProvider& provider) {
    if (auto hit = cache_read(digest)) return *hit;
    std::string last_error;
    for (int attempt = 0; attempt < std::max(1, config_.max_retries); ++attempt) {
        if (attempt > 0 && config_.retry_backoff_ms > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(config_.retry_backoff_ms * (1 << (attempt - 1))));
        }
        try {
            std::string response = provider.complete(call);
            json canonical;
            canonical["endpoint"] = "chat";
            canonical["provider"] = provider.id();
            canonical["template"] = call.template_id;
            canonical["prompt"] = call.prompt;
            canonical["temperature"] = call.temperature;
            canonical["max_output_tokens"] = call.max_output_tokens;
            cache_write(digest, canonical.dump(), response);
            return response;
        } catch (const ProviderError& e) {
            last_error = e.what();
        }
    }
    throw ProviderError("chat call failed after " + std::to_string(config_.max_retries) +
                        " attempts: " + last_error);
}

std::string Gateway::complete(const ChatRequest& request) {
    const PromptTemplate& tmpl = templates().get(request.template_id);
    std::string prompt = TemplateRegistry::render(tmpl, request.bindings);
    if (!request.nudge.empty()) {
        prompt += "\n\n";
        prompt += request.nudge;
    }

    std::size_t prompt_tokens = count_tokens(prompt);
    if (prompt_tokens > config_.max_context_tokens) {
        throw ContextOverflow("rendered prompt for " + std::string(to_string(tmpl.id)) + " is " +
                              std::to_string(prompt_tokens) + " tokens, cap is " +
                              std::to_string(config_.max_context_tokens));
    }
    if (config_.record_transcript) {
        std::lock_guard<std::mutex> lock(transcript_mutex_);
        transcript_.push_back({to_string(tmpl.id), prompt_tokens, prompt});
    }

    ChatCall call;
    call.template_id = to_string(tmpl.id);
    call.prompt = std::move(prompt);
    call.bindings = request.bindings;
    call.nudge = request.nudge;
    call.temperature = request.temperature.value_or(tmpl.default_temperature);
    call.max_output_tokens = request.max_output_tokens.value_or(tmpl.default_max_output_tokens);

    ChatProvider& provider = (tmpl.judge_route && judge_) ? *judge_ : *chat_;

    json key;
    key["endpoint"] = "chat";
    key["provider"] = provider.id();
    key["prompt"] = call.prompt;
    key["temperature"] = call.temperature;
    key["max_output_tokens"] = call.max_output_tokens;
    return cached_or_call(util::sha256_hex(key.dump()), call, provider);
}

std::vector<EmbeddingVector> Gateway::embed(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::size_t> misses;
    std::vector<std::string> digests(texts.size());

    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (texts[i].empty()) throw Error("embed: text must not be empty");
        json key;
        key["endpoint"] = "embed";
        key["provider"] = embedder_->id();
        key["text"] = texts[i];
        digests[i] = util::sha256_hex(key.dump());
        if (auto hit = cache_read(digests[i])) {
            json values = json::parse(*hit);
            out[i].values = values.get<std::vector<double>>();
        } else {
            misses.push_back(i);
        }
    }

    std::size_t batch_cap = std::max<std::size_t>(1, embedder_->max_batch());
    for (std::size_t start = 0; start < misses.size(); start += batch_cap) {
        std::size_t end = std::min(misses.size(), start + batch_cap);
        std::vector<std::string> batch;
        batch.reserve(end - start);
        for (std::size_t j = start; j < end; ++j) batch.push_back(texts[misses[j]]);
        auto vectors = embedder_->embed(batch);
        if (vectors.size() != batch.size()) {
            throw ProviderError("embedding provider returned " + std::to_string(vectors.size()) +
                                " vectors for " + std::to_string(batch.size()) + " inputs");
        }
        for (std::size_t j = start; j < end; ++j) {
            out[misses[j]].values = std::move(vectors[j - start]);
        }
    }

    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& v = out[i].values;
        if (v.empty()) throw ProviderError("empty embedding vector");
        {
            std::lock_guard<std::mutex> lock(dim_mutex_);
            if (embedding_dim_ == 0) embedding_dim_ = v.size();
            if (v.size() != embedding_dim_) {
                throw ProviderError("embedding dimension changed from " +
                                    std::to_string(embedding_dim_) + " to " +
                                    std::to_string(v.size()));
            }
        }
        double norm_sq = 0.0;
        for (double x : v) norm_sq += x * x;
        if (norm_sq < 1e-24) {
            std::fill(v.begin(), v.end(), 0.0);
            v[0] = 1.0;
        } else {
            double inv = 1.0 / std::sqrt(norm_sq);
            for (double& x : v) x *= inv;
        }
    }

    // Only freshly computed vectors need storing; cached ones round-tripped.
    for (std::size_t i : misses) {
        cache_write(digests[i], "embed:" + texts[i], json(out[i].values).dump());
    }
    return out;
}

std::vector<Document> Gateway::rerank(const std::string& query,
                                      const std::vector<Document>& candidates,
                                      int top_m) {
    if (top_m < 1) throw Error("rerank: top_m must be >= 1");
    std::vector<Document> unique;
    for (const auto& doc : candidates) {
        bool seen = std::any_of(unique.begin(), unique.end(),
                                [&](const Document& d) { return d.doc_id == doc.doc_id; });
        if (!seen) unique.push_back(doc);
    }
    if (unique.empty()) return {};

    std::vector<double> scores(unique.size());
    if (reranker_) {
        std::vector<std::string> texts;
        texts.reserve(unique.size());
        for (const auto& doc : unique) texts.push_back(doc.title + "\n" + doc.text);
        scores = reranker_->score(query, texts);
        if (scores.size() != unique.size()) {
            throw ProviderError("reranker returned " + std::to_string(scores.size()) +
                                " scores for " + std::to_string(unique.size()) + " candidates");
        }
    } else {
        std::vector<std::string> texts;
        texts.reserve(unique.size() + 1);
        texts.push_back(query);
        for (const auto& doc : unique) texts.push_back(doc.title + "\n" + doc.text);
        auto vectors = embed(texts);
        for (std::size_t i = 0; i < unique.size(); ++i) {
            double dot = 0.0;
            for (std::size_t k = 0; k < vectors[0].values.size(); ++k) {
                dot += vectors[0].values[k] * vectors[i + 1].values[k];
            }
            scores[i] = dot;
        }
    }

    std::vector<std::size_t> order(unique.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return unique[a].doc_id < unique[b].doc_id;
    });

    std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(top_m), unique.size());
    std::vector<Document> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(unique[order[i]]);
    return out;
}

} // namespace cw
