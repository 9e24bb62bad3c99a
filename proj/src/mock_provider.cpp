#include "cw/mock_provider.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "cw/errors.hpp"
#include "cw/util.hpp"

namespace cw {

namespace {

std::vector<std::string> tokenize_words(std::string_view text, std::size_t min_len) {
    std::vector<std::string> words;
    std::string current;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!current.empty()) {
            if (current.size() >= min_len) words.push_back(current);
            current.clear();
        }
    }
    if (current.size() >= min_len) words.push_back(current);
    return words;
}

std::string numbered_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += std::to_string(i + 1) + ". " + items[i] + "\n";
    }
    return out;
}

const std::string& binding(const ChatCall& call, const std::string& name) {
    auto it = call.bindings.find(name);
    if (it == call.bindings.end()) {
        throw ProviderError("mock rule for " + call.template_id + " needs binding " + name);
    }
    return it->second;
}

std::string rule_keyword_gen(const ChatCall& call) {
    const std::string& topic = binding(call, "topic");
    std::vector<std::string> keywords{topic};
    for (const auto& word : tokenize_words(topic, 4)) {
        if (std::find(keywords.begin(), keywords.end(), word) == keywords.end()) {
            keywords.push_back(word);
        }
        if (keywords.size() == 5) break;
    }
    return numbered_list(keywords);
}

bool topic_overlaps(const std::string& topic, const std::string& haystack_raw) {
    std::string haystack = util::to_lower(haystack_raw);
    auto words = tokenize_words(topic, 4);
    if (words.empty()) return haystack.find(util::to_lower(topic)) != std::string::npos;
    return std::any_of(words.begin(), words.end(), [&](const std::string& w) {
        return haystack.find(w) != std::string::npos;
    });
}

std::string rule_rel_filter(const ChatCall& call) {
    bool hit = topic_overlaps(binding(call, "topic"),
                              binding(call, "title") + " " + binding(call, "excerpt"));
    return hit ? "VERDICT: RELEVANT" : "VERDICT: IRRELEVANT";
}

std::string rule_depth_exp(const ChatCall& call) {
    std::vector<std::string> keywords;
    for (const auto& line : util::split_lines(binding(call, "excerpt"))) {
        std::string trimmed = util::trim(line);
        const std::string marker = "See also:";
        if (trimmed.rfind(marker, 0) != 0) continue;
        std::stringstream rest(trimmed.substr(marker.size()));
        std::string item;
        while (std::getline(rest, item, ',')) {
            std::string keyword = util::trim(item);
            if (keyword.empty()) continue;
            if (std::find(keywords.begin(), keywords.end(), keyword) == keywords.end()) {
                keywords.push_back(keyword);
            }
        }
    }
    if (keywords.size() > 5) keywords.resize(5);
    return numbered_list(keywords);
}

std::string rule_summarize(const ChatCall& call) {
    return "Summary of " + binding(call, "title") + ": " +
           util::first_sentence(binding(call, "text"));
}

std::string rule_cluster_summarize(const ChatCall& call) {
    std::string out;
    for (const auto& line : util::split_lines(binding(call, "summaries"))) {
        std::string item = util::trim(line);
        if (item.empty()) continue;
        std::size_t start = 0;
        while (start < item.size() &&
               (std::isdigit(static_cast<unsigned char>(item[start])) || item[start] == '.' ||
                item[start] == '-' || item[start] == ')' || item[start] == ' ')) {
            ++start;
        }
        if (!out.empty()) out += " ";
        out += util::first_sentence(item.substr(start));
    }
    return out.empty() ? "No material." : out;
}

std::string rule_outline_gen(const ChatCall& call) {
    const std::string& block = binding(call, "cluster_block");
    std::string out = "## Introduction\n";
    const std::string marker = "[CLUSTER ";
    std::size_t pos = 0;
    while ((pos = block.find(marker, pos)) != std::string::npos) {
        std::size_t id_start = pos + marker.size();
        std::size_t id_end = block.find(']', id_start);
        if (id_end == std::string::npos) break;
        std::string id = block.substr(id_start, id_end - id_start);
        std::string rest = block.substr(id_end + 1, block.find('\n', id_end) - id_end - 1);
        auto words = tokenize_words(rest, 1);
        std::string heading;
        for (std::size_t i = 0; i < words.size() && i < 4; ++i) {
            if (!heading.empty()) heading += " ";
            heading += words[i];
        }
        if (heading.empty()) heading = "Topic group " + id;
        out += "## " + heading + " <!-- cluster: " + id + " -->\n";
        out += "- main points of group " + id + "\n";
        pos = id_end;
    }
    out += "## Conclusion\n";
    return out;
}

std::string rule_section_gen(const ChatCall& call) {
    std::string out;
    std::string pending_number;
    std::string pending_text;
    auto flush = [&]() {
        if (pending_number.empty()) return;
        if (!out.empty()) out += " ";
        std::string sentence = util::first_sentence(pending_text);
        if (!sentence.empty() && sentence.back() == '.') sentence.pop_back();
        out += sentence + " [" + pending_number + "].";
        pending_number.clear();
        pending_text.clear();
    };
    for (const auto& line : util::split_lines(binding(call, "evidence"))) {
        std::string item = util::trim(line);
        if (item.size() >= 3 && item[0] == '[') {
            std::size_t close = item.find(']');
            if (close != std::string::npos &&
                std::all_of(item.begin() + 1, item.begin() + close, [](char c) {
                    return std::isdigit(static_cast<unsigned char>(c));
                }) &&
                close > 1) {
                flush();
                pending_number = item.substr(1, close - 1);
                pending_text = util::trim(item.substr(close + 1));
                continue;
            }
        }
        if (!pending_number.empty() && !item.empty()) {
            pending_text += pending_text.empty() ? item : " " + item;
        }
    }
    flush();
    return out.empty() ? "No evidence was available for this section." : out;
}

std::string rule_intro_gen(const ChatCall& call) {
    const std::string& topic = binding(call, "topic");
    std::size_t sections = 0;
    for (const auto& line : util::split_lines(binding(call, "digests"))) {
        if (!util::trim(line).empty()) ++sections;
    }
    return "This article surveys " + topic + " using the collected source material. " +
           "The " + std::to_string(sections) +
           " sections that follow each examine one aspect of the subject in turn.";
}

std::string rule_conclusion_gen(const ChatCall& call) {
    return "Taken together, the sections above outline what the collected sources "
           "establish about " +
           binding(call, "topic") +
           ". The grouped evidence covers the main aspects of the subject, and the "
           "remaining open questions follow the same divisions.";
}

std::string rule_refine(const ChatCall& call) { return binding(call, "section"); }

std::string rule_rubric_judge(const ChatCall&) { return "SCORE: 4.5"; }

std::string rule_support_judge(const ChatCall& call) {
    auto words = tokenize_words(binding(call, "paragraph"), 5);
    std::set<std::string> distinct(words.begin(), words.end());
    if (distinct.empty()) return "VERDICT: UNSUPPORTED";
    std::string document = util::to_lower(binding(call, "document"));
    std::size_t hits = 0;
    for (const auto& word : distinct) {
        if (document.find(word) != std::string::npos) ++hits;
    }
    return 2 * hits >= distinct.size() ? "VERDICT: SUPPORTED" : "VERDICT: UNSUPPORTED";
}

} // namespace

std::string MockChatProvider::complete(const ChatCall& call) {
    Handler handler;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        calls_.push_back(call);
        auto exact = exact_by_digest_.find(util::sha256_hex(call.prompt));
        if (exact != exact_by_digest_.end()) return exact->second;
        auto it = handlers_.find(call.template_id);
        if (it != handlers_.end()) handler = it->second;
    }
    if (!handler) {
        throw ProviderError("mock has no rule for template " + call.template_id);
    }
    return handler(call);
}

void MockChatProvider::on_template(const std::string& template_id, Handler handler) {
    std::lock_guard<std::mutex> lock(mutex_);
    handlers_[template_id] = std::move(handler);
}

void MockChatProvider::on_prompt(const std::string& prompt, std::string response) {
    std::lock_guard<std::mutex> lock(mutex_);
    exact_by_digest_[util::sha256_hex(prompt)] = std::move(response);
}

std::vector<ChatCall> MockChatProvider::calls() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return calls_;
}

std::size_t MockChatProvider::call_count(const std::string& template_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    return static_cast<std::size_t>(
        std::count_if(calls_.begin(), calls_.end(),
                      [&](const ChatCall& c) { return c.template_id == template_id; }));
}

void MockChatProvider::clear_calls() {
    std::lock_guard<std::mutex> lock(mutex_);
    calls_.clear();
}

std::shared_ptr<MockChatProvider> make_pipeline_mock_chat() {
    auto mock = std::make_shared<MockChatProvider>();
    mock->on_template("keyword_gen", rule_keyword_gen);
    mock->on_template("rel_filter", rule_rel_filter);
    mock->on_template("depth_exp", rule_depth_exp);
    mock->on_template("summarize", rule_summarize);
    mock->on_template("cluster_summarize", rule_cluster_summarize);
    mock->on_template("outline_gen", rule_outline_gen);
    mock->on_template("section_gen", rule_section_gen);
    mock->on_template("intro_gen", rule_intro_gen);
    mock->on_template("conclusion_gen", rule_conclusion_gen);
    mock->on_template("refine", rule_refine);
    mock->on_template("rubric_judge", rule_rubric_judge);
    mock->on_template("support_judge", rule_support_judge);
    return mock;
}

std::vector<std::vector<double>> HashEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> v(dim_, 0.0);
        for (const auto& word : tokenize_words(text, 1)) {
            std::uint64_t h = util::fnv1a64(word);
            double sign = ((h >> 32) & 1u) ? 1.0 : -1.0;
            v[h % dim_] += sign;
        }
        out.push_back(std::move(v));
    }
    return out;
}

} // namespace cw
