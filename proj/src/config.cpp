#include "cw/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <map>
#include <set>

#include "cw/errors.hpp"
#include "cw/util.hpp"

namespace cw {

using nlohmann::json;

const char* to_string(RunMode mode) {
    return mode == RunMode::full ? "full" : "no-clustering";
}

RunMode run_mode_from_string(const std::string& s) {
    if (s == "full") return RunMode::full;
    if (s == "no-clustering" || s == "no_clustering") return RunMode::no_clustering;
    throw ConfigError("unknown mode: " + s + " (expected full or no-clustering)");
}

const char* to_string(MappingMode mode) {
    return mode == MappingMode::bijective ? "bijective" : "injective";
}

MappingMode mapping_mode_from_string(const std::string& s) {
    if (s == "bijective") return MappingMode::bijective;
    if (s == "injective") return MappingMode::injective;
    throw ConfigError("unknown mapping mode: " + s + " (expected bijective or injective)");
}

namespace {

std::string interpolate_env(const std::string& value) {
    std::string out;
    std::size_t i = 0;
    while (i < value.size()) {
        if (value[i] == '$' && i + 1 < value.size() && value[i + 1] == '{') {
            std::size_t close = value.find('}', i + 2);
            if (close == std::string::npos) {
                throw ConfigError("unterminated ${...} in value: " + value);
            }
            std::string name = value.substr(i + 2, close - i - 2);
            const char* env = std::getenv(name.c_str());
            if (env == nullptr) {
                throw ConfigError("environment variable not set: " + name);
            }
            out += env;
            i = close + 1;
        } else {
            out += value[i];
            ++i;
        }
    }
    return out;
}

using Section = std::map<std::string, std::string>;

std::map<std::string, Section> parse_sections(const std::string& text) {
    std::map<std::string, Section> sections;
    std::string current = "run";
    std::size_t line_no = 0;
    for (const auto& raw_line : util::split_lines(text)) {
        ++line_no;
        std::string line = util::trim(raw_line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("line " + std::to_string(line_no) +
                                  ": unterminated section header");
            }
            current = util::trim(line.substr(1, line.size() - 2));
            if (current.empty()) {
                throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
            }
            sections[current];
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = util::trim(line.substr(0, eq));
        std::string value = util::trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        }
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        sections[current][key] = interpolate_env(value);
    }
    return sections;
}

// Tracks which keys a section handler consumed, so typos surface as errors.
class SectionReader {
public:
    SectionReader(const std::string& name, const Section* section)
        : name_(name), section_(section) {}

    std::optional<std::string> raw(const std::string& key) {
        seen_.insert(key);
        if (section_ == nullptr) return std::nullopt;
        auto it = section_->find(key);
        if (it == section_->end()) return std::nullopt;
        return it->second;
    }

    void get(const std::string& key, std::string& out) {
        if (auto v = raw(key)) out = *v;
    }

    void get(const std::string& key, std::filesystem::path& out) {
        if (auto v = raw(key)) out = *v;
    }

    void get(const std::string& key, std::optional<std::filesystem::path>& out) {
        if (auto v = raw(key)) out = *v;
    }

    void get(const std::string& key, bool& out) {
        auto v = raw(key);
        if (!v) return;
        if (*v == "true") {
            out = true;
        } else if (*v == "false") {
            out = false;
        } else {
            throw ConfigError(name_ + "." + key + ": expected true or false, got " + *v);
        }
    }

    template <typename Int>
    void get_int(const std::string& key, Int& out) {
        auto v = raw(key);
        if (!v) return;
        try {
            std::size_t used = 0;
            long long parsed = std::stoll(*v, &used);
            if (used != v->size()) throw std::invalid_argument("trailing characters");
            if (parsed < 0 && static_cast<Int>(-1) > Int{0}) {
                throw std::invalid_argument("negative");
            }
            out = static_cast<Int>(parsed);
        } catch (const std::exception&) {
            throw ConfigError(name_ + "." + key + ": expected an integer, got " + *v);
        }
    }

    void get_seed(const std::string& key, std::uint64_t& out) {
        auto v = raw(key);
        if (!v) return;
        try {
            std::size_t used = 0;
            out = std::stoull(*v, &used);
            if (used != v->size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ConfigError(name_ + "." + key + ": expected an unsigned integer, got " + *v);
        }
    }

    void finish() const {
        if (section_ == nullptr) return;
        for (const auto& [key, value] : *section_) {
            if (!seen_.contains(key)) {
                throw ConfigError("unknown key " + name_ + "." + key);
            }
        }
    }

private:
    std::string name_;
    const Section* section_;
    std::set<std::string> seen_;
};

const Section* find_section(const std::map<std::string, Section>& sections,
                            const std::string& name) {
    auto it = sections.find(name);
    return it == sections.end() ? nullptr : &it->second;
}

void read_provider(const std::map<std::string, Section>& sections, const std::string& name,
                   ProviderConfig& out) {
    SectionReader reader(name, find_section(sections, name));
    reader.get("provider", out.provider);
    reader.get("base_url", out.base_url);
    reader.get("api_key", out.api_key);
    reader.get("model", out.model);
    reader.get_int("timeout_ms", out.timeout_ms);
    reader.get_int("dim", out.dim);
    reader.finish();
}

void require_provider(const std::string& section, const std::string& value,
                      std::initializer_list<const char*> allowed) {
    for (const char* option : allowed) {
        if (value == option) return;
    }
    std::string options;
    for (const char* option : allowed) {
        if (!options.empty()) options += ", ";
        options += option;
    }
    throw ConfigError(section + ".provider must be one of {" + options + "}, got " + value);
}

} // namespace

void RunConfig::validate() const {
    if (max_context_tokens == 0) throw ConfigError("max_context_tokens must be positive");
    if (k_min < 2) throw ConfigError("k_min must be at least 2");
    if (k_min > k_max) throw ConfigError("k_min must not exceed k_max");
    if (top_m < 1) throw ConfigError("top_m must be at least 1");
    if (sample_size == 0) throw ConfigError("sample_size must be positive");
    if (concurrency == 0) throw ConfigError("concurrency must be positive");
    if (ablation_parts == 0) throw ConfigError("ablation_parts must be positive");
    if (leaf_budget_tokens == 0 || cluster_budget_tokens == 0 || max_input_tokens == 0) {
        throw ConfigError("summary budgets must be positive");
    }
    if (outline_max_retries < 0) throw ConfigError("outline_max_retries must not be negative");
    require_provider("chat", chat.provider, {"mock", "openai"});
    require_provider("embedding", embedding.provider, {"hash", "openai"});
    require_provider("rerank", rerank.provider, {"none", "http"});
    require_provider("judge", judge.provider, {"none", "openai"});
    if (chat.provider == "openai" && chat.base_url.empty()) {
        throw ConfigError("chat.base_url is required for the openai provider");
    }
    if (embedding.provider == "openai" && embedding.base_url.empty()) {
        throw ConfigError("embedding.base_url is required for the openai provider");
    }
    if (embedding.provider == "hash" && embedding.dim == 0) {
        throw ConfigError("embedding.dim must be positive");
    }
    if (source.type != "local" && source.type != "wikipedia") {
        throw ConfigError("source.type must be local or wikipedia, got " + source.type);
    }
    if (source.type == "local" && source.path.empty()) {
        throw ConfigError("source.path is required for the local source");
    }
}

std::string overrides_to_json(const RunOverrides& overrides) {
    json doc = json::object();
    if (overrides.topic) doc["topic"] = *overrides.topic;
    if (overrides.mode) doc["mode"] = *overrides.mode;
    if (overrides.seed) doc["seed"] = *overrides.seed;
    if (overrides.out_dir) doc["out_dir"] = *overrides.out_dir;
    if (overrides.ablation_parts) doc["ablation_parts"] = *overrides.ablation_parts;
    return doc.dump();
}

RunOverrides overrides_from_json(const std::string& json_text) {
    json doc = json::parse(json_text);
    RunOverrides overrides;
    if (doc.contains("topic")) overrides.topic = doc["topic"].get<std::string>();
    if (doc.contains("mode")) overrides.mode = doc["mode"].get<std::string>();
    if (doc.contains("seed")) overrides.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("out_dir")) overrides.out_dir = doc["out_dir"].get<std::string>();
    if (doc.contains("ablation_parts")) {
        overrides.ablation_parts = doc["ablation_parts"].get<std::size_t>();
    }
    return overrides;
}

RunConfig parse_run_config(const std::string& config_text, const RunOverrides& overrides) {
    auto sections = parse_sections(config_text);
    for (const auto& [name, section] : sections) {
        static const std::set<std::string> known = {"run",    "limits", "mapping", "source",
                                                    "chat",   "embedding", "rerank",
                                                    "judge"};
        if (!known.contains(name)) throw ConfigError("unknown section [" + name + "]");
    }

    RunConfig config;
    config.config_text = config_text;

    {
        SectionReader run("run", find_section(sections, "run"));
        run.get("topic", config.topic);
        std::string mode;
        run.get("mode", mode);
        if (!mode.empty()) config.mode = run_mode_from_string(mode);
        run.get_seed("seed", config.seed);
        run.get("out_dir", config.out_dir);
        run.finish();
    }
    {
        SectionReader limits("limits", find_section(sections, "limits"));
        limits.get_int("k_min", config.k_min);
        limits.get_int("k_max", config.k_max);
        limits.get_int("sample_size", config.sample_size);
        limits.get_int("top_m", config.top_m);
        limits.get_int("max_context_tokens", config.max_context_tokens);
        limits.get_int("leaf_budget_tokens", config.leaf_budget_tokens);
        limits.get_int("cluster_budget_tokens", config.cluster_budget_tokens);
        limits.get_int("max_input_tokens", config.max_input_tokens);
        limits.get_int("evidence_body_tokens", config.evidence_body_tokens);
        limits.get_int("style_context_bytes", config.style_context_bytes);
        limits.get_int("max_results_per_keyword", config.max_results_per_keyword);
        limits.get_int("judge_excerpt_tokens", config.judge_excerpt_tokens);
        limits.get_int("max_keywords_per_doc", config.max_keywords_per_doc);
        limits.get_int("max_expanded_keywords", config.max_expanded_keywords);
        limits.get_int("min_paragraph_words", config.min_paragraph_words);
        limits.get_int("concurrency", config.concurrency);
        limits.get_int("max_retries", config.gateway_max_retries);
        limits.get("record_transcript", config.record_transcript);
        limits.get_int("outline_max_retries", config.outline_max_retries);
        limits.get_int("ablation_parts", config.ablation_parts);
        limits.finish();
    }
    {
        SectionReader mapping("mapping", find_section(sections, "mapping"));
        std::string mode;
        mapping.get("mode", mode);
        if (!mode.empty()) config.mapping = mapping_mode_from_string(mode);
        mapping.finish();
    }
    {
        SectionReader source("source", find_section(sections, "source"));
        source.get("type", config.source.type);
        source.get("path", config.source.path);
        source.get("api_url", config.source.api_url);
        source.get("user_agent", config.source.user_agent);
        source.get_int("timeout_ms", config.source.timeout_ms);
        source.get("fixture_dir", config.source.fixture_dir);
        source.get("offline", config.source.offline);
        source.finish();
    }
    read_provider(sections, "chat", config.chat);
    config.embedding.provider = "hash";
    read_provider(sections, "embedding", config.embedding);
    read_provider(sections, "rerank", config.rerank);
    read_provider(sections, "judge", config.judge);

    if (config.chat.provider == "none") config.chat.provider = "mock";

    if (overrides.topic) config.topic = *overrides.topic;
    if (overrides.mode) config.mode = run_mode_from_string(*overrides.mode);
    if (overrides.seed) config.seed = *overrides.seed;
    if (overrides.out_dir) config.out_dir = *overrides.out_dir;
    if (overrides.ablation_parts) config.ablation_parts = *overrides.ablation_parts;

    config.validate();
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunOverrides& overrides) {
    std::string text;
    try {
        text = util::read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError("cannot read config file " + path.string() + ": " + e.what());
    }
    return parse_run_config(text, overrides);
}

} // namespace cw
