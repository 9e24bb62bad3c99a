#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "cw/outline.hpp"

namespace cw {

enum class RunMode { full, no_clustering };

const char* to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& s);

const char* to_string(MappingMode mode);
MappingMode mapping_mode_from_string(const std::string& s);

// One model endpoint block ([chat], [embedding], [rerank], [judge]).
struct ProviderConfig {
    std::string provider = "none"; // mock | openai | hash | http | none
    std::string base_url;
    std::string api_key;
    std::string model;
    int timeout_ms = 60000;
    std::size_t dim = 8; // hash embedder width
};

struct SourceConfig {
    std::string type = "local"; // local | wikipedia
    std::filesystem::path path; // local corpus JSONL
    std::string api_url = "https://en.wikipedia.org/w/api.php";
    std::string user_agent = "convergewriter/0.1";
    int timeout_ms = 30000;
    std::optional<std::filesystem::path> fixture_dir;
    bool offline = false;
};

// Everything one run needs, resolved from the config file plus command-line
// overrides. The original file text and overrides ride along so a manifest
// can reproduce the exact configuration later.
struct RunConfig {
    std::string topic;
    RunMode mode = RunMode::full;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;

    std::size_t k_min = 2;
    std::size_t k_max = 8;
    std::size_t sample_size = 512; // silhouette sample
    int top_m = 6;
    std::size_t max_context_tokens = 24000;

    std::size_t leaf_budget_tokens = 300;
    std::size_t cluster_budget_tokens = 800;
    std::size_t max_input_tokens = 6000;
    std::size_t evidence_body_tokens = 800;
    std::size_t style_context_bytes = 400;

    int max_results_per_keyword = 5;
    std::size_t judge_excerpt_tokens = 1500;
    std::size_t max_keywords_per_doc = 5;
    std::size_t max_expanded_keywords = 40;
    std::size_t min_paragraph_words = 20;

    std::size_t concurrency = 4;
    int gateway_max_retries = 3;
    bool record_transcript = false;

    MappingMode mapping = MappingMode::bijective;
    int outline_max_retries = 2;
    std::size_t ablation_parts = 5;

    ProviderConfig chat;
    ProviderConfig embedding;
    ProviderConfig rerank;
    ProviderConfig judge;
    SourceConfig source;

    std::string config_text; // the file this config was parsed from

    // Throws ConfigError on any violated invariant.
    void validate() const;
};

// Command-line values that take precedence over the config file.
struct RunOverrides {
    std::optional<std::string> topic;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> ablation_parts;
};

std::string overrides_to_json(const RunOverrides& overrides);
RunOverrides overrides_from_json(const std::string& json_text);

// Parses the TOML-like config text: [section] headers, key = value lines,
// "#" comment lines, optional double quotes around values, and ${NAME}
// environment interpolation inside values. Unknown sections or keys and
// unset environment variables are ConfigErrors. The result is validated.
RunConfig parse_run_config(const std::string& config_text, const RunOverrides& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const RunOverrides& overrides = {});

} // namespace cw
