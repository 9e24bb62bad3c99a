#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cw/gateway.hpp"
#include "cw/summarizer.hpp"

namespace cw {

enum class SectionKind { introduction, body, conclusion };

const char* to_string(SectionKind kind);
SectionKind section_kind_from_string(const std::string& s);

struct OutlineSection {
    std::size_t index = 0;
    std::string title;
    SectionKind kind = SectionKind::body;
    std::optional<int> cluster_id; // body sections only
    std::vector<std::string> subpoints;

    bool operator==(const OutlineSection&) const = default;
};

struct Outline {
    std::string topic;
    std::vector<OutlineSection> sections;
    std::string raw_markdown;
};

// Whether every cluster must appear in the outline (bijective) or body
// sections merely map to distinct clusters, allowing unused ones (injective).
enum class MappingMode { bijective, injective };

enum class ViolationKind {
    missing_intro,
    missing_conclusion,
    untagged_section,
    unknown_cluster,
    duplicate_cluster,
    unused_cluster,
};

struct Violation {
    ViolationKind kind;
    std::string section_title; // untagged_section
    int cluster_id = -1;       // cluster-valued kinds

    std::string describe() const;
    bool operator==(const Violation&) const = default;
};

struct ParseOutcome {
    std::optional<Outline> outline; // set iff violations empty
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Asks the model for an outline over the labelled cluster summaries; returns
// its raw text. `feedback` is re-prompt material listing earlier violations.
std::string generate_outline(const std::string& topic,
                             const std::vector<ClusterSummary>& cluster_summaries,
                             Gateway& gateway, const std::string& feedback = "");

// Parses "#"/"##" headings, their `<!-- cluster: j -->` tags, and "-"/"*"
// subpoint bullets, then checks the section↔cluster mapping against k_star.
ParseOutcome parse_and_validate(const std::string& raw_markdown, std::size_t k_star,
                                MappingMode mode = MappingMode::bijective);

// Canonical markdown for an outline; parse_and_validate inverts it.
std::string serialize_outline(const Outline& outline);

struct OutlineResult {
    Outline outline;
    int retries = 0;
    bool used_fallback = false;
};

// Re-prompts with the violation list up to max_retries times, then builds the
// deterministic fallback: introduction, one body section per cluster in
// cluster_id order titled from its summary, conclusion. Never fails.
OutlineResult repair_or_fallback(const std::string& topic, const std::string& first_raw,
                                 const std::vector<Violation>& first_violations,
                                 const std::vector<ClusterSummary>& cluster_summaries,
                                 Gateway& gateway, MappingMode mode = MappingMode::bijective,
                                 int max_retries = 2);

// generate + validate + repair in one step.
OutlineResult build_outline(const std::string& topic,
                            const std::vector<ClusterSummary>& cluster_summaries,
                            Gateway& gateway, MappingMode mode = MappingMode::bijective,
                            int max_retries = 2);

// outline.md (raw markdown) + outline_map.json under run_dir.
void save_outline(const OutlineResult& result, std::size_t k_star, MappingMode mode,
                  const std::filesystem::path& run_dir);
OutlineResult load_outline(const std::filesystem::path& run_dir);

} // namespace cw
