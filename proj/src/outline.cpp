#include "cw/outline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

#include "cw/errors.hpp"
#include "cw/log.hpp"
#include "cw/util.hpp"

namespace cw {

using nlohmann::json;

const char* to_string(SectionKind kind) {
    switch (kind) {
        case SectionKind::introduction: return "introduction";
        case SectionKind::body: return "body";
        case SectionKind::conclusion: return "conclusion";
    }
    return "?";
}

SectionKind section_kind_from_string(const std::string& s) {
    if (s == "introduction") return SectionKind::introduction;
    if (s == "body") return SectionKind::body;
    if (s == "conclusion") return SectionKind::conclusion;
    throw ParseFailure("unknown section kind: " + s);
}

std::string Violation::describe() const {
    switch (kind) {
        case ViolationKind::missing_intro:
            return "the outline has no leading Introduction section";
        case ViolationKind::missing_conclusion:
            return "the outline has no final Conclusion section";
        case ViolationKind::untagged_section:
            return "body section \"" + section_title + "\" has no cluster tag";
        case ViolationKind::unknown_cluster:
            return "cluster " + std::to_string(cluster_id) + " does not exist";
        case ViolationKind::duplicate_cluster:
            return "cluster " + std::to_string(cluster_id) +
                   " is mapped by more than one section";
        case ViolationKind::unused_cluster:
            return "cluster " + std::to_string(cluster_id) + " is not mapped by any section";
    }
    return "?";
}

namespace {

bool ci_equal(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i]))) {
            return false;
        }
    }
    return true;
}

struct RawHeading {
    std::string title;
    std::optional<int> cluster_id;
    std::vector<std::string> subpoints;
};

// Strips one `<!-- cluster: j -->` comment out of the heading line.
std::optional<int> extract_cluster_tag(std::string& text) {
    std::size_t open = text.find("<!--");
    if (open == std::string::npos) return std::nullopt;
    std::size_t close = text.find("-->", open + 4);
    if (close == std::string::npos) return std::nullopt;
    std::string inner = util::trim(text.substr(open + 4, close - open - 4));
    std::optional<int> id;
    const std::string label = "cluster";
    if (inner.size() > label.size() &&
        ci_equal(std::string_view(inner).substr(0, label.size()), label)) {
        std::string rest = util::trim(inner.substr(label.size()));
        if (!rest.empty() && rest[0] == ':') {
            rest = util::trim(rest.substr(1));
            if (!rest.empty() &&
                std::all_of(rest.begin(), rest.end(),
                            [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
                id = std::stoi(rest);
            }
        }
    }
    text = util::trim(text.substr(0, open) + text.substr(close + 3));
    return id;
}

std::vector<RawHeading> parse_headings(const std::string& raw) {
    std::vector<RawHeading> headings;
    for (const auto& line : util::split_lines(raw)) {
        std::string t = util::trim(line);
        if (t.rfind("## ", 0) == 0 || t.rfind("# ", 0) == 0) {
            std::string text = util::trim(t.substr(t.find(' ') + 1));
            RawHeading heading;
            heading.cluster_id = extract_cluster_tag(text);
            heading.title = util::trim(text);
            headings.push_back(std::move(heading));
        } else if ((t.rfind("- ", 0) == 0 || t.rfind("* ", 0) == 0) && !headings.empty()) {
            headings.back().subpoints.push_back(util::trim(t.substr(2)));
        }
    }
    return headings;
}

} // namespace

ParseOutcome parse_and_validate(const std::string& raw_markdown, std::size_t k_star,
                                MappingMode mode) {
    ParseOutcome outcome;
    std::vector<RawHeading> headings = parse_headings(raw_markdown);
    if (headings.empty()) {
        outcome.violations.push_back({ViolationKind::missing_intro});
        outcome.violations.push_back({ViolationKind::missing_conclusion});
        return outcome;
    }

    Outline outline;
    outline.raw_markdown = raw_markdown;
    for (std::size_t i = 0; i < headings.size(); ++i) {
        OutlineSection section;
        section.index = i;
        section.title = headings[i].title;
        section.subpoints = headings[i].subpoints;
        if (i == 0 && ci_equal(headings[i].title, "introduction")) {
            section.kind = SectionKind::introduction;
        } else if (i + 1 == headings.size() && ci_equal(headings[i].title, "conclusion")) {
            section.kind = SectionKind::conclusion;
        } else {
            section.kind = SectionKind::body;
            section.cluster_id = headings[i].cluster_id;
        }
        outline.sections.push_back(std::move(section));
    }

    if (outline.sections.front().kind != SectionKind::introduction) {
        outcome.violations.push_back({ViolationKind::missing_intro});
    }
    if (outline.sections.back().kind != SectionKind::conclusion) {
        outcome.violations.push_back({ViolationKind::missing_conclusion});
    }

    std::set<int> used;
    std::set<int> reported_duplicates;
    for (const auto& section : outline.sections) {
        if (section.kind != SectionKind::body) continue;
        if (!section.cluster_id) {
            outcome.violations.push_back(
                {ViolationKind::untagged_section, section.title});
            continue;
        }
        int id = *section.cluster_id;
        if (id < 0 || static_cast<std::size_t>(id) >= k_star) {
            outcome.violations.push_back({ViolationKind::unknown_cluster, "", id});
        } else if (!used.insert(id).second && reported_duplicates.insert(id).second) {
            outcome.violations.push_back({ViolationKind::duplicate_cluster, "", id});
        }
    }
    if (mode == MappingMode::bijective) {
        for (std::size_t j = 0; j < k_star; ++j) {
            if (used.count(static_cast<int>(j)) == 0) {
                outcome.violations.push_back(
                    {ViolationKind::unused_cluster, "", static_cast<int>(j)});
            }
        }
    }

    if (outcome.violations.empty()) outcome.outline = std::move(outline);
    return outcome;
}

std::string serialize_outline(const Outline& outline) {
    std::string out;
    for (const auto& section : outline.sections) {
        out += "## " + section.title;
        if (section.kind == SectionKind::body && section.cluster_id) {
            out += " <!-- cluster: " + std::to_string(*section.cluster_id) + " -->";
        }
        out += "\n";
        for (const auto& point : section.subpoints) out += "- " + point + "\n";
        out += "\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

std::string generate_outline(const std::string& topic,
                             const std::vector<ClusterSummary>& cluster_summaries,
                             Gateway& gateway, const std::string& feedback) {
    if (cluster_summaries.empty()) throw Error("cannot outline without cluster summaries");

    std::vector<const ClusterSummary*> ordered;
    for (const auto& cs : cluster_summaries) ordered.push_back(&cs);
    std::sort(ordered.begin(), ordered.end(),
              [](const ClusterSummary* a, const ClusterSummary* b) {
                  return a->cluster_id < b->cluster_id;
              });

    std::string block;
    for (const auto* cs : ordered) {
        block += "[CLUSTER " + std::to_string(cs->cluster_id) + "] " + cs->text + "\n";
    }
    ChatRequest request{TemplateId::outline_gen,
                        {{"topic", topic}, {"cluster_block", block}, {"feedback", feedback}}};
    return gateway.complete(request);
}

namespace {

std::string fallback_title(const ClusterSummary& cs) {
    std::string title = util::trim(util::first_sentence(cs.text));
    while (!title.empty() && (title.back() == '.' || title.back() == '!' || title.back() == '?')) {
        title.pop_back();
    }
    title = util::trim(util::utf8_truncate(title, 80));
    if (title.empty() || ci_equal(title, "introduction") || ci_equal(title, "conclusion")) {
        title = "Cluster " + std::to_string(cs.cluster_id) + " overview";
    }
    return title;
}

Outline fallback_outline(const std::string& topic,
                         const std::vector<ClusterSummary>& cluster_summaries) {
    std::vector<const ClusterSummary*> ordered;
    for (const auto& cs : cluster_summaries) ordered.push_back(&cs);
    std::sort(ordered.begin(), ordered.end(),
              [](const ClusterSummary* a, const ClusterSummary* b) {
                  return a->cluster_id < b->cluster_id;
              });

    Outline outline;
    outline.topic = topic;
    OutlineSection intro;
    intro.index = 0;
    intro.title = "Introduction";
    intro.kind = SectionKind::introduction;
    outline.sections.push_back(intro);
    for (const auto* cs : ordered) {
        OutlineSection section;
        section.index = outline.sections.size();
        section.title = fallback_title(*cs);
        section.kind = SectionKind::body;
        section.cluster_id = cs->cluster_id;
        outline.sections.push_back(std::move(section));
    }
    OutlineSection conclusion;
    conclusion.index = outline.sections.size();
    conclusion.title = "Conclusion";
    conclusion.kind = SectionKind::conclusion;
    outline.sections.push_back(conclusion);
    outline.raw_markdown = serialize_outline(outline);
    return outline;
}

std::string feedback_text(const std::vector<Violation>& violations, int attempt) {
    std::string out = "\nYour previous outline (attempt " + std::to_string(attempt) +
                      ") broke these rules:\n";
    for (const auto& v : violations) out += "- " + v.describe() + "\n";
    out += "Regenerate the complete outline and fix every problem.";
    return out;
}

} // namespace

OutlineResult repair_or_fallback(const std::string& topic, const std::string& /*first_raw*/,
                                 const std::vector<Violation>& first_violations,
                                 const std::vector<ClusterSummary>& cluster_summaries,
                                 Gateway& gateway, MappingMode mode, int max_retries) {
    if (first_violations.empty()) throw Error("repair called without violations");
    std::size_t k_star = cluster_summaries.size();

    std::vector<Violation> violations = first_violations;
    for (int attempt = 1; attempt <= max_retries; ++attempt) {
        std::string raw = generate_outline(topic, cluster_summaries, gateway,
                                           feedback_text(violations, attempt));
        ParseOutcome outcome = parse_and_validate(raw, k_star, mode);
        if (outcome.ok()) {
            outcome.outline->topic = topic;
            return {std::move(*outcome.outline), attempt, false};
        }
        log::warn("outline attempt {} still invalid ({} violations)", attempt + 1,
                  outcome.violations.size());
        violations = std::move(outcome.violations);
    }

    log::warn("outline generation failed after {} retries; using the deterministic fallback",
              max_retries);
    return {fallback_outline(topic, cluster_summaries), max_retries, true};
}

OutlineResult build_outline(const std::string& topic,
                            const std::vector<ClusterSummary>& cluster_summaries,
                            Gateway& gateway, MappingMode mode, int max_retries) {
    std::string raw = generate_outline(topic, cluster_summaries, gateway);
    ParseOutcome outcome = parse_and_validate(raw, cluster_summaries.size(), mode);

    OutlineResult result;
    if (outcome.ok()) {
        outcome.outline->topic = topic;
        result = {std::move(*outcome.outline), 0, false};
    } else {
        result = repair_or_fallback(topic, raw, outcome.violations, cluster_summaries, gateway,
                                    mode, max_retries);
    }

    if (mode == MappingMode::injective) {
        std::set<int> used;
        for (const auto& s : result.outline.sections) {
            if (s.cluster_id) used.insert(*s.cluster_id);
        }
        for (const auto& cs : cluster_summaries) {
            if (used.count(cs.cluster_id) == 0) {
                log::warn("cluster {} is not covered by any outline section", cs.cluster_id);
            }
        }
    }
    return result;
}

void save_outline(const OutlineResult& result, std::size_t k_star, MappingMode mode,
                  const std::filesystem::path& run_dir) {
    util::atomic_write_file(run_dir / "outline.md", result.outline.raw_markdown);

    json doc;
    doc["topic"] = result.outline.topic;
    doc["k_star"] = k_star;
    doc["mode"] = mode == MappingMode::bijective ? "bijective" : "injective";
    doc["retries"] = result.retries;
    doc["fallback"] = result.used_fallback;
    json sections = json::array();
    for (const auto& section : result.outline.sections) {
        json entry;
        entry["index"] = section.index;
        entry["title"] = section.title;
        entry["kind"] = to_string(section.kind);
        if (section.cluster_id) entry["cluster_id"] = *section.cluster_id;
        entry["subpoints"] = section.subpoints;
        sections.push_back(std::move(entry));
    }
    doc["sections"] = sections;
    util::atomic_write_file(run_dir / "outline_map.json", doc.dump(2) + "\n");
}

OutlineResult load_outline(const std::filesystem::path& run_dir) {
    json doc = json::parse(util::read_file(run_dir / "outline_map.json"));
    OutlineResult result;
    result.outline.topic = doc.at("topic").get<std::string>();
    result.outline.raw_markdown = util::read_file(run_dir / "outline.md");
    result.retries = doc.at("retries").get<int>();
    result.used_fallback = doc.at("fallback").get<bool>();
    for (const auto& entry : doc.at("sections")) {
        OutlineSection section;
        section.index = entry.at("index").get<std::size_t>();
        section.title = entry.at("title").get<std::string>();
        section.kind = section_kind_from_string(entry.at("kind").get<std::string>());
        if (entry.contains("cluster_id")) section.cluster_id = entry.at("cluster_id").get<int>();
        section.subpoints = entry.at("subpoints").get<std::vector<std::string>>();
        result.outline.sections.push_back(std::move(section));
    }
    return result;
}

} // namespace cw
