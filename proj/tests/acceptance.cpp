// Acceptance gate: ten independently checkable properties of the pipeline,
// each reported on its own PASS/FAIL line. Exits nonzero if any fails.

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cw/clustering.hpp"
#include "cw/errors.hpp"
#include "cw/evaluator.hpp"
#include "cw/log.hpp"
#include "cw/mock_provider.hpp"
#include "cw/outline.hpp"
#include "cw/pipeline.hpp"
#include "cw/retrieval.hpp"
#include "cw/util.hpp"
#include "cw/writer.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace cw;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// shared fixtures

constexpr const char* kTopic = "renewable energy systems";

// Nine documents: six reachable from the topic keywords, three only through
// the "See also:" expansion stage.
std::string corpus_jsonl() {
    auto line = [](const char* id, const char* title, const char* text) {
        json j{{"id", id},
               {"title", title},
               {"text", text},
               {"url", std::string("https://example.org/") + id}};
        return j.dump() + "\n";
    };
    std::string out;
    out += line("solar-panels", "Solar Panel Energy",
                "Solar panels convert sunlight into renewable electricity. Photovoltaic cells "
                "power homes in sunny regions. Rooftop arrays feed renewable energy systems "
                "every day.");
    out += line("solar-thermal", "Solar Thermal Collectors",
                "Solar thermal collectors heat water with concentrated sunlight. Mirrored "
                "troughs store renewable heat in molten salt. The stored energy drives "
                "turbines after sunset.");
    out += line("solar-mirrors", "Solar Mirror Fields",
                "Solar mirror fields focus light onto a central tower. Heliostats track the "
                "sun across the sky. Tower plants turn renewable heat into dispatchable "
                "energy.");
    out += line("wind-turbines", "Wind Turbine Energy",
                "Wind turbines capture moving air as renewable power. Tall towers reach the "
                "steadier winds above open ground. Blade pitch control protects the machinery "
                "in storms.");
    out += line("wind-offshore", "Offshore Wind Parks",
                "Offshore wind parks anchor turbines in shallow seas. Sea winds blow harder "
                "and steadier than onshore breezes. Submarine cables carry the renewable "
                "energy ashore.\nSee also: Battery Storage Plants, Grid Transmission Lines");
    out += line("wind-gearbox", "Wind Gearbox Design",
                "Wind gearboxes step the slow rotor up to generator speed. Bearing wear "
                "dominates maintenance cost in wind energy fleets. Direct drive systems "
                "remove the gearbox entirely.\nSee also: Pumped Storage Stations");
    out += line("battery-storage", "Battery Storage Plants",
                "Battery storage plants buffer the grid against demand swings. Lithium cells "
                "respond within milliseconds. Stored energy smooths the output of solar parks "
                "and wind farms.");
    out += line("grid-lines", "Grid Transmission Lines",
                "Grid transmission lines move power between distant regions. High voltage "
                "reduces losses along the way. New corridors connect remote wind and solar "
                "energy to the cities.");
    out += line("pumped-storage", "Pumped Storage Stations",
                "Pumped storage stations lift water uphill when power is cheap. The reservoir "
                "releases it through turbines at peak demand. Round trip losses stay near a "
                "fifth of the stored energy.");
    return out;
}

struct MockEnv {
    std::shared_ptr<MockChatProvider> chat;
    std::shared_ptr<Gateway> gateway;
    std::shared_ptr<LocalCorpusSource> source;
};

MockEnv make_env(const RunConfig& config, bool record_transcript = false) {
    MockEnv env;
    env.chat = make_pipeline_mock_chat();
    GatewayConfig gc;
    gc.max_context_tokens = config.max_context_tokens;
    gc.cache_dir = config.out_dir / "cache";
    gc.concurrency = config.concurrency;
    gc.max_retries = 1;
    gc.retry_backoff_ms = 0;
    gc.record_transcript = record_transcript;
    env.gateway = std::make_shared<Gateway>(
        gc, env.chat, std::make_shared<HashEmbeddingProvider>(config.embedding.dim));
    env.source = std::make_shared<LocalCorpusSource>(config.source.path);
    return env;
}

Gateway plain_gateway(std::shared_ptr<ChatProvider> chat, std::size_t dim = 8) {
    GatewayConfig gc;
    gc.max_retries = 1;
    gc.retry_backoff_ms = 0;
    gc.concurrency = 1;
    return Gateway(std::move(gc), std::move(chat), std::make_shared<HashEmbeddingProvider>(dim));
}

// State carried from the end-to-end criterion into the context-cap one.
struct E2EState {
    std::unique_ptr<test_support::TempDir> tmp;
    std::shared_ptr<Gateway> gateway; // transcript-recording gateway of run A
    std::size_t max_context_tokens = 0;
    bool ran = false;
};

// ---------------------------------------------------------------------------
// criteria

bool silhouette_matches_reference(std::string& detail) {
    std::mt19937_64 rng(20240601);
    for (int instance = 0; instance < 100; ++instance) {
        std::size_t n = 5 + rng() % 46;
        std::size_t d = 1 + rng() % 8;
        auto matrix =
            test_support::random_matrix(n, d, static_cast<unsigned>(rng() & 0xffffffffu), 3.0);
        std::size_t k = 2 + rng() % std::min<std::size_t>(5, n - 1);
        std::vector<int> labels(n);
        for (auto& label : labels) label = static_cast<int>(rng() % k);
        for (std::size_t i = 0; i < k; ++i) labels[i] = static_cast<int>(i);

        double fast = silhouette(matrix, labels);
        double reference = oracle::silhouette(matrix, labels);
        if (std::abs(fast - reference) > 1e-9) {
            detail = fmt::format("instance {} (n={}, d={}, k={}): {} vs reference {}", instance,
                                 n, d, k, fast, reference);
            return false;
        }
    }
    return true;
}

bool sampled_silhouette_stays_close(std::string& detail) {
    std::vector<int> planted;
    auto matrix = test_support::planted_blobs(500, 4, 8, 10.0, 1.0, 77, &planted);
    double exact = silhouette(matrix, planted);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        double sampled = silhouette(matrix, planted, 512, seed);
        if (std::abs(sampled - exact) > 0.05) {
            detail = fmt::format("seed {}: sampled {} vs exact {}", seed, sampled, exact);
            return false;
        }
    }
    return true;
}

bool planted_k_is_recovered(std::string& detail) {
    int hits = 0;
    for (unsigned seed = 0; seed < 40; ++seed) {
        std::vector<int> planted;
        auto matrix = test_support::planted_blobs(30, 3, 6, 10.0, 0.8, 1000 + seed, &planted);
        KSelection selection = select_optimal_k(matrix, 2, 6, seed);
        if (selection.k_star == 3) ++hits;
    }
    if (hits < 38) {
        detail = fmt::format("recovered k=3 in only {}/40 seeds", hits);
        return false;
    }
    return true;
}

bool kmeans_finds_global_optimum(std::string& detail) {
    std::vector<EmbeddingMatrix> fixtures;
    fixtures.push_back(test_support::make_matrix(
        6, 2, {0.0, 0.0, 0.2, 0.1, 5.0, 5.0, 5.1, 4.9, -4.0, 2.0, -4.2, 2.1}));
    fixtures.push_back(test_support::make_matrix(5, 1, {0.0, 0.1, 5.0, 5.1, 9.0}));
    fixtures.push_back(test_support::random_matrix(8, 3, 21));
    fixtures.push_back(test_support::random_matrix(10, 4, 22));
    fixtures.push_back(test_support::random_matrix(12, 2, 23));
    fixtures.push_back(test_support::planted_blobs(4, 3, 2, 6.0, 0.3, 24));

    for (std::size_t f = 0; f < fixtures.size(); ++f) {
        for (std::size_t k : {std::size_t{2}, std::size_t{3}}) {
            ClusterAssignment result = kmeans(fixtures[f], k, 0);
            double best = oracle::best_partition_inertia(fixtures[f], k);
            if (std::abs(result.inertia - best) > 1e-9) {
                detail = fmt::format("fixture {} k={}: inertia {} vs enumerated optimum {}", f,
                                     k, result.inertia, best);
                return false;
            }
        }
    }
    return true;
}

bool end_to_end_mock_run(E2EState& state, std::string& detail) {
    state.tmp = std::make_unique<test_support::TempDir>();
    auto corpus_path = state.tmp->path() / "corpus.jsonl";
    util::atomic_write_file(corpus_path, corpus_jsonl());
    std::string config_text = "[run]\nseed = 7\n\n[source]\npath = " + corpus_path.string() + "\n";

    auto config_for = [&](const char* dir) {
        RunOverrides overrides;
        overrides.topic = kTopic;
        overrides.out_dir = (state.tmp->path() / dir).string();
        return parse_run_config(config_text, overrides);
    };

    RunConfig config_a = config_for("run-a");
    MockEnv env_a = make_env(config_a, true);
    RunManifest manifest = run_pipeline(config_a, *env_a.gateway, *env_a.source, "");
    state.gateway = env_a.gateway;
    state.max_context_tokens = config_a.max_context_tokens;

    if (!manifest.complete()) {
        detail = "run A did not complete all stages";
        return false;
    }
    for (const auto& stage : pipeline_stages()) {
        if (manifest.stages.at(stage.name).status != "complete") {
            detail = "stage " + stage.name + " is not complete";
            return false;
        }
    }

    // Every cluster maps to exactly one body section.
    ClusterRun clusters = load_cluster_run(config_a.out_dir / "clusters" / "assignments.json");
    OutlineResult outline = load_outline(config_a.out_dir);
    std::vector<int> mapped;
    for (const auto& section : outline.outline.sections) {
        if (section.kind == SectionKind::body) mapped.push_back(*section.cluster_id);
    }
    std::sort(mapped.begin(), mapped.end());
    std::vector<int> expected(clusters.k_star);
    for (std::size_t i = 0; i < clusters.k_star; ++i) expected[i] = static_cast<int>(i);
    if (mapped != expected) {
        detail = fmt::format("body sections map {} clusters, expected exactly 0..{}",
                             mapped.size(), clusters.k_star - 1);
        return false;
    }

    // Every citation of a body section resolves into its mapped cluster.
    std::map<std::size_t, int> cluster_of_section;
    for (const auto& section : outline.outline.sections) {
        if (section.kind == SectionKind::body) cluster_of_section[section.index] = *section.cluster_id;
    }
    std::map<int, std::set<std::string>> cluster_docs;
    for (const auto& cluster : clusters.clusters) {
        cluster_docs[cluster.cluster_id] = {cluster.doc_ids.begin(), cluster.doc_ids.end()};
    }
    json citations = json::parse(util::read_file(config_a.out_dir / "citations.json"));
    bool any_citation = false;
    for (const auto& section : citations.at("sections")) {
        if (section.at("kind").get<std::string>() != "body") continue;
        std::size_t index = section.at("section_index").get<std::size_t>();
        const auto& allowed = cluster_docs.at(cluster_of_section.at(index));
        for (const auto& [marker, doc_id] : section.at("citation_map").items()) {
            any_citation = true;
            if (allowed.count(doc_id.get<std::string>()) == 0) {
                detail = fmt::format("section {} cites {} outside its cluster", index,
                                     doc_id.get<std::string>());
                return false;
            }
        }
    }
    if (!any_citation) {
        detail = "no body-section citations were produced";
        return false;
    }

    RunConfig config_b = config_for("run-b");
    MockEnv env_b = make_env(config_b);
    run_pipeline(config_b, *env_b.gateway, *env_b.source, "");

    auto collect = [](const std::filesystem::path& root) {
        std::map<std::string, std::string> files;
        for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
            if (!entry.is_regular_file()) continue;
            files[std::filesystem::relative(entry.path(), root).generic_string()] =
                util::read_file(entry.path());
        }
        return files;
    };
    auto tree_a = collect(config_a.out_dir);
    auto tree_b = collect(config_b.out_dir);
    if (tree_a.size() != tree_b.size()) {
        detail = fmt::format("artifact sets differ: {} vs {} files", tree_a.size(),
                             tree_b.size());
        return false;
    }
    for (const auto& [rel, bytes] : tree_a) {
        if (rel == "manifest.json") continue; // timestamps differ by design
        auto it = tree_b.find(rel);
        if (it == tree_b.end() || it->second != bytes) {
            detail = "artifact differs between runs: " + rel;
            return false;
        }
    }
    state.ran = true;
    return true;
}

bool rubric_average_arithmetic(std::string& detail) {
    auto average_of = [](std::map<std::string, double> scores) {
        auto chat = std::make_shared<MockChatProvider>();
        chat->on_template("rubric_judge", [scores](const ChatCall& call) {
            return fmt::format("SCORE: {}", scores.at(call.bindings.at("dimension")));
        });
        Gateway gateway = plain_gateway(chat);
        RubricScores rubric =
            grade_rubric("arithmetic", "# Arithmetic\n\nBody text.", gateway, EvalConfig{});
        return round_2dp(rubric.average);
    };

    double first = average_of(
        {{"relevance", 4.93}, {"breadth", 4.95}, {"depth", 4.97}, {"novelty", 4.22}});
    if (first != 4.77) {
        detail = fmt::format("scores (4.93, 4.95, 4.97, 4.22) averaged to {}", first);
        return false;
    }
    double second = average_of(
        {{"relevance", 4.97}, {"breadth", 4.95}, {"depth", 4.93}, {"novelty", 4.58}});
    if (second != 4.86) {
        detail = fmt::format("scores (4.97, 4.95, 4.93, 4.58) averaged to {}", second);
        return false;
    }
    return true;
}

bool coverage_fixture_scores_seventy(std::string& detail) {
    // Seven documents with disjoint vocabularies; the article repeats each
    // verbatim, then adds three paragraphs sharing no word with any document.
    std::vector<Document> corpus;
    std::vector<std::string> paragraphs;
    for (int d = 0; d < 7; ++d) {
        std::string text;
        for (int w = 0; w < 22; ++w) {
            if (!text.empty()) text += " ";
            text += fmt::format("subject{}word{:02d}", d, w);
        }
        text += ".";
        Document doc = test_support::make_doc(fmt::format("doc-{}", d),
                                              fmt::format("subject{}title", d), text);
        corpus.push_back(doc);
        paragraphs.push_back(text);
    }
    for (int f = 0; f < 3; ++f) {
        std::string text;
        for (int w = 0; w < 22; ++w) {
            if (!text.empty()) text += " ";
            text += fmt::format("invented{}claim{:02d}", f, w);
        }
        paragraphs.push_back(text + ".");
    }
    std::string article = "# Coverage Fixture\n";
    for (const auto& paragraph : paragraphs) article += "\n" + paragraph + "\n";

    Gateway gateway = plain_gateway(make_pipeline_mock_chat(), 64);
    auto [percent, judgments] = compute_coverage(article, corpus, gateway, EvalConfig{});
    if (percent != 70.0) {
        detail = fmt::format("coverage {} instead of 70.0", percent);
        return false;
    }
    if (judgments.size() != 10) {
        detail = fmt::format("{} paragraphs judged instead of 10", judgments.size());
        return false;
    }

    // Independent ranking check: embed the same inputs and rank by cosine.
    std::vector<std::string> texts;
    for (const auto& doc : corpus) texts.push_back(doc.title + "\n" + doc.text);
    for (const auto& paragraph : judgments) texts.push_back(paragraph.paragraph);
    std::vector<EmbeddingVector> vectors = gateway.embed(texts);

    for (std::size_t p = 0; p < judgments.size(); ++p) {
        const CoverageJudgment& judgment = judgments[p];
        bool copied = p < 7;
        if (judgment.supported != copied) {
            detail = fmt::format("paragraph {} supported={}, expected {}", p,
                                 judgment.supported, copied);
            return false;
        }
        std::vector<std::size_t> order(corpus.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            double ca = oracle::cosine(vectors[corpus.size() + p].values, vectors[a].values);
            double cb = oracle::cosine(vectors[corpus.size() + p].values, vectors[b].values);
            if (ca != cb) return ca > cb;
            return corpus[a].doc_id < corpus[b].doc_id;
        });
        std::set<std::string> expected_top{corpus[order[0]].doc_id, corpus[order[1]].doc_id};
        std::set<std::string> actual_top(judgment.top_doc_ids.begin(),
                                         judgment.top_doc_ids.end());
        if (expected_top != actual_top) {
            detail = fmt::format("paragraph {}: retrieval disagrees with the cosine oracle", p);
            return false;
        }
        if (copied && actual_top.count(fmt::format("doc-{}", p)) == 0) {
            detail = fmt::format("paragraph {} does not retrieve its source document", p);
            return false;
        }
    }
    return true;
}

bool ablation_partition_shapes(std::string& detail) {
    using Sizes = std::vector<std::size_t>;
    const std::vector<std::pair<std::size_t, Sizes>> cases = {
        {5, {1, 1, 1, 1, 1}},
        {10, {2, 2, 2, 2, 2}},
        {12, {3, 3, 2, 2, 2}},
        {23, {5, 5, 5, 4, 4}},
    };
    for (const auto& [n, expected] : cases) {
        Sizes sizes = ablation_partition(n, 5);
        if (sizes != expected) {
            detail = fmt::format("partition of {} came out wrong", n);
            return false;
        }
        auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
        if (*hi - *lo > 1) {
            detail = fmt::format("partition of {} is unbalanced", n);
            return false;
        }
    }

    CorpusSnapshot snapshot;
    snapshot.topic = "order";
    for (int i = 0; i < 12; ++i) {
        snapshot.documents.push_back(test_support::make_doc(fmt::format("doc-{:02d}", i),
                                                            fmt::format("Title {}", i),
                                                            "Body text."));
    }
    ClusterRun run = ablation_cluster_run(snapshot, 5, 0);
    std::vector<std::string> concatenated;
    std::vector<std::size_t> sizes;
    for (const auto& cluster : run.clusters) {
        sizes.push_back(cluster.doc_ids.size());
        concatenated.insert(concatenated.end(), cluster.doc_ids.begin(),
                            cluster.doc_ids.end());
    }
    if (sizes != Sizes{3, 3, 2, 2, 2}) {
        detail = "sequential split of 12 documents has the wrong shape";
        return false;
    }
    for (std::size_t i = 0; i < concatenated.size(); ++i) {
        if (concatenated[i] != snapshot.documents[i].doc_id) {
            detail = "sequential split reordered the corpus";
            return false;
        }
    }
    return true;
}

bool context_cap_is_enforced(E2EState& state, std::string& detail) {
    if (!state.ran || !state.gateway) {
        detail = "end-to-end run unavailable; cannot inspect its transcript";
        return false;
    }
    std::vector<TranscriptEntry> transcript = state.gateway->transcript();
    if (transcript.empty()) {
        detail = "the end-to-end run recorded no transcript";
        return false;
    }
    for (const auto& entry : transcript) {
        if (entry.prompt_tokens > state.max_context_tokens) {
            detail = fmt::format("a {} prompt used {} tokens, above the {} cap",
                                 entry.template_id, entry.prompt_tokens,
                                 state.max_context_tokens);
            return false;
        }
    }

    ChatRequest oversized{TemplateId::summarize,
                          {{"title", "cap probe"},
                           {"budget", "200"},
                           {"text", std::string(state.max_context_tokens * 5, 'a')}}};
    try {
        state.gateway->complete(oversized);
        detail = "an oversized request was not rejected";
        return false;
    } catch (const ContextOverflow&) {
    }
    return true;
}

bool outline_fallback_is_total(std::string& detail) {
    auto chat = make_pipeline_mock_chat();
    chat->on_template("outline_gen",
                      [](const ChatCall&) { return "nothing resembling an outline"; });
    Gateway gateway = plain_gateway(chat);

    for (std::size_t k = 1; k <= 8; ++k) {
        std::vector<ClusterSummary> summaries;
        for (std::size_t j = 0; j < k; ++j) {
            ClusterSummary summary;
            summary.cluster_id = static_cast<int>(j);
            summary.text = fmt::format("Group {} covers subject {}. More detail follows.", j, j);
            summary.source_leaf_ids = {fmt::format("doc-{}", j)};
            summaries.push_back(std::move(summary));
        }
        OutlineResult result = build_outline("stubborn topic", summaries, gateway);
        if (!result.used_fallback) {
            detail = fmt::format("k={}: the fallback was not used", k);
            return false;
        }
        ParseOutcome outcome = parse_and_validate(result.outline.raw_markdown, k);
        if (!outcome.ok()) {
            detail = fmt::format("k={}: the fallback outline fails validation", k);
            return false;
        }
        std::size_t body = 0;
        for (const auto& section : result.outline.sections) {
            if (section.kind == SectionKind::body) ++body;
        }
        if (body != k) {
            detail = fmt::format("k={}: fallback has {} body sections", k, body);
            return false;
        }
    }
    return true;
}

} // namespace

int main() {
    log::set_sink([](log::Level, std::string_view) {});

    int failures = 0;
    auto run = [&failures](int id, const char* name, double limit_seconds, auto&& criterion) {
        auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = criterion(detail);
        } catch (const std::exception& e) {
            detail = std::string("unexpected exception: ") + e.what();
        }
        double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (ok && limit_seconds > 0.0 && seconds >= limit_seconds) {
            ok = false;
            detail = fmt::format("took {:.2f}s, limit {:.0f}s", seconds, limit_seconds);
        }
        std::printf("%s  %2d  %-52s  %6.2fs\n", ok ? "PASS" : "FAIL", id, name, seconds);
        if (!ok) {
            ++failures;
            if (!detail.empty()) std::printf("          %s\n", detail.c_str());
        }
    };

    E2EState e2e;
    run(1, "silhouette matches the brute-force reference", 10.0, silhouette_matches_reference);
    run(2, "sampled silhouette stays within 0.05 of exact", 30.0, sampled_silhouette_stays_close);
    run(3, "planted cluster count is recovered", 60.0, planted_k_is_recovered);
    run(4, "k-means inertia equals the enumerated optimum", 0.0, kmeans_finds_global_optimum);
    run(5, "mock pipeline runs end to end, deterministically", 5.0,
        [&e2e](std::string& detail) { return end_to_end_mock_run(e2e, detail); });
    run(6, "rubric averages round to the expected values", 0.0, rubric_average_arithmetic);
    run(7, "coverage fixture scores exactly 70 percent", 0.0, coverage_fixture_scores_seventy);
    run(8, "sequential ablation partitions are balanced", 0.0, ablation_partition_shapes);
    run(9, "context cap holds across the run transcript", 0.0,
        [&e2e](std::string& detail) { return context_cap_is_enforced(e2e, detail); });
    run(10, "outline generation always terminates validly", 0.0, outline_fallback_is_total);

    std::printf("%d of 10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
