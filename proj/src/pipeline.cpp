#include "cw/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <ctime>
#include <set>

#include "cw/errors.hpp"
#include "cw/evaluator.hpp"
#include "cw/log.hpp"
#include "cw/mock_provider.hpp"
#include "cw/outline.hpp"
#include "cw/providers_http.hpp"
#include "cw/retrieval.hpp"
#include "cw/summarizer.hpp"
#include "cw/util.hpp"
#include "cw/writer.hpp"

namespace cw {

using nlohmann::json;

const std::vector<StageDef>& pipeline_stages() {
    static const std::vector<StageDef> stages = {
        {"corpus", {"corpus/documents.jsonl", "corpus/keywords.json"}},
        {"clusters", {"clusters/assignments.json"}},
        {"summaries", {"clusters/summaries.json"}},
        {"outline", {"outline.md", "outline_map.json"}},
        {"sections", {"sections/drafts.json", "article_draft.md"}},
        {"article", {"article_final.md", "citations.json"}},
        {"eval", {"eval/report.json"}},
    };
    return stages;
}

std::size_t stage_index(const std::string& name) {
    const auto& stages = pipeline_stages();
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (stages[i].name == name) return i;
    }
    throw ConfigError("unknown stage: " + name);
}

bool RunManifest::complete() const {
    for (const auto& stage : pipeline_stages()) {
        auto it = stages.find(stage.name);
        if (it == stages.end() || it->second.status != "complete") return false;
    }
    return true;
}

namespace {

std::string now_utc() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hash_file(const std::filesystem::path& path) {
    return util::sha256_hex(util::read_file(path));
}

// Identity of everything feeding the pipeline besides artifacts. out_dir is
// deliberately absent: moving a run directory must not invalidate it.
std::string config_digest(const RunConfig& config) {
    std::string acc = config.config_text;
    acc += '\0';
    acc += config.topic;
    acc += '\0';
    acc += to_string(config.mode);
    acc += '\0';
    acc += std::to_string(config.seed);
    acc += '\0';
    acc += std::to_string(config.ablation_parts);
    return util::sha256_hex(acc);
}

std::string input_digest_for(const RunConfig& config, const std::filesystem::path& dir,
                             std::size_t stage) {
    std::string acc = "config:" + config_digest(config) + "\n";
    const auto& stages = pipeline_stages();
    for (std::size_t j = 0; j < stage; ++j) {
        for (const auto& rel : stages[j].artifacts) {
            std::filesystem::path path = dir / rel;
            acc += rel + ":";
            acc += std::filesystem::exists(path) ? hash_file(path) : std::string("absent");
            acc += "\n";
        }
    }
    return util::sha256_hex(acc);
}

RetrievalConfig retrieval_config(const RunConfig& c) {
    RetrievalConfig rc;
    rc.max_results_per_keyword = c.max_results_per_keyword;
    rc.judge_excerpt_tokens = c.judge_excerpt_tokens;
    rc.max_keywords_per_doc = c.max_keywords_per_doc;
    rc.max_expanded_keywords = c.max_expanded_keywords;
    return rc;
}

WriterConfig writer_config(const RunConfig& c) {
    WriterConfig wc;
    wc.top_m = c.top_m;
    wc.evidence_body_tokens = c.evidence_body_tokens;
    wc.style_context_bytes = c.style_context_bytes;
    return wc;
}

void stage_corpus(const RunConfig& c, const std::filesystem::path& dir, Gateway& gateway,
                  KnowledgeSource& source) {
    CorpusSnapshot snapshot = build_corpus(gateway, source, c.topic, retrieval_config(c));
    save_snapshot(snapshot, dir);
}

void stage_clusters(const RunConfig& c, const std::filesystem::path& dir, Gateway& gateway,
                    KnowledgeSource&) {
    CorpusSnapshot snapshot = load_snapshot(dir);
    ClusterRun run;
    if (c.mode == RunMode::no_clustering) {
        run = ablation_cluster_run(snapshot, c.ablation_parts, c.seed);
    } else {
        ClusteringConfig cc;
        cc.k_min = c.k_min;
        cc.k_max = c.k_max;
        cc.silhouette_sample = c.sample_size;
        cc.seed = c.seed;
        cc.workers = c.concurrency;
        run = cluster_corpus(snapshot, gateway, cc);
    }
    save_cluster_run(run, dir / "clusters" / "assignments.json");
}

void stage_summaries(const RunConfig& c, const std::filesystem::path& dir, Gateway& gateway,
                     KnowledgeSource&) {
    CorpusSnapshot snapshot = load_snapshot(dir);
    ClusterRun run = load_cluster_run(dir / "clusters" / "assignments.json");
    SummarizerConfig sc;
    sc.leaf_budget_tokens = c.leaf_budget_tokens;
    sc.cluster_budget_tokens = c.cluster_budget_tokens;
    sc.max_input_tokens = c.max_input_tokens;
    SummarySet set = summarize_corpus(snapshot, run.clusters, gateway, sc);
    save_summaries(set, dir / "clusters" / "summaries.json");
}

void stage_outline(const RunConfig& c, const std::filesystem::path& dir, Gateway& gateway,
                   KnowledgeSource&) {
    SummarySet set = load_summaries(dir / "clusters" / "summaries.json");
    OutlineResult result =
        build_outline(c.topic, set.cluster_summaries, gateway, c.mapping, c.outline_max_retries);
    save_outline(result, set.cluster_summaries.size(), c.mapping, dir);
}

void stage_sections(const RunConfig& c, const std::filesystem::path& dir, Gateway& gateway,
                    KnowledgeSource&) {
    CorpusSnapshot snapshot = load_snapshot(dir);
    ClusterRun run = load_cluster_run(dir / "clusters" / "assignments.json");
    SummarySet set = load_summaries(dir / "clusters" / "summaries.json");
    OutlineResult outline = load_outline(dir);
    std::vector<SectionDraft> drafts = draft_sections(outline.outline, run.clusters, snapshot,
                                                      set.leaves, gateway, writer_config(c));
    save_drafts(c.topic, drafts, dir);
}

void stage_article(const RunConfig& c, const std::filesystem::path& dir, Gateway& gateway,
                   KnowledgeSource&) {
    CorpusSnapshot snapshot = load_snapshot(dir);
    std::vector<SectionDraft> drafts = load_drafts(dir);
    FinalArticle article = polish_and_finalize(c.topic, std::move(drafts), snapshot.documents,
                                               gateway, writer_config(c));
    save_final_article(article, dir);
}

void stage_eval(const RunConfig& c, const std::filesystem::path& dir, Gateway& gateway,
                KnowledgeSource&) {
    CorpusSnapshot snapshot = load_snapshot(dir);
    std::string markdown = util::read_file(dir / "article_final.md");
    json citations = json::parse(util::read_file(dir / "citations.json"));
    std::set<std::string> cited;
    for (const auto& entry : citations.at("bibliography")) {
        cited.insert(entry.at("doc_id").get<std::string>());
    }
    EvalConfig ec;
    ec.judge_excerpt_tokens = c.judge_excerpt_tokens;
    ec.min_paragraph_words = c.min_paragraph_words;
    EvalReport report =
        evaluate_article(c.topic, markdown, cited.size(), snapshot.documents, gateway, ec);
    save_report(report, dir / "eval" / "report.json");
}

void run_stage(const std::string& name, const RunConfig& c, const std::filesystem::path& dir,
               Gateway& gateway, KnowledgeSource& source) {
    if (name == "corpus") return stage_corpus(c, dir, gateway, source);
    if (name == "clusters") return stage_clusters(c, dir, gateway, source);
    if (name == "summaries") return stage_summaries(c, dir, gateway, source);
    if (name == "outline") return stage_outline(c, dir, gateway, source);
    if (name == "sections") return stage_sections(c, dir, gateway, source);
    if (name == "article") return stage_article(c, dir, gateway, source);
    if (name == "eval") return stage_eval(c, dir, gateway, source);
    throw ConfigError("unknown stage: " + name);
}

// Runs stages [start, until] and persists the manifest after each. Stages
// from start onward are reset first so an interruption resumes there.
void execute_from(RunManifest& manifest, const RunConfig& config,
                  const std::filesystem::path& dir, Gateway& gateway, KnowledgeSource& source,
                  std::size_t start, const std::string& until) {
    const auto& stages = pipeline_stages();
    std::size_t stop = until.empty() ? stages.size() - 1 : stage_index(until);
    auto persist = [&]() {
        manifest.updated_at = now_utc();
        save_manifest(manifest, dir);
    };

    for (std::size_t i = start; i < stages.size(); ++i) {
        manifest.stages[stages[i].name] = StageRecord{};
    }
    manifest.failed_stage.clear();
    manifest.error.clear();
    persist();

    for (std::size_t i = start; i <= stop; ++i) {
        const StageDef& stage = stages[i];
        StageRecord& record = manifest.stages[stage.name];
        record.input_digest = input_digest_for(config, dir, i);
        log::info("stage {} ...", stage.name);
        try {
            run_stage(stage.name, config, dir, gateway, source);
            record.artifacts.clear();
            for (const auto& rel : stage.artifacts) {
                record.artifacts.emplace_back(rel, hash_file(dir / rel));
            }
        } catch (const std::exception& e) {
            record.status = "failed";
            manifest.failed_stage = stage.name;
            manifest.error = e.what();
            persist();
            throw StageFailure(stage.name, e.what());
        }
        record.status = "complete";
        persist();
        log::info("stage {} done", stage.name);
    }
}

} // namespace

void save_manifest(const RunManifest& manifest, const std::filesystem::path& run_dir) {
    json doc;
    doc["version"] = manifest.version;
    doc["topic"] = manifest.topic;
    doc["mode"] = to_string(manifest.mode);
    doc["seed"] = manifest.seed;
    doc["config_text"] = manifest.config_text;
    doc["overrides"] = json::parse(overrides_to_json(manifest.overrides));
    doc["created_at"] = manifest.created_at;
    doc["updated_at"] = manifest.updated_at;
    doc["failed_stage"] = manifest.failed_stage;
    doc["error"] = manifest.error;
    json stages = json::object();
    for (const auto& [name, record] : manifest.stages) {
        json artifacts = json::array();
        for (const auto& [path, sha] : record.artifacts) {
            artifacts.push_back({{"path", path}, {"sha256", sha}});
        }
        stages[name] = {{"status", record.status},
                        {"input_digest", record.input_digest},
                        {"artifacts", artifacts}};
    }
    doc["stages"] = stages;
    std::filesystem::create_directories(run_dir);
    util::atomic_write_file(run_dir / "manifest.json", doc.dump(2) + "\n");
}

RunManifest load_manifest(const std::filesystem::path& run_dir) {
    std::filesystem::path path = run_dir / "manifest.json";
    if (!std::filesystem::exists(path)) {
        throw ConfigError("no manifest at " + path.string());
    }
    json doc;
    try {
        doc = json::parse(util::read_file(path));
    } catch (const std::exception& e) {
        throw CorruptManifest("manifest.json does not parse: " + std::string(e.what()));
    }
    RunManifest manifest;
    try {
        manifest.version = doc.at("version").get<int>();
        manifest.topic = doc.at("topic").get<std::string>();
        manifest.mode = run_mode_from_string(doc.at("mode").get<std::string>());
        manifest.seed = doc.at("seed").get<std::uint64_t>();
        manifest.config_text = doc.at("config_text").get<std::string>();
        manifest.overrides = overrides_from_json(doc.at("overrides").dump());
        manifest.created_at = doc.at("created_at").get<std::string>();
        manifest.updated_at = doc.at("updated_at").get<std::string>();
        manifest.failed_stage = doc.at("failed_stage").get<std::string>();
        manifest.error = doc.at("error").get<std::string>();
        for (const auto& [name, entry] : doc.at("stages").items()) {
            StageRecord record;
            record.status = entry.at("status").get<std::string>();
            record.input_digest = entry.at("input_digest").get<std::string>();
            for (const auto& artifact : entry.at("artifacts")) {
                record.artifacts.emplace_back(artifact.at("path").get<std::string>(),
                                              artifact.at("sha256").get<std::string>());
            }
            manifest.stages[name] = std::move(record);
        }
    } catch (const json::exception& e) {
        throw CorruptManifest("manifest.json is missing fields: " + std::string(e.what()));
    }
    return manifest;
}

std::string manifest_summary(const RunManifest& manifest) {
    std::string out;
    out += "topic:   " + manifest.topic + "\n";
    out += "mode:    " + std::string(to_string(manifest.mode)) + "\n";
    out += "seed:    " + std::to_string(manifest.seed) + "\n";
    out += "created: " + manifest.created_at + "\n";
    out += "updated: " + manifest.updated_at + "\n";
    out += "stages:\n";
    for (const auto& stage : pipeline_stages()) {
        auto it = manifest.stages.find(stage.name);
        std::string status = it == manifest.stages.end() ? "pending" : it->second.status;
        out += "  " + stage.name + std::string(12 - stage.name.size(), ' ') + status + "\n";
        if (it == manifest.stages.end()) continue;
        for (const auto& [path, sha] : it->second.artifacts) {
            out += "      " + path + "  " + sha.substr(0, 12) + "\n";
        }
    }
    if (!manifest.failed_stage.empty()) {
        out += "failed stage: " + manifest.failed_stage + "\n";
        out += "error: " + manifest.error + "\n";
    }
    return out;
}

std::vector<std::size_t> ablation_partition(std::size_t n, std::size_t parts) {
    if (parts == 0) throw ConfigError("partition needs at least one part");
    std::vector<std::size_t> sizes(parts, n / parts);
    for (std::size_t i = 0; i < n % parts; ++i) ++sizes[i];
    return sizes;
}

ClusterRun ablation_cluster_run(const CorpusSnapshot& snapshot, std::size_t parts,
                                std::uint64_t seed) {
    if (snapshot.documents.empty()) {
        throw EmptyCorpus("cannot partition an empty corpus");
    }
    std::size_t n = snapshot.documents.size();
    std::vector<std::size_t> sizes = ablation_partition(n, parts);

    ClusterRun run;
    run.seed = seed;
    run.k_star = 0;
    std::size_t next = 0;
    for (std::size_t size : sizes) {
        if (size == 0) continue; // fewer documents than parts
        KnowledgeCluster cluster;
        cluster.cluster_id = static_cast<int>(run.k_star);
        for (std::size_t j = 0; j < size; ++j) {
            const Document& doc = snapshot.documents[next + j];
            cluster.doc_ids.push_back(doc.doc_id);
            run.doc_ids.push_back(doc.doc_id);
            run.labels.push_back(cluster.cluster_id);
        }
        next += size;
        run.clusters.push_back(std::move(cluster));
        ++run.k_star;
    }
    run.degenerate = run.k_star < parts;
    if (run.degenerate) {
        log::warn("corpus of {} documents fills only {} of {} sequential parts", n, run.k_star,
                  parts);
    }
    return run;
}

PipelineEnv build_environment(const RunConfig& config, const std::filesystem::path& run_dir) {
    PipelineEnv env;

    if (config.source.type == "local") {
        env.source = std::make_shared<LocalCorpusSource>(config.source.path);
    } else {
        WikipediaConfig wc;
        wc.api_url = config.source.api_url;
        wc.user_agent = config.source.user_agent;
        wc.timeout_ms = config.source.timeout_ms;
        wc.fixture_dir = config.source.fixture_dir;
        wc.offline = config.source.offline;
        wc.concurrency = static_cast<int>(config.concurrency);
        env.source = std::make_shared<WikipediaSource>(wc);
    }

    auto http_config = [](const ProviderConfig& p) {
        HttpProviderConfig hc;
        hc.base_url = p.base_url;
        hc.api_key = p.api_key;
        hc.model = p.model;
        hc.timeout_ms = p.timeout_ms;
        return hc;
    };

    std::shared_ptr<ChatProvider> chat;
    if (config.chat.provider == "mock") {
        chat = make_pipeline_mock_chat();
    } else {
        chat = make_http_chat_provider(http_config(config.chat));
    }

    std::shared_ptr<EmbeddingProvider> embedder;
    if (config.embedding.provider == "hash") {
        embedder = std::make_shared<HashEmbeddingProvider>(config.embedding.dim);
    } else {
        embedder = make_http_embedding_provider(http_config(config.embedding));
    }

    std::shared_ptr<ChatProvider> judge;
    if (config.judge.provider == "openai") {
        judge = make_http_chat_provider(http_config(config.judge));
    }

    std::shared_ptr<RerankProvider> reranker;
    if (config.rerank.provider == "http") {
        reranker = make_http_rerank_provider(http_config(config.rerank));
    }

    GatewayConfig gc;
    gc.max_context_tokens = config.max_context_tokens;
    if (!run_dir.empty()) gc.cache_dir = run_dir / "cache";
    gc.record_transcript = config.record_transcript;
    gc.concurrency = config.concurrency;
    gc.max_retries = config.gateway_max_retries;
    env.gateway = std::make_shared<Gateway>(gc, chat, embedder, judge, reranker);
    return env;
}

RunManifest run_pipeline(const RunConfig& config, Gateway& gateway, KnowledgeSource& source,
                         const std::string& until) {
    config.validate();
    if (config.topic.empty()) throw ConfigError("a run needs a topic");
    if (config.out_dir.empty()) throw ConfigError("a run needs an output directory");
    if (!until.empty()) stage_index(until);

    const std::filesystem::path& dir = config.out_dir;
    if (std::filesystem::exists(dir / "manifest.json")) {
        throw ConfigError("output directory already holds a run; resume it or pick a fresh "
                          "directory: " +
                          dir.string());
    }
    std::filesystem::create_directories(dir);

    RunManifest manifest;
    manifest.topic = config.topic;
    manifest.mode = config.mode;
    manifest.seed = config.seed;
    manifest.config_text = config.config_text;
    manifest.overrides.topic = config.topic;
    manifest.overrides.mode = to_string(config.mode);
    manifest.overrides.seed = config.seed;
    manifest.overrides.ablation_parts = config.ablation_parts;
    manifest.created_at = now_utc();
    for (const auto& stage : pipeline_stages()) manifest.stages[stage.name] = StageRecord{};

    execute_from(manifest, config, dir, gateway, source, 0, until);
    return manifest;
}

RunManifest run_pipeline(const RunConfig& config, const std::string& until) {
    PipelineEnv env = build_environment(config, config.out_dir);
    return run_pipeline(config, *env.gateway, *env.source, until);
}

namespace {

RunConfig config_from_manifest(const RunManifest& manifest,
                               const std::filesystem::path& run_dir) {
    RunConfig config = parse_run_config(manifest.config_text, manifest.overrides);
    config.out_dir = run_dir;
    return config;
}

} // namespace

RunManifest resume_run(const std::filesystem::path& run_dir, bool force, Gateway& gateway,
                       KnowledgeSource& source, const std::string& until) {
    RunManifest manifest = load_manifest(run_dir);
    RunConfig config = config_from_manifest(manifest, run_dir);
    if (!until.empty()) stage_index(until);

    const auto& stages = pipeline_stages();
    std::optional<std::size_t> start;
    for (std::size_t i = 0; i < stages.size() && !start; ++i) {
        auto it = manifest.stages.find(stages[i].name);
        if (it == manifest.stages.end() || it->second.status != "complete") {
            start = i;
            break;
        }
        const StageRecord& record = it->second;
        if (input_digest_for(config, run_dir, i) != record.input_digest) {
            start = i; // an upstream artifact or the config changed
            break;
        }
        bool intact = record.artifacts.size() == stages[i].artifacts.size();
        for (const auto& [rel, sha] : record.artifacts) {
            std::filesystem::path path = run_dir / rel;
            if (!std::filesystem::exists(path) || hash_file(path) != sha) {
                intact = false;
                break;
            }
        }
        if (!intact) {
            if (!force) {
                throw CorruptManifest("artifacts of completed stage '" + stages[i].name +
                                      "' do not match the manifest; re-run it with --force");
            }
            log::warn("rebuilding from stage {} over mismatched artifacts", stages[i].name);
            start = i;
            break;
        }
    }

    if (!start) {
        log::info("run is complete and intact; nothing to do");
        return manifest;
    }
    execute_from(manifest, config, run_dir, gateway, source, *start, until);
    return manifest;
}

RunManifest resume_run(const std::filesystem::path& run_dir, bool force,
                       const std::string& until) {
    RunManifest manifest = load_manifest(run_dir);
    RunConfig config = config_from_manifest(manifest, run_dir);
    PipelineEnv env = build_environment(config, run_dir);
    return resume_run(run_dir, force, *env.gateway, *env.source, until);
}

} // namespace cw
