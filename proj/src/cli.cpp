#include "cw/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdint>
#include <cstdio>
#include <string>

#include "cw/config.hpp"
#include "cw/document.hpp"
#include "cw/errors.hpp"
#include "cw/evaluator.hpp"
#include "cw/pipeline.hpp"
#include "cw/util.hpp"

namespace cw {

namespace {

std::string topic_from_heading(const std::string& markdown) {
    for (const auto& line : util::split_lines(markdown)) {
        std::string t = util::trim(line);
        if (t.rfind("# ", 0) == 0) return util::trim(t.substr(2));
    }
    return "";
}

int do_eval(const std::string& article_path, const std::string& corpus_path,
            const std::string& config_path, std::string topic,
            const std::string& report_path) {
    std::string markdown = util::read_file(article_path);
    if (topic.empty()) topic = topic_from_heading(markdown);
    if (topic.empty()) {
        throw ConfigError("the article has no '# ' heading; pass --topic");
    }
    std::vector<Document> corpus = documents_from_jsonl(util::read_file(corpus_path));
    RunConfig config = load_run_config(config_path);
    PipelineEnv env = build_environment(config, "");

    EvalConfig ec;
    ec.judge_excerpt_tokens = config.judge_excerpt_tokens;
    ec.min_paragraph_words = config.min_paragraph_words;
    EvalReport report =
        evaluate_article(topic, markdown, std::nullopt, corpus, *env.gateway, ec);

    fmt::print("topic:      {}\n", topic);
    fmt::print("words:      {}\n", report.word_length);
    fmt::print("cited docs: {}\n", report.cited_docs);
    for (std::size_t i = 0; i < report.rubric.names.size(); ++i) {
        if (report.rubric.scores[i]) {
            fmt::print("{:<11} {:.2f}\n", report.rubric.names[i] + ":",
                       *report.rubric.scores[i]);
        } else {
            fmt::print("{:<11} (no score)\n", report.rubric.names[i] + ":");
        }
    }
    fmt::print("rubric avg: {:.2f}\n", round_2dp(report.rubric.average));
    fmt::print("coverage:   {:.1f}%\n", report.coverage_percent);
    if (!report_path.empty()) {
        save_report(report, report_path);
        fmt::print("report written to {}\n", report_path);
    }
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Corpus-grounded long-form article pipeline"};
    app.require_subcommand(1);

    std::string topic;
    std::string config_path;
    std::string mode;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::string until;
    std::size_t ablation_parts = 5;
    bool force = false;
    std::string article_path;
    std::string corpus_path;
    std::string report_path;

    CLI::App* run = app.add_subcommand("run", "Execute the full pipeline for a topic");
    run->add_option("--topic", topic, "Subject of the article")->required();
    run->add_option("--config", config_path, "Path to the run config file")
        ->required()
        ->check(CLI::ExistingFile);
    CLI::Option* mode_opt = run->add_option("--mode", mode, "full or no-clustering")
                                ->check(CLI::IsMember({"full", "no-clustering"}));
    CLI::Option* seed_opt = run->add_option("--seed", seed, "Run seed");
    CLI::Option* out_opt = run->add_option("--out", out_dir, "Run directory");
    run->add_option("--until", until, "Stop after this stage");
    CLI::Option* parts_opt = run->add_option("--ablation-parts", ablation_parts,
                                             "Sequential parts in no-clustering mode");

    CLI::App* resume = app.add_subcommand("resume", "Continue an interrupted run");
    resume->add_option("--out", out_dir, "Run directory")->required();
    resume->add_flag("--force", force, "Rebuild over mismatched artifacts");
    resume->add_option("--until", until, "Stop after this stage");

    CLI::App* eval = app.add_subcommand("eval", "Grade an article against a corpus");
    eval->add_option("--article", article_path, "Article markdown file")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--corpus", corpus_path, "Corpus JSONL file")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--config", config_path, "Path to the run config file")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--topic", topic, "Defaults to the article's '# ' heading");
    eval->add_option("--report", report_path, "Write the full report JSON here");

    CLI::App* inspect = app.add_subcommand("inspect", "Print a run's manifest summary");
    inspect->add_option("--out", out_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            RunOverrides overrides;
            overrides.topic = topic;
            if (mode_opt->count() > 0) overrides.mode = mode;
            if (seed_opt->count() > 0) overrides.seed = seed;
            if (out_opt->count() > 0) overrides.out_dir = out_dir;
            if (parts_opt->count() > 0) overrides.ablation_parts = ablation_parts;
            RunConfig config = load_run_config(config_path, overrides);
            if (config.out_dir.empty()) {
                throw ConfigError("pass --out or set out_dir in the [run] section");
            }
            RunManifest manifest = run_pipeline(config, until);
            fmt::print("{}", manifest_summary(manifest));
            return 0;
        }
        if (resume->parsed()) {
            RunManifest manifest = resume_run(out_dir, force, until);
            fmt::print("{}", manifest_summary(manifest));
            return 0;
        }
        if (eval->parsed()) {
            return do_eval(article_path, corpus_path, config_path, topic, report_path);
        }
        if (inspect->parsed()) {
            fmt::print("{}", manifest_summary(load_manifest(out_dir)));
            return 0;
        }
    } catch (const StageFailure& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 3;
    } catch (const CorruptManifest& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 4;
    } catch (const ConfigError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 3;
    }
    return 0;
}

} // namespace cw
