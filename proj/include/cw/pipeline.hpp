#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cw/clustering.hpp"
#include "cw/config.hpp"
#include "cw/gateway.hpp"
#include "cw/knowledge_source.hpp"

namespace cw {

// The seven stages in execution order with the artifacts each one persists
// (paths relative to the run directory). Later stages read only artifacts
// listed for earlier stages.
struct StageDef {
    std::string name;
    std::vector<std::string> artifacts;
};

const std::vector<StageDef>& pipeline_stages();
std::size_t stage_index(const std::string& name); // throws ConfigError on unknown names

struct StageRecord {
    std::string status = "pending"; // pending | complete | failed
    std::string input_digest;       // hash over config and upstream artifacts
    // (relative path, sha256) per artifact, in StageDef order.
    std::vector<std::pair<std::string, std::string>> artifacts;
};

struct RunManifest {
    int version = 1;
    std::string topic;
    RunMode mode = RunMode::full;
    std::uint64_t seed = 0;
    std::string config_text;
    RunOverrides overrides;
    std::string created_at;
    std::string updated_at;
    std::string failed_stage; // empty while no stage has failed
    std::string error;
    std::map<std::string, StageRecord> stages;

    bool complete() const;
};

void save_manifest(const RunManifest& manifest, const std::filesystem::path& run_dir);
RunManifest load_manifest(const std::filesystem::path& run_dir);
std::string manifest_summary(const RunManifest& manifest);

// Sizes of a sequential split of n items into `parts` contiguous parts whose
// sizes differ by at most one, larger parts first.
std::vector<std::size_t> ablation_partition(std::size_t n, std::size_t parts = 5);

// Clustering replacement for the no-clustering mode: the corpus in retrieval
// order, cut into `parts` contiguous clusters. Fewer documents than parts
// leaves the run degenerate (the empty tail parts are dropped).
ClusterRun ablation_cluster_run(const CorpusSnapshot& snapshot, std::size_t parts,
                                std::uint64_t seed);

// Providers assembled from a config. The gateway caches under
// run_dir/cache when run_dir is non-empty.
struct PipelineEnv {
    std::shared_ptr<KnowledgeSource> source;
    std::shared_ptr<Gateway> gateway;
};

PipelineEnv build_environment(const RunConfig& config, const std::filesystem::path& run_dir);

// Executes every stage in order into config.out_dir, writing the manifest
// after each one. A failing stage is recorded in the manifest and rethrown
// as StageFailure. `until` (a stage name, empty for all) stops after that
// stage, leaving the rest pending. The out directory must not already hold
// a manifest.
RunManifest run_pipeline(const RunConfig& config, Gateway& gateway, KnowledgeSource& source,
                         const std::string& until = "");
RunManifest run_pipeline(const RunConfig& config, const std::string& until = "");

// Restarts an existing run at the first stage whose flag is unset or whose
// inputs changed. A completed stage whose artifacts no longer match the
// manifest with unchanged inputs is CorruptManifest; force re-runs from that
// stage instead. Returns the manifest unchanged when nothing needs work.
RunManifest resume_run(const std::filesystem::path& run_dir, bool force, Gateway& gateway,
                       KnowledgeSource& source, const std::string& until = "");
RunManifest resume_run(const std::filesystem::path& run_dir, bool force = false,
                       const std::string& until = "");

} // namespace cw
