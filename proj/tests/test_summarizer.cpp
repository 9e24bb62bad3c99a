#include "doctest.h"

#include <string>

#include "cw/errors.hpp"
#include "cw/mock_provider.hpp"
#include "cw/summarizer.hpp"
#include "test_support.hpp"

using namespace cw;
using test_support::make_doc;

namespace {

Gateway mock_gateway(std::shared_ptr<MockChatProvider> chat) {
    GatewayConfig config;
    config.retry_backoff_ms = 0;
    config.max_retries = 1;
    config.concurrency = 1;
    return Gateway(config, std::move(chat), std::make_shared<HashEmbeddingProvider>(8));
}

LeafSummary leaf(const std::string& doc_id, const std::string& text, std::size_t tokens) {
    return LeafSummary{doc_id, text, tokens};
}

} // namespace

TEST_CASE("small documents are summarized in one call") {
    auto chat = make_pipeline_mock_chat();
    auto gateway = mock_gateway(chat);
    auto doc = make_doc("a", "Alpha", "First sentence here. Second sentence.");

    auto summary = summarize_document(doc, gateway, {});
    CHECK(summary.doc_id == "a");
    CHECK(summary.text == "Summary of Alpha: First sentence here.");
    CHECK(summary.token_count == gateway.count_tokens(summary.text));
    CHECK(chat->call_count("summarize") == 1);

    CHECK_THROWS_AS(summarize_document(make_doc("e", "Empty", ""), gateway, {}), Error);
}

TEST_CASE("oversized documents are chunked and reduced") {
    auto chat = make_pipeline_mock_chat();
    auto gateway = mock_gateway(chat);

    SummarizerConfig config;
    config.max_input_tokens = 50; // 200 bytes per chunk
    std::string text;
    for (int i = 0; i < 60; ++i) text += "word" + std::to_string(i) + " ";
    REQUIRE(gateway.count_tokens(text) > 2 * config.max_input_tokens);

    test_support::LogCapture logs;
    auto summary = summarize_document(make_doc("big", "Big", text), gateway, config);
    // ceil(tokens/cap) chunk calls plus one reduce call.
    std::size_t chunks = (gateway.count_tokens(text) + 49) / 50;
    CHECK(chat->call_count("summarize") == chunks + 1);
    CHECK(logs.contains("chunks"));
    CHECK(!summary.text.empty());
}

TEST_CASE("over-budget summaries are truncated with an ellipsis") {
    auto chat = std::make_shared<MockChatProvider>();
    std::string verbose(400, 'x');
    chat->on_template("summarize", [&](const ChatCall&) { return verbose; });
    auto gateway = mock_gateway(chat);

    SummarizerConfig config;
    config.leaf_budget_tokens = 20;
    test_support::LogCapture logs;
    auto summary = summarize_document(make_doc("v", "Verbose", "text"), gateway, config);
    CHECK(summary.token_count <= 20);
    CHECK(summary.text.substr(summary.text.size() - 3) == "…"); // 3-byte ellipsis
    CHECK(logs.contains("truncating"));
}

TEST_CASE("an empty model summary falls back to the document head") {
    auto chat = std::make_shared<MockChatProvider>();
    chat->on_template("summarize", [](const ChatCall&) { return std::string("   "); });
    auto gateway = mock_gateway(chat);
    test_support::LogCapture logs;
    auto summary = summarize_document(make_doc("d", "D", "The actual text."), gateway, {});
    CHECK(summary.text == "The actual text.");
    CHECK(logs.contains("empty summary"));
}

TEST_CASE("cluster summaries concatenate leaves in doc_id order") {
    auto chat = std::make_shared<MockChatProvider>();
    std::string seen_block;
    chat->on_template("cluster_summarize", [&](const ChatCall& call) {
        seen_block = call.bindings.at("summaries");
        return std::string("Cluster digest.");
    });
    auto gateway = mock_gateway(chat);

    KnowledgeCluster cluster;
    cluster.cluster_id = 1;
    cluster.doc_ids = {"zeta", "alpha"}; // intentionally unsorted
    auto summary = summarize_cluster(cluster,
                                     {leaf("zeta", "Z text.", 3), leaf("alpha", "A text.", 3)},
                                     "topic", gateway, {});
    CHECK(summary.cluster_id == 1);
    CHECK(summary.text == "Cluster digest.");
    CHECK(summary.source_leaf_ids == cluster.doc_ids);
    CHECK(seen_block == "1. A text.\n2. Z text.\n");
}

TEST_CASE("missing leaves and empty clusters are rejected") {
    auto gateway = mock_gateway(make_pipeline_mock_chat());
    KnowledgeCluster cluster;
    cluster.cluster_id = 0;
    cluster.doc_ids = {"ghost"};
    CHECK_THROWS_AS(summarize_cluster(cluster, {}, "t", gateway, {}), MissingLeaf);

    KnowledgeCluster empty;
    CHECK_THROWS_AS(summarize_cluster(empty, {}, "t", gateway, {}), Error);
}

TEST_CASE("oversized clusters reduce in leaf batches first") {
    auto chat = make_pipeline_mock_chat();
    auto gateway = mock_gateway(chat);

    SummarizerConfig config;
    config.max_input_tokens = 100;
    KnowledgeCluster cluster;
    std::vector<LeafSummary> leaves;
    for (int i = 0; i < 5; ++i) {
        std::string id = "doc" + std::to_string(i);
        cluster.doc_ids.push_back(id);
        leaves.push_back(leaf(id, "Leaf " + std::to_string(i) + " facts.", 30));
    }
    // 5 x 30 tokens against a 100-token cap: batches of 3 and 2, then the
    // final reduce over the two batch summaries.
    test_support::LogCapture logs;
    auto summary = summarize_cluster(cluster, leaves, "t", gateway, config);
    CHECK(chat->call_count("cluster_summarize") == 3);
    CHECK(logs.contains("2 batches"));
    CHECK(!summary.text.empty());

    // A single oversized leaf is never split further.
    chat->clear_calls();
    KnowledgeCluster solo;
    solo.doc_ids = {"doc0"};
    summarize_cluster(solo, {leaf("doc0", "Huge leaf.", 500)}, "t", gateway, config);
    CHECK(chat->call_count("cluster_summarize") == 1);
}

TEST_CASE("cluster summaries are clamped to their budget") {
    auto chat = std::make_shared<MockChatProvider>();
    chat->on_template("cluster_summarize",
                      [](const ChatCall&) { return std::string(900, 'y'); });
    auto gateway = mock_gateway(chat);
    SummarizerConfig config;
    config.cluster_budget_tokens = 50;

    KnowledgeCluster cluster;
    cluster.doc_ids = {"a"};
    test_support::LogCapture logs;
    auto summary = summarize_cluster(cluster, {leaf("a", "A.", 1)}, "t", gateway, config);
    CHECK(gateway.count_tokens(summary.text) <= 50);
    CHECK(logs.contains("truncating"));
}

TEST_CASE("summarize_corpus yields one leaf per document and one root per cluster") {
    auto gateway = mock_gateway(make_pipeline_mock_chat());
    CorpusSnapshot snapshot;
    snapshot.topic = "t";
    snapshot.documents = {make_doc("a", "A", "Alpha facts."),
                          make_doc("b", "B", "Beta facts."),
                          make_doc("c", "C", "Gamma facts.")};
    std::vector<KnowledgeCluster> clusters(2);
    clusters[0].cluster_id = 0;
    clusters[0].doc_ids = {"a", "c"};
    clusters[1].cluster_id = 1;
    clusters[1].doc_ids = {"b"};

    auto set = summarize_corpus(snapshot, clusters, gateway, {});
    REQUIRE(set.leaves.size() == 3);
    CHECK(set.leaves[0].doc_id == "a"); // snapshot order
    CHECK(set.leaves[2].doc_id == "c");
    REQUIRE(set.cluster_summaries.size() == 2);
    CHECK(set.cluster_summaries[0].cluster_id == 0);
    CHECK(set.cluster_summaries[1].cluster_id == 1);
    CHECK(set.cluster_summaries[1].source_leaf_ids == std::vector<std::string>{"b"});
}

TEST_CASE("summary sets round-trip through disk") {
    test_support::TempDir dir;
    SummarySet set;
    set.leaves = {leaf("a", "A summary.", 3), leaf("b", "B summary.", 3)};
    set.cluster_summaries = {{0, "Root text.", {"a", "b"}}};

    auto path = dir.path() / "clusters" / "summaries.json";
    save_summaries(set, path);
    auto loaded = load_summaries(path);
    REQUIRE(loaded.leaves.size() == 2);
    CHECK(loaded.leaves[0].doc_id == "a");
    CHECK(loaded.leaves[0].text == "A summary.");
    CHECK(loaded.leaves[0].token_count == 3);
    REQUIRE(loaded.cluster_summaries.size() == 1);
    CHECK(loaded.cluster_summaries[0].cluster_id == 0);
    CHECK(loaded.cluster_summaries[0].source_leaf_ids == std::vector<std::string>{"a", "b"});
}
