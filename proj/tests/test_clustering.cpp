#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "cw/clustering.hpp"
#include "cw/errors.hpp"
#include "cw/mock_provider.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace cw;
using test_support::make_matrix;
using test_support::planted_blobs;
using test_support::random_matrix;

TEST_CASE("kmeans validates k") {
    auto m = random_matrix(5, 2, 1);
    CHECK_THROWS_AS(kmeans(m, 0, 0), InvalidK);
    CHECK_THROWS_AS(kmeans(m, 6, 0), InvalidK);
}

TEST_CASE("kmeans degenerate k values") {
    auto m = random_matrix(6, 3, 2);

    auto one = kmeans(m, 1, 0);
    CHECK(std::all_of(one.labels.begin(), one.labels.end(), [](int l) { return l == 0; }));
    CHECK(one.inertia == doctest::Approx(oracle::partition_inertia(m, one.labels, 1)));

    auto full = kmeans(m, 6, 0);
    std::set<int> distinct(full.labels.begin(), full.labels.end());
    CHECK(distinct.size() == 6);
    CHECK(full.inertia == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kmeans is deterministic for a fixed seed") {
    auto m = random_matrix(20, 4, 3);
    auto a = kmeans(m, 4, 7);
    auto b = kmeans(m, 4, 7);
    CHECK(a.labels == b.labels);
    CHECK(a.inertia == b.inertia);
    CHECK(a.centroids == b.centroids);
}

TEST_CASE("kmeans is invariant under row permutation") {
    auto m = random_matrix(12, 3, 4);
    EmbeddingMatrix reversed;
    reversed.n = m.n;
    reversed.d = m.d;
    for (std::size_t i = 0; i < m.n; ++i) {
        auto row = m.row(m.n - 1 - i);
        reversed.data.insert(reversed.data.end(), row.begin(), row.end());
    }

    auto a = kmeans(m, 3, 5);
    auto b = kmeans(reversed, 3, 5);
    for (std::size_t i = 0; i < m.n; ++i) {
        CHECK(a.labels[i] == b.labels[m.n - 1 - i]);
    }
    CHECK(a.inertia == doctest::Approx(b.inertia).epsilon(1e-12));
}

TEST_CASE("kmeans inertia is the within-cluster sum of squares of its output") {
    for (unsigned seed = 0; seed < 5; ++seed) {
        auto m = random_matrix(15, 3, 100 + seed);
        auto result = kmeans(m, 3, seed);
        CHECK(result.inertia ==
              doctest::Approx(oracle::partition_inertia(m, result.labels, 3)).epsilon(1e-12));
    }
}

TEST_CASE("kmeans reaches the enumerated global optimum on small instances") {
    for (unsigned seed = 0; seed < 6; ++seed) {
        auto m = random_matrix(4 + seed, 2, 200 + seed);
        for (std::size_t k : {std::size_t{2}, std::size_t{3}}) {
            if (k > m.n) continue;
            auto result = kmeans(m, k, seed);
            double best = oracle::best_partition_inertia(m, k);
            CHECK(std::abs(result.inertia - best) <= 1e-9);
        }
    }
}

TEST_CASE("kmeans inertia trace never increases") {
    auto m = planted_blobs(10, 3, 4, 8.0, 1.5, 11);
    auto result = kmeans(m, 3, 0);
    REQUIRE(!result.inertia_trace.empty());
    for (std::size_t i = 1; i < result.inertia_trace.size(); ++i) {
        CHECK(result.inertia_trace[i] <= result.inertia_trace[i - 1] + 1e-9);
    }
    CHECK(result.converged);
}

TEST_CASE("silhouette matches the hand-computed two-pair fixture") {
    auto m = make_matrix(4, 2, {0, 0, 0, 1, 10, 10, 10, 11});
    std::vector<int> labels{0, 0, 1, 1};
    double value = silhouette(m, labels);
    CHECK(value == doctest::Approx(oracle::silhouette(m, labels)).epsilon(1e-12));
    CHECK(value == doctest::Approx(0.929289).epsilon(1e-4));
}

TEST_CASE("silhouette validates its inputs") {
    auto m = make_matrix(3, 1, {0, 1, 2});
    CHECK_THROWS_AS(silhouette(m, {0, 0, 0}), SingleCluster);
    CHECK_THROWS_AS(silhouette(m, {0, 0}), Error);
    CHECK_THROWS_AS(silhouette(m, {0, -1, 1}), Error);
    // Gaps in label ids are fine as long as two clusters are non-empty.
    CHECK_NOTHROW(silhouette(m, {0, 3, 3}));
}

TEST_CASE("singleton clusters contribute zero") {
    auto m = make_matrix(3, 1, {0, 10, 11});
    std::vector<int> labels{0, 1, 1};
    CHECK(silhouette(m, labels) == doctest::Approx(oracle::silhouette(m, labels)).epsilon(1e-12));
}

TEST_CASE("silhouette equals the oracle on random labelings") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 12; ++trial) {
        std::size_t n = 5 + rng() % 20;
        std::size_t k = 2 + rng() % 3;
        auto m = random_matrix(n, 3, static_cast<unsigned>(300 + trial));
        std::vector<int> labels(n);
        // Force two non-empty clusters, the rest random.
        labels[0] = 0;
        labels[1] = 1;
        for (std::size_t i = 2; i < n; ++i) labels[i] = static_cast<int>(rng() % k);
        CHECK(silhouette(m, labels) ==
              doctest::Approx(oracle::silhouette(m, labels)).epsilon(1e-12));
    }
}

TEST_CASE("sampled silhouette is deterministic and close to exact") {
    std::vector<int> planted;
    auto m = planted_blobs(60, 3, 4, 10.0, 1.0, 21, &planted);

    double exact = silhouette(m, planted);
    double sampled1 = silhouette(m, planted, 50, 9);
    double sampled2 = silhouette(m, planted, 50, 9);
    CHECK(sampled1 == sampled2);
    CHECK(std::abs(sampled1 - exact) < 0.1);

    // A sample covering everything is the exact value.
    CHECK(silhouette(m, planted, 5000, 1) == exact);
}

TEST_CASE("select_optimal_k recovers planted structure") {
    auto m = planted_blobs(15, 3, 4, 12.0, 0.8, 31);
    auto sel = select_optimal_k(m, 2, 6, 17);
    CHECK(sel.k_star == 3);
    CHECK(!sel.degenerate);
    REQUIRE(sel.scores.size() == 5);
    for (std::size_t i = 0; i < sel.scores.size(); ++i) {
        CHECK(sel.scores[i].first == i + 2);
    }
    // The reported best assignment belongs to k_star.
    CHECK(sel.best.k == sel.k_star);
    std::set<int> distinct(sel.best.labels.begin(), sel.best.labels.end());
    CHECK(distinct.size() == 3);
}

TEST_CASE("select_optimal_k is stable across worker counts") {
    auto m = planted_blobs(8, 4, 4, 9.0, 1.0, 41);
    auto serial = select_optimal_k(m, 2, 8, 5, 512, 1);
    auto parallel = select_optimal_k(m, 2, 8, 5, 512, 4);
    CHECK(serial.k_star == parallel.k_star);
    CHECK(serial.scores == parallel.scores);
    CHECK(serial.best.labels == parallel.best.labels);
}

TEST_CASE("select_optimal_k clamps the k range to n-1 and flags tiny inputs") {
    auto tiny = random_matrix(2, 2, 51);
    auto sel = select_optimal_k(tiny, 2, 8, 0);
    CHECK(sel.k_star == 1);
    CHECK(sel.degenerate);
    CHECK(sel.scores.empty());

    auto small = random_matrix(4, 2, 52);
    auto clamped = select_optimal_k(small, 2, 8, 0);
    CHECK(clamped.scores.size() == 2); // k in {2, 3}

    CHECK_THROWS_AS(select_optimal_k(small, 1, 8, 0), InvalidK);
    auto m5 = random_matrix(5, 2, 53);
    CHECK_THROWS_AS(select_optimal_k(m5, 5, 8, 0), InvalidK);
}

namespace {

CorpusSnapshot snapshot_for(const std::vector<Document>& docs) {
    CorpusSnapshot snapshot;
    snapshot.topic = "space exploration";
    snapshot.documents = docs;
    for (const auto& doc : docs) snapshot.stage1_ids.push_back(doc.doc_id);
    return snapshot;
}

Gateway mock_gateway() {
    GatewayConfig config;
    config.retry_backoff_ms = 0;
    return Gateway(config, make_pipeline_mock_chat(), std::make_shared<HashEmbeddingProvider>(8));
}

} // namespace

TEST_CASE("cluster_corpus partitions documents by embedding") {
    using test_support::make_doc;
    std::vector<Document> docs;
    for (int i = 0; i < 3; ++i) {
        docs.push_back(make_doc("rover-" + std::to_string(i), "Mars rover " + std::to_string(i),
                                "rover mars crater wheels dust rover mars rover"));
        docs.push_back(make_doc("scope-" + std::to_string(i), "Telescope " + std::to_string(i),
                                "telescope mirror optics orbit starlight telescope mirror"));
    }
    auto gateway = mock_gateway();
    ClusterRun run = cluster_corpus(snapshot_for(docs), gateway, {2, 4, 512, 7, 1});

    CHECK(run.k_star == 2);
    CHECK(run.doc_ids.size() == 6);
    CHECK(run.seed == 7);
    // Same-theme documents share a cluster.
    std::map<std::string, int> by_id;
    for (std::size_t i = 0; i < run.doc_ids.size(); ++i) by_id[run.doc_ids[i]] = run.labels[i];
    CHECK(by_id["rover-0"] == by_id["rover-1"]);
    CHECK(by_id["rover-1"] == by_id["rover-2"]);
    CHECK(by_id["scope-0"] == by_id["scope-1"]);
    CHECK(by_id["rover-0"] != by_id["scope-0"]);
    // Cluster membership lists match the labels.
    for (const auto& cluster : run.clusters) {
        for (const auto& id : cluster.doc_ids) {
            CHECK(by_id[id] == cluster.cluster_id);
        }
    }
}

TEST_CASE("cluster_corpus handles tiny and empty corpora") {
    using test_support::make_doc;
    auto gateway = mock_gateway();

    CHECK_THROWS_AS(cluster_corpus(snapshot_for({}), gateway, {}), EmptyCorpus);

    test_support::LogCapture logs;
    auto run = cluster_corpus(
        snapshot_for({make_doc("a", "A", "alpha beta"), make_doc("b", "B", "gamma delta"),
                      make_doc("c", "C", "epsilon zeta")}),
        gateway, {});
    CHECK(run.k_star == 1);
    CHECK(run.degenerate);
    CHECK(run.labels == std::vector<int>{0, 0, 0});
    CHECK(logs.contains("too small"));
}

TEST_CASE("cluster run save/load round-trips") {
    test_support::TempDir dir;
    ClusterRun run;
    run.k_star = 2;
    run.seed = 9;
    run.degenerate = false;
    run.scores = {{2, 0.8}, {3, 0.5}};
    run.doc_ids = {"a", "b", "c"};
    run.labels = {1, 0, 1};
    run.clusters.resize(2);
    run.clusters[0].cluster_id = 0;
    run.clusters[0].doc_ids = {"b"};
    run.clusters[1].cluster_id = 1;
    run.clusters[1].doc_ids = {"a", "c"};

    auto path = dir.path() / "clusters" / "assignments.json";
    save_cluster_run(run, path);
    auto loaded = load_cluster_run(path);
    CHECK(loaded.k_star == run.k_star);
    CHECK(loaded.seed == run.seed);
    CHECK(loaded.degenerate == run.degenerate);
    CHECK(loaded.scores == run.scores);
    CHECK(loaded.doc_ids == run.doc_ids);
    CHECK(loaded.labels == run.labels);
    REQUIRE(loaded.clusters.size() == 2);
    CHECK(loaded.clusters[1].doc_ids == run.clusters[1].doc_ids);

    CHECK_THROWS(load_cluster_run(dir.path() / "missing.json"));
}
