#include "doctest.h"

#include <atomic>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "cw/util.hpp"
#include "test_support.hpp"

using namespace cw;

TEST_CASE("sha256 matches known vectors") {
    CHECK(util::sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(util::sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("fnv1a64 matches known vectors") {
    // Standard 64-bit FNV-1a: offset basis 0xcbf29ce484222325, prime 0x100000001b3.
    CHECK(util::fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(util::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(util::fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("split_seed is stable and stream-dependent") {
    auto a = util::split_seed(42, "clustering");
    auto b = util::split_seed(42, "clustering");
    auto c = util::split_seed(42, "sampling");
    auto d = util::split_seed(43, "clustering");
    CHECK(a == b);
    CHECK(a != c);
    CHECK(a != d);
}

TEST_CASE("uniform_index stays in range and is deterministic") {
    std::mt19937_64 rng1(7), rng2(7);
    for (int i = 0; i < 1000; ++i) {
        auto v1 = util::uniform_index(rng1, 13);
        auto v2 = util::uniform_index(rng2, 13);
        CHECK(v1 == v2);
        CHECK(v1 < 13);
    }
}

TEST_CASE("sample_without_replacement returns sorted distinct indices") {
    std::mt19937_64 rng(99);
    auto sample = util::sample_without_replacement(rng, 100, 30);
    REQUIRE(sample.size() == 30);
    std::set<std::size_t> seen(sample.begin(), sample.end());
    CHECK(seen.size() == 30);
    CHECK(std::is_sorted(sample.begin(), sample.end()));
    CHECK(*sample.rbegin() < 100);

    // Requesting everything returns the full range.
    std::mt19937_64 rng2(1);
    auto all = util::sample_without_replacement(rng2, 5, 5);
    REQUIRE(all.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(all[i] == i);
}

TEST_CASE("trim and to_lower") {
    CHECK(util::trim("  hi \t\n") == "hi");
    CHECK(util::trim("") == "");
    CHECK(util::trim(" \n ") == "");
    CHECK(util::to_lower("MiXeD Case") == "mixed case");
}

TEST_CASE("split_lines handles trailing newline and CRLF") {
    auto lines = util::split_lines("a\nb\r\nc\n");
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "a");
    CHECK(lines[1] == "b");
    CHECK(lines[2] == "c");
}

TEST_CASE("contains_ci") {
    CHECK(util::contains_ci("The Mars Rover", "mars"));
    CHECK(!util::contains_ci("The Mars Rover", "venus"));
    CHECK(util::contains_ci("abc", ""));
}

TEST_CASE("utf8_truncate never splits a multibyte sequence") {
    std::string s = "ab\xC3\xA9z"; // "abéz"
    CHECK(util::utf8_truncate(s, 10) == s);
    CHECK(util::utf8_truncate(s, 4) == "ab\xC3\xA9");
    CHECK(util::utf8_truncate(s, 3) == "ab"); // cutting inside é backs off
    CHECK(util::utf8_truncate(s, 0) == "");
}

TEST_CASE("approx_token_count rounds bytes up by four") {
    CHECK(util::approx_token_count("") == 0);
    CHECK(util::approx_token_count("abc") == 1);
    CHECK(util::approx_token_count("abcd") == 1);
    CHECK(util::approx_token_count("abcde") == 2);
    CHECK(util::approx_token_count(std::string(4000, 'x')) == 1000);
}

TEST_CASE("first_sentence stops at the first terminator") {
    CHECK(util::first_sentence("One. Two. Three.") == "One.");
    CHECK(util::first_sentence("Does it work? Yes.") == "Does it work?");
    CHECK(util::first_sentence("no terminator") == "no terminator");
}

TEST_CASE("parse_verdict compares whole tokens") {
    CHECK(util::parse_verdict("RELEVANT", "RELEVANT", "IRRELEVANT") == true);
    CHECK(util::parse_verdict("irrelevant", "RELEVANT", "IRRELEVANT") == false);
    // The positive never matches as a substring of the negative.
    CHECK(util::parse_verdict("Clearly IRRELEVANT here", "RELEVANT", "IRRELEVANT") == false);
    CHECK(util::parse_verdict("verdict: RELEVANT.", "RELEVANT", "IRRELEVANT") == true);
    CHECK(util::parse_verdict("no verdict at all", "RELEVANT", "IRRELEVANT") == std::nullopt);
    // First decisive token wins.
    CHECK(util::parse_verdict("RELEVANT but maybe IRRELEVANT", "RELEVANT", "IRRELEVANT") == true);
}

TEST_CASE("slugify produces a safe identifier") {
    CHECK(util::slugify("Hello, World!") == "hello-world");
    CHECK(util::slugify("  Multi   space  ") == "multi-space");
    CHECK(util::slugify("Ünïcödé bits") == "n-c-d-bits");
    auto long_slug = util::slugify(std::string(100, 'a'), 10);
    CHECK(long_slug.size() <= 10);
    CHECK(!util::slugify("!!!").empty());
}

TEST_CASE("atomic_write_file round-trips and replaces") {
    test_support::TempDir dir;
    auto path = dir.path() / "out.txt";
    util::atomic_write_file(path, "first");
    CHECK(util::read_file(path) == "first");
    util::atomic_write_file(path, "second");
    CHECK(util::read_file(path) == "second");
    // No leftover temp files.
    std::size_t entries = 0;
    for ([[maybe_unused]] auto& e : std::filesystem::directory_iterator(dir.path())) ++entries;
    CHECK(entries == 1);
}

TEST_CASE("read_file on a missing path throws") {
    CHECK_THROWS(util::read_file("/nonexistent/definitely/missing.txt"));
}

TEST_CASE("parallel_for covers every index") {
    std::vector<std::atomic<int>> hits(257);
    util::parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("parallel_for rethrows the smallest-index exception") {
    auto run = [](std::size_t workers) {
        try {
            util::parallel_for(100, workers, [&](std::size_t i) {
                if (i == 17 || i == 3 || i == 80) {
                    throw std::runtime_error("boom " + std::to_string(i));
                }
            });
        } catch (const std::runtime_error& e) {
            return std::string(e.what());
        }
        return std::string("no throw");
    };
    CHECK(run(1) == "boom 3");
    CHECK(run(8) == "boom 3");
}

TEST_CASE("parallel_for with zero items never calls fn") {
    bool called = false;
    util::parallel_for(0, 4, [&](std::size_t) { called = true; });
    CHECK(!called);
}
