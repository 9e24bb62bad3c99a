#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace cw::util {

// -- hashing ---------------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::uint64_t fnv1a64(std::string_view data);

// Derive an independent seed for a named random stream from the run seed.
// Stable across platforms and runs.
std::uint64_t split_seed(std::uint64_t seed, std::string_view stream_name);

// -- deterministic randomness ------------------------------------------------
// std::mt19937_64 output is standardized; the distributions are not, so the
// few draws we need are implemented here.

std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t bound); // [0, bound)
double uniform_real(std::mt19937_64& rng);                              // [0, 1)
double gaussian(std::mt19937_64& rng);                                  // N(0, 1)

// Sample `count` distinct indices from [0, n) in ascending order.
std::vector<std::size_t> sample_without_replacement(std::mt19937_64& rng,
                                                    std::size_t n,
                                                    std::size_t count);

// -- strings ---------------------------------------------------------------

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);

// Truncate to at most max_bytes without splitting a UTF-8 sequence.
std::string utf8_truncate(std::string_view s, std::size_t max_bytes);

// Default token estimate used wherever no exact tokenizer is configured:
// ceil(bytes / 4).
std::size_t approx_token_count(std::string_view s);

// Everything up to and including the first sentence terminator (.!?),
// or the whole string when none is found.
std::string first_sentence(std::string_view s);

// Scan a model answer for a yes/no verdict. Comparison is on whole uppercased
// tokens, so a negative like IRRELEVANT never matches through its positive
// substring. The first token equal to either verdict decides; nullopt when
// neither occurs.
std::optional<bool> parse_verdict(std::string_view text, std::string_view positive,
                                  std::string_view negative);

// Lowercase ASCII identifier usable in a file name.
std::string slugify(std::string_view s, std::size_t max_len = 40);

// -- filesystem --------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
// Write via a temp file in the same directory, then rename into place.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

// -- concurrency -----------------------------------------------------------
// Run fn(i) for i in [0, n) on up to `workers` threads. If any invocation
// throws, the exception from the smallest index is rethrown after all
// threads finish.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

} // namespace cw::util
