#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cone {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input file or unparseable content (always carries file/line context).
class ParseError : public Error {
public:
    using Error::Error;
};

/// A precondition or invariant violated by caller-supplied data.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Scoring backend could not produce a probability (e.g. unsmoothed zero).
class ScoreError : public Error {
public:
    using Error::Error;
};

/// Remote backend transport failure, surfaced after bounded retries.
class RemoteError : public Error {
public:
    RemoteError(const std::string& what, int attempts_made = 0)
        : Error(what), attempts(attempts_made) {}
    int attempts;
};

/// Remote backend answered but the payload violates the wire contract.
class MalformedResponseError : public Error {
public:
    using Error::Error;
};

struct WordSpan {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Whitespace word tokenization. Returned spans tile the input exactly:
/// leading whitespace is folded into the first word's span, the whitespace
/// after word i belongs to word i+1's span, and trailing whitespace extends
/// the final span. Whitespace-only input yields no words.
std::vector<WordSpan> split_words(std::string_view text);

/// Just the whitespace-delimited words, no spans.
std::vector<std::string> word_list(std::string_view text);

/// Lexical tokenization used by BM25 and the stub embedder: ASCII letters are
/// lowercased, ASCII non-alphanumeric bytes split tokens, bytes >= 0x80 are
/// kept verbatim so UTF-8 words stay intact.
std::vector<std::string> lex_tokens(std::string_view text);

uint64_t fnv1a64(std::string_view data);
uint64_t splitmix64(uint64_t x);

/// 32 hex chars derived from two independent 64-bit hashes of `data`.
std::string hash_hex(std::string_view data);

/// Derive an independent stream seed from (seed, a, b).
uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0);

// Deterministic uniform draws on top of std::mt19937_64. The engine output
// sequence is fixed by the standard; std::uniform_*_distribution is not, so
// the reductions below are spelled out and kept bit-stable across platforms.

/// Uniform double in [0, 1): top 53 bits of one engine draw.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n): one engine draw reduced modulo n. n must be > 0.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % static_cast<uint64_t>(n));
}

/// In-place Fisher-Yates shuffle: for i = n-1 .. 1, j = uniform_index(rng, i+1),
/// swap(v[i], v[j]).
template <typename T>
void fisher_yates(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Expand \n, \t, \r and \\ escapes in config-file values and CLI flags.
std::string unescape_value(std::string_view raw);

/// Run fn(0..n-1) on up to `jobs` worker threads. jobs <= 1 runs inline.
/// The first exception thrown by a worker is rethrown on the caller.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace cone
