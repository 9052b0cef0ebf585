#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cone/util.hpp"

namespace cone {

/// One scored token. Spans tile the scored text exactly, per the backend's
/// tokenization. nll is in nats.
struct TokenScore {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
    double nll = 0.0;
};

struct SequenceScore {
    std::vector<TokenScore> tokens;
    double total_nll = 0.0;
};

/// Per-token negative log-likelihood of texts, in nats. Implementations must
/// be deterministic for a fixed backend state and safe to call concurrently.
class Scorer {
public:
    virtual ~Scorer() = default;

    virtual std::string model_id() const = 0;

    virtual SequenceScore score_sequence(std::string_view text) const = 0;

    /// Defined as score_sequence(prefix + continuation).total_nll minus
    /// score_sequence(prefix).total_nll, which is robust to tokenizers that
    /// merge across the seam. Equal to the summed continuation-token nll
    /// whenever the backend's tokenization splits at the seam.
    virtual double score_continuation(std::string_view prefix, std::string_view continuation) const;

    virtual bool supports_generation() const { return false; }
    virtual std::string generate(std::string_view prompt, int max_new_tokens,
                                 std::string_view stop) const;
};

enum class VocabPolicy {
    CorpusWithUnknown,  // out-of-vocabulary words map to the unknown symbol
    Closed,             // out-of-vocabulary words are an error
};

struct NgramOptions {
    int order = 2;
    double add_k = 0.1;
    VocabPolicy vocab = VocabPolicy::CorpusWithUnknown;
    /// Lower bound on token probability, applied when add_k = 0 and a
    /// context or word is unseen; without it those cases are errors.
    std::optional<double> prob_floor;
};

/// Word-level n-gram model with additive smoothing:
///
///   P(w | ctx) = (count(ctx, w) + k) / (count(ctx) + k * V)
///
/// where V counts the training word types plus the unknown symbol, and each
/// training text is padded with n-1 start symbols. Tokens are whitespace
/// words.
class NgramScorer : public Scorer {
public:
    static std::shared_ptr<NgramScorer> train(const std::vector<std::string>& corpus_texts,
                                              NgramOptions options = {});

    std::string model_id() const override;
    SequenceScore score_sequence(std::string_view text) const override;

    std::size_t vocab_size() const { return effective_vocab_; }  // V: word types + unknown
    int order() const { return options_.order; }

    /// P(word | context words) with the same lookup the scorer uses; handy
    /// for tests that cross-check hand counts.
    double probability(const std::vector<std::string>& context, const std::string& word) const;

private:
    NgramScorer() = default;

    using TokenId = uint32_t;
    struct ContextCounts {
        int total = 0;
        std::map<TokenId, int> next;
    };
    struct VecHash {
        std::size_t operator()(const std::vector<TokenId>& v) const;
    };

    TokenId id_or_unknown(const std::string& word) const;
    double token_probability(const std::vector<TokenId>& context, TokenId word) const;

    NgramOptions options_;
    std::map<std::string, TokenId> vocab_;  // includes <unk> and <s>
    std::unordered_map<std::vector<TokenId>, ContextCounts, VecHash> counts_;
    std::size_t effective_vocab_ = 0;  // V in the smoothing denominator
    std::string id_;
};

/// Context-free scorer assigning every whitespace token probability 1/V.
class UniformScorer : public Scorer {
public:
    explicit UniformScorer(std::size_t vocab_size);
    std::string model_id() const override;
    SequenceScore score_sequence(std::string_view text) const override;

private:
    std::size_t vocab_size_;
};

/// Persistent on-disk memo of sequence scores, keyed by the hash of
/// (inner model id, exact text). Entries are verified on read and only
/// removed by flush(). Results are identical with and without the wrapper.
class CachingScorer : public Scorer {
public:
    CachingScorer(std::shared_ptr<const Scorer> inner, std::string cache_dir);

    std::string model_id() const override;
    SequenceScore score_sequence(std::string_view text) const override;
    double score_continuation(std::string_view prefix, std::string_view continuation) const override;
    bool supports_generation() const override;
    std::string generate(std::string_view prompt, int max_new_tokens,
                         std::string_view stop) const override;

    void flush();

private:
    std::string entry_path(std::string_view text) const;
    std::optional<SequenceScore> read_entry(const std::string& path, std::string_view text) const;
    void write_entry(const std::string& path, std::string_view text, const SequenceScore& score) const;

    std::shared_ptr<const Scorer> inner_;
    std::string dir_;
    mutable std::mutex mutex_;
};

/// Word spans tiling `text`, as produced by the word-level scorers.
std::vector<TokenScore> word_token_spans(std::string_view text);

}  // namespace cone
