#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cone/corpus.hpp"

namespace cone {

/// One retrieved pool example. Within a result list ranks run 0..K-1 and
/// scores are non-increasing; ties are broken by ascending example id
/// (lexicographic byte order on the id string, everywhere in this module).
struct Candidate {
    std::string example_id;
    double retrieval_score = 0.0;
    int retrieval_rank = 0;
};

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

/// Okapi BM25 over lex_tokens(). For a query token t and document d:
///
///   idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
///   w(t,d) = idf(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * |d| / avgdl))
///
/// and score(q,d) sums w over the query tokens with multiplicity.
class Bm25Index {
public:
    static Bm25Index build(const Dataset& corpus, const std::string& field_name, Bm25Params params = {});
    static Bm25Index build(std::vector<std::string> ids, const std::vector<std::string>& texts,
                           Bm25Params params = {});

    std::vector<Candidate> topk(std::string_view query, int k) const;
    double score(std::string_view query, std::size_t doc) const;

    std::size_t doc_count() const { return docs_.size(); }
    double avgdl() const { return avgdl_; }
    int df(std::string_view term) const;
    int doc_length(std::size_t doc) const { return docs_[doc].length; }
    const Bm25Params& params() const { return params_; }

private:
    struct Doc {
        std::string id;
        std::unordered_map<std::string, int> tf;
        int length = 0;
    };
    std::vector<Doc> docs_;
    std::unordered_map<std::string, int> df_;
    double avgdl_ = 0.0;
    Bm25Params params_;
};

/// Dense unit-norm vectors keyed by example id; cosine ranking is the dot
/// product of normalized vectors.
class EmbeddingIndex {
public:
    /// File format: one record per line, the id then `dim` ASCII decimal
    /// floats, whitespace separated. Vectors are L2-normalized on load.
    /// Fails on duplicate or missing ids, ragged dimensions, non-finite
    /// values and zero vectors.
    static EmbeddingIndex load(const std::string& path, const std::vector<std::string>& expected_ids);
    static EmbeddingIndex from_vectors(std::vector<std::string> ids,
                                       std::vector<std::vector<double>> vectors);

    /// Exact top-k by cosine similarity. The query is normalized internally.
    std::vector<Candidate> topk(const std::vector<double>& query, int k) const;

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<double>* find(std::string_view id) const;

private:
    std::vector<std::string> ids_;
    std::vector<std::vector<double>> vectors_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t dim_ = 0;
};

/// Deterministic stand-in for an external sentence encoder, for tests and
/// demos: each lex token is FNV-hashed into one of `dim` signed buckets, then
/// the vector is L2-normalized. Empty token lists map to the unit vector on
/// axis 0.
std::vector<double> stub_embedding(std::string_view text, std::size_t dim);

/// Sample n ids without replacement: the pool ids are sorted ascending,
/// Fisher-Yates shuffled with std::mt19937_64(seed), and the first n taken.
/// n >= pool size returns the whole shuffled pool. Retrieval scores are 0.
std::vector<Candidate> random_sample(std::vector<std::string> pool_ids, int n, uint64_t seed);

/// Candidate source used by the selection pipeline.
class Retriever {
public:
    virtual ~Retriever() = default;
    virtual std::vector<Candidate> retrieve(const Example& test_example, int k) const = 0;
};

class Bm25Retriever : public Retriever {
public:
    Bm25Retriever(std::shared_ptr<const Bm25Index> index,
                  std::function<std::string(const Example&)> query_text);
    std::vector<Candidate> retrieve(const Example& test_example, int k) const override;

private:
    std::shared_ptr<const Bm25Index> index_;
    std::function<std::string(const Example&)> query_text_;
};

class KnnRetriever : public Retriever {
public:
    KnnRetriever(std::shared_ptr<const EmbeddingIndex> index,
                 std::function<std::vector<double>(const Example&)> embed);
    std::vector<Candidate> retrieve(const Example& test_example, int k) const override;

private:
    std::shared_ptr<const EmbeddingIndex> index_;
    std::function<std::vector<double>(const Example&)> embed_;
};

/// Per-example deterministic random picks; the draw for a test example uses
/// seed mix_seed(base_seed, fnv1a64(example.id)).
class RandomRetriever : public Retriever {
public:
    RandomRetriever(std::vector<std::string> pool_ids, uint64_t base_seed);
    std::vector<Candidate> retrieve(const Example& test_example, int k) const override;

private:
    std::vector<std::string> pool_ids_;
    uint64_t base_seed_;
};

}  // namespace cone
