#include "cone/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cone {

namespace {

// Shared (score desc, id asc) ordering and rank assignment.
std::vector<Candidate> take_topk(std::vector<Candidate> scored, int k) {
    std::sort(scored.begin(), scored.end(), [](const Candidate& a, const Candidate& b) {
        if (a.retrieval_score != b.retrieval_score) return a.retrieval_score > b.retrieval_score;
        return a.example_id < b.example_id;
    });
    if (k >= 0 && scored.size() > static_cast<std::size_t>(k)) scored.resize(k);
    for (std::size_t i = 0; i < scored.size(); ++i) scored[i].retrieval_rank = static_cast<int>(i);
    return scored;
}

}  // namespace

Bm25Index Bm25Index::build(const Dataset& corpus, const std::string& field_name, Bm25Params params) {
    std::vector<std::string> ids, texts;
    ids.reserve(corpus.size());
    texts.reserve(corpus.size());
    for (auto& e : corpus.examples) {
        auto it = e.fields.find(field_name);
        if (it == e.fields.end()) {
            throw ValidationError("example '" + e.id + "' has no field '" + field_name + "'");
        }
        ids.push_back(e.id);
        texts.push_back(it->second);
    }
    return build(std::move(ids), texts, params);
}

Bm25Index Bm25Index::build(std::vector<std::string> ids, const std::vector<std::string>& texts,
                           Bm25Params params) {
    if (ids.empty()) throw ValidationError("cannot build a BM25 index over an empty corpus");
    if (ids.size() != texts.size()) throw ValidationError("BM25 ids/texts size mismatch");
    if (params.k1 < 0.0) throw ValidationError("BM25 k1 must be >= 0");
    if (params.b < 0.0 || params.b > 1.0) throw ValidationError("BM25 b must lie in [0, 1]");

    Bm25Index index;
    index.params_ = params;
    double total_len = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        Doc d;
        d.id = std::move(ids[i]);
        auto tokens = lex_tokens(texts[i]);
        d.length = static_cast<int>(tokens.size());
        total_len += d.length;
        for (auto& t : tokens) ++d.tf[t];
        for (auto& [term, _] : d.tf) ++index.df_[term];
        index.docs_.push_back(std::move(d));
    }
    index.avgdl_ = total_len / static_cast<double>(index.docs_.size());
    return index;
}

int Bm25Index::df(std::string_view term) const {
    auto it = df_.find(std::string(term));
    return it == df_.end() ? 0 : it->second;
}

double Bm25Index::score(std::string_view query, std::size_t doc) const {
    const Doc& d = docs_[doc];
    const double n = static_cast<double>(docs_.size());
    double total = 0.0;
    for (auto& term : lex_tokens(query)) {
        auto tf_it = d.tf.find(term);
        if (tf_it == d.tf.end()) continue;
        const double tf = tf_it->second;
        const double df = this->df(term);
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        const double norm = params_.k1 * (1.0 - params_.b + params_.b * d.length / avgdl_);
        total += idf * tf * (params_.k1 + 1.0) / (tf + norm);
    }
    return total;
}

std::vector<Candidate> Bm25Index::topk(std::string_view query, int k) const {
    if (k < 1) throw ValidationError("bm25 topk needs k >= 1");
    std::vector<Candidate> scored;
    scored.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        scored.push_back({docs_[i].id, score(query, i), 0});
    }
    return take_topk(std::move(scored), k);
}

namespace {

void normalize_or_throw(std::vector<double>& v, const std::string& id) {
    double sq = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) throw ValidationError("non-finite embedding value for id '" + id + "'");
        sq += x * x;
    }
    if (sq == 0.0) throw ValidationError("zero embedding vector for id '" + id + "' cannot be normalized");
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
}

}  // namespace

EmbeddingIndex EmbeddingIndex::from_vectors(std::vector<std::string> ids,
                                            std::vector<std::vector<double>> vectors) {
    if (ids.size() != vectors.size()) throw ValidationError("embedding ids/vectors size mismatch");
    if (ids.empty()) throw ValidationError("embedding index needs at least one vector");
    EmbeddingIndex out;
    out.dim_ = vectors.front().size();
    if (out.dim_ == 0) throw ValidationError("embedding dimension must be positive");
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (vectors[i].size() != out.dim_) {
            throw ValidationError("embedding dimension mismatch for id '" + ids[i] + "': expected " +
                                  std::to_string(out.dim_) + ", got " + std::to_string(vectors[i].size()));
        }
        normalize_or_throw(vectors[i], ids[i]);
        if (out.index_.count(ids[i])) throw ValidationError("duplicate embedding id '" + ids[i] + "'");
        out.index_.emplace(ids[i], i);
    }
    out.ids_ = std::move(ids);
    out.vectors_ = std::move(vectors);
    return out;
}

EmbeddingIndex EmbeddingIndex::load(const std::string& path, const std::vector<std::string>& expected_ids) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open embedding file: " + path);
    std::vector<std::string> ids;
    std::vector<std::vector<double>> vectors;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        std::string id;
        ss >> id;
        std::vector<double> v;
        double x;
        while (ss >> x) v.push_back(x);
        if (!ss.eof()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric embedding value");
        }
        if (v.empty()) throw ParseError(path + ":" + std::to_string(line_no) + ": record has no values");
        ids.push_back(std::move(id));
        vectors.push_back(std::move(v));
    }
    auto out = from_vectors(std::move(ids), std::move(vectors));
    for (auto& id : expected_ids) {
        if (!out.index_.count(id)) throw ValidationError(path + ": missing embedding for id '" + id + "'");
    }
    return out;
}

const std::vector<double>* EmbeddingIndex::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &vectors_[it->second];
}

std::vector<Candidate> EmbeddingIndex::topk(const std::vector<double>& query, int k) const {
    if (k < 1) throw ValidationError("knn topk needs k >= 1");
    if (query.size() != dim_) {
        throw ValidationError("query dimension " + std::to_string(query.size()) +
                              " does not match index dimension " + std::to_string(dim_));
    }
    std::vector<double> q = query;
    normalize_or_throw(q, "<query>");
    std::vector<Candidate> scored;
    scored.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        double dot = 0.0;
        for (std::size_t d = 0; d < dim_; ++d) dot += q[d] * vectors_[i][d];
        scored.push_back({ids_[i], dot, 0});
    }
    return take_topk(std::move(scored), k);
}

std::vector<double> stub_embedding(std::string_view text, std::size_t dim) {
    if (dim == 0) throw ValidationError("stub embedding dimension must be positive");
    std::vector<double> v(dim, 0.0);
    for (auto& token : lex_tokens(text)) {
        uint64_t h = fnv1a64(token);
        double sign = (h >> 32) & 1 ? 1.0 : -1.0;
        v[h % dim] += sign;
    }
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq == 0.0) {
        v[0] = 1.0;
        return v;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
    return v;
}

std::vector<Candidate> random_sample(std::vector<std::string> pool_ids, int n, uint64_t seed) {
    if (n < 0) throw ValidationError("random_sample needs n >= 0");
    std::sort(pool_ids.begin(), pool_ids.end());
    std::mt19937_64 rng(seed);
    fisher_yates(pool_ids, rng);
    if (pool_ids.size() > static_cast<std::size_t>(n)) pool_ids.resize(n);
    std::vector<Candidate> out;
    out.reserve(pool_ids.size());
    for (std::size_t i = 0; i < pool_ids.size(); ++i) {
        out.push_back({std::move(pool_ids[i]), 0.0, static_cast<int>(i)});
    }
    return out;
}

Bm25Retriever::Bm25Retriever(std::shared_ptr<const Bm25Index> index,
                             std::function<std::string(const Example&)> query_text)
    : index_(std::move(index)), query_text_(std::move(query_text)) {}

std::vector<Candidate> Bm25Retriever::retrieve(const Example& test_example, int k) const {
    return index_->topk(query_text_(test_example), k);
}

KnnRetriever::KnnRetriever(std::shared_ptr<const EmbeddingIndex> index,
                           std::function<std::vector<double>(const Example&)> embed)
    : index_(std::move(index)), embed_(std::move(embed)) {}

std::vector<Candidate> KnnRetriever::retrieve(const Example& test_example, int k) const {
    return index_->topk(embed_(test_example), k);
}

RandomRetriever::RandomRetriever(std::vector<std::string> pool_ids, uint64_t base_seed)
    : pool_ids_(std::move(pool_ids)), base_seed_(base_seed) {}

std::vector<Candidate> RandomRetriever::retrieve(const Example& test_example, int k) const {
    return random_sample(pool_ids_, k, mix_seed(base_seed_, fnv1a64(test_example.id)));
}

}  // namespace cone
