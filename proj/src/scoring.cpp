#include "cone/scoring.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace cone {

using nlohmann::json;
namespace fs = std::filesystem;

double Scorer::score_continuation(std::string_view prefix, std::string_view continuation) const {
    if (continuation.empty()) throw ValidationError("score_continuation needs a non-empty continuation");
    std::string full;
    full.reserve(prefix.size() + continuation.size());
    full.append(prefix);
    full.append(continuation);
    if (prefix.empty()) return score_sequence(full).total_nll;
    return score_sequence(full).total_nll - score_sequence(prefix).total_nll;
}

std::string Scorer::generate(std::string_view, int, std::string_view) const {
    throw ValidationError("scorer '" + model_id() + "' does not support generation");
}

std::vector<TokenScore> word_token_spans(std::string_view text) {
    std::vector<TokenScore> out;
    for (auto& w : split_words(text)) {
        TokenScore t;
        t.text = std::move(w.text);
        t.begin = w.begin;
        t.end = w.end;
        out.push_back(std::move(t));
    }
    return out;
}

std::size_t NgramScorer::VecHash::operator()(const std::vector<TokenId>& v) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (TokenId t : v) {
        h ^= t;
        h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
}

namespace {
constexpr uint32_t kUnknownId = 0;
constexpr uint32_t kStartId = 1;
}  // namespace

std::shared_ptr<NgramScorer> NgramScorer::train(const std::vector<std::string>& corpus_texts,
                                                NgramOptions options) {
    if (options.order < 1) throw ValidationError("n-gram order must be >= 1");
    if (options.add_k < 0.0) throw ValidationError("add-k smoothing constant must be >= 0");
    if (options.prob_floor && (*options.prob_floor <= 0.0 || *options.prob_floor > 1.0)) {
        throw ValidationError("probability floor must lie in (0, 1]");
    }

    auto scorer = std::shared_ptr<NgramScorer>(new NgramScorer());
    scorer->options_ = options;
    scorer->vocab_["<unk>"] = kUnknownId;
    scorer->vocab_["<s>"] = kStartId;

    const std::size_t ctx_len = static_cast<std::size_t>(options.order - 1);
    std::size_t total_tokens = 0;
    for (auto& text : corpus_texts) {
        auto words = word_list(text);
        total_tokens += words.size();
        std::vector<TokenId> ids(ctx_len, kStartId);
        ids.reserve(ctx_len + words.size());
        for (auto& w : words) {
            auto [it, _] = scorer->vocab_.emplace(w, static_cast<TokenId>(scorer->vocab_.size()));
            ids.push_back(it->second);
        }
        for (std::size_t i = ctx_len; i < ids.size(); ++i) {
            std::vector<TokenId> ctx(ids.begin() + (i - ctx_len), ids.begin() + i);
            auto& c = scorer->counts_[std::move(ctx)];
            ++c.total;
            ++c.next[ids[i]];
        }
    }
    if (total_tokens == 0) throw ValidationError("n-gram training corpus is empty");

    scorer->effective_vocab_ = scorer->vocab_.size() - 1;  // words + <unk>, excluding <s>
    char buf[128];
    std::snprintf(buf, sizeof(buf), "ngram:n=%d:k=%g:V=%zu:types=%zu", options.order,
                  options.add_k, scorer->effective_vocab_, scorer->vocab_.size() - 2);
    scorer->id_ = buf;
    return scorer;
}

NgramScorer::TokenId NgramScorer::id_or_unknown(const std::string& word) const {
    auto it = vocab_.find(word);
    if (it != vocab_.end()) return it->second;
    if (options_.vocab == VocabPolicy::Closed) {
        throw ScoreError("out-of-vocabulary word '" + word + "' under a closed vocabulary");
    }
    return kUnknownId;
}

double NgramScorer::token_probability(const std::vector<TokenId>& context, TokenId word) const {
    const double k = options_.add_k;
    const double v = static_cast<double>(effective_vocab_);
    int ctx_total = 0;
    int pair_count = 0;
    auto it = counts_.find(context);
    if (it != counts_.end()) {
        ctx_total = it->second.total;
        auto nx = it->second.next.find(word);
        if (nx != it->second.next.end()) pair_count = nx->second;
    }
    const double denom = ctx_total + k * v;
    if (denom == 0.0) {
        if (options_.prob_floor) return *options_.prob_floor;
        throw ScoreError("unseen context with add-k = 0 and no probability floor configured");
    }
    double p = (pair_count + k) / denom;
    if (p == 0.0) {
        if (options_.prob_floor) return *options_.prob_floor;
        throw ScoreError("zero probability with add-k = 0 and no probability floor configured");
    }
    if (options_.prob_floor && p < *options_.prob_floor) p = *options_.prob_floor;
    return p;
}

double NgramScorer::probability(const std::vector<std::string>& context, const std::string& word) const {
    const std::size_t ctx_len = static_cast<std::size_t>(options_.order - 1);
    std::vector<TokenId> ctx(ctx_len, kStartId);
    std::size_t take = std::min(ctx_len, context.size());
    for (std::size_t i = 0; i < take; ++i) {
        ctx[ctx_len - take + i] = id_or_unknown(context[context.size() - take + i]);
    }
    return token_probability(ctx, id_or_unknown(word));
}

SequenceScore NgramScorer::score_sequence(std::string_view text) const {
    SequenceScore out;
    out.tokens = word_token_spans(text);
    if (out.tokens.empty()) return out;

    const std::size_t ctx_len = static_cast<std::size_t>(options_.order - 1);
    std::vector<TokenId> window(ctx_len, kStartId);
    for (auto& tok : out.tokens) {
        TokenId id = id_or_unknown(tok.text);
        tok.nll = -std::log(token_probability(window, id));
        out.total_nll += tok.nll;
        if (ctx_len > 0) {
            window.erase(window.begin());
            window.push_back(id);
        }
    }
    return out;
}

std::string NgramScorer::model_id() const { return id_; }

UniformScorer::UniformScorer(std::size_t vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size_ < 1) throw ValidationError("uniform scorer vocabulary must be >= 1");
}

std::string UniformScorer::model_id() const {
    return "uniform:V=" + std::to_string(vocab_size_);
}

SequenceScore UniformScorer::score_sequence(std::string_view text) const {
    SequenceScore out;
    out.tokens = word_token_spans(text);
    const double nll = std::log(static_cast<double>(vocab_size_));
    for (auto& tok : out.tokens) {
        tok.nll = nll;
        out.total_nll += nll;
    }
    return out;
}

CachingScorer::CachingScorer(std::shared_ptr<const Scorer> inner, std::string cache_dir)
    : inner_(std::move(inner)), dir_(std::move(cache_dir)) {
    if (!inner_) throw ValidationError("caching scorer needs an inner scorer");
    fs::create_directories(dir_);
}

std::string CachingScorer::model_id() const { return inner_->model_id(); }

std::string CachingScorer::entry_path(std::string_view text) const {
    std::string key = inner_->model_id();
    key.push_back('\x1f');
    key.append(text);
    return (fs::path(dir_) / (hash_hex(key) + ".json")).string();
}

std::optional<SequenceScore> CachingScorer::read_entry(const std::string& path,
                                                       std::string_view text) const {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception&) {
        return std::nullopt;
    }
    if (!j.is_object() || j.value("model", "") != inner_->model_id() || j.value("text", "") != text) {
        return std::nullopt;  // hash bucket held a different key
    }
    SequenceScore s;
    s.total_nll = j.at("total_nll").get<double>();
    for (auto& t : j.at("tokens")) {
        s.tokens.push_back({t.at(0).get<std::string>(), t.at(1).get<std::size_t>(),
                            t.at(2).get<std::size_t>(), t.at(3).get<double>()});
    }
    return s;
}

void CachingScorer::write_entry(const std::string& path, std::string_view text,
                                const SequenceScore& score) const {
    json tokens = json::array();
    for (auto& t : score.tokens) tokens.push_back(json::array({t.text, t.begin, t.end, t.nll}));
    json j{{"model", inner_->model_id()},
           {"text", std::string(text)},
           {"total_nll", score.total_nll},
           {"tokens", std::move(tokens)}};
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << j.dump();
    }
    fs::rename(tmp, path);
}

SequenceScore CachingScorer::score_sequence(std::string_view text) const {
    const std::string path = entry_path(text);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (auto hit = read_entry(path, text)) return *hit;
    }
    SequenceScore fresh = inner_->score_sequence(text);
    std::lock_guard<std::mutex> lock(mutex_);
    write_entry(path, text, fresh);
    return fresh;
}

double CachingScorer::score_continuation(std::string_view prefix, std::string_view continuation) const {
    if (continuation.empty()) throw ValidationError("score_continuation needs a non-empty continuation");
    std::string full;
    full.reserve(prefix.size() + continuation.size());
    full.append(prefix);
    full.append(continuation);
    if (prefix.empty()) return score_sequence(full).total_nll;
    return score_sequence(full).total_nll - score_sequence(prefix).total_nll;
}

bool CachingScorer::supports_generation() const { return inner_->supports_generation(); }

std::string CachingScorer::generate(std::string_view prompt, int max_new_tokens,
                                    std::string_view stop) const {
    return inner_->generate(prompt, max_new_tokens, stop);
}

void CachingScorer::flush() {
    std::lock_guard<std::mutex> lock(mutex_);
    for (auto& entry : fs::directory_iterator(dir_)) {
        if (entry.path().extension() == ".json") fs::remove(entry.path());
    }
}

}  // namespace cone
