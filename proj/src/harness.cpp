#include "cone/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cone {

using nlohmann::json;
namespace fs = std::filesystem;

Method method_from_string(std::string_view name) {
    if (name == "prompting") return Method::Prompting;
    if (name == "random") return Method::Random;
    if (name == "bm25") return Method::Bm25;
    if (name == "topk") return Method::TopK;
    if (name == "topk-cone") return Method::TopKCone;
    if (name == "bm25-cone") return Method::Bm25Cone;
    if (name == "random-cone") return Method::RandomCone;
    throw ValidationError("unknown method '" + std::string(name) + "'");
}

std::string to_string(Method method) {
    switch (method) {
        case Method::Prompting: return "prompting";
        case Method::Random: return "random";
        case Method::Bm25: return "bm25";
        case Method::TopK: return "topk";
        case Method::TopKCone: return "topk-cone";
        case Method::Bm25Cone: return "bm25-cone";
        case Method::RandomCone: return "random-cone";
    }
    return "topk-cone";
}

bool method_uses_cone(Method method) {
    return method == Method::TopKCone || method == Method::Bm25Cone || method == Method::RandomCone;
}

namespace {

bool method_uses_bm25(Method m) { return m == Method::Bm25 || m == Method::Bm25Cone; }
bool method_uses_knn(Method m) { return m == Method::TopK || m == Method::TopKCone; }
bool method_uses_random(Method m) { return m == Method::Random || m == Method::RandomCone; }

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': '" + value + "' is not an integer");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': '" + value + "' is not a number");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ValidationError("config key '" + key + "': '" + value + "' is not a boolean");
}

std::vector<std::string> split_commas(const std::string& value) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(value);
    while (std::getline(ss, cur, ',')) {
        std::size_t b = cur.find_first_not_of(" \t");
        std::size_t e = cur.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(cur.substr(b, e - b + 1));
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string escape_value(std::string_view raw) {
    std::string out;
    for (char c : raw) {
        switch (c) {
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            case '\\': out += "\\\\"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

template <typename T>
std::string join_numeric(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out.push_back(',');
        out += std::to_string(values[i]);
    }
    return out;
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Population variance, so a single run reports exactly zero.
double variance_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size());
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        auto trim = [](std::string s) {
            std::size_t x = s.find_first_not_of(" \t\r");
            if (x == std::string::npos) return std::string();
            std::size_t y = s.find_last_not_of(" \t\r");
            return s.substr(x, y - x + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        try {
            cfg.apply(key, value);
        } catch (const Error& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

void RunConfig::apply(const std::string& key, const std::string& raw_value) {
    const std::string value = unescape_value(raw_value);
    if (key == "pool") pool_path = value;
    else if (key == "test" || key == "dataset") test_path = value;
    else if (key == "template") template_path = value;
    else if (key == "method") method = method_from_string(value);
    else if (key == "shots") shots = parse_int(key, value);
    else if (key == "candidates") candidates = parse_int(key, value);
    else if (key == "bm25_k1") bm25.k1 = parse_double(key, value);
    else if (key == "bm25_b") bm25.b = parse_double(key, value);
    else if (key == "embeddings") embeddings_path = value;
    else if (key == "embed_dim") embed_dim = parse_int(key, value);
    else if (key == "scorer") scorer_kind = value;
    else if (key == "ngram_corpus") ngram_corpus_path = value;
    else if (key == "ngram_order") ngram_order = parse_int(key, value);
    else if (key == "ngram_k") ngram_k = parse_double(key, value);
    else if (key == "ngram_floor") ngram_floor = parse_double(key, value);
    else if (key == "uniform_vocab") uniform_vocab = parse_int(key, value);
    else if (key == "endpoint") remote.endpoint = value;
    else if (key == "model") remote.model = value;
    else if (key == "api_token") remote.auth_token = value;
    else if (key == "logprob_base") remote.logprob_base = parse_double(key, value);
    else if (key == "max_retries") remote.max_retries = parse_int(key, value);
    else if (key == "backoff_ms") remote.backoff_ms = parse_int(key, value);
    else if (key == "timeout_sec") remote.timeout_sec = parse_int(key, value);
    else if (key == "max_inflight") remote.max_inflight = parse_int(key, value);
    else if (key == "cache_dir") cache_dir = value;
    else if (key == "seeds") {
        seeds.clear();
        for (auto& s : split_commas(value)) seeds.push_back(std::stoull(s));
        if (seeds.empty()) throw ValidationError("seeds list is empty");
    } else if (key == "order") order = order_policy_from_string(value);
    else if (key == "cone_mode") cone_mode = cone_mode_from_string(value);
    else if (key == "separator") separator = value;
    else if (key == "noise_ratio") noise_ratio = parse_double(key, value);
    else if (key == "out") out_dir = value;
    else if (key == "max_prompt_chars") max_prompt_chars = parse_int(key, value);
    else if (key == "jobs") jobs = parse_int(key, value);
    else if (key == "length_normalize") length_normalize = parse_bool(key, value);
    else if (key == "permutations") permutations = parse_int(key, value);
    else if (key == "max_new_tokens") max_new_tokens = parse_int(key, value);
    else if (key == "stop") stop = value;
    else if (key == "shot_list") {
        shot_list.clear();
        for (auto& s : split_commas(value)) shot_list.push_back(parse_int(key, s));
        if (shot_list.empty()) throw ValidationError("shot_list is empty");
    } else if (key == "k_list") {
        k_list.clear();
        for (auto& s : split_commas(value)) k_list.push_back(parse_int(key, s));
        if (k_list.empty()) throw ValidationError("k_list is empty");
    } else if (key == "methods") {
        methods.clear();
        for (auto& s : split_commas(value)) methods.push_back(method_from_string(s));
        if (methods.empty()) throw ValidationError("methods list is empty");
    } else {
        throw ValidationError("unknown config key '" + key + "'");
    }
}

void RunConfig::validate() const {
    auto require_file = [](const std::string& what, const std::string& path) {
        if (path.empty()) throw ValidationError("config is missing '" + what + "'");
        if (!fs::exists(path)) throw ValidationError(what + " file does not exist: " + path);
    };
    require_file("pool", pool_path);
    require_file("test", test_path);
    require_file("template", template_path);
    if (!ngram_corpus_path.empty() && !fs::exists(ngram_corpus_path)) {
        throw ValidationError("ngram_corpus file does not exist: " + ngram_corpus_path);
    }
    if (!embeddings_path.empty() && !fs::exists(embeddings_path)) {
        throw ValidationError("embeddings file does not exist: " + embeddings_path);
    }
    if (seeds.empty()) throw ValidationError("seeds list is empty");
    if (shots < 0) throw ValidationError("shots must be >= 0");
    if (candidates < 1) throw ValidationError("candidates must be >= 1");
    if (candidates < shots) throw ValidationError("candidates must be >= shots");
    if (jobs < 1) throw ValidationError("jobs must be >= 1");
    if (permutations < 1) throw ValidationError("permutations must be >= 1");
    if (noise_ratio < 0.0 || noise_ratio > 1.0) throw ValidationError("noise_ratio must lie in [0, 1]");
    if (embed_dim < 1) throw ValidationError("embed_dim must be >= 1");
    if (max_new_tokens < 1) throw ValidationError("max_new_tokens must be >= 1");
    if (scorer_kind != "ngram" && scorer_kind != "uniform" && scorer_kind != "remote") {
        throw ValidationError("scorer must be one of ngram, uniform, remote");
    }
    if (uniform_vocab < 1) throw ValidationError("uniform_vocab must be >= 1");
    if (ngram_order < 1) throw ValidationError("ngram_order must be >= 1");
    if (ngram_k < 0.0) throw ValidationError("ngram_k must be >= 0");
    if (ngram_floor < 0.0) throw ValidationError("ngram_floor must be >= 0");
}

std::map<std::string, std::string> RunConfig::resolved() const {
    std::map<std::string, std::string> m;
    m["pool"] = pool_path;
    m["test"] = test_path;
    m["template"] = template_path;
    m["method"] = to_string(method);
    m["shots"] = std::to_string(shots);
    m["candidates"] = std::to_string(candidates);
    m["bm25_k1"] = format_double(bm25.k1);
    m["bm25_b"] = format_double(bm25.b);
    m["embeddings"] = embeddings_path;
    m["embed_dim"] = std::to_string(embed_dim);
    m["scorer"] = scorer_kind;
    m["ngram_corpus"] = ngram_corpus_path;
    m["ngram_order"] = std::to_string(ngram_order);
    m["ngram_k"] = format_double(ngram_k);
    m["ngram_floor"] = format_double(ngram_floor);
    m["uniform_vocab"] = std::to_string(uniform_vocab);
    m["endpoint"] = remote.endpoint;
    m["model"] = remote.model;
    m["logprob_base"] = format_double(remote.logprob_base);
    m["max_retries"] = std::to_string(remote.max_retries);
    m["backoff_ms"] = std::to_string(remote.backoff_ms);
    m["timeout_sec"] = std::to_string(remote.timeout_sec);
    m["max_inflight"] = std::to_string(remote.max_inflight);
    m["cache_dir"] = cache_dir;
    m["seeds"] = join_numeric(seeds);
    m["order"] = to_string(order);
    m["cone_mode"] = to_string(cone_mode);
    m["separator"] = escape_value(separator);
    m["noise_ratio"] = format_double(noise_ratio);
    m["out"] = out_dir;
    m["max_prompt_chars"] = std::to_string(max_prompt_chars);
    m["jobs"] = std::to_string(jobs);
    m["length_normalize"] = length_normalize ? "true" : "false";
    m["permutations"] = std::to_string(permutations);
    m["max_new_tokens"] = std::to_string(max_new_tokens);
    m["stop"] = escape_value(stop);
    m["shot_list"] = join_numeric(shot_list);
    m["k_list"] = join_numeric(k_list);
    std::string ms;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        if (i) ms.push_back(',');
        ms += to_string(methods[i]);
    }
    m["methods"] = ms;
    return m;
}

std::string RunConfig::config_hash() const {
    std::string blob;
    for (auto& [k, v] : resolved()) {
        blob += k;
        blob.push_back('=');
        blob += v;
        blob.push_back('\n');
    }
    return hash_hex(blob);
}

// ---------------------------------------------------------------------------
// Execution context

namespace {

struct EvalContext {
    Dataset pool;
    Dataset test;
    Template tmpl;
    std::shared_ptr<Scorer> scorer;
    std::shared_ptr<const Bm25Index> bm25;
    std::shared_ptr<const EmbeddingIndex> embeddings;     // pool vectors
    std::shared_ptr<const EmbeddingIndex> query_vectors;  // pool + test, from file
    bool stub_embeddings = false;
    int embed_dim = 64;
    std::unordered_map<std::string, std::string> golds;
};

struct ContextNeeds {
    bool classification = false;  // the command computes accuracy
    std::vector<Method> methods;
};

std::shared_ptr<Scorer> build_scorer(const RunConfig& cfg, const Dataset& pool, const Template& tmpl) {
    std::shared_ptr<Scorer> scorer;
    if (cfg.scorer_kind == "ngram") {
        std::vector<std::string> corpus;
        if (!cfg.ngram_corpus_path.empty()) {
            std::ifstream in(cfg.ngram_corpus_path);
            if (!in) throw ParseError("cannot open ngram corpus: " + cfg.ngram_corpus_path);
            std::string line;
            while (std::getline(in, line)) {
                if (!line.empty()) corpus.push_back(line);
            }
        } else {
            // Default world knowledge: the demonstration pool itself.
            for (auto& e : pool.examples) {
                corpus.push_back(render_demonstration(pool, tmpl, e.id));
            }
        }
        NgramOptions opt;
        opt.order = cfg.ngram_order;
        opt.add_k = cfg.ngram_k;
        if (cfg.ngram_floor > 0.0) opt.prob_floor = cfg.ngram_floor;
        scorer = NgramScorer::train(corpus, opt);
    } else if (cfg.scorer_kind == "uniform") {
        scorer = std::make_shared<UniformScorer>(static_cast<std::size_t>(cfg.uniform_vocab));
    } else {
        RemoteOptions opt = RemoteScorer::options_from_env();
        if (!cfg.remote.endpoint.empty()) opt.endpoint = cfg.remote.endpoint;
        if (!cfg.remote.auth_token.empty()) opt.auth_token = cfg.remote.auth_token;
        opt.model = cfg.remote.model;
        opt.logprob_base = cfg.remote.logprob_base;
        opt.max_retries = cfg.remote.max_retries;
        opt.backoff_ms = cfg.remote.backoff_ms;
        opt.timeout_sec = cfg.remote.timeout_sec;
        opt.max_inflight = cfg.remote.max_inflight;
        scorer = std::make_shared<RemoteScorer>(opt);
    }
    if (!cfg.cache_dir.empty()) {
        scorer = std::make_shared<CachingScorer>(scorer, cfg.cache_dir);
    }
    return scorer;
}

EvalContext build_context(const RunConfig& cfg, const ContextNeeds& needs) {
    EvalContext ctx;
    ctx.tmpl = Template::from_file(cfg.template_path);
    ctx.embed_dim = cfg.embed_dim;

    std::vector<std::string> labels =
        ctx.tmpl.kind == TaskKind::Classification ? ctx.tmpl.labels() : std::vector<std::string>{};
    ctx.pool = load_dataset(cfg.pool_path, "jsonl", ctx.tmpl.placeholders, labels);
    ctx.test = load_dataset(cfg.test_path, "jsonl", ctx.tmpl.input_fields, labels);
    if (ctx.pool.examples.empty()) throw ValidationError("pool dataset is empty: " + cfg.pool_path);
    if (ctx.test.examples.empty()) throw ValidationError("test dataset is empty: " + cfg.test_path);

    if (needs.classification && ctx.tmpl.kind != TaskKind::Classification) {
        throw ValidationError("this command needs a classification template");
    }
    if (ctx.tmpl.kind == TaskKind::Classification) {
        for (auto& e : ctx.pool.examples) {
            if (!e.label) throw ValidationError("pool example '" + e.id + "' has no gold label");
        }
    }
    if (needs.classification) {
        for (auto& e : ctx.test.examples) {
            if (!e.label) throw ValidationError("test example '" + e.id + "' has no gold label");
            ctx.golds[e.id] = *e.label;
        }
    }

    ctx.scorer = build_scorer(cfg, ctx.pool, ctx.tmpl);

    bool want_bm25 = false, want_knn = false;
    for (Method m : needs.methods) {
        want_bm25 |= method_uses_bm25(m);
        want_knn |= method_uses_knn(m);
    }
    if (want_bm25) {
        std::vector<std::string> ids, texts;
        for (auto& e : ctx.pool.examples) {
            ids.push_back(e.id);
            texts.push_back(input_text(ctx.tmpl, e));
        }
        ctx.bm25 = std::make_shared<Bm25Index>(Bm25Index::build(std::move(ids), texts, cfg.bm25));
    }
    if (want_knn) {
        if (!cfg.embeddings_path.empty()) {
            std::vector<std::string> expected = ctx.pool.ids();
            for (auto& id : ctx.test.ids()) expected.push_back(id);
            auto full = EmbeddingIndex::load(cfg.embeddings_path, expected);
            // The searchable index holds pool vectors only; test vectors are
            // looked up for queries.
            std::vector<std::string> ids;
            std::vector<std::vector<double>> vecs;
            for (auto& id : ctx.pool.ids()) {
                ids.push_back(id);
                vecs.push_back(*full.find(id));
            }
            ctx.embeddings = std::make_shared<EmbeddingIndex>(
                EmbeddingIndex::from_vectors(std::move(ids), std::move(vecs)));
            ctx.query_vectors = std::make_shared<EmbeddingIndex>(std::move(full));
        } else {
            ctx.stub_embeddings = true;
            std::vector<std::string> ids;
            std::vector<std::vector<double>> vecs;
            for (auto& e : ctx.pool.examples) {
                ids.push_back(e.id);
                vecs.push_back(stub_embedding(input_text(ctx.tmpl, e), cfg.embed_dim));
            }
            ctx.embeddings = std::make_shared<EmbeddingIndex>(
                EmbeddingIndex::from_vectors(std::move(ids), std::move(vecs)));
        }
    }
    return ctx;
}

std::unique_ptr<Retriever> make_retriever(const EvalContext& ctx, const RunConfig& cfg,
                                          Method method, uint64_t seed) {
    if (method == Method::Prompting) return nullptr;
    if (method_uses_random(method)) {
        return std::make_unique<RandomRetriever>(ctx.pool.ids(), seed);
    }
    if (method_uses_bm25(method)) {
        const Template* tmpl = &ctx.tmpl;
        return std::make_unique<Bm25Retriever>(
            ctx.bm25, [tmpl](const Example& e) { return input_text(*tmpl, e); });
    }
    const Template* tmpl = &ctx.tmpl;
    if (ctx.stub_embeddings) {
        int dim = ctx.embed_dim;
        return std::make_unique<KnnRetriever>(ctx.embeddings, [tmpl, dim](const Example& e) {
            return stub_embedding(input_text(*tmpl, e), dim);
        });
    }
    const EmbeddingIndex* queries = ctx.query_vectors.get();
    return std::make_unique<KnnRetriever>(ctx.embeddings, [queries](const Example& e) {
        const std::vector<double>* v = queries->find(e.id);
        if (!v) throw ValidationError("no embedding for test example '" + e.id + "'");
        return *v;
    });
}

DemonstrationSet select_for(const EvalContext& ctx, const RunConfig& cfg, Method method,
                            const Retriever* retriever, const Example& example, int shots,
                            int candidates) {
    if (method == Method::Prompting || shots == 0) {
        DemonstrationSet empty;
        empty.ordering_policy = to_string(cfg.order);
        return empty;
    }
    if (method_uses_cone(method)) {
        SelectionOptions opt;
        opt.candidates_k = candidates;
        opt.shots_n = shots;
        opt.mode = cfg.cone_mode;
        opt.order = cfg.order;
        opt.jobs = 1;  // parallelism lives at the example level
        return select_demonstrations(ctx.pool, example, *retriever, *ctx.scorer, ctx.tmpl, opt);
    }
    return select_plain(ctx.pool, example, *retriever, ctx.tmpl, shots, cfg.order);
}

struct SeedRun {
    double accuracy = 0.0;
    std::vector<Prediction> predictions;
    int truncated_examples = 0;
    int dropped_demonstrations = 0;
    std::vector<std::string> warnings;
    double wall_seconds = 0.0;
};

json prediction_to_json(const Prediction& p) {
    json nll = json::object();
    for (auto& [label, v] : p.label_nll) nll[label] = v;
    json demo_ids = json::array();
    for (auto& id : p.demo_ids) demo_ids.push_back(id);
    json j{{"id", p.example_id},
           {"predicted", p.predicted_label},
           {"label_nll", std::move(nll)},
           {"demo_ids", std::move(demo_ids)}};
    if (p.gold_label) j["gold"] = *p.gold_label;
    return j;
}

json run_to_json(uint64_t seed, const SeedRun& run) {
    json preds = json::array();
    for (auto& p : run.predictions) preds.push_back(prediction_to_json(p));
    json warnings = json::array();
    for (auto& w : run.warnings) warnings.push_back(w);
    std::size_t correct = 0;
    for (auto& p : run.predictions) {
        if (p.gold_label && *p.gold_label == p.predicted_label) ++correct;
    }
    return json{{"seed", seed},
                {"accuracy", run.accuracy},
                {"correct", correct},
                {"total", run.predictions.size()},
                {"truncated_examples", run.truncated_examples},
                {"dropped_demonstrations", run.dropped_demonstrations},
                {"predictions", std::move(preds)},
                {"warnings", std::move(warnings)}};
}

// Selects demonstrations for every test example under one seed.
std::vector<DemonstrationSet> select_all(const EvalContext& ctx, const RunConfig& cfg,
                                         Method method, uint64_t seed, int shots, int candidates) {
    std::vector<DemonstrationSet> sets(ctx.test.size());
    auto retriever = make_retriever(ctx, cfg, method, seed);
    parallel_for(ctx.test.size(), cfg.jobs, [&](std::size_t i) {
        sets[i] = select_for(ctx, cfg, method, retriever.get(), ctx.test.examples[i], shots,
                             candidates);
    });
    return sets;
}

// Classifies every test example against precomputed demonstration sets.
// `queries` substitutes perturbed examples while selection stays original.
SeedRun classify_all(const EvalContext& ctx, const RunConfig& cfg,
                     const std::vector<DemonstrationSet>& demo_sets,
                     const std::vector<Example>* queries) {
    SeedRun run;
    auto start = std::chrono::steady_clock::now();
    std::size_t n = ctx.test.size();
    std::vector<ClassifyOutcome> outcomes(n);
    InferenceOptions opt;
    opt.length_normalize = cfg.length_normalize;
    opt.max_prompt_chars = cfg.max_prompt_chars;
    parallel_for(n, cfg.jobs, [&](std::size_t i) {
        const Example& q = queries ? (*queries)[i] : ctx.test.examples[i];
        outcomes[i] = classify(*ctx.scorer, demo_sets[i], q, ctx.tmpl, opt);
    });
    for (std::size_t i = 0; i < n; ++i) {
        if (outcomes[i].dropped_demos > 0) {
            ++run.truncated_examples;
            run.dropped_demonstrations += outcomes[i].dropped_demos;
        }
        for (auto& w : demo_sets[i].warnings) run.warnings.push_back(w);
        run.predictions.push_back(std::move(outcomes[i].prediction));
    }
    run.accuracy = accuracy(run.predictions, ctx.golds);
    run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return run;
}

SeedRun eval_once(const EvalContext& ctx, const RunConfig& cfg, Method method, uint64_t seed,
                  int shots, int candidates) {
    auto demo_sets = select_all(ctx, cfg, method, seed, shots, candidates);
    return classify_all(ctx, cfg, demo_sets, nullptr);
}

json report_skeleton(const RunConfig& cfg, const std::string& command) {
    return json{{"artifact", kArtifactVersion},
                {"command", command},
                {"config", cfg.resolved()},
                {"config_hash", cfg.config_hash()}};
}

void log_wall_time(const char* command, uint64_t seed, double accuracy, double seconds) {
    std::fprintf(stderr, "%s: seed %llu accuracy %.4f (%.2fs)\n", command,
                 static_cast<unsigned long long>(seed), accuracy, seconds);
}

json summary_json(const std::vector<double>& accuracies) {
    return json{{"runs", accuracies.size()},
                {"mean_accuracy", mean_of(accuracies)},
                {"variance_accuracy", variance_of(accuracies)}};
}

}  // namespace

Report run_eval(const RunConfig& cfg) {
    cfg.validate();
    EvalContext ctx = build_context(cfg, {true, {cfg.method}});
    Report rep;
    rep.file_name = "eval_report.json";
    json body = report_skeleton(cfg, "eval");
    json runs = json::array();
    json errors = json::array();
    std::vector<double> accuracies;
    const int shots = cfg.method == Method::Prompting ? 0 : cfg.shots;
    for (uint64_t seed : cfg.seeds) {
        try {
            SeedRun run = eval_once(ctx, cfg, cfg.method, seed, shots, cfg.candidates);
            log_wall_time("eval", seed, run.accuracy, run.wall_seconds);
            runs.push_back(run_to_json(seed, run));
            accuracies.push_back(run.accuracy);
        } catch (const Error& e) {
            errors.push_back(json{{"seed", seed}, {"error", e.what()}});
            rep.complete = false;
        }
    }
    body["runs"] = std::move(runs);
    body["errors"] = std::move(errors);
    body["summary"] = summary_json(accuracies);
    body["complete"] = rep.complete;
    rep.body = std::move(body);
    return rep;
}

Report run_ablation_shots(const RunConfig& cfg) {
    cfg.validate();
    for (int n : cfg.shot_list) {
        if (n < 0) throw ValidationError("shot_list entries must be >= 0");
        if (n > cfg.candidates) throw ValidationError("shot_list entry exceeds candidates");
    }
    EvalContext ctx = build_context(cfg, {true, {cfg.method}});
    Report rep;
    rep.file_name = "ablate_shots_report.json";
    json body = report_skeleton(cfg, "ablate-shots");
    json sub_reports = json::array();
    for (int n : cfg.shot_list) {
        json runs = json::array();
        json errors = json::array();
        std::vector<double> accuracies;
        for (uint64_t seed : cfg.seeds) {
            try {
                SeedRun run = eval_once(ctx, cfg, cfg.method, seed, n, cfg.candidates);
                log_wall_time("ablate-shots", seed, run.accuracy, run.wall_seconds);
                runs.push_back(run_to_json(seed, run));
                accuracies.push_back(run.accuracy);
            } catch (const Error& e) {
                errors.push_back(json{{"seed", seed}, {"error", e.what()}});
                rep.complete = false;
            }
        }
        sub_reports.push_back(json{{"shots", n},
                                   {"runs", std::move(runs)},
                                   {"errors", std::move(errors)},
                                   {"summary", summary_json(accuracies)}});
    }
    body["sub_reports"] = std::move(sub_reports);
    body["complete"] = rep.complete;
    rep.body = std::move(body);
    return rep;
}

Report run_ablation_candidates(const RunConfig& cfg) {
    cfg.validate();
    for (int k : cfg.k_list) {
        if (k < cfg.shots) {
            throw ValidationError("k_list entry " + std::to_string(k) + " is smaller than shots");
        }
    }
    EvalContext ctx = build_context(cfg, {true, {cfg.method}});
    Report rep;
    rep.file_name = "ablate_candidates_report.json";
    json body = report_skeleton(cfg, "ablate-candidates");
    json sub_reports = json::array();
    for (int k : cfg.k_list) {
        json runs = json::array();
        json errors = json::array();
        std::vector<double> accuracies;
        for (uint64_t seed : cfg.seeds) {
            try {
                SeedRun run = eval_once(ctx, cfg, cfg.method, seed, cfg.shots, k);
                log_wall_time("ablate-candidates", seed, run.accuracy, run.wall_seconds);
                runs.push_back(run_to_json(seed, run));
                accuracies.push_back(run.accuracy);
            } catch (const Error& e) {
                errors.push_back(json{{"seed", seed}, {"error", e.what()}});
                rep.complete = false;
            }
        }
        sub_reports.push_back(json{{"candidates", k},
                                   {"runs", std::move(runs)},
                                   {"errors", std::move(errors)},
                                   {"summary", summary_json(accuracies)}});
    }
    body["sub_reports"] = std::move(sub_reports);
    body["complete"] = rep.complete;
    rep.body = std::move(body);
    return rep;
}

Report run_order_sensitivity(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.shots < 2) throw ValidationError("order sensitivity needs shots >= 2");
    EvalContext ctx = build_context(cfg, {true, {cfg.method}});
    Report rep;
    rep.file_name = "order_sensitivity_report.json";
    json body = report_skeleton(cfg, "order-sensitivity");
    json runs = json::array();
    json errors = json::array();
    std::vector<double> seed_means;
    for (uint64_t seed : cfg.seeds) {
        try {
            auto demo_sets = select_all(ctx, cfg, cfg.method, seed, cfg.shots, cfg.candidates);
            std::vector<double> perm_accuracies;
            for (int p = 0; p < cfg.permutations; ++p) {
                std::vector<DemonstrationSet> permuted(demo_sets.size());
                for (std::size_t i = 0; i < demo_sets.size(); ++i) {
                    permuted[i] = demo_sets[i];
                    std::vector<std::size_t> idx(demo_sets[i].ids.size());
                    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
                    std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(p) + 1,
                                                 fnv1a64(ctx.test.examples[i].id)));
                    fisher_yates(idx, rng);
                    permuted[i].ids.clear();
                    permuted[i].texts.clear();
                    for (std::size_t k : idx) {
                        permuted[i].ids.push_back(demo_sets[i].ids[k]);
                        permuted[i].texts.push_back(demo_sets[i].texts[k]);
                    }
                }
                SeedRun run = classify_all(ctx, cfg, permuted, nullptr);
                perm_accuracies.push_back(run.accuracy);
            }
            double m = mean_of(perm_accuracies);
            double v = variance_of(perm_accuracies);
            log_wall_time("order-sensitivity", seed, m, 0.0);
            json accs = json::array();
            for (double a : perm_accuracies) accs.push_back(a);
            runs.push_back(json{{"seed", seed},
                                {"permutation_accuracies", std::move(accs)},
                                {"mean_accuracy", m},
                                {"variance_accuracy", v}});
            seed_means.push_back(m);
        } catch (const Error& e) {
            errors.push_back(json{{"seed", seed}, {"error", e.what()}});
            rep.complete = false;
        }
    }
    body["runs"] = std::move(runs);
    body["errors"] = std::move(errors);
    body["summary"] = summary_json(seed_means);
    body["complete"] = rep.complete;
    rep.body = std::move(body);
    return rep;
}

Report run_noise_experiment(const RunConfig& cfg) {
    cfg.validate();
    EvalContext ctx = build_context(cfg, {true, {cfg.method}});
    Report rep;
    rep.file_name = "noise_report.json";
    json body = report_skeleton(cfg, "noise");
    json runs = json::array();
    json errors = json::array();
    std::vector<double> deltas;
    const int shots = cfg.method == Method::Prompting ? 0 : cfg.shots;
    for (uint64_t seed : cfg.seeds) {
        try {
            auto demo_sets = select_all(ctx, cfg, cfg.method, seed, shots, cfg.candidates);
            std::vector<Example> shuffled = ctx.test.examples;
            for (auto& e : shuffled) {
                for (auto& field : ctx.tmpl.input_fields) {
                    auto tokens = word_list(e.fields.at(field));
                    auto moved = span_shuffle(tokens, mix_seed(seed, fnv1a64(e.id), fnv1a64(field)),
                                              cfg.noise_ratio);
                    e.fields[field] = join(moved, " ");
                }
            }
            SeedRun original = classify_all(ctx, cfg, demo_sets, nullptr);
            SeedRun noised = classify_all(ctx, cfg, demo_sets, &shuffled);
            double delta = noised.accuracy - original.accuracy;
            log_wall_time("noise", seed, original.accuracy, original.wall_seconds + noised.wall_seconds);
            runs.push_back(json{{"seed", seed},
                                {"original", run_to_json(seed, original)},
                                {"shuffled", run_to_json(seed, noised)},
                                {"delta", delta}});
            deltas.push_back(delta);
        } catch (const Error& e) {
            errors.push_back(json{{"seed", seed}, {"error", e.what()}});
            rep.complete = false;
        }
    }
    body["runs"] = std::move(runs);
    body["errors"] = std::move(errors);
    body["summary"] = json{{"runs", deltas.size()}, {"mean_delta", mean_of(deltas)}};
    body["complete"] = rep.complete;
    rep.body = std::move(body);
    return rep;
}

Report run_entropy_analysis(const RunConfig& cfg) {
    cfg.validate();
    EvalContext ctx = build_context(cfg, {true, cfg.methods});
    Report rep;
    rep.file_name = "entropy_analysis_report.json";
    json body = report_skeleton(cfg, "entropy-analysis");
    json rows = json::array();
    const uint64_t seed = cfg.seeds.front();
    for (Method method : cfg.methods) {
        try {
            const int shots = method == Method::Prompting ? 0 : cfg.shots;
            auto demo_sets = select_all(ctx, cfg, method, seed, shots, cfg.candidates);
            std::vector<std::pair<std::string, std::string>> pairs;
            pairs.reserve(ctx.test.size());
            for (std::size_t i = 0; i < ctx.test.size(); ++i) {
                pairs.emplace_back(join(demo_sets[i].texts, cfg.separator),
                                   input_text(ctx.tmpl, ctx.test.examples[i]));
            }
            EntropyStats stats = entropy_stats(*ctx.scorer, pairs, cfg.separator, cfg.jobs);
            SeedRun run = classify_all(ctx, cfg, demo_sets, nullptr);
            json per_example = json::array();
            for (double h : stats.per_example) per_example.push_back(h);
            rows.push_back(json{{"method", to_string(method)},
                                {"mean_h_conditional", stats.mean},
                                {"stddev_h_conditional", stats.stddev},
                                {"accuracy", run.accuracy},
                                {"h_conditional", std::move(per_example)}});
        } catch (const Error& e) {
            rows.push_back(json{{"method", to_string(method)}, {"error", e.what()}});
            rep.complete = false;
        }
    }
    body["seed"] = seed;
    body["rows"] = std::move(rows);
    body["complete"] = rep.complete;
    rep.body = std::move(body);
    return rep;
}

Report run_emit_mt(const RunConfig& cfg) {
    cfg.validate();
    EvalContext ctx = build_context(cfg, {false, {cfg.method}});
    if (ctx.tmpl.kind != TaskKind::Generation) {
        throw ValidationError("emit-mt needs a generation template");
    }
    if (!ctx.scorer->supports_generation()) {
        throw ValidationError("emit-mt needs a scorer with generation support (scorer = remote)");
    }
    Report rep;
    rep.file_name = "emit_mt_report.json";
    json body = report_skeleton(cfg, "emit-mt");

    // The reference is the field the generated slot would contain.
    std::string reference_field;
    if (!ctx.tmpl.placeholders.empty()) {
        const std::string& last = ctx.tmpl.placeholders.back();
        if (std::find(ctx.tmpl.input_fields.begin(), ctx.tmpl.input_fields.end(), last) ==
            ctx.tmpl.input_fields.end()) {
            reference_field = last;
        }
    }

    const uint64_t seed = cfg.seeds.front();
    auto demo_sets = select_all(ctx, cfg, cfg.method, seed,
                                cfg.method == Method::Prompting ? 0 : cfg.shots, cfg.candidates);

    fs::create_directories(cfg.out_dir);
    std::ofstream src_out(fs::path(cfg.out_dir) / "sources.txt", std::ios::trunc);
    std::ofstream hyp_out(fs::path(cfg.out_dir) / "hypotheses.txt", std::ios::trunc);
    std::ofstream ref_out(fs::path(cfg.out_dir) / "references.txt", std::ios::trunc);

    json warnings = json::array();
    int empty_count = 0;
    InferenceOptions opt;
    opt.max_prompt_chars = cfg.max_prompt_chars;
    for (std::size_t i = 0; i < ctx.test.size(); ++i) {
        const Example& e = ctx.test.examples[i];
        GenerateOutcome out = generate_hypothesis(*ctx.scorer, demo_sets[i], e, ctx.tmpl,
                                                  cfg.max_new_tokens, cfg.stop, opt);
        if (out.empty_hypothesis) {
            ++empty_count;
            warnings.push_back("empty hypothesis for example '" + e.id + "'");
        }
        src_out << input_text(ctx.tmpl, e) << "\n";
        hyp_out << out.hypothesis << "\n";
        if (!reference_field.empty()) {
            auto it = e.fields.find(reference_field);
            if (it != e.fields.end()) {
                ref_out << it->second << "\n";
            } else {
                ref_out << "\n";
                warnings.push_back("missing reference for example '" + e.id + "'");
            }
        }
    }
    body["count"] = ctx.test.size();
    body["empty_hypotheses"] = empty_count;
    body["reference_field"] = reference_field;
    body["warnings"] = std::move(warnings);
    body["files"] = json{{"sources", (fs::path(cfg.out_dir) / "sources.txt").string()},
                         {"hypotheses", (fs::path(cfg.out_dir) / "hypotheses.txt").string()},
                         {"references", (fs::path(cfg.out_dir) / "references.txt").string()}};
    body["complete"] = rep.complete;
    rep.body = std::move(body);
    return rep;
}

std::string write_report(const Report& report, const std::string& out_dir) {
    fs::create_directories(out_dir);
    fs::path path = fs::path(out_dir) / report.file_name;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write report file: " + path.string());
    out << report.body.dump(2) << "\n";
    return path.string();
}

}  // namespace cone
