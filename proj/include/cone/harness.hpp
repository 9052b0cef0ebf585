#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "cone/corpus.hpp"
#include "cone/inference.hpp"
#include "cone/rank.hpp"
#include "cone/remote.hpp"
#include "cone/retrieval.hpp"
#include "cone/scoring.hpp"

namespace cone {

inline constexpr const char* kArtifactVersion = "conesel 0.1.0";

enum class Method { Prompting, Random, Bm25, TopK, TopKCone, Bm25Cone, RandomCone };

Method method_from_string(std::string_view name);
std::string to_string(Method method);
bool method_uses_cone(Method method);

/// Flat key = value run configuration; CLI flags override file entries.
struct RunConfig {
    std::string pool_path;
    std::string test_path;
    std::string template_path;
    Method method = Method::TopKCone;
    int shots = 8;
    int candidates = 30;
    Bm25Params bm25;
    std::string embeddings_path;  // empty: stub embedder over input text
    int embed_dim = 64;
    std::string scorer_kind = "ngram";  // ngram | uniform | remote
    std::string ngram_corpus_path;      // empty: train on the rendered pool
    int ngram_order = 2;
    double ngram_k = 0.1;
    double ngram_floor = 0.0;  // 0 disables
    int uniform_vocab = 16;
    RemoteOptions remote;
    std::string cache_dir;
    std::vector<uint64_t> seeds = {1, 2, 3};
    OrderPolicy order = OrderPolicy::BestLast;
    ConeMode cone_mode = ConeMode::PerCandidate;
    std::string separator = "\n";
    double noise_ratio = 1.0;
    std::string out_dir = "out";
    long max_prompt_chars = 0;
    int jobs = 1;
    bool length_normalize = false;
    int permutations = 10;
    int max_new_tokens = 64;
    std::string stop = "\n";
    std::vector<int> shot_list = {0, 1, 2, 4, 8};
    std::vector<int> k_list = {30};
    std::vector<Method> methods = {Method::TopK, Method::TopKCone};

    static RunConfig from_file(const std::string& path);
    /// Set one field by its config key; values carry \n-style escapes.
    void apply(const std::string& key, const std::string& value);
    void validate() const;

    /// Canonical key -> value echo of every field, as embedded in reports.
    std::map<std::string, std::string> resolved() const;
    std::string config_hash() const;
};

struct Report {
    nlohmann::json body;
    bool complete = true;
    std::string file_name;
};

Report run_eval(const RunConfig& config);
Report run_ablation_shots(const RunConfig& config);
Report run_ablation_candidates(const RunConfig& config);
Report run_order_sensitivity(const RunConfig& config);
Report run_noise_experiment(const RunConfig& config);
Report run_entropy_analysis(const RunConfig& config);
Report run_emit_mt(const RunConfig& config);

/// Serialize the report body under out_dir/file_name; returns the path.
/// Identical (config, seeds) produce byte-identical files.
std::string write_report(const Report& report, const std::string& out_dir);

}  // namespace cone
