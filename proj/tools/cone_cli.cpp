// cone: demonstration selection and evaluation for in-context learning.
//
// Subcommands mirror the experiment protocols: eval, ablate-shots,
// ablate-candidates, order-sensitivity, noise, entropy-analysis, emit-mt.
// Every option can also live in a flat key = value config file; flags win.

#include <cstdio>
#include <functional>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "cone/harness.hpp"

namespace {

struct CliState {
    std::string config_path;
    // Flag values arrive as strings and flow through RunConfig::apply so the
    // CLI and the config file share one parser and one set of defaults.
    std::map<std::string, std::string> overrides;
};

void add_common_options(CLI::App* cmd, CliState& state) {
    cmd->add_option("--config", state.config_path, "Flat key = value config file");
    auto capture = [&state](const std::string& key) {
        return [&state, key](const std::string& value) { state.overrides[key] = value; };
    };
    auto opt = [&](const char* flag, const char* key, const char* help) {
        cmd->add_option_function<std::string>(flag, capture(key), help);
    };
    opt("--pool", "pool", "Demonstration pool dataset (jsonl)");
    opt("--test,--dataset", "test", "Evaluated dataset split (jsonl)");
    opt("--template", "template", "Prompt template file (json)");
    opt("--method", "method",
        "prompting | random | bm25 | topk | topk-cone | bm25-cone | random-cone");
    opt("--retriever", "retriever", "bm25 | topk | random (plain retrieval shorthand)");
    opt("--shots", "shots", "Demonstrations per prompt (N)");
    opt("--candidates", "candidates", "Retrieval candidates to rerank (K)");
    opt("--bm25-k1", "bm25_k1", "BM25 k1 parameter");
    opt("--bm25-b", "bm25_b", "BM25 b parameter");
    opt("--embeddings", "embeddings", "Embedding file (id + floats per line)");
    opt("--embed-dim", "embed_dim", "Stub embedder dimension when no file is given");
    opt("--scorer", "scorer", "ngram | uniform | remote");
    opt("--ngram-corpus", "ngram_corpus", "Training text for the reference scorer");
    opt("--ngram-order", "ngram_order", "Reference scorer n-gram order");
    opt("--ngram-k", "ngram_k", "Additive smoothing constant");
    opt("--uniform-vocab", "uniform_vocab", "Vocabulary size of the uniform scorer");
    opt("--endpoint", "endpoint", "Remote scorer URL (or CONE_ENDPOINT)");
    opt("--model", "model", "Remote model identifier");
    opt("--cache-dir", "cache_dir", "Persistent score cache directory");
    opt("--seed", "seeds", "Comma-separated seed list");
    opt("--order", "order", "best-last | best-first | retrieval");
    opt("--cone-mode", "cone_mode", "per-candidate | greedy-group");
    opt("--separator", "separator", "Demonstration separator (\\n escapes allowed)");
    opt("--noise-ratio", "noise_ratio", "Span shuffle selection ratio in [0, 1]");
    opt("--out", "out", "Report output directory");
    opt("--max-prompt-chars", "max_prompt_chars", "Prompt length ceiling (0 = off)");
    opt("--jobs", "jobs", "Worker threads over test examples");
    opt("--length-normalize", "length_normalize", "Normalize label scores by query length");
    opt("--permutations", "permutations", "Orderings per example (order-sensitivity)");
    opt("--max-new-tokens", "max_new_tokens", "Generation budget (emit-mt)");
    opt("--stop", "stop", "Generation stop sequence (emit-mt)");
    opt("--shot-list", "shot_list", "Comma-separated shot counts (ablate-shots)");
    opt("--k-list", "k_list", "Comma-separated candidate counts (ablate-candidates)");
    opt("--methods", "methods", "Comma-separated methods (entropy-analysis)");
}

cone::RunConfig resolve_config(const CliState& state) {
    cone::RunConfig cfg;
    if (!state.config_path.empty()) cfg = cone::RunConfig::from_file(state.config_path);
    for (auto& [key, value] : state.overrides) {
        // --retriever is shorthand for the plain retrieval methods.
        cfg.apply(key == "retriever" ? "method" : key, value);
    }
    return cfg;
}

int execute(const CliState& state, const std::function<cone::Report(const cone::RunConfig&)>& run) {
    try {
        cone::RunConfig cfg = resolve_config(state);
        cone::Report report = run(cfg);
        std::string path = cone::write_report(report, cfg.out_dir);
        const auto& body = report.body;
        if (body.contains("summary") && body["summary"].contains("mean_accuracy")) {
            std::printf("%s: mean accuracy %.4f over %zu run(s)\n",
                        body["command"].get<std::string>().c_str(),
                        body["summary"]["mean_accuracy"].get<double>(),
                        body["summary"]["runs"].get<std::size_t>());
        }
        std::printf("report: %s\n", path.c_str());
        if (!report.complete) {
            std::fprintf(stderr, "warning: partial report (some runs failed)\n");
            return 1;
        }
        return 0;
    } catch (const cone::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Demonstration selection for in-context learning via conditional entropy"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* help;
        std::function<cone::Report(const cone::RunConfig&)> run;
    };
    const Sub subs[] = {
        {"eval", "Evaluate one method over the test split", cone::run_eval},
        {"ablate-shots", "Sweep the demonstration count N", cone::run_ablation_shots},
        {"ablate-candidates", "Sweep the candidate count K", cone::run_ablation_candidates},
        {"order-sensitivity", "Accuracy variance over demonstration orderings",
         cone::run_order_sensitivity},
        {"noise", "Compare original and span-shuffled test inputs", cone::run_noise_experiment},
        {"entropy-analysis", "Per-method conditional entropy of the test inputs",
         cone::run_entropy_analysis},
        {"emit-mt", "Write translation hypotheses for external scoring", cone::run_emit_mt},
    };

    std::vector<std::unique_ptr<CliState>> states;
    int rc = 0;
    for (auto& sub : subs) {
        CLI::App* cmd = app.add_subcommand(sub.name, sub.help);
        states.push_back(std::make_unique<CliState>());
        CliState* state = states.back().get();
        add_common_options(cmd, *state);
        auto run = sub.run;
        cmd->callback([state, run, &rc] { rc = execute(*state, run); });
    }

    CLI11_PARSE(app, argc, argv);
    return rc;
}
