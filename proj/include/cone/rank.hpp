#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cone/corpus.hpp"
#include "cone/retrieval.hpp"
#include "cone/scoring.hpp"

namespace cone {

/// Entropies (nats) of a candidate demonstration context against one test
/// input: the whole prompt, the context alone, and their difference.
struct ConeScore {
    double h_joint = 0.0;        // H(x, c)
    double h_context = 0.0;      // H(c)
    double h_conditional = 0.0;  // H(x | c) = h_joint - h_context
};

struct RankedCandidate {
    Candidate candidate;
    ConeScore score;
    int cone_rank = 0;
};

enum class ConeMode {
    PerCandidate,  // score each candidate alone as a 1-shot context
    GreedyGroup,   // grow the context, adding the entropy-minimizing candidate each step
};

enum class OrderPolicy {
    BestLast,   // lowest-entropy demonstration adjacent to the test input
    BestFirst,  // lowest-entropy demonstration first
    Retrieval,  // selected demonstrations in retrieval-rank order
};

OrderPolicy order_policy_from_string(std::string_view name);
std::string to_string(OrderPolicy policy);
ConeMode cone_mode_from_string(std::string_view name);
std::string to_string(ConeMode mode);

/// Demonstrations chosen for one test example, in final prompt order.
struct DemonstrationSet {
    std::vector<std::string> ids;
    std::vector<std::string> texts;  // rendered with gold labels
    std::string ordering_policy;
    std::vector<std::string> warnings;
};

/// H(x|c) via the joint/context difference. The context is scored with its
/// trailing separator so the difference attributes exactly the test-input
/// tokens under seam-aligned tokenization. An empty context degenerates to
/// the unconditional score of x.
ConeScore conditional_entropy(const Scorer& scorer, std::string_view context,
                              std::string_view input, std::string_view separator);

/// A pool example rendered as a demonstration: with its gold label for
/// classification (missing labels are an error), with the single pattern for
/// generation.
std::string render_demonstration(const Dataset& pool, const Template& tmpl, const std::string& id);

/// Pure ordering step: sort by ascending h_conditional, ties by ascending
/// retrieval rank, then ascending example id; assigns cone ranks.
std::vector<RankedCandidate> rank_from_scores(std::vector<RankedCandidate> scored);

/// Score retrieval candidates against the test input and order them by the
/// conditional entropy they induce on it. Candidates are rendered as
/// demonstrations with their gold labels. In greedy-group mode the context
/// grows one candidate per step and cone ranks record the greedy order.
std::vector<RankedCandidate> rank_candidates(const Scorer& scorer, const Dataset& pool,
                                             const Template& tmpl,
                                             const std::vector<Candidate>& candidates,
                                             std::string_view test_input, ConeMode mode = ConeMode::PerCandidate,
                                             int jobs = 1);

struct SelectionOptions {
    int candidates_k = 30;
    int shots_n = 8;
    ConeMode mode = ConeMode::PerCandidate;
    OrderPolicy order = OrderPolicy::BestLast;
    int jobs = 1;
};

/// The full select-then-rerank pipeline: retrieve K candidates for the test
/// example, rerank them by conditional entropy, keep the N best and order
/// them for the prompt. N = 0 yields the zero-shot (empty) set; a pool
/// smaller than N clips with a warning.
DemonstrationSet select_demonstrations(const Dataset& pool, const Example& test_example,
                                       const Retriever& retriever, const Scorer& scorer,
                                       const Template& tmpl, const SelectionOptions& options);

/// Plain retrieval selection (no entropy reranking): the retriever's top-N
/// ordered by the same policy, with retrieval rank standing in for quality.
DemonstrationSet select_plain(const Dataset& pool, const Example& test_example,
                              const Retriever& retriever, const Template& tmpl, int shots_n,
                              OrderPolicy order);

struct EntropyStats {
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::vector<double> per_example;
};

/// Mean/stddev of H(input | context) over (context, input) pairs.
EntropyStats entropy_stats(const Scorer& scorer,
                           const std::vector<std::pair<std::string, std::string>>& context_input_pairs,
                           std::string_view separator, int jobs = 1);

}  // namespace cone
