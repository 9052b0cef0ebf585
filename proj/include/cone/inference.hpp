#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cone/corpus.hpp"
#include "cone/rank.hpp"
#include "cone/scoring.hpp"

namespace cone {

struct Prediction {
    std::string example_id;
    std::string predicted_label;                // classification
    std::map<std::string, double> label_nll;    // classification, covers every template label
    std::string hypothesis;                     // generation
    std::optional<std::string> gold_label;
    std::vector<std::string> demo_ids;          // demonstrations the prompt carried, in order
};

struct InferenceOptions {
    /// Divide each label's nll by its rendered query's word count.
    bool length_normalize = false;
    /// Hard ceiling on prompt characters; 0 disables. Over-long prompts drop
    /// demonstrations from the front (farthest from the test input) first.
    long max_prompt_chars = 0;
};

struct ClassifyOutcome {
    Prediction prediction;
    int dropped_demos = 0;
};

/// Score the query rendered with every label as a continuation of the
/// demonstration context; predict the argmin, ties broken by the
/// lexicographically smallest label. An empty demonstration set scores the
/// query unconditionally.
ClassifyOutcome classify(const Scorer& scorer, const DemonstrationSet& demos,
                         const Example& test_example, const Template& tmpl,
                         const InferenceOptions& options = {});

/// Exact fraction of predictions whose predicted label equals the gold label.
/// The prediction ids and gold ids must coincide as sets and be non-empty.
double accuracy(const std::vector<Prediction>& predictions,
                const std::unordered_map<std::string, std::string>& golds);

struct GenerateOutcome {
    std::string hypothesis;
    bool empty_hypothesis = false;
    int dropped_demos = 0;
};

/// Complete the generation query (pattern truncated at the target slot) and
/// cut the completion at the stop sequence. An empty completion is recorded
/// with a warning flag rather than an error.
GenerateOutcome generate_hypothesis(const Scorer& scorer, const DemonstrationSet& demos,
                                    const Example& test_example, const Template& tmpl,
                                    int max_new_tokens, std::string_view stop,
                                    const InferenceOptions& options = {});

}  // namespace cone
