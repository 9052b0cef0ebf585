#include "cone/inference.hpp"

#include <algorithm>

namespace cone {

namespace {

// Drops demonstrations from the front until the longest prompt variant fits
// within max_chars. Returns the number dropped.
int fit_demos(std::vector<std::string>& demo_texts, std::vector<std::string>& demo_ids,
              std::size_t longest_query, const std::string& separator, long max_chars) {
    if (max_chars <= 0) return 0;
    int dropped = 0;
    auto prompt_len = [&] {
        std::size_t len = longest_query;
        for (auto& d : demo_texts) len += d.size() + separator.size();
        return len;
    };
    while (!demo_texts.empty() && prompt_len() > static_cast<std::size_t>(max_chars)) {
        demo_texts.erase(demo_texts.begin());
        demo_ids.erase(demo_ids.begin());
        ++dropped;
    }
    return dropped;
}

}  // namespace

ClassifyOutcome classify(const Scorer& scorer, const DemonstrationSet& demos,
                         const Example& test_example, const Template& tmpl,
                         const InferenceOptions& options) {
    if (tmpl.kind != TaskKind::Classification) {
        throw ValidationError("classify needs a classification template");
    }

    std::vector<std::string> queries;
    std::size_t longest_query = 0;
    for (auto& label : tmpl.labels()) {
        queries.push_back(render(tmpl, test_example, label));
        longest_query = std::max(longest_query, queries.back().size());
    }

    std::vector<std::string> demo_texts = demos.texts;
    std::vector<std::string> demo_ids = demos.ids;
    ClassifyOutcome out;
    out.dropped_demos =
        fit_demos(demo_texts, demo_ids, longest_query, tmpl.separator, options.max_prompt_chars);

    Prediction& pred = out.prediction;
    pred.example_id = test_example.id;
    pred.gold_label = test_example.label;
    pred.demo_ids = demo_ids;

    const auto labels = tmpl.labels();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Prompt prompt = assemble_prompt(demo_texts, queries[i], tmpl.separator);
        std::string context = prompt.full_text.substr(0, prompt.test_region.begin);
        double nll = scorer.score_continuation(context, queries[i]);
        if (options.length_normalize) {
            std::size_t words = word_list(queries[i]).size();
            nll /= static_cast<double>(std::max<std::size_t>(words, 1));
        }
        pred.label_nll[labels[i]] = nll;
    }

    // std::map iterates labels in lexicographic order, so keeping the first
    // strict minimum realizes the documented tie-break.
    bool first = true;
    double best = 0.0;
    for (auto& [label, nll] : pred.label_nll) {
        if (first || nll < best) {
            pred.predicted_label = label;
            best = nll;
            first = false;
        }
    }
    return out;
}

double accuracy(const std::vector<Prediction>& predictions,
                const std::unordered_map<std::string, std::string>& golds) {
    if (predictions.empty()) throw ValidationError("accuracy over an empty prediction set");
    if (predictions.size() != golds.size()) {
        throw ValidationError("prediction and gold id sets differ in size");
    }
    std::size_t correct = 0;
    for (auto& p : predictions) {
        auto it = golds.find(p.example_id);
        if (it == golds.end()) {
            throw ValidationError("no gold label for predicted id '" + p.example_id + "'");
        }
        if (p.predicted_label == it->second) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

GenerateOutcome generate_hypothesis(const Scorer& scorer, const DemonstrationSet& demos,
                                    const Example& test_example, const Template& tmpl,
                                    int max_new_tokens, std::string_view stop,
                                    const InferenceOptions& options) {
    if (tmpl.kind != TaskKind::Generation) {
        throw ValidationError("generate_hypothesis needs a generation template");
    }
    if (!scorer.supports_generation()) {
        throw ValidationError("scorer '" + scorer.model_id() + "' does not support generation");
    }

    std::string query = render_query(tmpl, test_example);
    std::vector<std::string> demo_texts = demos.texts;
    std::vector<std::string> demo_ids = demos.ids;
    GenerateOutcome out;
    out.dropped_demos =
        fit_demos(demo_texts, demo_ids, query.size(), tmpl.separator, options.max_prompt_chars);

    Prompt prompt = assemble_prompt(demo_texts, query, tmpl.separator);
    std::string completion = scorer.generate(prompt.full_text, max_new_tokens, stop);
    if (!stop.empty()) {
        std::size_t pos = completion.find(stop);
        if (pos != std::string::npos) completion.resize(pos);
    }
    out.hypothesis = completion;
    out.empty_hypothesis = completion.empty();
    return out;
}

}  // namespace cone
