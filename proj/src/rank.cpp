#include "cone/rank.hpp"

#include <algorithm>
#include <cmath>

namespace cone {

OrderPolicy order_policy_from_string(std::string_view name) {
    if (name == "best-last") return OrderPolicy::BestLast;
    if (name == "best-first") return OrderPolicy::BestFirst;
    if (name == "retrieval") return OrderPolicy::Retrieval;
    throw ValidationError("unknown ordering policy '" + std::string(name) + "'");
}

std::string to_string(OrderPolicy policy) {
    switch (policy) {
        case OrderPolicy::BestLast: return "best-last";
        case OrderPolicy::BestFirst: return "best-first";
        case OrderPolicy::Retrieval: return "retrieval";
    }
    return "best-last";
}

ConeMode cone_mode_from_string(std::string_view name) {
    if (name == "per-candidate") return ConeMode::PerCandidate;
    if (name == "greedy-group") return ConeMode::GreedyGroup;
    throw ValidationError("unknown cone mode '" + std::string(name) + "'");
}

std::string to_string(ConeMode mode) {
    return mode == ConeMode::PerCandidate ? "per-candidate" : "greedy-group";
}

ConeScore conditional_entropy(const Scorer& scorer, std::string_view context,
                              std::string_view input, std::string_view separator) {
    if (input.empty()) throw ValidationError("conditional entropy needs a non-empty test input");
    ConeScore s;
    if (context.empty()) {
        s.h_joint = scorer.score_sequence(input).total_nll;
        s.h_context = 0.0;
    } else {
        std::string ctx;
        ctx.reserve(context.size() + separator.size());
        ctx.append(context);
        ctx.append(separator);
        std::string joint = ctx;
        joint.append(input);
        s.h_joint = scorer.score_sequence(joint).total_nll;
        s.h_context = scorer.score_sequence(ctx).total_nll;
    }
    s.h_conditional = s.h_joint - s.h_context;
    if (!std::isfinite(s.h_conditional)) {
        throw ScoreError("non-finite conditional entropy");
    }
    return s;
}

std::vector<RankedCandidate> rank_from_scores(std::vector<RankedCandidate> scored) {
    std::sort(scored.begin(), scored.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        if (a.score.h_conditional != b.score.h_conditional) {
            return a.score.h_conditional < b.score.h_conditional;
        }
        if (a.candidate.retrieval_rank != b.candidate.retrieval_rank) {
            return a.candidate.retrieval_rank < b.candidate.retrieval_rank;
        }
        return a.candidate.example_id < b.candidate.example_id;
    });
    for (std::size_t i = 0; i < scored.size(); ++i) scored[i].cone_rank = static_cast<int>(i);
    return scored;
}

std::string render_demonstration(const Dataset& pool, const Template& tmpl, const std::string& id) {
    const Example& e = pool.at(id);
    if (tmpl.kind == TaskKind::Classification) {
        if (!e.label) {
            throw ValidationError("pool example '" + id + "' has no gold label to render");
        }
        return render(tmpl, e, *e.label);
    }
    return render(tmpl, e, tmpl.patterns.begin()->first);
}

namespace {

std::vector<RankedCandidate> rank_greedy(const Scorer& scorer, const Dataset& pool,
                                         const Template& tmpl,
                                         const std::vector<Candidate>& candidates,
                                         std::string_view test_input,
                                         const std::string& separator) {
    std::vector<RankedCandidate> ranked;
    std::vector<std::pair<Candidate, std::string>> remaining;
    remaining.reserve(candidates.size());
    for (auto& c : candidates) remaining.emplace_back(c, render_demonstration(pool, tmpl, c.example_id));

    std::string context;
    while (!remaining.empty()) {
        std::size_t best = 0;
        ConeScore best_score;
        bool have_best = false;
        for (std::size_t i = 0; i < remaining.size(); ++i) {
            std::string grown = context.empty()
                                    ? remaining[i].second
                                    : context + separator + remaining[i].second;
            ConeScore s = conditional_entropy(scorer, grown, test_input, separator);
            bool better = !have_best || s.h_conditional < best_score.h_conditional ||
                          (s.h_conditional == best_score.h_conditional &&
                           (remaining[i].first.retrieval_rank < remaining[best].first.retrieval_rank ||
                            (remaining[i].first.retrieval_rank == remaining[best].first.retrieval_rank &&
                             remaining[i].first.example_id < remaining[best].first.example_id)));
            if (better) {
                best = i;
                best_score = s;
                have_best = true;
            }
        }
        RankedCandidate rc;
        rc.candidate = remaining[best].first;
        rc.score = best_score;
        rc.cone_rank = static_cast<int>(ranked.size());
        ranked.push_back(rc);
        context = context.empty() ? remaining[best].second
                                  : context + separator + remaining[best].second;
        remaining.erase(remaining.begin() + best);
    }
    return ranked;
}

}  // namespace

std::vector<RankedCandidate> rank_candidates(const Scorer& scorer, const Dataset& pool,
                                             const Template& tmpl,
                                             const std::vector<Candidate>& candidates,
                                             std::string_view test_input, ConeMode mode,
                                             int jobs) {
    if (candidates.empty()) throw ValidationError("rank_candidates needs at least one candidate");
    const std::string& sep = tmpl.separator;
    if (mode == ConeMode::GreedyGroup) {
        return rank_greedy(scorer, pool, tmpl, candidates, test_input, sep);
    }
    std::vector<RankedCandidate> scored(candidates.size());
    parallel_for(candidates.size(), jobs, [&](std::size_t i) {
        const Candidate& c = candidates[i];
        std::string demo = render_demonstration(pool, tmpl, c.example_id);
        scored[i] = {c, conditional_entropy(scorer, demo, test_input, sep), 0};
    });
    return rank_from_scores(std::move(scored));
}

namespace {

DemonstrationSet order_and_render(const Dataset& pool, const Template& tmpl,
                                  std::vector<Candidate> best_first, OrderPolicy order,
                                  std::vector<std::string> warnings) {
    switch (order) {
        case OrderPolicy::BestFirst:
            break;
        case OrderPolicy::BestLast:
            std::reverse(best_first.begin(), best_first.end());
            break;
        case OrderPolicy::Retrieval:
            std::sort(best_first.begin(), best_first.end(), [](const Candidate& a, const Candidate& b) {
                if (a.retrieval_rank != b.retrieval_rank) return a.retrieval_rank < b.retrieval_rank;
                return a.example_id < b.example_id;
            });
            break;
    }
    DemonstrationSet out;
    out.ordering_policy = to_string(order);
    out.warnings = std::move(warnings);
    for (auto& c : best_first) {
        out.ids.push_back(c.example_id);
        out.texts.push_back(render_demonstration(pool, tmpl, c.example_id));
    }
    return out;
}

// The test example must never appear among its own demonstrations. One extra
// candidate is requested so a dropped self-match does not shrink the pool;
// ranks are reassigned to stay contiguous.
std::vector<Candidate> retrieve_excluding(const Retriever& retriever, const Example& test_example,
                                          int k) {
    auto candidates = retriever.retrieve(test_example, k + 1);
    std::erase_if(candidates, [&](const Candidate& c) { return c.example_id == test_example.id; });
    if (candidates.size() > static_cast<std::size_t>(k)) candidates.resize(k);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        candidates[i].retrieval_rank = static_cast<int>(i);
    }
    return candidates;
}

}  // namespace

DemonstrationSet select_demonstrations(const Dataset& pool, const Example& test_example,
                                       const Retriever& retriever, const Scorer& scorer,
                                       const Template& tmpl, const SelectionOptions& options) {
    if (options.shots_n < 0) throw ValidationError("shot count must be >= 0");
    if (options.candidates_k < options.shots_n) {
        throw ValidationError("candidate count K must be >= shot count N");
    }
    std::vector<std::string> warnings;
    if (options.shots_n == 0) {
        DemonstrationSet out;
        out.ordering_policy = to_string(options.order);
        return out;
    }
    auto candidates = retrieve_excluding(retriever, test_example, options.candidates_k);
    if (candidates.empty()) {
        DemonstrationSet out;
        out.ordering_policy = to_string(options.order);
        out.warnings.push_back("empty candidate pool for example '" + test_example.id + "'");
        return out;
    }
    auto ranked = rank_candidates(scorer, pool, tmpl, candidates,
                                  input_text(tmpl, test_example), options.mode, options.jobs);
    std::size_t keep = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(options.shots_n));
    if (keep < static_cast<std::size_t>(options.shots_n)) {
        warnings.push_back("pool smaller than requested shots for example '" + test_example.id +
                           "': kept " + std::to_string(keep));
    }
    std::vector<Candidate> best_first;
    best_first.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) best_first.push_back(ranked[i].candidate);
    return order_and_render(pool, tmpl, std::move(best_first), options.order, std::move(warnings));
}

DemonstrationSet select_plain(const Dataset& pool, const Example& test_example,
                              const Retriever& retriever, const Template& tmpl, int shots_n,
                              OrderPolicy order) {
    if (shots_n < 0) throw ValidationError("shot count must be >= 0");
    std::vector<std::string> warnings;
    if (shots_n == 0) {
        DemonstrationSet out;
        out.ordering_policy = to_string(order);
        return out;
    }
    auto candidates = retrieve_excluding(retriever, test_example, shots_n);
    if (candidates.size() < static_cast<std::size_t>(shots_n)) {
        warnings.push_back("pool smaller than requested shots for example '" + test_example.id +
                           "': kept " + std::to_string(candidates.size()));
    }
    return order_and_render(pool, tmpl, std::move(candidates), order, std::move(warnings));
}

EntropyStats entropy_stats(const Scorer& scorer,
                           const std::vector<std::pair<std::string, std::string>>& context_input_pairs,
                           std::string_view separator, int jobs) {
    EntropyStats stats;
    stats.per_example.resize(context_input_pairs.size());
    parallel_for(context_input_pairs.size(), jobs, [&](std::size_t i) {
        stats.per_example[i] = conditional_entropy(scorer, context_input_pairs[i].first,
                                                   context_input_pairs[i].second, separator)
                                   .h_conditional;
    });
    if (stats.per_example.empty()) return stats;
    double sum = 0.0;
    for (double h : stats.per_example) sum += h;
    stats.mean = sum / static_cast<double>(stats.per_example.size());
    double sq = 0.0;
    for (double h : stats.per_example) sq += (h - stats.mean) * (h - stats.mean);
    stats.stddev = std::sqrt(sq / static_cast<double>(stats.per_example.size()));
    return stats;
}

}  // namespace cone
