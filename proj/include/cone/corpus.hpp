#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cone/util.hpp"

namespace cone {

/// One dataset record. Reserved JSONL keys "id", "label" and "domain" land in
/// the dedicated members; every other key is a named text field.
struct Example {
    std::string id;
    std::map<std::string, std::string> fields;
    std::optional<std::string> label;
    std::optional<std::string> domain;
};

struct Dataset {
    std::vector<Example> examples;
    std::string source_path;

    const Example* find(std::string_view id) const;
    const Example& at(std::string_view id) const;  // throws ValidationError
    std::vector<std::string> ids() const;
    std::size_t size() const { return examples.size(); }

    std::unordered_map<std::string, std::size_t> index;  // id -> position
};

enum class TaskKind { Classification, Generation };

/// Prompt patterns per label. Placeholders are written <name> and name a
/// field the example must carry; << and >> escape literal angle brackets.
/// Generation patterns may also contain the literal tokens [src] and [tgt],
/// replaced by the configured language names.
///
/// The label slot is derived from the pattern set: the longest common prefix
/// across all patterns, then the longest common suffix of the remainders;
/// what is left in the middle is the per-label slot.
struct Template {
    TaskKind kind = TaskKind::Classification;
    std::map<std::string, std::string> patterns;  // label -> pattern
    std::string separator = "\n";
    std::optional<std::string> src_name;
    std::optional<std::string> tgt_name;

    // Derived at construction.
    std::string shared_prefix;
    std::string shared_suffix;
    std::map<std::string, std::string> label_slots;
    std::vector<std::string> placeholders;   // first-appearance order
    std::vector<std::string> input_fields;   // query-side subset of placeholders

    std::vector<std::string> labels() const;

    /// Validates and computes the derived members.
    static Template make(TaskKind kind, std::map<std::string, std::string> patterns,
                         std::string separator = "\n",
                         std::optional<std::string> src_name = std::nullopt,
                         std::optional<std::string> tgt_name = std::nullopt);

    /// Single-line JSON object: reserved keys "task" (classification |
    /// generation), "separator", "src_name", "tgt_name"; every other key is a
    /// label with its pattern.
    static Template from_file(const std::string& path);
};

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Assembled prompt text plus the character regions of its two parts.
struct Prompt {
    std::string full_text;
    Span demo_region;  // concatenated demonstrations, internal separators included
    Span test_region;  // exactly the rendered test input
};

/// Line-delimited records with flat string fields. `format_id` must be
/// "jsonl". Records without an "id" get their zero-based record index as a
/// decimal string. `required_fields` and `label_set`, when non-empty, are
/// enforced per record with the offending line number in the error.
Dataset load_dataset(const std::string& path, const std::string& format_id,
                     const std::vector<std::string>& required_fields = {},
                     const std::vector<std::string>& label_set = {});

/// Substitute [src]/[tgt] and all placeholders of the label's pattern.
std::string render(const Template& t, const Example& e, const std::string& label_choice);

/// Generation-only query form: the pattern truncated at its final placeholder
/// (the slot the model is asked to fill), earlier placeholders substituted.
std::string render_query(const Template& t, const Example& e);

/// The example's query-side field values joined with single spaces, in
/// pattern order. This is the test-input text used for retrieval queries and
/// for entropy computations.
std::string input_text(const Template& t, const Example& e);

Prompt assemble_prompt(const std::vector<std::string>& demo_texts,
                       const std::string& query_text, const std::string& separator);

/// Permute tokens inside selected three-token windows. The token list is
/// split into disjoint triples left to right (a leftover of one or two tokens
/// is never touched). With rng = std::mt19937_64(seed), each triple in order
/// draws u = uniform01(rng); if u < ratio the triple additionally draws
/// p = uniform_index(rng, 5) and is rearranged by the p-th non-identity
/// permutation of (0,1,2) in lexicographic order:
/// (0,2,1) (1,0,2) (1,2,0) (2,0,1) (2,1,0).
std::vector<std::string> span_shuffle(const std::vector<std::string>& tokens,
                                      uint64_t seed, double ratio = 1.0);

}  // namespace cone
