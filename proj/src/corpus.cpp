#include "cone/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace cone {

using nlohmann::json;

const Example* Dataset::find(std::string_view id) const {
    auto it = index.find(std::string(id));
    return it == index.end() ? nullptr : &examples[it->second];
}

const Example& Dataset::at(std::string_view id) const {
    const Example* e = find(id);
    if (!e) throw ValidationError("no example with id '" + std::string(id) + "' in " + source_path);
    return *e;
}

std::vector<std::string> Dataset::ids() const {
    std::vector<std::string> out;
    out.reserve(examples.size());
    for (auto& e : examples) out.push_back(e.id);
    return out;
}

namespace {

struct Piece {
    bool is_placeholder = false;
    std::string text;  // literal text, or the placeholder's field name
};

// Splits a pattern into literal and placeholder pieces. "<<" and ">>" are
// literal angle brackets; a bare '>' is literal; '<' opens a placeholder.
std::vector<Piece> scan_pattern(std::string_view pattern) {
    std::vector<Piece> pieces;
    std::string literal;
    std::size_t i = 0;
    const std::size_t n = pattern.size();
    auto flush = [&] {
        if (!literal.empty()) {
            pieces.push_back({false, literal});
            literal.clear();
        }
    };
    while (i < n) {
        char c = pattern[i];
        if (c == '<') {
            if (i + 1 < n && pattern[i + 1] == '<') {
                literal.push_back('<');
                i += 2;
                continue;
            }
            std::size_t close = pattern.find('>', i + 1);
            if (close == std::string_view::npos) {
                throw ParseError("unterminated placeholder in pattern: " + std::string(pattern));
            }
            std::string name(pattern.substr(i + 1, close - i - 1));
            if (name.empty()) {
                throw ParseError("empty placeholder in pattern: " + std::string(pattern));
            }
            flush();
            pieces.push_back({true, std::move(name)});
            i = close + 1;
            continue;
        }
        if (c == '>' && i + 1 < n && pattern[i + 1] == '>') {
            literal.push_back('>');
            i += 2;
            continue;
        }
        literal.push_back(c);
        ++i;
    }
    flush();
    return pieces;
}

void replace_all(std::string& s, std::string_view needle, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = s.find(needle, pos)) != std::string::npos) {
        s.replace(pos, needle.size(), value);
        pos += value.size();
    }
}

// Substitutes the [src]/[tgt] language-name tokens when configured; a token
// left in the pattern without a configured name is an error.
std::string substitute_lang_tokens(const Template& t, std::string pattern) {
    for (auto& [token, name] : {std::pair<const char*, const std::optional<std::string>&>{"[src]", t.src_name},
                                {"[tgt]", t.tgt_name}}) {
        if (pattern.find(token) == std::string::npos) continue;
        if (!name) throw ValidationError(std::string("pattern uses ") + token + " but no language name is configured");
        replace_all(pattern, token, *name);
    }
    return pattern;
}

std::string render_pieces(const std::vector<Piece>& pieces, const Example& e) {
    std::string out;
    for (auto& p : pieces) {
        if (!p.is_placeholder) {
            out += p.text;
            continue;
        }
        auto it = e.fields.find(p.text);
        if (it == e.fields.end()) {
            throw ValidationError("unresolvable placeholder <" + p.text + "> for example '" + e.id + "'");
        }
        out += it->second;
    }
    return out;
}

// Index of the final placeholder piece, or pieces.size() if there is none.
std::size_t last_placeholder(const std::vector<Piece>& pieces) {
    std::size_t last = pieces.size();
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (pieces[i].is_placeholder) last = i;
    }
    return last;
}

}  // namespace

std::vector<std::string> Template::labels() const {
    std::vector<std::string> out;
    out.reserve(patterns.size());
    for (auto& [label, _] : patterns) out.push_back(label);
    return out;
}

Template Template::make(TaskKind kind, std::map<std::string, std::string> patterns,
                        std::string separator, std::optional<std::string> src_name,
                        std::optional<std::string> tgt_name) {
    Template t;
    t.kind = kind;
    t.patterns = std::move(patterns);
    t.separator = std::move(separator);
    t.src_name = std::move(src_name);
    t.tgt_name = std::move(tgt_name);

    if (t.patterns.empty()) throw ValidationError("template has no patterns");
    if (kind == TaskKind::Classification && t.patterns.size() < 2) {
        throw ValidationError("classification template needs at least 2 labels");
    }
    if (kind == TaskKind::Generation && t.patterns.size() != 1) {
        throw ValidationError("generation template needs exactly one pattern");
    }

    // Well-formedness and placeholder collection, in label order then
    // appearance order.
    for (auto& [label, pattern] : t.patterns) {
        for (auto& piece : scan_pattern(pattern)) {
            if (piece.is_placeholder &&
                std::find(t.placeholders.begin(), t.placeholders.end(), piece.text) == t.placeholders.end()) {
                t.placeholders.push_back(piece.text);
            }
        }
    }

    // Label slot: common prefix over patterns, then common suffix of the rest.
    auto first = t.patterns.begin()->second;
    std::size_t prefix = first.size();
    for (auto& [_, p] : t.patterns) {
        std::size_t k = 0;
        while (k < prefix && k < p.size() && p[k] == first[k]) ++k;
        prefix = k;
    }
    std::size_t suffix = first.size() - prefix;
    for (auto& [_, p] : t.patterns) {
        std::size_t limit = p.size() - prefix;
        std::size_t k = 0;
        while (k < suffix && k < limit && p[p.size() - 1 - k] == first[first.size() - 1 - k]) ++k;
        suffix = k;
    }
    t.shared_prefix = first.substr(0, prefix);
    t.shared_suffix = first.substr(first.size() - suffix);
    for (auto& [label, p] : t.patterns) {
        t.label_slots[label] = p.substr(prefix, p.size() - prefix - suffix);
    }
    if (kind == TaskKind::Classification) {
        std::vector<std::string> slots;
        for (auto& [_, s] : t.label_slots) slots.push_back(s);
        std::sort(slots.begin(), slots.end());
        if (std::adjacent_find(slots.begin(), slots.end()) != slots.end()) {
            throw ValidationError("two labels share an identical pattern");
        }
    }

    // Query-side fields: everything for classification, everything before the
    // final placeholder (the generated slot) for generation.
    if (kind == TaskKind::Classification) {
        t.input_fields = t.placeholders;
    } else {
        auto pieces = scan_pattern(t.patterns.begin()->second);
        std::size_t last = last_placeholder(pieces);
        if (last == pieces.size()) throw ValidationError("generation pattern has no placeholder");
        for (std::size_t i = 0; i < last; ++i) {
            if (pieces[i].is_placeholder &&
                std::find(t.input_fields.begin(), t.input_fields.end(), pieces[i].text) == t.input_fields.end()) {
                t.input_fields.push_back(pieces[i].text);
            }
        }
        if (t.input_fields.empty()) {
            throw ValidationError("generation pattern needs an input placeholder before the generated slot");
        }
    }
    return t;
}

Template Template::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open template file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& ex) {
        throw ParseError(path + ": malformed template: " + ex.what());
    }
    if (!j.is_object()) throw ParseError(path + ": template must be a JSON object");

    TaskKind kind = TaskKind::Classification;
    std::string separator = "\n";
    std::optional<std::string> src_name, tgt_name;
    std::map<std::string, std::string> patterns;
    bool saw_task = false;
    for (auto& [key, value] : j.items()) {
        if (!value.is_string()) throw ParseError(path + ": template key '" + key + "' is not a string");
        std::string v = value.get<std::string>();
        if (key == "task") {
            saw_task = true;
            if (v == "classification") kind = TaskKind::Classification;
            else if (v == "generation") kind = TaskKind::Generation;
            else throw ParseError(path + ": unknown task kind '" + v + "'");
        } else if (key == "separator") {
            separator = unescape_value(v);
        } else if (key == "src_name") {
            src_name = v;
        } else if (key == "tgt_name") {
            tgt_name = v;
        } else {
            patterns[key] = v;
        }
    }
    if (!saw_task) throw ParseError(path + ": template is missing the 'task' key");
    return make(kind, std::move(patterns), std::move(separator), std::move(src_name), std::move(tgt_name));
}

Dataset load_dataset(const std::string& path, const std::string& format_id,
                     const std::vector<std::string>& required_fields,
                     const std::vector<std::string>& label_set) {
    if (format_id != "jsonl") throw ValidationError("unknown dataset format '" + format_id + "' (expected jsonl)");
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset file: " + path);

    Dataset ds;
    ds.source_path = path;
    std::string line;
    std::size_t line_no = 0;
    std::size_t record_idx = 0;
    auto where = [&] { return path + ":" + std::to_string(line_no) + ": "; };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            throw ParseError(where() + "malformed record: " + ex.what());
        }
        if (!j.is_object()) throw ParseError(where() + "record is not an object");

        Example e;
        for (auto& [key, value] : j.items()) {
            if (!value.is_string()) throw ParseError(where() + "field '" + key + "' is not a string");
            std::string v = value.get<std::string>();
            if (key == "id") e.id = v;
            else if (key == "label") e.label = v;
            else if (key == "domain") e.domain = v;
            else e.fields[key] = v;
        }
        if (e.id.empty()) e.id = std::to_string(record_idx);
        for (auto& f : required_fields) {
            if (!e.fields.count(f)) throw ParseError(where() + "record missing required field '" + f + "'");
        }
        if (e.label && !label_set.empty() &&
            std::find(label_set.begin(), label_set.end(), *e.label) == label_set.end()) {
            throw ParseError(where() + "label '" + *e.label + "' is not in the template label set");
        }
        if (ds.index.count(e.id)) throw ParseError(where() + "duplicate id '" + e.id + "'");
        ds.index.emplace(e.id, ds.examples.size());
        ds.examples.push_back(std::move(e));
        ++record_idx;
    }
    return ds;
}

std::string render(const Template& t, const Example& e, const std::string& label_choice) {
    auto it = t.patterns.find(label_choice);
    if (it == t.patterns.end()) throw ValidationError("unknown label '" + label_choice + "'");
    std::string pattern = substitute_lang_tokens(t, it->second);
    return render_pieces(scan_pattern(pattern), e);
}

std::string render_query(const Template& t, const Example& e) {
    if (t.kind != TaskKind::Generation) {
        throw ValidationError("render_query is only defined for generation templates");
    }
    std::string pattern = substitute_lang_tokens(t, t.patterns.begin()->second);
    auto pieces = scan_pattern(pattern);
    std::size_t last = last_placeholder(pieces);
    std::string out;
    for (std::size_t i = 0; i < last; ++i) {
        if (pieces[i].is_placeholder) {
            auto f = e.fields.find(pieces[i].text);
            if (f == e.fields.end()) {
                throw ValidationError("unresolvable placeholder <" + pieces[i].text + "> for example '" + e.id + "'");
            }
            out += f->second;
        } else {
            out += pieces[i].text;
        }
    }
    return out;
}

std::string input_text(const Template& t, const Example& e) {
    std::vector<std::string> values;
    for (auto& f : t.input_fields) {
        auto it = e.fields.find(f);
        if (it == e.fields.end()) {
            throw ValidationError("example '" + e.id + "' is missing template field '" + f + "'");
        }
        values.push_back(it->second);
    }
    return join(values, " ");
}

Prompt assemble_prompt(const std::vector<std::string>& demo_texts,
                       const std::string& query_text, const std::string& separator) {
    Prompt p;
    if (demo_texts.empty()) {
        p.full_text = query_text;
        p.demo_region = {0, 0};
        p.test_region = {0, query_text.size()};
        return p;
    }
    std::string demos = join(demo_texts, separator);
    p.full_text = demos + separator + query_text;
    p.demo_region = {0, demos.size()};
    p.test_region = {demos.size() + separator.size(), p.full_text.size()};
    return p;
}

std::vector<std::string> span_shuffle(const std::vector<std::string>& tokens,
                                      uint64_t seed, double ratio) {
    if (ratio < 0.0 || ratio > 1.0) throw ValidationError("span_shuffle ratio must lie in [0, 1]");
    static constexpr int kPerms[5][3] = {{0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    std::vector<std::string> out = tokens;
    std::mt19937_64 rng(seed);
    const std::size_t triples = tokens.size() / 3;
    for (std::size_t tr = 0; tr < triples; ++tr) {
        if (uniform01(rng) >= ratio) continue;
        const auto& perm = kPerms[uniform_index(rng, 5)];
        const std::size_t base = 3 * tr;
        std::string a = out[base], b = out[base + 1], c = out[base + 2];
        const std::string* src[3] = {&a, &b, &c};
        for (int k = 0; k < 3; ++k) out[base + k] = *src[perm[k]];
    }
    return out;
}

}  // namespace cone
