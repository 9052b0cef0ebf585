#include "cone/util.hpp"

#include <atomic>
#include <cctype>
#include <exception>
#include <mutex>
#include <thread>

namespace cone {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<WordSpan> split_words(std::string_view text) {
    std::vector<WordSpan> out;
    std::size_t i = 0;
    std::size_t span_begin = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && is_space(text[i])) ++i;
        if (i >= n) break;
        std::size_t word_begin = i;
        while (i < n && !is_space(text[i])) ++i;
        WordSpan w;
        w.text.assign(text.substr(word_begin, i - word_begin));
        w.begin = span_begin;
        w.end = i;
        out.push_back(std::move(w));
        span_begin = i;
    }
    if (!out.empty()) out.back().end = n;  // trailing whitespace joins last span
    return out;
}

std::vector<std::string> word_list(std::string_view text) {
    std::vector<std::string> out;
    for (auto& w : split_words(text)) out.push_back(std::move(w.text));
    return out;
}

std::vector<std::string> lex_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        bool keep = (c >= 0x80) || std::isalnum(c);
        if (keep) {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

uint64_t fnv1a64(std::string_view data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string hash_hex(std::string_view data) {
    uint64_t a = fnv1a64(data);
    uint64_t b = splitmix64(a ^ 0x5bf03635ab96e7cbULL);
    char buf[33];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx",
                  static_cast<unsigned long long>(a), static_cast<unsigned long long>(b));
    return std::string(buf);
}

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
    return splitmix64(seed ^ splitmix64(a ^ splitmix64(b)));
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

std::string unescape_value(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == '\\' && i + 1 < raw.size()) {
            char c = raw[i + 1];
            switch (c) {
                case 'n': out.push_back('\n'); ++i; continue;
                case 't': out.push_back('\t'); ++i; continue;
                case 'r': out.push_back('\r'); ++i; continue;
                case '\\': out.push_back('\\'); ++i; continue;
                default: break;
            }
        }
        out.push_back(raw[i]);
    }
    return out;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (jobs <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace cone
