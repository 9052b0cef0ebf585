#include "cone/remote.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace cone {

using nlohmann::json;

struct RemoteScorer::InflightGate {
    explicit InflightGate(int n) : sem(std::max(1, std::min(n, 256))) {}
    std::counting_semaphore<256> sem;
};

namespace {

struct GateGuard {
    std::counting_semaphore<256>& gate;
    explicit GateGuard(std::counting_semaphore<256>& g) : gate(g) { gate.acquire(); }
    ~GateGuard() { gate.release(); }
};

}  // namespace

RemoteScorer::RemoteScorer(RemoteOptions options) : options_(std::move(options)) {
    if (options_.endpoint.empty()) {
        throw ValidationError("remote scorer needs an endpoint (flag --endpoint or CONE_ENDPOINT)");
    }
    if (options_.max_retries < 1) throw ValidationError("max_retries must be >= 1");

    std::string url = options_.endpoint;
    std::size_t scheme = url.find("://");
    std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
    std::size_t slash = url.find('/', host_start);
    if (slash == std::string::npos) {
        base_url_ = url;
        path_ = "/v1/completions";
    } else {
        base_url_ = url.substr(0, slash);
        path_ = url.substr(slash);
    }
    gate_ = std::make_unique<InflightGate>(options_.max_inflight);
}

RemoteScorer::~RemoteScorer() = default;

RemoteOptions RemoteScorer::options_from_env() {
    RemoteOptions opt;
    if (const char* e = std::getenv("CONE_ENDPOINT")) opt.endpoint = e;
    if (const char* t = std::getenv("CONE_API_TOKEN")) opt.auth_token = t;
    return opt;
}

std::string RemoteScorer::model_id() const { return "remote:" + options_.model; }

std::string RemoteScorer::post(const std::string& body) const {
    GateGuard guard(gate_->sem);
    std::string last_error;
    for (int attempt = 1; attempt <= options_.max_retries; ++attempt) {
        httplib::Client client(base_url_);
        client.set_connection_timeout(options_.timeout_sec, 0);
        client.set_read_timeout(options_.timeout_sec, 0);
        httplib::Headers headers;
        if (!options_.auth_token.empty()) {
            headers.emplace("Authorization", "Bearer " + options_.auth_token);
        }
        auto res = client.Post(path_, headers, body, "application/json");
        if (res) {
            if (res->status == 200) return res->body;
            if (res->status >= 500) {
                last_error = "server status " + std::to_string(res->status);
            } else {
                throw RemoteError("remote scorer request rejected with status " +
                                      std::to_string(res->status) + ": " + res->body,
                                  attempt);
            }
        } else {
            last_error = httplib::to_string(res.error());
        }
        if (attempt < options_.max_retries) {
            std::this_thread::sleep_for(std::chrono::milliseconds(options_.backoff_ms * attempt));
        }
    }
    throw RemoteError("transport failure after " + std::to_string(options_.max_retries) +
                          " attempts: " + last_error,
                      options_.max_retries);
}

SequenceScore RemoteScorer::score_sequence(std::string_view text) const {
    SequenceScore out;
    if (text.empty()) return out;

    json request{{"model", options_.model},
                 {"prompt", std::string(text)},
                 {"echo", true},
                 {"max_tokens", 0},
                 {"logprobs", 1}};
    std::string body = post(request.dump());

    json response;
    try {
        response = json::parse(body);
    } catch (const json::exception& ex) {
        throw MalformedResponseError(std::string("remote scorer returned unparseable JSON: ") + ex.what());
    }
    try {
        const json& logprobs = response.at("choices").at(0).at("logprobs");
        const json& tokens = logprobs.at("tokens");
        const json& lps = logprobs.at("token_logprobs");
        const json& offsets = logprobs.at("text_offset");
        if (tokens.size() != lps.size() || tokens.size() != offsets.size()) {
            throw MalformedResponseError("remote scorer response arrays have mismatched lengths");
        }
        const double factor = options_.logprob_base > 0.0 ? std::log(options_.logprob_base) : 1.0;
        std::size_t expect = 0;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            TokenScore t;
            t.text = tokens[i].get<std::string>();
            t.begin = offsets[i].get<std::size_t>();
            t.end = t.begin + t.text.size();
            if (t.begin != expect) {
                throw MalformedResponseError("remote scorer tokens do not cover the text contiguously");
            }
            expect = t.end;
            // The first echoed token often arrives with a null logprob.
            t.nll = lps[i].is_null() ? 0.0 : -lps[i].get<double>() * factor;
            out.total_nll += t.nll;
            out.tokens.push_back(std::move(t));
        }
        if (expect != text.size()) {
            throw MalformedResponseError("remote scorer tokens do not cover the full text");
        }
    } catch (const json::exception& ex) {
        throw MalformedResponseError(std::string("remote scorer response shape: ") + ex.what());
    }
    return out;
}

std::string RemoteScorer::generate(std::string_view prompt, int max_new_tokens,
                                   std::string_view stop) const {
    if (max_new_tokens < 1) throw ValidationError("generation needs max_new_tokens >= 1");
    json request{{"model", options_.model},
                 {"prompt", std::string(prompt)},
                 {"echo", false},
                 {"max_tokens", max_new_tokens},
                 {"logprobs", nullptr}};
    if (!stop.empty()) request["stop"] = json::array({std::string(stop)});
    std::string body = post(request.dump());

    try {
        json response = json::parse(body);
        std::string text = response.at("choices").at(0).at("text").get<std::string>();
        if (!stop.empty()) {
            std::size_t pos = text.find(stop);
            if (pos != std::string::npos) text.resize(pos);
        }
        return text;
    } catch (const json::exception& ex) {
        throw MalformedResponseError(std::string("remote generation response shape: ") + ex.what());
    }
}

}  // namespace cone
