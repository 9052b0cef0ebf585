#pragma once

#include <string>

#include "cone/scoring.hpp"

namespace cone {

/// Completions-with-logprobs client configuration. The endpoint is a full
/// URL; when it carries no path, /v1/completions is used. CONE_ENDPOINT and
/// CONE_API_TOKEN seed the defaults.
struct RemoteOptions {
    std::string endpoint;
    std::string model = "default";
    std::string auth_token;
    /// Base of the wire log-probabilities; 0 means natural log (nats).
    double logprob_base = 0.0;
    int max_retries = 3;
    int backoff_ms = 100;
    int timeout_sec = 60;
    int max_inflight = 4;
};

/// Scores texts against a completions endpoint: POST {model, prompt,
/// echo: true, max_tokens: 0, logprobs: 1}, expecting per-token texts,
/// text offsets and log-probabilities in the response. Token spans must
/// tile the prompt exactly or the response is rejected. Transport failures
/// are retried with linear backoff up to max_retries attempts. Generation
/// uses the same endpoint with max_tokens > 0 and echo off.
class RemoteScorer : public Scorer {
public:
    explicit RemoteScorer(RemoteOptions options);
    ~RemoteScorer() override;

    std::string model_id() const override;
    SequenceScore score_sequence(std::string_view text) const override;
    bool supports_generation() const override { return true; }
    std::string generate(std::string_view prompt, int max_new_tokens,
                         std::string_view stop) const override;

    static RemoteOptions options_from_env();

private:
    struct InflightGate;
    std::string post(const std::string& body) const;

    RemoteOptions options_;
    std::string base_url_;
    std::string path_;
    std::unique_ptr<InflightGate> gate_;
};

}  // namespace cone
