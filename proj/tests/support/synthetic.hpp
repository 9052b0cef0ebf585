#pragma once

// Test-only helpers: scratch directories, dataset/template writers, the
// constructed two-domain task used by the directional experiments, and a
// scripted completions server.

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "cone/harness.hpp"

namespace testsupport {

class TempDir {
public:
    explicit TempDir(const std::string& prefix);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

void write_file(const std::string& path, const std::string& content);

/// One JSONL record from flat string fields ("id", "label", "domain" are the
/// reserved keys the loader recognizes).
std::string jsonl_record(const std::map<std::string, std::string>& fields);

/// Two-domain classification world for the directional checks.
///
/// Pattern "pos <text>" / "neg <text>" puts the label token right before the
/// test text, so under a bigram scorer the final context word steers the
/// label. The pool mixes three kinds of demonstrations:
///   - gate-enders: in-domain texts ending in "gate", whose training lines
///     make every query first-word likely after "gate" (low H(x|c), neutral
///     label bias);
///   - bog-enders: in-domain texts ending in "bog", trained so "neg" almost
///     always follows "bog" (label-misleading, higher H(x|c));
///   - domain-b: disjoint-vocabulary texts with heavy context counts and no
///     bridge to the test vocabulary (highest H(x|c), neutral labels).
/// Embedding files place either the gate-enders (plain) or the bog-enders
/// (adversarial) nearest to every test query.
struct TwoDomainTask {
    std::string dir;
    std::string pool_path;
    std::string test_path;
    std::string template_path;
    std::string corpus_path;
    std::string embeddings_plain;        // nearest neighbors are gate-enders
    std::string embeddings_adversarial;  // nearest neighbors are bog-enders
    std::vector<std::string> gate_ids;
    std::vector<std::string> bog_ids;
    std::vector<std::string> domain_b_ids;
    std::size_t test_count = 0;
};

TwoDomainTask make_two_domain_task(const std::string& dir);

/// Baseline config over the task: ngram bigram scorer trained on the task
/// corpus, three seeds, stub-free explicit embeddings.
cone::RunConfig two_domain_config(const TwoDomainTask& task, cone::Method method, int shots,
                                  bool adversarial, const std::string& out_dir);

/// In-process completions server with scripted per-token log-probabilities.
/// Echo requests tokenize the prompt into whitespace-tiled word spans and
/// assign each token the scripted logprob; generation requests return a
/// fixed completion string.
class ScriptedServer {
public:
    /// logprob(index, token_text) -> wire logprob (natural log).
    using Script = std::function<double(std::size_t, const std::string&)>;

    explicit ScriptedServer(Script script, std::string completion = "");
    ~ScriptedServer();

    std::string endpoint() const;  // http://127.0.0.1:<port>/v1/completions
    int request_count() const { return hits_.load(); }
    void set_malformed_offsets(bool on) { malformed_offsets_.store(on); }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::atomic<int> hits_{0};
    std::atomic<bool> malformed_offsets_{false};
    int port_ = 0;
    std::thread thread_;
};

/// A TCP port that was bound and released, so nothing listens on it.
int free_port();

}  // namespace testsupport
