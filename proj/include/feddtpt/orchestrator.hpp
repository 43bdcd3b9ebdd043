#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "feddtpt/aggregation.hpp"
#include "feddtpt/backends.hpp"
#include "feddtpt/client_opt.hpp"
#include "feddtpt/data.hpp"
#include "feddtpt/prompt.hpp"

namespace feddtpt {

/// How the training pool is spread across clients.
struct PartitionSpec {
    enum class Kind { iid, dirichlet };
    Kind kind = Kind::dirichlet;
    double alpha = 0.1;  // Dirichlet concentration; ignored for iid
};

/// Read-only bundle of the three services every round needs.
struct Backends {
    const PredictionBackend& prediction;
    const MlmBackend& mlm;
    const EmbeddingBackend& embedding;
};

/// Full experiment settings. The verbalizer has no default, so the config is
/// constructed around one; every other field carries its default inline.
struct ExperimentConfig {
    explicit ExperimentConfig(Verbalizer v) : verbalizer(std::move(v)) {}

    int num_clients = 10;
    double participation = 1.0;  // fraction of clients sampled per round
    int num_rounds = 5;
    int k_shot = 8;              // per-class examples for train and validation
    int public_per_class = 2;    // size of the balanced auxiliary set
    int max_workers = 4;         // concurrent client tuners
    std::uint64_t seed = 0;
    std::int64_t continuous_dim = 4096;  // embedding width for the payload comparison

    ClientConfig client_config;
    AggregationStrategy strategy = KmeansStrategy{};
    AggregationOptions aggregation;  // seed is derived per round, not taken from here
    PartitionSpec partition;

    std::string template_text = "{prompt} input: {input} answer:";
    std::string seed_prompt;
    Verbalizer verbalizer;
};

/// Throws ConfigError when a field is out of its documented domain.
void validate_config(const ExperimentConfig& config);

struct ClientComm {
    std::int64_t uploaded = 0;    // serialized prompt bytes sent to the server
    std::int64_t downloaded = 0;  // broadcast global prompt bytes received
};

/// Everything one completed round produced. result maps only contain clients
/// that finished tuning; excluded clients appear in `events` with the cause.
struct RoundState {
    explicit RoundState(Prompt initial) : global_prompt(std::move(initial)) {}

    int round = 0;  // 0 for the initial state, then 1-based
    Prompt global_prompt;
    std::map<int, TuneResult> client_results;
    std::map<int, std::vector<IterationTrace>> traces;
    std::map<int, ClientComm> comm;  // every sampled participant
    double val_accuracy = 0.0;
    bool kept_previous_prompt = false;  // aggregation had nothing to offer
    std::vector<std::string> events;
    ApiCallCounts api_calls;  // surviving clients + this round's validation
};

/// Runs one federated round on top of `previous`: samples
/// ceil(participation * num_clients) clients deterministically from
/// (seed, round), tunes them concurrently on their shards, aggregates the
/// surviving prompts, and scores the new global prompt on `validation`.
/// Clients whose backends raise are excluded with a logged cause; fewer than
/// two survivors aborts the round (RoundAbortedError). An empty aggregate
/// keeps the previous global prompt.
RoundState run_round(const RoundState& previous, const ExperimentConfig& config,
                     const Backends& backends, const std::vector<std::vector<Example>>& shards,
                     const Dataset& public_data, const Dataset& validation);

struct RoundReport {
    int round = 0;
    std::string global_prompt;
    double val_accuracy = 0.0;
    double best_so_far = 0.0;
    std::map<int, double> client_best;
    std::int64_t uploaded_bytes = 0;
    std::int64_t downloaded_bytes = 0;
    std::vector<std::string> events;
};

struct ExperimentReport {
    std::string config_echo;  // JSON text of the effective configuration
    double baseline_accuracy = 0.0;  // seed prompt on validation, before round 1
    std::vector<RoundReport> rounds;
    std::string final_prompt;
    double best_accuracy = 0.0;  // max round validation accuracy
    bool aborted = false;
    std::string abort_reason;
    ApiCallCounts total_api_calls;
    std::int64_t total_uploaded = 0;
    std::int64_t total_downloaded = 0;
    std::int64_t trainable_params = 0;            // characters across final prompt tokens
    std::int64_t continuous_equivalent_bytes = 0; // N * continuous_dim * 4
    std::vector<std::map<int, std::vector<IterationTrace>>> traces;  // per round
};

/// Full protocol: k-shot split, public set carved out of (and excluded from)
/// the client pool, partitioning, seed prompt broadcast, `num_rounds` rounds.
/// A RoundAbortedError mid-run yields a partial report with `aborted` set and
/// the rounds completed so far; everything else propagates.
ExperimentReport run_experiment(const ExperimentConfig& config, const Dataset& dataset,
                                const Backends& backends);

struct CommTotals {
    std::int64_t uploaded = 0;
    std::int64_t downloaded = 0;
    std::int64_t trainable_params = 0;  // characters across global prompt tokens
};

/// Byte totals for one round plus the discrete-parameter count of its global
/// prompt.
CommTotals comm_accounting(const RoundState& state);

/// Payload a continuous prompt of `num_tokens` embedding rows would upload:
/// num_tokens * dim * 4 bytes (float32).
std::int64_t continuous_prompt_bytes(int num_tokens, std::int64_t dim);

struct TransferResult {
    std::map<std::string, double> accuracies;  // backend name -> accuracy
    std::map<std::string, std::string> errors;  // backends that failed, with cause
};

/// Evaluates the identical prompt against every backend; per-backend errors
/// are recorded and evaluation continues with the rest.
TransferResult transfer_evaluate(const Prompt& prompt,
                                 const std::vector<const PredictionBackend*>& backends,
                                 const Dataset& validation, const std::string& template_text,
                                 const Verbalizer& verbalizer);

/// Deterministic JSON serializations.
std::string config_echo_json(const ExperimentConfig& config);
std::string experiment_report_json(const ExperimentReport& report);
std::string trace_jsonl(const std::vector<IterationTrace>& trace);

}  // namespace feddtpt
