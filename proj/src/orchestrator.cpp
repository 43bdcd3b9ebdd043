#include "feddtpt/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>
#include <thread>
#include <utility>
#include <variant>

#include <json.hpp>

#include "feddtpt/errors.hpp"
#include "feddtpt/util.hpp"

namespace feddtpt {

namespace {

using nlohmann::ordered_json;

std::vector<int> sample_participants(const ExperimentConfig& config, int round) {
    int k = config.num_clients;
    int take = static_cast<int>(std::ceil(config.participation * k));
    take = std::clamp(take, 1, k);
    std::vector<int> ids(static_cast<size_t>(k));
    std::iota(ids.begin(), ids.end(), 0);
    std::mt19937_64 gen(derive_seed(config.seed, "participants", round));
    rng::shuffle(ids, gen);
    ids.resize(static_cast<size_t>(take));
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::string mask_schedule_name(MaskSchedule schedule) {
    return schedule == MaskSchedule::round_robin ? "round_robin" : "random";
}

std::string selection_name(SelectionWeight selection) {
    return selection == SelectionWeight::alpha ? "alpha" : "raw";
}

std::int64_t prompt_bytes(const Prompt& prompt) {
    return static_cast<std::int64_t>(prompt.text().size());
}

std::int64_t prompt_chars(const Prompt& prompt) {
    std::int64_t total = 0;
    for (const Token& t : prompt.tokens()) total += static_cast<std::int64_t>(t.text().size());
    return total;
}

}  // namespace

void validate_config(const ExperimentConfig& config) {
    if (config.num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (!(config.participation > 0.0) || config.participation > 1.0)
        throw ConfigError("participation must be in (0, 1]");
    if (config.num_rounds < 1) throw ConfigError("num_rounds must be >= 1");
    if (config.k_shot < 1) throw ConfigError("k_shot must be >= 1");
    if (config.public_per_class < 0) throw ConfigError("public_per_class must be >= 0");
    if (config.max_workers < 1) throw ConfigError("max_workers must be >= 1");
    if (config.continuous_dim < 1) throw ConfigError("continuous_dim must be >= 1");
    if (trim(config.seed_prompt).empty()) throw ConfigError("seed_prompt must not be empty");
    if (config.client_config.max_iterations < 0)
        throw ConfigError("max_iterations must be >= 0");
    if (config.client_config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (config.client_config.num_candidates < 1)
        throw ConfigError("num_candidates must be >= 1");
    if (config.partition.kind == PartitionSpec::Kind::dirichlet &&
        !(config.partition.alpha > 0.0))
        throw ConfigError("dirichlet alpha must be > 0");
    if (const auto* kmeans = std::get_if<KmeansStrategy>(&config.strategy))
        if (kmeans->num_clusters < 0) throw ConfigError("num_clusters must be >= 0");
    if (const auto* adaptive = std::get_if<AdaptiveStrategy>(&config.strategy))
        if (adaptive->min_pts < 1) throw ConfigError("min_pts must be >= 1");
    if (config.aggregation.max_prompt_tokens < 0)
        throw ConfigError("max_prompt_tokens must be >= 0");
}

RoundState run_round(const RoundState& previous, const ExperimentConfig& config,
                     const Backends& backends, const std::vector<std::vector<Example>>& shards,
                     const Dataset& public_data, const Dataset& validation) {
    if (static_cast<int>(shards.size()) != config.num_clients)
        throw ConfigError("expected one shard per client");

    RoundState next(previous.global_prompt);
    next.round = previous.round + 1;

    auto participants = sample_participants(config, next.round);
    std::int64_t broadcast = prompt_bytes(previous.global_prompt);
    for (int client : participants) next.comm[client].downloaded = broadcast;

    struct Slot {
        std::optional<TuneResult> result;
        std::vector<IterationTrace> trace;
        std::string error;
        std::exception_ptr fatal;
    };
    std::vector<Slot> slots(participants.size());

    std::atomic<size_t> cursor{0};
    auto worker = [&] {
        for (;;) {
            size_t i = cursor.fetch_add(1);
            if (i >= participants.size()) return;
            int client = participants[i];
            ClientConfig client_config = config.client_config;
            client_config.seed = derive_seed(config.seed, "client", client, next.round);
            try {
                slots[i].result = tune_client(
                    previous.global_prompt, shards[static_cast<size_t>(client)], public_data,
                    backends.prediction, backends.mlm, client_config, config.template_text,
                    config.verbalizer, &slots[i].trace);
            } catch (const Error& e) {
                slots[i].error = "client " + std::to_string(client) + " excluded: " + e.what();
            } catch (...) {
                slots[i].fatal = std::current_exception();
            }
        }
    };

    size_t pool_size = std::min<size_t>(static_cast<size_t>(config.max_workers),
                                        participants.size());
    std::vector<std::thread> pool;
    pool.reserve(pool_size);
    for (size_t t = 0; t < pool_size; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    for (const Slot& slot : slots)
        if (slot.fatal) std::rethrow_exception(slot.fatal);

    std::vector<std::pair<int, Prompt>> uploads;
    for (size_t i = 0; i < participants.size(); ++i) {
        int client = participants[i];
        Slot& slot = slots[i];
        next.traces[client] = std::move(slot.trace);
        if (!slot.result.has_value()) {
            next.events.push_back(slot.error);
            continue;
        }
        next.comm[client].uploaded = prompt_bytes(slot.result->prompt);
        next.api_calls += slot.result->api_calls;
        uploads.emplace_back(client, slot.result->prompt);
        next.client_results.emplace(client, std::move(*slot.result));
    }

    if (uploads.size() < 2) {
        std::string causes;
        for (const std::string& event : next.events) causes += "; " + event;
        throw RoundAbortedError("round " + std::to_string(next.round) + ": only " +
                                std::to_string(uploads.size()) +
                                " clients survived, need at least 2" + causes);
    }

    AggregationOptions options = config.aggregation;
    options.seed = derive_seed(config.seed, "aggregate", next.round);
    try {
        next.global_prompt = aggregate(uploads, backends.embedding, config.strategy, options);
    } catch (const EmptyAggregateError& e) {
        next.global_prompt = previous.global_prompt;
        next.kept_previous_prompt = true;
        next.events.push_back(std::string("aggregation kept previous global prompt: ") +
                              e.what());
    }

    ApiCallCounts validation_calls;
    next.val_accuracy =
        evaluate_prompt(next.global_prompt, validation.examples, Dataset{},
                        backends.prediction, config.template_text, config.verbalizer,
                        &validation_calls);
    next.api_calls += validation_calls;
    return next;
}

ExperimentReport run_experiment(const ExperimentConfig& config, const Dataset& dataset,
                                const Backends& backends) {
    validate_config(config);

    Prompt seed_prompt = make_prompt(config.seed_prompt);
    auto [train, validation] =
        kshot_sample(dataset, config.k_shot, derive_seed(config.seed, "kshot"));

    Dataset public_data;
    public_data.num_classes = dataset.num_classes;
    if (config.public_per_class > 0)
        public_data = build_public_dataset(train, config.public_per_class,
                                           derive_seed(config.seed, "public"));

    std::vector<std::string> public_ids;
    for (const Example& example : public_data.examples) public_ids.push_back(example.id);
    Dataset pool = exclude_ids(train, public_ids);

    std::uint64_t partition_seed = derive_seed(config.seed, "partition");
    Partition partition = config.partition.kind == PartitionSpec::Kind::iid
                              ? iid_partition(pool, config.num_clients, partition_seed)
                              : dirichlet_partition(pool, config.num_clients,
                                                    config.partition.alpha, partition_seed);
    std::vector<std::vector<Example>> shards;
    shards.reserve(static_cast<size_t>(config.num_clients));
    for (int client = 0; client < config.num_clients; ++client)
        shards.push_back(shard_examples(pool, partition, client));

    ExperimentReport report;
    report.config_echo = config_echo_json(config);

    ApiCallCounts baseline_calls;
    report.baseline_accuracy =
        evaluate_prompt(seed_prompt, validation.examples, Dataset{}, backends.prediction,
                        config.template_text, config.verbalizer, &baseline_calls);
    report.total_api_calls += baseline_calls;

    RoundState state(seed_prompt);
    double best = 0.0;
    for (int round = 1; round <= config.num_rounds; ++round) {
        try {
            state = run_round(state, config, backends, shards, public_data, validation);
        } catch (const RoundAbortedError& e) {
            report.aborted = true;
            report.abort_reason = e.what();
            break;
        }

        best = std::max(best, state.val_accuracy);
        CommTotals comm = comm_accounting(state);

        RoundReport row;
        row.round = state.round;
        row.global_prompt = state.global_prompt.text();
        row.val_accuracy = state.val_accuracy;
        row.best_so_far = best;
        for (const auto& [client, result] : state.client_results)
            row.client_best[client] = result.feedback.best_accuracy;
        row.uploaded_bytes = comm.uploaded;
        row.downloaded_bytes = comm.downloaded;
        row.events = state.events;
        report.rounds.push_back(std::move(row));
        report.traces.push_back(state.traces);

        report.total_api_calls += state.api_calls;
        report.total_uploaded += comm.uploaded;
        report.total_downloaded += comm.downloaded;
    }

    report.final_prompt = state.global_prompt.text();
    report.best_accuracy = best;
    report.trainable_params = prompt_chars(state.global_prompt);
    report.continuous_equivalent_bytes =
        continuous_prompt_bytes(state.global_prompt.size(), config.continuous_dim);
    return report;
}

CommTotals comm_accounting(const RoundState& state) {
    CommTotals totals;
    for (const auto& [client, comm] : state.comm) {
        totals.uploaded += comm.uploaded;
        totals.downloaded += comm.downloaded;
    }
    totals.trainable_params = prompt_chars(state.global_prompt);
    return totals;
}

std::int64_t continuous_prompt_bytes(int num_tokens, std::int64_t dim) {
    return static_cast<std::int64_t>(num_tokens) * dim * 4;
}

TransferResult transfer_evaluate(const Prompt& prompt,
                                 const std::vector<const PredictionBackend*>& backends,
                                 const Dataset& validation, const std::string& template_text,
                                 const Verbalizer& verbalizer) {
    if (backends.empty()) throw ConfigError("transfer_evaluate needs at least one backend");
    TransferResult result;
    for (const PredictionBackend* backend : backends) {
        std::string name = backend->name();
        for (int suffix = 2; result.accuracies.count(name) || result.errors.count(name);
             ++suffix)
            name = backend->name() + "#" + std::to_string(suffix);
        try {
            result.accuracies[name] = evaluate_prompt(prompt, validation.examples, Dataset{},
                                                      *backend, template_text, verbalizer);
        } catch (const Error& e) {
            result.errors[name] = e.what();
        }
    }
    return result;
}

std::string config_echo_json(const ExperimentConfig& config) {
    ordered_json j;
    j["num_clients"] = config.num_clients;
    j["participation"] = config.participation;
    j["num_rounds"] = config.num_rounds;
    j["k_shot"] = config.k_shot;
    j["public_per_class"] = config.public_per_class;
    j["max_workers"] = config.max_workers;
    j["seed"] = config.seed;
    j["continuous_dim"] = config.continuous_dim;
    j["client"] = {
        {"max_iterations", config.client_config.max_iterations},
        {"batch_size", config.client_config.batch_size},
        {"num_candidates", config.client_config.num_candidates},
        {"mask_schedule", mask_schedule_name(config.client_config.mask_schedule)},
    };
    ordered_json server;
    if (const auto* kmeans = std::get_if<KmeansStrategy>(&config.strategy)) {
        server["strategy"] = "kmeans";
        server["num_clusters"] = kmeans->num_clusters;
    } else {
        server["strategy"] = "adaptive";
        server["min_pts"] = std::get<AdaptiveStrategy>(config.strategy).min_pts;
    }
    server["selection"] = selection_name(config.aggregation.selection);
    server["normalize_embeddings"] = config.aggregation.normalize_embeddings;
    server["max_prompt_tokens"] = config.aggregation.max_prompt_tokens;
    j["server"] = server;
    j["partition"] = {
        {"kind", config.partition.kind == PartitionSpec::Kind::iid ? "iid" : "dirichlet"},
    };
    if (config.partition.kind == PartitionSpec::Kind::dirichlet)
        j["partition"]["alpha"] = config.partition.alpha;
    j["template"] = config.template_text;
    j["seed_prompt"] = config.seed_prompt;
    ordered_json verbalizer = ordered_json::array();
    for (const auto& [class_id, surfaces] : config.verbalizer.labels())
        verbalizer.push_back({{"class", class_id}, {"surfaces", surfaces}});
    j["verbalizer"] = verbalizer;
    return j.dump(2) + "\n";
}

std::string experiment_report_json(const ExperimentReport& report) {
    ordered_json j;
    j["config"] = ordered_json::parse(report.config_echo);
    j["baseline_accuracy"] = report.baseline_accuracy;
    j["rounds"] = ordered_json::array();
    for (const RoundReport& row : report.rounds) {
        ordered_json r;
        r["round"] = row.round;
        r["global_prompt"] = row.global_prompt;
        r["val_accuracy"] = row.val_accuracy;
        r["best_so_far"] = row.best_so_far;
        ordered_json best = ordered_json::object();
        for (const auto& [client, accuracy] : row.client_best)
            best[std::to_string(client)] = accuracy;
        r["client_best"] = best;
        r["uploaded_bytes"] = row.uploaded_bytes;
        r["downloaded_bytes"] = row.downloaded_bytes;
        r["events"] = row.events;
        j["rounds"].push_back(std::move(r));
    }
    j["final_prompt"] = report.final_prompt;
    j["best_accuracy"] = report.best_accuracy;
    j["aborted"] = report.aborted;
    j["abort_reason"] = report.abort_reason;
    j["totals"] = {
        {"prediction_calls", report.total_api_calls.prediction},
        {"mlm_calls", report.total_api_calls.mlm},
        {"uploaded_bytes", report.total_uploaded},
        {"downloaded_bytes", report.total_downloaded},
        {"trainable_params", report.trainable_params},
        {"continuous_equivalent_bytes", report.continuous_equivalent_bytes},
    };
    return j.dump(2) + "\n";
}

std::string trace_jsonl(const std::vector<IterationTrace>& trace) {
    std::string out;
    for (const IterationTrace& entry : trace) {
        ordered_json j;
        j["iteration"] = entry.iteration;
        j["position"] = entry.position;
        j["old"] = entry.old_token;
        j["new"] = entry.new_token;
        j["accepted"] = entry.accepted;
        j["accuracy"] = entry.accuracy;
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace feddtpt
