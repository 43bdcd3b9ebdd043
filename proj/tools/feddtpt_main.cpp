#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "feddtpt/backends.hpp"
#include "feddtpt/config.hpp"
#include "feddtpt/data.hpp"
#include "feddtpt/errors.hpp"
#include "feddtpt/http_backends.hpp"
#include "feddtpt/orchestrator.hpp"
#include "feddtpt/util.hpp"

namespace {

using namespace feddtpt;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;
constexpr int kExitBackend = 4;

std::string format_accuracy(double accuracy) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", accuracy);
    return buf;
}

DataFormat detect_format(const std::string& path, const std::string& explicit_format) {
    if (!explicit_format.empty()) return parse_data_format(explicit_format);
    if (path.size() > 6 && path.substr(path.size() - 6) == ".jsonl") return DataFormat::jsonl;
    return DataFormat::tsv;
}

// "mock:PATH" or "http:URL"; URL keeps its scheme ("http:https://..." is not
// required — "http:" is the selector, the rest is the URL).
struct BackendSpec {
    bool is_mock = false;
    std::string target;
};

BackendSpec parse_backend_spec(const std::string& spec) {
    if (spec.rfind("mock:", 0) == 0) return {true, spec.substr(5)};
    if (spec.rfind("http:", 0) == 0) {
        std::string rest = spec.substr(5);
        // `http://host/...` means the selector and the scheme collapsed.
        if (rest.rfind("//", 0) == 0) return {false, "http:" + rest};
        return {false, rest};
    }
    throw ConfigError("backend spec '" + spec + "' must start with mock: or http:");
}

int run_command(const std::string& config_path, const std::string& out_dir, bool mock,
                bool live) {
    if (mock == live) {
        std::cerr << "error: exactly one of --mock or --live is required\n";
        return kExitConfig;
    }

    FileConfig config = [&] { return load_config(config_path); }();

    std::unique_ptr<PredictionBackend> prediction;
    std::unique_ptr<MlmBackend> mlm;
    if (mock) {
        if (config.prediction_rules_path.empty())
            throw ConfigError("--mock requires 'prediction_rules' in [backends]");
        if (config.mlm_vocab_path.empty())
            throw ConfigError("--mock requires 'mlm_vocab' in [backends]");
        prediction = std::make_unique<MockPredictionBackend>(
            load_mock_rules(config.prediction_rules_path),
            derive_seed(config.experiment.seed, "prediction-backend"));
        mlm = std::make_unique<MockMlmBackend>(
            load_vocabulary(config.mlm_vocab_path),
            derive_seed(config.experiment.seed, "mlm-backend"));
    } else {
        if (config.prediction_url.empty() || config.mlm_url.empty())
            throw ConfigError("--live requires 'prediction_url' and 'mlm_url' in [backends]");
        if (resolve_api_key(config.api_key).empty())
            throw ConfigError(
                "--live requires an API key: set FEDDTPT_API_KEY or 'api_key' in [backends]");
        HttpOptions options;
        options.api_key = config.api_key;
        options.model_name = config.model;
        options.timeout_ms = config.timeout_ms;
        options.max_retries = config.max_retries;
        options.endpoint_url = config.prediction_url;
        prediction = http_prediction_backend(options);
        options.endpoint_url = config.mlm_url;
        mlm = http_mlm_backend(options);
    }
    TableEmbeddingBackend embedder(config.embeddings_path, config.embedding_fallback);

    Dataset dataset = load_dataset(config.data_path, config.data_format);
    ExperimentReport report =
        run_experiment(config.experiment, dataset, {*prediction, *mlm, embedder});

    std::filesystem::path out(out_dir);
    write_file_atomic((out / "report.json").string(), experiment_report_json(report));
    write_file_atomic((out / "final_prompt.txt").string(), report.final_prompt + "\n");
    for (size_t round = 0; round < report.traces.size(); ++round)
        for (const auto& [client, trace] : report.traces[round])
            write_file_atomic((out / "traces" /
                               ("round" + std::to_string(round + 1) + "_client" +
                                std::to_string(client) + ".jsonl"))
                                  .string(),
                              trace_jsonl(trace));

    if (report.aborted) {
        std::cerr << "error: " << report.abort_reason << "\n";
        return kExitAborted;
    }
    std::cout << "final prompt: " << report.final_prompt << "\n"
              << "best validation accuracy: " << format_accuracy(report.best_accuracy) << "\n"
              << "report: " << (out / "report.json").string() << "\n";
    return kExitOk;
}

int partition_command(const std::string& data_path, const std::string& format, int clients,
                      double alpha, bool iid, bool alpha_set, std::uint64_t seed,
                      const std::string& out_path) {
    if (iid == alpha_set) {
        std::cerr << "error: exactly one of --alpha or --iid is required\n";
        return kExitConfig;
    }
    if (clients < 1) {
        std::cerr << "error: --clients must be >= 1\n";
        return kExitConfig;
    }
    if (alpha_set && !(alpha > 0.0)) {
        std::cerr << "error: --alpha must be > 0\n";
        return kExitConfig;
    }

    Dataset dataset = load_dataset(data_path, detect_format(data_path, format));
    Partition partition = iid ? iid_partition(dataset, clients, seed)
                              : dirichlet_partition(dataset, clients, alpha, seed);
    write_file_atomic(out_path, partition.to_json());

    std::map<std::string, int> label_of;
    for (const Example& example : dataset.examples) label_of[example.id] = example.label;

    std::cout << "client";
    for (int c = 0; c < dataset.num_classes; ++c) std::cout << "\tclass" << c;
    std::cout << "\ttotal\n";
    for (int client = 0; client < partition.num_clients(); ++client) {
        std::vector<int> counts(static_cast<size_t>(dataset.num_classes), 0);
        for (const std::string& id : partition.client_shards[static_cast<size_t>(client)])
            ++counts[static_cast<size_t>(label_of.at(id))];
        std::cout << client;
        int total = 0;
        for (int count : counts) {
            std::cout << '\t' << count;
            total += count;
        }
        std::cout << '\t' << total << "\n";
    }
    return kExitOk;
}

AggregationStrategy parse_strategy(const std::string& text) {
    std::string name = text;
    std::string arg;
    auto colon = text.find(':');
    if (colon != std::string::npos) {
        name = text.substr(0, colon);
        arg = text.substr(colon + 1);
    }
    auto parse_arg = [&](int fallback) {
        if (arg.empty()) return fallback;
        try {
            size_t consumed = 0;
            int value = std::stoi(arg, &consumed);
            if (consumed != arg.size()) throw std::invalid_argument("trailing");
            return value;
        } catch (const std::exception&) {
            throw ConfigError("strategy argument '" + arg + "' is not an integer");
        }
    };
    if (name == "kmeans") return KmeansStrategy{parse_arg(0)};
    if (name == "adaptive") return AdaptiveStrategy{parse_arg(2)};
    throw ConfigError("unknown strategy '" + text + "'; use kmeans:N or adaptive:M");
}

int aggregate_command(const std::string& prompts_path, const std::string& strategy_text,
                      const std::string& embeddings_path, const std::string& fallback,
                      const std::string& out_dir) {
    AggregationStrategy strategy = parse_strategy(strategy_text);
    EmbeddingFallback embedding_fallback = EmbeddingFallback::hash;
    if (fallback == "error")
        embedding_fallback = EmbeddingFallback::error;
    else if (fallback != "hash")
        throw ConfigError("--fallback must be hash or error");

    std::vector<std::pair<int, Prompt>> prompts;
    int line_no = 0;
    for (const std::string& raw : split(read_file(prompts_path), '\n')) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto space = line.find_first_of(" \t");
        std::string where = prompts_path + " line " + std::to_string(line_no);
        if (space == std::string::npos)
            throw ConfigError(where + ": expected 'client_id prompt tokens...'");
        int client = 0;
        try {
            size_t consumed = 0;
            client = std::stoi(line.substr(0, space), &consumed);
            if (consumed != space) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError(where + ": client id '" + line.substr(0, space) +
                              "' is not an integer");
        }
        prompts.emplace_back(client, make_prompt(line.substr(space + 1)));
    }
    if (prompts.size() < 2)
        throw SingleClientError("aggregation needs at least 2 client prompts, got " +
                                std::to_string(prompts.size()));

    TableEmbeddingBackend embedder(embeddings_path, embedding_fallback);
    AggregationOutcome outcome = aggregate_detailed(prompts, embedder, strategy);

    std::filesystem::path out(out_dir);
    write_file_atomic((out / "aggregate_report.json").string(),
                      aggregation_report_json(outcome));
    write_file_atomic((out / "global_prompt.txt").string(),
                      outcome.global_prompt.text() + "\n");
    std::cout << outcome.global_prompt.text() << "\n";
    return kExitOk;
}

int evaluate_command(const std::string& prompt_text, const std::string& prompt_file,
                     const std::string& data_path, const std::string& format,
                     const std::vector<std::string>& backend_specs,
                     const std::string& verbalizer_text, const std::string& template_text,
                     const std::string& model, int timeout_ms, int max_retries) {
    if (prompt_text.empty() == prompt_file.empty()) {
        std::cerr << "error: exactly one of --prompt or --prompt-file is required\n";
        return kExitConfig;
    }
    Prompt prompt = make_prompt(prompt_text.empty() ? trim(read_file(prompt_file))
                                                    : prompt_text);
    Dataset dataset = load_dataset(data_path, detect_format(data_path, format));

    std::vector<std::unique_ptr<PredictionBackend>> backends;
    std::string derived_verbalizer;
    for (const std::string& spec_text : backend_specs) {
        BackendSpec spec = parse_backend_spec(spec_text);
        if (spec.is_mock) {
            MockRules rules = load_mock_rules(spec.target);
            if (derived_verbalizer.empty()) {
                for (size_t c = 0; c < rules.surfaces.size(); ++c) {
                    if (c > 0) derived_verbalizer += ';';
                    derived_verbalizer += std::to_string(c) + ":" + rules.surfaces[c];
                }
            }
            backends.push_back(std::make_unique<MockPredictionBackend>(std::move(rules), 0));
        } else {
            HttpOptions options;
            options.endpoint_url = spec.target;
            options.model_name = model;
            options.timeout_ms = timeout_ms;
            options.max_retries = max_retries;
            backends.push_back(http_prediction_backend(options));
        }
    }

    std::string verbalizer_source = !verbalizer_text.empty() ? verbalizer_text
                                                             : derived_verbalizer;
    if (verbalizer_source.empty())
        throw ConfigError("--verbalizer is required when no mock backend supplies surfaces");
    Verbalizer verbalizer = parse_verbalizer(verbalizer_source);

    int failures = 0;
    for (const auto& backend : backends) {
        try {
            double accuracy = evaluate_prompt(prompt, dataset.examples, Dataset{}, *backend,
                                              template_text, verbalizer);
            if (backends.size() == 1)
                std::cout << format_accuracy(accuracy) << "\n";
            else
                std::cout << backend->name() << "\t" << format_accuracy(accuracy) << "\n";
        } catch (const BackendUnavailableError& e) {
            std::cerr << "error: " << backend->name() << ": " << e.what() << "\n";
            ++failures;
        } catch (const BackendRejectedError& e) {
            std::cerr << "error: " << backend->name() << ": " << e.what() << "\n";
            ++failures;
        } catch (const ProtocolError& e) {
            std::cerr << "error: " << backend->name() << ": " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? kExitOk : kExitBackend;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated black-box discrete prompt tuning"};
    app.require_subcommand(1);

    // run
    std::string run_config, run_out = "out";
    bool run_mock = false, run_live = false;
    auto* run = app.add_subcommand("run", "Run a federated tuning experiment");
    run->add_option("--config", run_config, "Experiment config file")->required();
    run->add_option("--out", run_out, "Output directory");
    run->add_flag("--mock", run_mock, "Use the mock backends from [backends]");
    run->add_flag("--live", run_live, "Use the HTTP backends from [backends]");

    // partition
    std::string part_data, part_format, part_out = "partition.json";
    int part_clients = 10;
    double part_alpha = 0.0;
    bool part_iid = false;
    std::uint64_t part_seed = 0;
    auto* partition = app.add_subcommand("partition", "Partition a dataset across clients");
    partition->add_option("--data", part_data, "Dataset file")->required();
    partition->add_option("--format", part_format, "tsv or jsonl (default: by extension)");
    partition->add_option("--clients", part_clients, "Number of clients")->required();
    auto* alpha_opt =
        partition->add_option("--alpha", part_alpha, "Dirichlet concentration (> 0)");
    partition->add_flag("--iid", part_iid, "Balanced round-robin partition");
    partition->add_option("--seed", part_seed, "Partition seed");
    partition->add_option("--out", part_out, "Partition JSON output path");

    // aggregate
    std::string agg_prompts, agg_strategy = "kmeans:0", agg_embeddings, agg_out = ".";
    std::string agg_fallback = "hash";
    auto* aggregate = app.add_subcommand("aggregate", "Aggregate client prompts once");
    aggregate->add_option("--prompts", agg_prompts, "client-id-prefixed prompt lines")
        ->required();
    aggregate->add_option("--strategy", agg_strategy, "kmeans:N or adaptive:M");
    aggregate->add_option("--embeddings", agg_embeddings, "Token embedding table")->required();
    aggregate->add_option("--fallback", agg_fallback, "Unknown-token policy: hash or error");
    aggregate->add_option("--out", agg_out, "Output directory");

    // evaluate
    std::string eval_prompt, eval_prompt_file, eval_data, eval_format, eval_verbalizer;
    std::string eval_template = "{prompt} input: {input} answer:";
    std::string eval_model = "default-model";
    int eval_timeout = 30000, eval_retries = 3;
    std::vector<std::string> eval_backends;
    auto* evaluate = app.add_subcommand("evaluate", "Score a prompt against backends");
    evaluate->add_option("--prompt", eval_prompt, "Prompt text");
    evaluate->add_option("--prompt-file", eval_prompt_file, "File holding the prompt text");
    evaluate->add_option("--data", eval_data, "Dataset file")->required();
    evaluate->add_option("--format", eval_format, "tsv or jsonl (default: by extension)");
    evaluate->add_option("--backend", eval_backends, "mock:FIXTURE or http:URL (repeatable)")
        ->required();
    evaluate->add_option("--verbalizer", eval_verbalizer,
                         "class:surface[,surface];... (default: from first mock fixture)");
    evaluate->add_option("--template", eval_template, "Render template");
    evaluate->add_option("--model", eval_model, "Model name for http backends");
    evaluate->add_option("--timeout-ms", eval_timeout, "HTTP timeout");
    evaluate->add_option("--max-retries", eval_retries, "HTTP retry attempts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (run->parsed()) return run_command(run_config, run_out, run_mock, run_live);
        if (partition->parsed())
            return partition_command(part_data, part_format, part_clients, part_alpha,
                                     part_iid, alpha_opt->count() > 0, part_seed, part_out);
        if (aggregate->parsed())
            return aggregate_command(agg_prompts, agg_strategy, agg_embeddings, agg_fallback,
                                     agg_out);
        if (evaluate->parsed())
            return evaluate_command(eval_prompt, eval_prompt_file, eval_data, eval_format,
                                    eval_backends, eval_verbalizer, eval_template, eval_model,
                                    eval_timeout, eval_retries);
    } catch (const BackendUnavailableError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const RoundAbortedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAborted;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
