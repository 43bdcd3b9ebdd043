#pragma once

#include <string>
#include <utility>

#include "feddtpt/backends.hpp"
#include "feddtpt/data.hpp"
#include "feddtpt/orchestrator.hpp"

namespace feddtpt {

/// Everything an experiment config file can express. `experiment` holds the
/// orchestrator settings; the rest points at data and backend resources.
/// Relative paths are resolved against the config file's directory.
struct FileConfig {
    explicit FileConfig(ExperimentConfig exp) : experiment(std::move(exp)) {}

    ExperimentConfig experiment;

    // [data]
    std::string data_path;
    DataFormat data_format = DataFormat::tsv;

    // [backends]
    std::string prediction_rules_path;  // mock prediction fixture (mock mode)
    std::string mlm_vocab_path;         // mock proposer vocabulary (mock mode)
    std::string embeddings_path;        // token embedding table (both modes)
    EmbeddingFallback embedding_fallback = EmbeddingFallback::hash;
    std::string prediction_url;  // chat-completion endpoint (live mode)
    std::string mlm_url;         // fill-mask endpoint (live mode)
    std::string model = "default-model";
    std::string api_key;
    int timeout_ms = 30000;
    int max_retries = 3;
};

/// Strict INI-style loader: sections [data], [clients], [server], [backends],
/// [run]; `key = value` pairs; full-line `#` comments. Unknown sections,
/// unknown keys, duplicate keys, unparseable values, and missing required
/// keys all raise ConfigError naming the offender and its line. `seed_prompt`
/// and `verbalizer` accept `preset:<name>` references.
FileConfig load_config(const std::string& path);

/// Parses a verbalizer description: entries separated by ';', each
/// `class:surface[,surface...]`, e.g. "0:<negative>;1:<positive>,good".
Verbalizer parse_verbalizer(const std::string& description);

}  // namespace feddtpt
