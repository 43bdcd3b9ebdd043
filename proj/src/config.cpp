#include "feddtpt/config.hpp"

#include <charconv>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "feddtpt/errors.hpp"
#include "feddtpt/presets.hpp"
#include "feddtpt/util.hpp"

namespace feddtpt {

namespace {

struct Entry {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;
};

std::vector<Entry> parse_ini(const std::string& text, const std::string& path) {
    static const std::set<std::string> kSections = {"data", "clients", "server", "backends",
                                                    "run"};
    std::vector<Entry> entries;
    std::set<std::string> seen;
    std::string section;
    int line_no = 0;
    for (const std::string& raw : split(text, '\n')) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        std::string where = path + " line " + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!kSections.count(section))
                throw ConfigError(where + ": unknown section [" + section + "]");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
        if (section.empty())
            throw ConfigError(where + ": key outside of any [section]");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (!seen.insert(section + "." + key).second)
            throw ConfigError(where + ": duplicate key '" + key + "' in [" + section + "]");
        entries.push_back({section, key, value, line_no});
    }
    return entries;
}

int parse_int(const Entry& e) {
    int out = 0;
    auto [ptr, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), out);
    if (ec != std::errc() || ptr != e.value.data() + e.value.size())
        throw ConfigError("[" + e.section + "] " + e.key + ": '" + e.value +
                          "' is not an integer");
    return out;
}

std::uint64_t parse_u64(const Entry& e) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), out);
    if (ec != std::errc() || ptr != e.value.data() + e.value.size())
        throw ConfigError("[" + e.section + "] " + e.key + ": '" + e.value +
                          "' is not a non-negative integer");
    return out;
}

double parse_double(const Entry& e) {
    try {
        size_t consumed = 0;
        double out = std::stod(e.value, &consumed);
        if (consumed != e.value.size()) throw std::invalid_argument("trailing characters");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("[" + e.section + "] " + e.key + ": '" + e.value +
                          "' is not a number");
    }
}

bool parse_bool(const Entry& e) {
    std::string v = lowercase(e.value);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("[" + e.section + "] " + e.key + ": '" + e.value + "' is not a boolean");
}

std::string resolve_path(const std::string& value, const std::filesystem::path& base) {
    std::filesystem::path p(value);
    if (p.is_absolute()) return p.string();
    return (base / p).lexically_normal().string();
}

}  // namespace

Verbalizer parse_verbalizer(const std::string& description) {
    if (description.rfind("preset:", 0) == 0)
        return verbalizer_preset(description.substr(7));
    std::vector<Verbalizer::Entry> entries;
    for (const std::string& part : split(description, ';')) {
        std::string item = trim(part);
        if (item.empty()) continue;
        auto colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError("verbalizer entry '" + item + "' lacks 'class:surfaces'");
        Entry class_entry{"run", "verbalizer", trim(item.substr(0, colon)), 0};
        int class_id = parse_int(class_entry);
        std::vector<std::string> surfaces;
        for (const std::string& surface : split(item.substr(colon + 1), ','))
            if (!trim(surface).empty()) surfaces.push_back(trim(surface));
        if (surfaces.empty())
            throw ConfigError("verbalizer class " + std::to_string(class_id) +
                              " has no surfaces");
        entries.emplace_back(class_id, std::move(surfaces));
    }
    return Verbalizer(std::move(entries));
}

FileConfig load_config(const std::string& path) {
    std::vector<Entry> entries = parse_ini(read_file(path), path);
    std::filesystem::path base = std::filesystem::absolute(path).parent_path();

    // The verbalizer must exist before the ExperimentConfig can, so find it
    // first; everything else is dispatched through the handler table below.
    std::string verbalizer_text;
    for (const Entry& e : entries)
        if (e.section == "run" && e.key == "verbalizer") verbalizer_text = e.value;
    if (verbalizer_text.empty())
        throw ConfigError(path + ": missing required key 'verbalizer' in [run]");

    FileConfig config{ExperimentConfig(parse_verbalizer(verbalizer_text))};
    ExperimentConfig& exp = config.experiment;

    std::string strategy_name = "kmeans";
    int num_clusters = 0;
    int min_pts = 2;
    bool format_explicit = false;

    using Handler = std::function<void(const Entry&)>;
    const std::map<std::string, Handler> handlers = {
        {"data.path",
         [&](const Entry& e) { config.data_path = resolve_path(e.value, base); }},
        {"data.format", [&](const Entry& e) {
             config.data_format = parse_data_format(e.value);
             format_explicit = true;
         }},
        {"data.k_shot", [&](const Entry& e) { exp.k_shot = parse_int(e); }},
        {"data.public_per_class", [&](const Entry& e) { exp.public_per_class = parse_int(e); }},

        {"clients.count", [&](const Entry& e) { exp.num_clients = parse_int(e); }},
        {"clients.participation", [&](const Entry& e) { exp.participation = parse_double(e); }},
        {"clients.max_iterations",
         [&](const Entry& e) { exp.client_config.max_iterations = parse_int(e); }},
        {"clients.batch_size",
         [&](const Entry& e) { exp.client_config.batch_size = parse_int(e); }},
        {"clients.num_candidates",
         [&](const Entry& e) { exp.client_config.num_candidates = parse_int(e); }},
        {"clients.mask_schedule", [&](const Entry& e) {
             if (e.value == "round_robin")
                 exp.client_config.mask_schedule = MaskSchedule::round_robin;
             else if (e.value == "random")
                 exp.client_config.mask_schedule = MaskSchedule::random;
             else
                 throw ConfigError("[clients] mask_schedule: '" + e.value +
                                   "' is not round_robin or random");
         }},
        {"clients.partition", [&](const Entry& e) {
             if (e.value == "iid")
                 exp.partition.kind = PartitionSpec::Kind::iid;
             else if (e.value == "dirichlet")
                 exp.partition.kind = PartitionSpec::Kind::dirichlet;
             else
                 throw ConfigError("[clients] partition: '" + e.value +
                                   "' is not iid or dirichlet");
         }},
        {"clients.alpha", [&](const Entry& e) { exp.partition.alpha = parse_double(e); }},

        {"server.strategy", [&](const Entry& e) {
             if (e.value != "kmeans" && e.value != "adaptive")
                 throw ConfigError("[server] strategy: '" + e.value +
                                   "' is not kmeans or adaptive");
             strategy_name = e.value;
         }},
        {"server.num_clusters", [&](const Entry& e) { num_clusters = parse_int(e); }},
        {"server.min_pts", [&](const Entry& e) { min_pts = parse_int(e); }},
        {"server.selection", [&](const Entry& e) {
             if (e.value == "alpha")
                 exp.aggregation.selection = SelectionWeight::alpha;
             else if (e.value == "raw")
                 exp.aggregation.selection = SelectionWeight::raw;
             else
                 throw ConfigError("[server] selection: '" + e.value + "' is not alpha or raw");
         }},
        {"server.normalize_embeddings",
         [&](const Entry& e) { exp.aggregation.normalize_embeddings = parse_bool(e); }},
        {"server.max_prompt_tokens",
         [&](const Entry& e) { exp.aggregation.max_prompt_tokens = parse_int(e); }},

        {"backends.prediction_rules",
         [&](const Entry& e) { config.prediction_rules_path = resolve_path(e.value, base); }},
        {"backends.mlm_vocab",
         [&](const Entry& e) { config.mlm_vocab_path = resolve_path(e.value, base); }},
        {"backends.embeddings",
         [&](const Entry& e) { config.embeddings_path = resolve_path(e.value, base); }},
        {"backends.embedding_fallback", [&](const Entry& e) {
             if (e.value == "hash")
                 config.embedding_fallback = EmbeddingFallback::hash;
             else if (e.value == "error")
                 config.embedding_fallback = EmbeddingFallback::error;
             else
                 throw ConfigError("[backends] embedding_fallback: '" + e.value +
                                   "' is not hash or error");
         }},
        {"backends.prediction_url", [&](const Entry& e) { config.prediction_url = e.value; }},
        {"backends.mlm_url", [&](const Entry& e) { config.mlm_url = e.value; }},
        {"backends.model", [&](const Entry& e) { config.model = e.value; }},
        {"backends.api_key", [&](const Entry& e) { config.api_key = e.value; }},
        {"backends.timeout_ms", [&](const Entry& e) { config.timeout_ms = parse_int(e); }},
        {"backends.max_retries", [&](const Entry& e) { config.max_retries = parse_int(e); }},

        {"run.rounds", [&](const Entry& e) { exp.num_rounds = parse_int(e); }},
        {"run.seed", [&](const Entry& e) { exp.seed = parse_u64(e); }},
        {"run.max_workers", [&](const Entry& e) { exp.max_workers = parse_int(e); }},
        {"run.template", [&](const Entry& e) { exp.template_text = e.value; }},
        {"run.seed_prompt", [&](const Entry& e) {
             exp.seed_prompt = e.value.rfind("preset:", 0) == 0
                                   ? seed_prompt_preset(e.value.substr(7))
                                   : e.value;
         }},
        {"run.verbalizer", [](const Entry&) { /* consumed above */ }},
        {"run.continuous_dim",
         [&](const Entry& e) { exp.continuous_dim = parse_int(e); }},
    };

    for (const Entry& e : entries) {
        auto it = handlers.find(e.section + "." + e.key);
        if (it == handlers.end())
            throw ConfigError(path + " line " + std::to_string(e.line) + ": unknown key '" +
                              e.key + "' in [" + e.section + "]");
        it->second(e);
    }

    exp.strategy = strategy_name == "kmeans"
                       ? AggregationStrategy(KmeansStrategy{num_clusters})
                       : AggregationStrategy(AdaptiveStrategy{min_pts});

    if (config.data_path.empty())
        throw ConfigError(path + ": missing required key 'path' in [data]");
    if (!format_explicit && config.data_path.size() > 6 &&
        config.data_path.substr(config.data_path.size() - 6) == ".jsonl")
        config.data_format = DataFormat::jsonl;
    if (trim(exp.seed_prompt).empty())
        throw ConfigError(path + ": missing required key 'seed_prompt' in [run]");
    if (config.embeddings_path.empty())
        throw ConfigError(path + ": missing required key 'embeddings' in [backends]");

    validate_config(exp);
    return config;
}

}  // namespace feddtpt
