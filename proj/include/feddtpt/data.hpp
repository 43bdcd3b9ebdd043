#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "feddtpt/errors.hpp"

namespace feddtpt {

struct Example {
    std::string id;
    std::string text;  // pair tasks arrive pre-joined with " [SEP] "
    int label;
};

struct Dataset {
    std::vector<Example> examples;
    int num_classes = 0;

    bool empty() const { return examples.empty(); }
    int size() const { return static_cast<int>(examples.size()); }
};

// Disjoint cover of a dataset's example ids, one shard per client.
struct Partition {
    std::vector<std::vector<std::string>> client_shards;

    int num_clients() const { return static_cast<int>(client_shards.size()); }
    std::string to_json() const;
};

enum class DataFormat { tsv, jsonl };

// TSV rows are `text<TAB>label` or `text1<TAB>text2<TAB>label`; JSONL objects
// carry "text" (or "text1"/"text2") and "label", with an optional "id".
Dataset load_dataset(const std::string& path, DataFormat format);
DataFormat parse_data_format(const std::string& name);

// k examples per class for train and another disjoint k per class for
// validation, both drawn with the seeded generator.
std::pair<Dataset, Dataset> kshot_sample(const Dataset& dataset, int k, std::uint64_t seed);

// Balanced auxiliary set: exactly per_class examples of every class. Callers
// keep it disjoint from client shards by excluding its ids beforehand.
Dataset build_public_dataset(const Dataset& dataset, int per_class, std::uint64_t seed);

// Per class, client proportions ~ Dirichlet(alpha * 1_K) converted to integer
// counts by largest-remainder rounding. Small alpha gives skewed shards and
// may leave some clients empty.
Partition dirichlet_partition(const Dataset& dataset, int num_clients, double alpha,
                              std::uint64_t seed);

// Seeded per-class shuffle followed by round-robin dealing; shard sizes and
// per-class counts each differ by at most one across clients.
Partition iid_partition(const Dataset& dataset, int num_clients, std::uint64_t seed);

// Dataset whose ids are not in `exclude_ids` (order preserved).
Dataset exclude_ids(const Dataset& dataset, const std::vector<std::string>& exclude);

// Materializes one client's shard in partition order.
std::vector<Example> shard_examples(const Dataset& dataset, const Partition& partition,
                                    int client);

}  // namespace feddtpt
