#include "feddtpt/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "feddtpt/util.hpp"

namespace feddtpt {

namespace {

constexpr const char* kPairSeparator = " [SEP] ";

int parse_class_label(const std::string& raw, int line_no) {
    try {
        size_t consumed = 0;
        int label = std::stoi(raw, &consumed);
        if (consumed != raw.size() || label < 0)
            throw LabelError("line " + std::to_string(line_no) + ": bad label '" + raw + "'");
        return label;
    } catch (const LabelError&) {
        throw;
    } catch (const std::exception&) {
        throw LabelError("line " + std::to_string(line_no) + ": bad label '" + raw + "'");
    }
}

void finalize(Dataset& ds) {
    int max_label = -1;
    std::set<int> seen;
    std::unordered_set<std::string> ids;
    for (const auto& ex : ds.examples) {
        max_label = std::max(max_label, ex.label);
        seen.insert(ex.label);
        if (!ids.insert(ex.id).second)
            throw FormatError("duplicate example id '" + ex.id + "'");
    }
    ds.num_classes = max_label + 1;
    if (ds.num_classes < 2)
        throw LabelError("dataset must contain at least 2 classes");
    for (int c = 0; c < ds.num_classes; ++c) {
        if (!seen.count(c))
            throw LabelError("labels must be contiguous integers; class " + std::to_string(c) +
                             " is missing");
    }
}

// Example indices grouped by class, in dataset order.
std::vector<std::vector<int>> by_class(const Dataset& ds) {
    std::vector<std::vector<int>> groups(static_cast<size_t>(ds.num_classes));
    for (int i = 0; i < ds.size(); ++i)
        groups[static_cast<size_t>(ds.examples[static_cast<size_t>(i)].label)].push_back(i);
    return groups;
}

}  // namespace

DataFormat parse_data_format(const std::string& name) {
    if (name == "tsv") return DataFormat::tsv;
    if (name == "jsonl") return DataFormat::jsonl;
    throw ConfigError("unknown data format '" + name + "' (expected tsv or jsonl)");
}

Dataset load_dataset(const std::string& path, DataFormat format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path);

    Dataset ds;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        Example ex;
        ex.id = "e" + std::to_string(ds.examples.size());
        if (format == DataFormat::tsv) {
            auto cols = split(line, '\t');
            if (cols.size() == 2) {
                ex.text = trim(cols[0]);
            } else if (cols.size() == 3) {
                ex.text = trim(cols[0]) + kPairSeparator + trim(cols[1]);
            } else {
                throw FormatError("line " + std::to_string(line_no) + ": expected 2 or 3 columns, got " +
                                  std::to_string(cols.size()));
            }
            ex.label = parse_class_label(trim(cols.back()), line_no);
        } else {
            nlohmann::json obj;
            try {
                obj = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
            }
            if (obj.contains("id")) ex.id = obj["id"].get<std::string>();
            if (obj.contains("text")) {
                ex.text = obj["text"].get<std::string>();
            } else if (obj.contains("text1") && obj.contains("text2")) {
                ex.text = obj["text1"].get<std::string>() + kPairSeparator +
                          obj["text2"].get<std::string>();
            } else {
                throw FormatError("line " + std::to_string(line_no) +
                                  ": object needs \"text\" or \"text1\"/\"text2\"");
            }
            if (!obj.contains("label") || !obj["label"].is_number_integer())
                throw LabelError("line " + std::to_string(line_no) + ": missing integer \"label\"");
            ex.label = obj["label"].get<int>();
            if (ex.label < 0)
                throw LabelError("line " + std::to_string(line_no) + ": negative label");
        }
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.empty()) throw FormatError("dataset is empty: " + path);
    finalize(ds);
    return ds;
}

std::pair<Dataset, Dataset> kshot_sample(const Dataset& dataset, int k, std::uint64_t seed) {
    if (k < 1) throw InsufficientDataError("k must be >= 1");
    auto groups = by_class(dataset);
    Dataset train, validation;
    train.num_classes = validation.num_classes = dataset.num_classes;
    std::vector<int> train_idx, val_idx;
    for (int c = 0; c < dataset.num_classes; ++c) {
        auto& g = groups[static_cast<size_t>(c)];
        if (static_cast<int>(g.size()) < 2 * k)
            throw InsufficientDataError("class " + std::to_string(c) + " has " +
                                        std::to_string(g.size()) + " examples, need " +
                                        std::to_string(2 * k));
        std::mt19937_64 gen(derive_seed(seed, std::uint64_t(c), std::string("kshot")));
        rng::shuffle(g, gen);
        train_idx.insert(train_idx.end(), g.begin(), g.begin() + k);
        val_idx.insert(val_idx.end(), g.begin() + k, g.begin() + 2 * k);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    for (int i : train_idx) train.examples.push_back(dataset.examples[static_cast<size_t>(i)]);
    for (int i : val_idx) validation.examples.push_back(dataset.examples[static_cast<size_t>(i)]);
    return {std::move(train), std::move(validation)};
}

Dataset build_public_dataset(const Dataset& dataset, int per_class, std::uint64_t seed) {
    if (per_class < 1) throw InsufficientDataError("per_class must be >= 1");
    auto groups = by_class(dataset);
    std::vector<int> chosen;
    for (int c = 0; c < dataset.num_classes; ++c) {
        auto& g = groups[static_cast<size_t>(c)];
        if (static_cast<int>(g.size()) < per_class)
            throw InsufficientDataError("class " + std::to_string(c) + " has " +
                                        std::to_string(g.size()) + " examples, need " +
                                        std::to_string(per_class));
        std::mt19937_64 gen(derive_seed(seed, std::uint64_t(c), std::string("public")));
        rng::shuffle(g, gen);
        chosen.insert(chosen.end(), g.begin(), g.begin() + per_class);
    }
    std::sort(chosen.begin(), chosen.end());
    Dataset out;
    out.num_classes = dataset.num_classes;
    for (int i : chosen) out.examples.push_back(dataset.examples[static_cast<size_t>(i)]);
    return out;
}

Partition dirichlet_partition(const Dataset& dataset, int num_clients, double alpha,
                              std::uint64_t seed) {
    if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (!(alpha > 0.0)) throw ConfigError("dirichlet alpha must be > 0");

    Partition part;
    part.client_shards.assign(static_cast<size_t>(num_clients), {});
    auto groups = by_class(dataset);
    for (int c = 0; c < dataset.num_classes; ++c) {
        auto& g = groups[static_cast<size_t>(c)];
        const int m = static_cast<int>(g.size());
        if (m == 0) continue;

        std::mt19937_64 gen(derive_seed(seed, std::uint64_t(c), std::string("dirichlet")));
        std::vector<double> q(static_cast<size_t>(num_clients));
        double total = 0.0;
        for (auto& v : q) {
            v = rng::gamma(gen, alpha);
            total += v;
        }
        if (total <= 0.0) {  // all draws underflowed to 0 at tiny alpha
            q.assign(q.size(), 1.0);
            total = static_cast<double>(num_clients);
        }
        for (auto& v : q) v /= total;

        // Largest-remainder rounding: floors first, then one extra example to
        // the largest fractional parts until the class is fully assigned.
        std::vector<int> counts(static_cast<size_t>(num_clients));
        std::vector<std::pair<double, int>> remainders;
        int assigned = 0;
        for (int i = 0; i < num_clients; ++i) {
            double exact = q[static_cast<size_t>(i)] * m;
            counts[static_cast<size_t>(i)] = static_cast<int>(exact);
            assigned += counts[static_cast<size_t>(i)];
            remainders.emplace_back(exact - counts[static_cast<size_t>(i)], i);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (int r = 0; r < m - assigned; ++r)
            counts[static_cast<size_t>(remainders[static_cast<size_t>(r)].second)] += 1;

        rng::shuffle(g, gen);
        int cursor = 0;
        for (int i = 0; i < num_clients; ++i) {
            for (int j = 0; j < counts[static_cast<size_t>(i)]; ++j) {
                part.client_shards[static_cast<size_t>(i)].push_back(
                    dataset.examples[static_cast<size_t>(g[static_cast<size_t>(cursor++)])].id);
            }
        }
    }
    return part;
}

Partition iid_partition(const Dataset& dataset, int num_clients, std::uint64_t seed) {
    if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
    Partition part;
    part.client_shards.assign(static_cast<size_t>(num_clients), {});
    auto groups = by_class(dataset);
    int offset = 0;  // carries across classes so total shard sizes stay balanced
    for (int c = 0; c < dataset.num_classes; ++c) {
        auto& g = groups[static_cast<size_t>(c)];
        std::mt19937_64 gen(derive_seed(seed, std::uint64_t(c), std::string("iid")));
        rng::shuffle(g, gen);
        for (size_t j = 0; j < g.size(); ++j) {
            int client = (offset + static_cast<int>(j)) % num_clients;
            part.client_shards[static_cast<size_t>(client)].push_back(
                dataset.examples[static_cast<size_t>(g[j])].id);
        }
        offset = (offset + static_cast<int>(g.size())) % num_clients;
    }
    return part;
}

Dataset exclude_ids(const Dataset& dataset, const std::vector<std::string>& exclude) {
    std::unordered_set<std::string> drop(exclude.begin(), exclude.end());
    Dataset out;
    out.num_classes = dataset.num_classes;
    for (const auto& ex : dataset.examples)
        if (!drop.count(ex.id)) out.examples.push_back(ex);
    return out;
}

std::vector<Example> shard_examples(const Dataset& dataset, const Partition& partition,
                                    int client) {
    std::unordered_map<std::string, const Example*> index;
    for (const auto& ex : dataset.examples) index[ex.id] = &ex;
    std::vector<Example> out;
    for (const auto& id : partition.client_shards.at(static_cast<size_t>(client))) {
        auto it = index.find(id);
        if (it == index.end()) throw FormatError("partition references unknown id '" + id + "'");
        out.push_back(*it->second);
    }
    return out;
}

std::string Partition::to_json() const {
    nlohmann::ordered_json j;
    for (size_t i = 0; i < client_shards.size(); ++i)
        j[std::to_string(i)] = client_shards[i];
    return j.dump(2) + "\n";
}

}  // namespace feddtpt
