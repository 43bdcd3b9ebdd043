#include "feddtpt/backends.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_set>

#include <json.hpp>

#include "feddtpt/errors.hpp"
#include "feddtpt/util.hpp"

namespace feddtpt {

// --- Mock prediction ---------------------------------------------------------

MockRules load_mock_rules(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("mock rules " + path + ": " + e.what());
    }
    try {
        MockRules rules;
        rules.name = j.at("name").get<std::string>();
        rules.surfaces = j.at("surfaces").get<std::vector<std::string>>();
        rules.good_tokens = j.at("good_tokens").get<std::vector<std::string>>();
        for (const auto& e : j.at("examples")) {
            MockExampleRule r;
            r.text = e.at("text").get<std::string>();
            r.label = e.at("label").get<int>();
            r.difficulty = e.value("difficulty", 0);
            rules.examples.push_back(std::move(r));
        }
        if (rules.surfaces.size() < 2)
            throw FormatError("mock rules " + path + ": need at least 2 class surfaces");
        for (const auto& r : rules.examples) {
            if (r.label < 0 || r.label >= static_cast<int>(rules.surfaces.size()))
                throw FormatError("mock rules " + path + ": label " + std::to_string(r.label) +
                                  " out of range");
            if (r.difficulty < 0)
                throw FormatError("mock rules " + path + ": negative difficulty");
        }
        return rules;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("mock rules " + path + ": " + e.what());
    }
}

std::vector<Token> load_vocabulary(const std::string& path) {
    std::vector<Token> vocabulary;
    int line_no = 0;
    for (const std::string& raw : split(read_file(path), '\n')) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto words = split_whitespace(line);
        if (words.size() != 1)
            throw FormatError("vocabulary " + path + " line " + std::to_string(line_no) +
                              ": expected one token, got " + std::to_string(words.size()));
        vocabulary.emplace_back(words[0]);
    }
    if (vocabulary.empty()) throw FormatError("vocabulary " + path + " is empty");
    return vocabulary;
}

MockPredictionBackend::MockPredictionBackend(MockRules rules, std::uint64_t seed)
    : rules_(std::move(rules)), seed_(seed) {}

std::string MockPredictionBackend::predict(const std::string& rendered_text) const {
    // Identify the example embedded in the rendered text: longest rule text
    // contained in it, earliest rule on ties.
    const MockExampleRule* match = nullptr;
    for (const auto& r : rules_.examples) {
        if (rendered_text.find(r.text) == std::string::npos) continue;
        if (match == nullptr || r.text.size() > match->text.size()) match = &r;
    }
    if (match == nullptr) return "unknown";

    // Distinct good tokens present as whitespace-delimited tokens.
    std::unordered_set<std::string> present;
    for (const auto& tok : split_whitespace(rendered_text)) present.insert(tok);
    int hits = 0;
    for (const auto& good : rules_.good_tokens)
        if (present.count(good)) ++hits;

    const int classes = static_cast<int>(rules_.surfaces.size());
    if (hits >= match->difficulty) return rules_.surfaces[static_cast<size_t>(match->label)];
    return rules_.surfaces[static_cast<size_t>((match->label + 1) % classes)];
}

// --- Mock MLM ----------------------------------------------------------------

MockMlmBackend::MockMlmBackend(std::vector<Token> vocabulary, std::uint64_t seed)
    : vocabulary_(std::move(vocabulary)), seed_(seed) {
    if (vocabulary_.empty()) throw ConfigError("mock MLM vocabulary must be non-empty");
    for (size_t i = 0; i < vocabulary_.size(); ++i)
        index_.emplace(vocabulary_[i].text(), static_cast<int>(i));
}

std::vector<Token> MockMlmBackend::propose(const Prompt& prompt, int mask_position,
                                           const FeedbackInfo& feedback,
                                           int num_candidates) const {
    if (mask_position < 0 || mask_position >= prompt.size())
        throw PositionError("mask position " + std::to_string(mask_position) +
                            " out of range for prompt of " + std::to_string(prompt.size()));
    if (num_candidates < 1) throw ConfigError("num_candidates must be >= 1");

    const int n = static_cast<int>(vocabulary_.size());
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::mt19937_64 gen(derive_seed(seed_, prompt.text(), std::uint64_t(mask_position),
                                    std::uint64_t(feedback.accuracies.size())));
    rng::shuffle(order, gen);

    // When the last modification was accepted (its token is still in place),
    // promote the vocabulary neighborhood of that token: nearest indices
    // first, lower index on distance ties.
    if (!feedback.modifications.empty()) {
        const Modification& last = feedback.modifications.back();
        if (last.position < prompt.size() &&
            prompt.tokens()[static_cast<size_t>(last.position)] == last.new_token) {
            auto it = index_.find(last.new_token.text());
            if (it != index_.end()) {
                const int center = it->second;
                std::vector<int> front;
                for (int d = 0; d <= 2; ++d) {
                    if (center - d >= 0) front.push_back(center - d);
                    if (d > 0 && center + d < n) front.push_back(center + d);
                }
                std::vector<int> rest;
                std::unordered_set<int> in_front(front.begin(), front.end());
                for (int idx : order)
                    if (!in_front.count(idx)) rest.push_back(idx);
                order = std::move(front);
                order.insert(order.end(), rest.begin(), rest.end());
            }
        }
    }

    const Token& current = prompt.tokens()[static_cast<size_t>(mask_position)];
    std::vector<Token> out;
    for (int idx : order) {
        const Token& t = vocabulary_[static_cast<size_t>(idx)];
        if (t == current) continue;
        out.push_back(t);
        if (static_cast<int>(out.size()) == num_candidates) break;
    }
    if (out.empty())
        throw NoCandidatesError("vocabulary holds no token different from '" + current.text() +
                                "'");
    return out;
}

// --- Table embedder ----------------------------------------------------------

TableEmbeddingBackend::TableEmbeddingBackend(const std::string& path, EmbeddingFallback fallback)
    : fallback_(fallback) {
    const std::string content = read_file(path);
    int line_no = 0;
    for (const auto& raw : split(content, '\n')) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_whitespace(line);
        if (fields.size() < 3)
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": expected `token v1 ... vd` with d >= 2");
        kernels::Point v;
        v.reserve(fields.size() - 1);
        for (size_t i = 1; i < fields.size(); ++i) {
            try {
                size_t used = 0;
                v.push_back(std::stod(fields[i], &used));
                if (used != fields[i].size()) throw std::invalid_argument(fields[i]);
            } catch (const std::exception&) {
                throw FormatError(path + ":" + std::to_string(line_no) + ": bad number '" +
                                  fields[i] + "'");
            }
            if (!std::isfinite(v.back()))
                throw FormatError(path + ":" + std::to_string(line_no) + ": non-finite entry");
        }
        if (dimension_ == 0) {
            dimension_ = static_cast<int>(v.size());
        } else if (static_cast<int>(v.size()) != dimension_) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": dimension " +
                              std::to_string(v.size()) + " != " + std::to_string(dimension_));
        }
        if (!table_.emplace(fields[0], std::move(v)).second)
            throw FormatError(path + ":" + std::to_string(line_no) + ": duplicate token '" +
                              fields[0] + "'");
    }
    if (table_.empty()) throw FormatError(path + ": no embedding rows");
}

kernels::Point TableEmbeddingBackend::embed(const Token& token) const {
    auto it = table_.find(token.text());
    if (it != table_.end()) return it->second;
    if (fallback_ == EmbeddingFallback::error)
        throw UnknownTokenError("token '" + token.text() + "' has no embedding");

    // Seeded unit vector: deterministic per token text, never the zero vector.
    std::mt19937_64 gen(derive_seed(fnv1a(std::string_view("embedding-fallback")), token.text()));
    kernels::Point v(static_cast<size_t>(dimension_));
    double norm2 = 0.0;
    for (auto& x : v) {
        x = rng::normal(gen);
        norm2 += x * x;
    }
    if (norm2 <= 0.0) {
        v.assign(v.size(), 0.0);
        v[0] = 1.0;
        norm2 = 1.0;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
    return v;
}

}  // namespace feddtpt
