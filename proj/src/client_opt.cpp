#include "feddtpt/client_opt.hpp"

#include <algorithm>
#include <unordered_set>

#include "feddtpt/errors.hpp"
#include "feddtpt/util.hpp"

namespace feddtpt {

double compute_accuracy(const std::vector<std::optional<int>>& predictions,
                        const std::vector<int>& labels) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw ShapeError("predictions (" + std::to_string(predictions.size()) + ") and labels (" +
                         std::to_string(labels.size()) + ") must be equal-length and non-empty");
    int hits = 0;
    for (size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i].has_value() && *predictions[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double evaluate_prompt(const Prompt& prompt, const std::vector<Example>& batch,
                       const Dataset& public_data, const PredictionBackend& prediction,
                       const std::string& template_text, const Verbalizer& verbalizer,
                       ApiCallCounts* calls) {
    std::vector<const Example*> combined;
    std::unordered_set<std::string> seen;
    for (const auto& ex : batch)
        if (seen.insert(ex.id).second) combined.push_back(&ex);
    for (const auto& ex : public_data.examples)
        if (seen.insert(ex.id).second) combined.push_back(&ex);

    std::vector<std::optional<int>> predictions;
    std::vector<int> labels;
    predictions.reserve(combined.size());
    labels.reserve(combined.size());
    for (const Example* ex : combined) {
        const std::string rendered = render(prompt, ex->text, template_text);
        if (calls) calls->prediction += 1;
        predictions.push_back(parse_label(prediction.predict(rendered), verbalizer));
        labels.push_back(ex->label);
    }
    return compute_accuracy(predictions, labels);
}

namespace {

// Iteration batches cycle through one seeded shuffle of the shard; when the
// batch size covers the shard, every iteration sees the identical full batch.
std::vector<Example> batch_for(const std::vector<Example>& shard, const std::vector<size_t>& order,
                               int batch_size, int iteration) {
    const size_t n = shard.size();
    const size_t take = std::min<size_t>(static_cast<size_t>(batch_size), n);
    std::vector<Example> out;
    out.reserve(take);
    const size_t start = (static_cast<size_t>(iteration - 1) * take) % n;
    for (size_t j = 0; j < take; ++j) out.push_back(shard[order[(start + j) % n]]);
    return out;
}

std::string batch_key(const std::vector<Example>& batch) {
    std::string key;
    for (const auto& ex : batch) {
        key += ex.id;
        key += '\x1f';
    }
    return key;
}

}  // namespace

TuneResult tune_client(const Prompt& global_prompt, const std::vector<Example>& shard,
                       const Dataset& public_data, const PredictionBackend& prediction,
                       const MlmBackend& mlm, const ClientConfig& config,
                       const std::string& template_text, const Verbalizer& verbalizer,
                       std::vector<IterationTrace>* trace) {
    if (config.max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
    if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (config.num_candidates < 1) throw ConfigError("num_candidates must be >= 1");

    TuneResult result{global_prompt, FeedbackInfo(global_prompt), {}};
    if (shard.empty() || config.max_iterations == 0) return result;

    std::vector<size_t> order(shard.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 batch_gen(derive_seed(config.seed, std::string("batch-order")));
    rng::shuffle(order, batch_gen);
    std::mt19937_64 mask_gen(derive_seed(config.seed, std::string("mask")));

    FeedbackInfo& feedback = result.feedback;
    Prompt incumbent = global_prompt;
    double incumbent_score = 0.0;
    std::string scored_on;  // batch the incumbent score was measured on

    auto score_incumbent = [&](const std::vector<Example>& batch, const std::string& key) {
        if (scored_on != key) {
            incumbent_score = evaluate_prompt(incumbent, batch, public_data, prediction,
                                              template_text, verbalizer, &result.api_calls);
            scored_on = key;
        }
        return incumbent_score;
    };

    for (int iter = 1; iter <= config.max_iterations; ++iter) {
        const std::vector<Example> batch = batch_for(shard, order, config.batch_size, iter);
        const std::string key = batch_key(batch);

        const int position =
            config.mask_schedule == MaskSchedule::round_robin
                ? (iter - 1) % incumbent.size()
                : static_cast<int>(rng::uniform_index(mask_gen, static_cast<std::uint64_t>(
                                                                    incumbent.size())));
        const Token old_token = incumbent.tokens()[static_cast<size_t>(position)];

        result.api_calls.mlm += 1;
        std::vector<Token> candidates;
        try {
            candidates = mlm.propose(incumbent, position, feedback, config.num_candidates);
        } catch (const NoCandidatesError&) {
            // No-op iteration: the incumbent's paired score is carried as this
            // iteration's accuracy and no modification is recorded.
            double acc = score_incumbent(batch, key);
            feedback.accuracies.push_back(acc);
            feedback.best_accuracy = std::max(feedback.best_accuracy, acc);
            if (trace) trace->push_back({iter, position, old_token.text(), "", false, acc});
            continue;
        }

        const Modification mod{position, old_token, candidates.front(), iter};
        const Prompt candidate = apply_modification(incumbent, mod);

        double inc_acc = score_incumbent(batch, key);
        double cand_acc = evaluate_prompt(candidate, batch, public_data, prediction, template_text,
                                          verbalizer, &result.api_calls);
        const bool accepted = cand_acc > inc_acc;
        if (accepted) {
            incumbent = candidate;
            incumbent_score = cand_acc;
            scored_on = key;
        }

        feedback.modifications.push_back(mod);
        feedback.accuracies.push_back(accepted ? cand_acc : inc_acc);
        feedback.best_accuracy = std::max(feedback.best_accuracy, feedback.accuracies.back());
        if (trace)
            trace->push_back(
                {iter, position, old_token.text(), mod.new_token.text(), accepted, cand_acc});
    }

    feedback.best_prompt = incumbent;
    result.prompt = feedback.best_prompt;
    return result;
}

}  // namespace feddtpt
