#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "feddtpt/backends.hpp"
#include "feddtpt/data.hpp"
#include "feddtpt/prompt.hpp"

namespace feddtpt {

enum class MaskSchedule { round_robin, random };

struct ClientConfig {
    int max_iterations = 50;
    int batch_size = 8;
    int num_candidates = 100;
    MaskSchedule mask_schedule = MaskSchedule::round_robin;
    std::uint64_t seed = 0;
};

struct ApiCallCounts {
    std::int64_t prediction = 0;
    std::int64_t mlm = 0;

    ApiCallCounts& operator+=(const ApiCallCounts& o) {
        prediction += o.prediction;
        mlm += o.mlm;
        return *this;
    }
    bool operator==(const ApiCallCounts&) const = default;
};

struct TuneResult {
    Prompt prompt;  // always equals feedback.best_prompt
    FeedbackInfo feedback;
    ApiCallCounts api_calls;
};

// One line of the per-client tuning trace. `new_token` is empty and
// `accepted` false when the proposer had nothing to offer; `accuracy` is what
// this iteration's attempted prompt scored.
struct IterationTrace {
    int iteration = 0;
    int position = 0;
    std::string old_token;
    std::string new_token;
    bool accepted = false;
    double accuracy = 0.0;
};

// Exact-match fraction; a missing prediction (unparsed output) never matches.
double compute_accuracy(const std::vector<std::optional<int>>& predictions,
                        const std::vector<int>& labels);

// Accuracy of `prompt` over batch ∪ public (union by example id, batch
// first). Every unique example costs exactly one prediction call; `calls`,
// when given, is incremented accordingly.
double evaluate_prompt(const Prompt& prompt, const std::vector<Example>& batch,
                       const Dataset& public_data, const PredictionBackend& prediction,
                       const std::string& template_text, const Verbalizer& verbalizer,
                       ApiCallCounts* calls = nullptr);

// Greedy token-level hill climbing. Per iteration: pick a mask position per
// the schedule, ask the proposer for candidates, evaluate the top candidate
// against the incumbent on the same batch (batches cycle through a seeded
// shuffle of the shard), and accept only strict improvement. The incumbent is
// re-scored whenever the batch it was last measured on changes, keeping every
// accept/reject comparison paired. feedback.accuracies records the score of
// the surviving prompt at each iteration, so best_accuracy = max(accuracies)
// is the best paired score the returned prompt line achieved.
TuneResult tune_client(const Prompt& global_prompt, const std::vector<Example>& shard,
                       const Dataset& public_data, const PredictionBackend& prediction,
                       const MlmBackend& mlm, const ClientConfig& config,
                       const std::string& template_text, const Verbalizer& verbalizer,
                       std::vector<IterationTrace>* trace = nullptr);

}  // namespace feddtpt
