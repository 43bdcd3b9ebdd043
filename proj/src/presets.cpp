#include "feddtpt/presets.hpp"

#include <array>
#include <utility>

#include "feddtpt/errors.hpp"

namespace feddtpt {

namespace {

struct SeedPreset {
    const char* name;
    const char* text;
};

constexpr std::array kSeedPresets{
    SeedPreset{"sst2_concise", "judge the sentiment."},
    SeedPreset{"sst2_moderate", "judge the sentiment, <negative> or <positive>."},
    SeedPreset{"sst2_detailed",
               "Please judge the sentiment of the User's words, your answer should be "
               "<negative> or <positive>."},
    SeedPreset{"rte_concise", "Does sentence1 entail sentence2?"},
    SeedPreset{"rte_moderate",
               "Evaluate the relationship between these sentences. Reply with either "
               "<entailment> or <not_entailment>."},
    SeedPreset{"rte_detailed",
               "Consider the logical connection between these two statements. Does the "
               "information presented in the first statement lead to the conclusion of the "
               "second statement? If so, answer <entailment>. If not, respond with "
               "<not_entailment>."},
    SeedPreset{"qnli_concise", "Does the sentence entail the question?"},
    SeedPreset{"qnli_moderate",
               "Can the information in the sentence provide an answer to the question? "
               "Respond with <entailment> or <not_entailment>."},
    SeedPreset{"qnli_detailed",
               "Please analyze the relationship between the question and the sentence. Does "
               "the content of the sentence provide a valid answer to the question posed? If "
               "yes, respond with <entailment>. If not, respond with <not_entailment>."},
    SeedPreset{"cola_concise", "Is the sentence grammatically acceptable?"},
    SeedPreset{"cola_moderate",
               "Evaluate the grammatical correctness of the following sentence. Respond with "
               "<acceptable> if it is grammatically correct, otherwise respond with "
               "<unacceptable>."},
    SeedPreset{"cola_detailed",
               "Please analyze the following sentence for grammatical acceptability. If the "
               "sentence is grammatically well-formed and makes sense, answer <acceptable>. "
               "If the sentence is not grammatically correct or does not make sense, respond "
               "with <unacceptable>."},
    SeedPreset{"wnli_concise", "Does the first sentence entail the second?"},
    SeedPreset{"wnli_moderate",
               "Read the two sentences and determine whether the second sentence logically "
               "follows from the first. Respond with <entailment> or <not_entailment>."},
    SeedPreset{"wnli_detailed",
               "Analyze the relationship between the two sentences provided. Does the "
               "meaning of the first sentence lead to the meaning of the second sentence? If "
               "so, respond with <entailment>. If not, respond with <not_entailment>."},
    SeedPreset{"qqp_concise", "Are these two questions semantically the same?"},
    SeedPreset{"qqp_moderate",
               "Compare the two questions and decide if they are asking about the same thing "
               "in different words. Answer with <duplicate> if they are, otherwise respond "
               "with <not_duplicate>."},
    SeedPreset{"qqp_detailed",
               "Evaluate the meaning of the following two questions. If both questions "
               "essentially ask the same thing but are worded differently, reply with "
               "<duplicate>. If they ask different things, reply with <not_duplicate>."},
    SeedPreset{"mrpc_concise", "Are the two sentences paraphrases of each other?"},
    SeedPreset{"mrpc_moderate",
               "Read the two sentences. Do they convey the same meaning in different words? "
               "Respond with <paraphrase> or <not_paraphrase>."},
    SeedPreset{"mrpc_detailed",
               "Please analyze the following two sentences and determine their semantic "
               "similarity. If the sentences have the same meaning but are worded "
               "differently, answer with <paraphrase>. If they differ in meaning, respond "
               "with <not_paraphrase>."},
};

struct VerbalizerPreset {
    const char* name;
    const char* negative;  // class 0 surface
    const char* positive;  // class 1 surface
};

constexpr std::array kVerbalizerPresets{
    VerbalizerPreset{"sst2", "<negative>", "<positive>"},
    VerbalizerPreset{"rte", "<not_entailment>", "<entailment>"},
    VerbalizerPreset{"qnli", "<not_entailment>", "<entailment>"},
    VerbalizerPreset{"cola", "<unacceptable>", "<acceptable>"},
    VerbalizerPreset{"wnli", "<not_entailment>", "<entailment>"},
    VerbalizerPreset{"qqp", "<not_duplicate>", "<duplicate>"},
    VerbalizerPreset{"mrpc", "<not_paraphrase>", "<paraphrase>"},
};

std::string joined_names(const std::vector<std::string>& names) {
    std::string out;
    for (const std::string& name : names) {
        if (!out.empty()) out += ", ";
        out += name;
    }
    return out;
}

}  // namespace

std::string seed_prompt_preset(const std::string& name) {
    for (const SeedPreset& preset : kSeedPresets)
        if (name == preset.name) return preset.text;
    throw ConfigError("unknown seed prompt preset '" + name +
                      "'; available: " + joined_names(seed_prompt_preset_names()));
}

Verbalizer verbalizer_preset(const std::string& task) {
    for (const VerbalizerPreset& preset : kVerbalizerPresets)
        if (task == preset.name)
            return Verbalizer({{0, {preset.negative}}, {1, {preset.positive}}});
    throw ConfigError("unknown verbalizer preset '" + task +
                      "'; available: " + joined_names(verbalizer_preset_names()));
}

std::vector<std::string> seed_prompt_preset_names() {
    std::vector<std::string> names;
    for (const SeedPreset& preset : kSeedPresets) names.emplace_back(preset.name);
    return names;
}

std::vector<std::string> verbalizer_preset_names() {
    std::vector<std::string> names;
    for (const VerbalizerPreset& preset : kVerbalizerPresets) names.emplace_back(preset.name);
    return names;
}

}  // namespace feddtpt
