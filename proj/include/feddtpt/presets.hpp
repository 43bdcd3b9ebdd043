#pragma once

#include <string>
#include <vector>

#include "feddtpt/prompt.hpp"

namespace feddtpt {

/// Built-in seed prompts: three formats (concise, moderate, detailed) for each
/// of the seven bundled classification tasks, addressed as
/// "<task>_<format>", e.g. "sst2_concise". Throws ConfigError for unknown
/// names, listing the valid ones.
std::string seed_prompt_preset(const std::string& name);

/// Built-in verbalizers keyed by task name ("sst2", "rte", "qnli", "cola",
/// "wnli", "qqp", "mrpc"). Throws ConfigError for unknown names.
Verbalizer verbalizer_preset(const std::string& task);

std::vector<std::string> seed_prompt_preset_names();
std::vector<std::string> verbalizer_preset_names();

}  // namespace feddtpt
