#include "feddtpt/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "feddtpt/util.hpp"

namespace feddtpt {

Token::Token(std::string t) : text_(std::move(t)) {
    if (text_.empty()) throw FormatError("token must be non-empty");
    for (char c : text_) {
        if (std::isspace(static_cast<unsigned char>(c)))
            throw FormatError("token must not contain whitespace: '" + text_ + "'");
    }
}

Prompt::Prompt(std::vector<Token> tokens, std::vector<int> positions)
    : tokens_(std::move(tokens)), positions_(std::move(positions)) {
    if (tokens_.empty()) throw EmptyPromptError("prompt needs at least one token");
    if (positions_.size() != tokens_.size())
        throw ShapeError("positions length must match token count");
    for (size_t i = 1; i < positions_.size(); ++i) {
        if (positions_[i] <= positions_[i - 1])
            throw FormatError("prompt positions must be strictly increasing");
    }
}

Prompt::Prompt(std::vector<Token> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty()) throw EmptyPromptError("prompt needs at least one token");
    positions_.resize(tokens_.size());
    for (size_t i = 0; i < positions_.size(); ++i) positions_[i] = static_cast<int>(i);
}

std::string Prompt::text() const {
    std::string out;
    for (size_t i = 0; i < tokens_.size(); ++i) {
        if (i > 0) out += ' ';
        out += tokens_[i].text();
    }
    return out;
}

Prompt make_prompt(const std::string& text) {
    auto words = split_whitespace(text);
    if (words.empty()) throw EmptyPromptError("prompt text is empty");
    std::vector<Token> tokens;
    tokens.reserve(words.size());
    for (auto& w : words) tokens.emplace_back(std::move(w));
    return Prompt(std::move(tokens));
}

Prompt apply_modification(const Prompt& prompt, const Modification& mod) {
    if (mod.position < 0 || mod.position >= prompt.size())
        throw PositionError("modification position " + std::to_string(mod.position) +
                            " out of range for " + std::to_string(prompt.size()) + " tokens");
    if (mod.old_token == mod.new_token)
        throw StaleModificationError("modification replaces a token with itself");
    if (!(prompt.tokens()[static_cast<size_t>(mod.position)] == mod.old_token))
        throw StaleModificationError("prompt token at position " + std::to_string(mod.position) +
                                     " does not match the modification's old token");
    std::vector<Token> tokens = prompt.tokens();
    tokens[static_cast<size_t>(mod.position)] = mod.new_token;
    return Prompt(std::move(tokens), prompt.positions());
}

namespace {

size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    size_t n = 0, pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

}  // namespace

std::string render(const Prompt& prompt, const std::string& input_text,
                   const std::string& template_text) {
    static const std::string kPromptSlot = "{prompt}";
    static const std::string kInputSlot = "{input}";
    if (count_occurrences(template_text, kPromptSlot) != 1)
        throw TemplateError("template must contain {prompt} exactly once");
    if (count_occurrences(template_text, kInputSlot) != 1)
        throw TemplateError("template must contain {input} exactly once");

    std::string out = template_text;
    out.replace(out.find(kPromptSlot), kPromptSlot.size(), prompt.text());
    out.replace(out.find(kInputSlot), kInputSlot.size(), input_text);
    return out;
}

std::string Verbalizer::normalize(std::string_view s) {
    std::string spaced;
    spaced.reserve(s.size());
    for (char c : s) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::ispunct(uc) || c == '<' || c == '>')
            spaced += ' ';
        else
            spaced += static_cast<char>(std::tolower(uc));
    }
    return join(split_whitespace(spaced), " ");
}

Verbalizer::Verbalizer(std::vector<Entry> labels) : labels_(std::move(labels)) {
    if (labels_.size() < 2) throw LabelError("verbalizer needs at least 2 classes");
    std::set<int> ids;
    std::set<std::string> forms;
    for (const auto& [class_id, surfaces] : labels_) {
        if (!ids.insert(class_id).second)
            throw LabelError("duplicate class id " + std::to_string(class_id));
        if (surfaces.empty())
            throw LabelError("class " + std::to_string(class_id) + " has no surface forms");
        for (const auto& raw : surfaces) {
            std::string norm = normalize(raw);
            if (norm.empty())
                throw LabelError("surface form '" + raw + "' normalizes to nothing");
            if (!forms.insert(norm).second)
                throw LabelError("surface form '" + raw + "' is not unique after normalization");
            normalized_.emplace_back(std::move(norm), class_id);
        }
    }
}

std::optional<int> Verbalizer::parse(const std::string& api_output) const {
    // Pad with spaces so "whole word" is a plain substring check.
    std::string padded = " " + normalize(api_output) + " ";
    size_t best_pos = std::string::npos;
    int best_class = -1;
    for (const auto& [form, class_id] : normalized_) {
        size_t pos = padded.find(" " + form + " ");
        if (pos != std::string::npos && pos < best_pos) {
            best_pos = pos;
            best_class = class_id;
        }
    }
    if (best_class < 0) return std::nullopt;
    return best_class;
}

const std::string& Verbalizer::surface(int class_id) const {
    for (const auto& [id, surfaces] : labels_) {
        if (id == class_id) return surfaces.front();
    }
    throw LabelError("unknown class id " + std::to_string(class_id));
}

std::optional<int> parse_label(const std::string& api_output, const Verbalizer& verbalizer) {
    return verbalizer.parse(api_output);
}

}  // namespace feddtpt
