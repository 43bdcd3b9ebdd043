#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "feddtpt/errors.hpp"

namespace feddtpt {

// One discrete prompt token: non-empty, no internal or surrounding whitespace.
struct Token {
    explicit Token(std::string t);
    const std::string& text() const { return text_; }
    bool operator==(const Token&) const = default;

  private:
    std::string text_;
};

// Ordered token sequence plus, for every token, the position it originally
// occupied. A freshly built prompt has positions 0..N-1; aggregation keeps
// original positions around so the global prompt can be reassembled in order.
class Prompt {
  public:
    Prompt(std::vector<Token> tokens, std::vector<int> positions);
    explicit Prompt(std::vector<Token> tokens);  // positions = 0..N-1

    const std::vector<Token>& tokens() const { return tokens_; }
    const std::vector<int>& positions() const { return positions_; }
    int size() const { return static_cast<int>(tokens_.size()); }

    // Tokens joined by single spaces; the wire serialization of a prompt.
    std::string text() const;

    bool operator==(const Prompt&) const = default;

  private:
    std::vector<Token> tokens_;
    std::vector<int> positions_;
};

struct Modification {
    int position;
    Token old_token;
    Token new_token;
    int iteration;  // 1-based tuning iteration that produced it
};

class Verbalizer;

// Tuning history for one client: every attempted modification, the accuracy
// measured at each completed iteration, and the best state seen so far.
struct FeedbackInfo {
    explicit FeedbackInfo(Prompt initial)
        : best_accuracy(0.0), best_prompt(std::move(initial)) {}

    std::vector<Modification> modifications;
    std::vector<double> accuracies;  // one entry per completed iteration
    double best_accuracy;            // max(accuracies) once non-empty
    Prompt best_prompt;
};

// Maps class ids to the surface forms a prediction may use for them.
class Verbalizer {
  public:
    using Entry = std::pair<int, std::vector<std::string>>;

    explicit Verbalizer(std::vector<Entry> labels);

    // Lowercase, replace punctuation and angle brackets with spaces, collapse
    // whitespace. Both surface forms and API output go through this.
    static std::string normalize(std::string_view s);

    // Earliest whole-word match in the normalized output, or nullopt.
    std::optional<int> parse(const std::string& api_output) const;

    int num_classes() const { return static_cast<int>(labels_.size()); }
    const std::vector<Entry>& labels() const { return labels_; }

    // First surface form registered for a class.
    const std::string& surface(int class_id) const;

  private:
    std::vector<Entry> labels_;
    std::vector<std::pair<std::string, int>> normalized_;  // form -> class
};

Prompt make_prompt(const std::string& text);
Prompt apply_modification(const Prompt& prompt, const Modification& mod);
std::string render(const Prompt& prompt, const std::string& input_text,
                   const std::string& template_text);
std::optional<int> parse_label(const std::string& api_output, const Verbalizer& verbalizer);

}  // namespace feddtpt
