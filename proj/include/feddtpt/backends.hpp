#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "feddtpt/kernels.hpp"
#include "feddtpt/prompt.hpp"

namespace feddtpt {

// The three opaque services a client talks to. Implementations must be safe
// to call from concurrent client workers: mocks are pure functions of their
// inputs, HTTP backends share nothing mutable per call.

// Text-in/text-out prediction service (no logits, no probabilities).
class PredictionBackend {
  public:
    virtual ~PredictionBackend() = default;
    virtual std::string predict(const std::string& rendered_text) const = 0;
    virtual std::string name() const = 0;
};

// Proposes replacement tokens for one masked prompt position, informed by the
// tuning history accumulated so far.
class MlmBackend {
  public:
    virtual ~MlmBackend() = default;

    // Ordered best-first candidates, 1..num_candidates of them, never equal to
    // the token currently at mask_position. Throws NoCandidatesError when the
    // filtered list would be empty.
    virtual std::vector<Token> propose(const Prompt& prompt, int mask_position,
                                       const FeedbackInfo& feedback, int num_candidates) const = 0;
};

// Deterministic token -> dense vector mapping.
class EmbeddingBackend {
  public:
    virtual ~EmbeddingBackend() = default;
    virtual kernels::Point embed(const Token& token) const = 0;
    virtual int dimension() const = 0;
};

// --- Mock prediction -------------------------------------------------------

// Scoring rule for one example: the backend answers correctly iff the rendered
// text contains at least `difficulty` distinct tokens from the fixture's good
// set. difficulty 0 examples are always answered correctly.
struct MockExampleRule {
    std::string text;
    int label = 0;
    int difficulty = 0;
};

struct MockRules {
    std::string name;                    // label printed by transfer evaluation
    std::vector<std::string> surfaces;   // class id -> answer surface form
    std::vector<std::string> good_tokens;
    std::vector<MockExampleRule> examples;
};

// JSON file {name, surfaces:[...], good_tokens:[...], examples:[{text,label,
// difficulty}...]}. Throws FormatError on structural problems.
MockRules load_mock_rules(const std::string& path);

// One token per line; blank lines and lines starting with '#' are skipped.
// Throws FormatError when a line holds more than one token or the file ends
// up empty.
std::vector<Token> load_vocabulary(const std::string& path);

// Deterministic and monotone: adding good tokens to a prompt never turns a
// correct answer into a wrong one. The rendered text is matched to the rule
// whose example text is its longest contained substring; an unmatched render
// answers "unknown".
class MockPredictionBackend : public PredictionBackend {
  public:
    MockPredictionBackend(MockRules rules, std::uint64_t seed);

    std::string predict(const std::string& rendered_text) const override;
    std::string name() const override { return rules_.name; }

    const MockRules& rules() const { return rules_; }

  private:
    MockRules rules_;
    std::uint64_t seed_;
};

// --- Mock MLM ---------------------------------------------------------------

// Seeded sampler over a fixed candidate vocabulary. The candidate order is a
// pure function of (prompt text, mask position, iteration count, seed); when
// the last recorded modification is still present in the prompt (i.e. it was
// accepted), tokens adjacent to it in the vocabulary are ranked first.
class MockMlmBackend : public MlmBackend {
  public:
    MockMlmBackend(std::vector<Token> vocabulary, std::uint64_t seed);

    std::vector<Token> propose(const Prompt& prompt, int mask_position,
                               const FeedbackInfo& feedback, int num_candidates) const override;

    const std::vector<Token>& vocabulary() const { return vocabulary_; }

  private:
    std::vector<Token> vocabulary_;
    std::unordered_map<std::string, int> index_;  // token text -> vocab index
    std::uint64_t seed_;
};

// --- Table embedder ---------------------------------------------------------

enum class EmbeddingFallback { hash, error };

// Lookup table loaded from `token v1 v2 ... vd` rows. Unknown tokens either
// raise UnknownTokenError or map to a seeded unit vector, per fallback policy.
class TableEmbeddingBackend : public EmbeddingBackend {
  public:
    TableEmbeddingBackend(const std::string& path, EmbeddingFallback fallback);

    kernels::Point embed(const Token& token) const override;
    int dimension() const override { return dimension_; }

  private:
    std::unordered_map<std::string, kernels::Point> table_;
    EmbeddingFallback fallback_;
    int dimension_ = 0;
};

}  // namespace feddtpt
