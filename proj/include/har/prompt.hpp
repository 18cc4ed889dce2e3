#pragma once

#include <string>
#include <vector>

#include "har/core.hpp"

namespace har {

enum class Strategy {
    PairDiscovery,
    PairDescription,
    Proposed,
    ZeroShot,
    RetrievalKnowledge,
    FewShot,
};

std::string strategy_name(Strategy s);

struct PromptText {
    std::string text;
    Strategy tag;
};

/// One worked (object sequence -> activity) example for few-shot prompts.
struct Exemplar {
    ObjectSequence objects;
    ActivityLabel label;
};

struct EmptyContext : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnknownActivity : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct KnowledgeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptySequence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Stage-1 prompt 1: ask for k pairs of hard-to-distinguish activities.
PromptText render_pair_discovery(const std::vector<ActivityLabel>& activities,
                                 const std::vector<std::string>& vocabulary, int k);

/// Stage-1 prompt 2: ask for per-activity descriptions differentiating a pair.
PromptText render_pair_description(const ActivityPair& pair,
                                   const std::vector<ActivityLabel>& activities,
                                   const std::vector<std::string>& vocabulary);

/// Stage-2 classification prompt with the generated knowledge block.
PromptText render_classification_proposed(const Dataset& dataset,
                                          const KnowledgeBase& knowledge,
                                          const ObjectSequence& objects);

/// Baseline: objects + classes only, no knowledge statement.
PromptText render_classification_zero_shot(const Dataset& dataset,
                                           const ObjectSequence& objects);

/// Baseline: knowledge block is externally retrieved text, verbatim.
PromptText render_classification_retrieval(const Dataset& dataset,
                                           const std::string& retrieval_text,
                                           const ObjectSequence& objects);

/// Baseline: one worked exemplar per class, dataset order, before the
/// final question.
PromptText render_classification_few_shot(const Dataset& dataset,
                                          const std::vector<Exemplar>& exemplars,
                                          const ObjectSequence& objects);

}  // namespace har
