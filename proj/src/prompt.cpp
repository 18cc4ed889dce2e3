#include "har/prompt.hpp"

#include <sstream>

namespace har {

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::PairDiscovery: return "pair-discovery";
        case Strategy::PairDescription: return "pair-description";
        case Strategy::Proposed: return "proposed";
        case Strategy::ZeroShot: return "zero-shot";
        case Strategy::RetrievalKnowledge: return "retrieval";
        case Strategy::FewShot: return "few-shot";
    }
    return "unknown";
}

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out += ", ";
        out += items[i];
    }
    return out;
}

std::string join_labels(const std::vector<ActivityLabel>& labels) {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i > 0) out += ", ";
        out += labels[i].canonical;
    }
    return out;
}

std::string objects_line(const std::vector<std::string>& vocabulary) {
    return "All objects in the dataset: " + join(vocabulary);
}

std::string activities_line(const std::vector<ActivityLabel>& activities) {
    return "All activities in the dataset: " + join_labels(activities);
}

std::string classification_question(const ObjectSequence& objects) {
    return "Question: A list of objects a person used that ordered in time: " +
           join(objects.items) +
           ". Output the name of the activity the person most probably performs";
}

constexpr const char* kAnswerTail = "Answer and Explanation: ";

std::string assemble(const std::vector<std::string>& components) {
    std::string out;
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (i > 0) out += "\n";
        out += components[i];
    }
    return out;
}

}  // namespace

PromptText render_pair_discovery(const std::vector<ActivityLabel>& activities,
                                 const std::vector<std::string>& vocabulary, int k) {
    if (activities.empty() || vocabulary.empty()) {
        throw EmptyContext("pair discovery needs nonempty activities and vocabulary");
    }
    auto question = "Question: List " + std::to_string(k) +
                    " pair of activities in [All activities] that is difficult to distinguish";
    return {assemble({objects_line(vocabulary), activities_line(activities), question,
                      kAnswerTail}),
            Strategy::PairDiscovery};
}

PromptText render_pair_description(const ActivityPair& pair,
                                   const std::vector<ActivityLabel>& activities,
                                   const std::vector<std::string>& vocabulary) {
    auto member_of = [&](const ActivityLabel& l) {
        for (const auto& a : activities) {
            if (a == l) return true;
        }
        return false;
    };
    if (!member_of(pair.first) || !member_of(pair.second)) {
        throw UnknownActivity("pair member not in activities: " + pair.first.canonical + " / " +
                              pair.second.canonical);
    }
    auto question = "Question: Differentiate " + pair.first.canonical + " and " +
                    pair.second.canonical + " activities based on objects.";
    return {assemble({objects_line(vocabulary), activities_line(activities), question,
                      kAnswerTail}),
            Strategy::PairDescription};
}

PromptText render_classification_proposed(const Dataset& dataset,
                                          const KnowledgeBase& knowledge,
                                          const ObjectSequence& objects) {
    if (objects.empty()) throw EmptySequence("cannot classify an empty object sequence");
    if (knowledge.empty()) throw KnowledgeMismatch("proposed strategy needs a knowledge base");

    std::string block = "Name and Description of activities: ";
    bool first = true;
    for (const auto& a : dataset.activities) {
        const auto* desc = knowledge.find(a);
        if (desc == nullptr) continue;
        if (!first) block += "\n";
        block += a.canonical + ": " + *desc;
        first = false;
    }
    return {assemble({activities_line(dataset.activities), block,
                      classification_question(objects), kAnswerTail}),
            Strategy::Proposed};
}

PromptText render_classification_zero_shot(const Dataset& dataset,
                                           const ObjectSequence& objects) {
    if (objects.empty()) throw EmptySequence("cannot classify an empty object sequence");
    return {assemble({objects_line(dataset.vocabulary), activities_line(dataset.activities),
                      classification_question(objects), kAnswerTail}),
            Strategy::ZeroShot};
}

PromptText render_classification_retrieval(const Dataset& dataset,
                                           const std::string& retrieval_text,
                                           const ObjectSequence& objects) {
    if (objects.empty()) throw EmptySequence("cannot classify an empty object sequence");
    if (trim(retrieval_text).empty()) {
        throw KnowledgeMismatch("retrieval strategy needs a nonempty knowledge statement");
    }
    return {assemble({activities_line(dataset.activities), retrieval_text,
                      classification_question(objects), kAnswerTail}),
            Strategy::RetrievalKnowledge};
}

PromptText render_classification_few_shot(const Dataset& dataset,
                                          const std::vector<Exemplar>& exemplars,
                                          const ObjectSequence& objects) {
    if (objects.empty()) throw EmptySequence("cannot classify an empty object sequence");

    std::vector<std::string> components;
    components.push_back(objects_line(dataset.vocabulary));
    components.push_back(activities_line(dataset.activities));
    // one exemplar per class, dataset order
    for (const auto& a : dataset.activities) {
        const Exemplar* pick = nullptr;
        for (const auto& ex : exemplars) {
            if (ex.label == a) {
                pick = &ex;
                break;
            }
        }
        if (pick == nullptr) {
            throw KnowledgeMismatch("no exemplar for activity '" + a.canonical + "'");
        }
        components.push_back(classification_question(pick->objects) + "\nAnswer: " +
                             a.canonical);
    }
    components.push_back(classification_question(objects));
    components.push_back(kAnswerTail);
    return {assemble(components), Strategy::FewShot};
}

}  // namespace har
