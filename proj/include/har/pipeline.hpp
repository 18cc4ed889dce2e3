#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "har/dataset.hpp"
#include "har/llm.hpp"
#include "har/prompt.hpp"

namespace har {

struct NoPairsParsed : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ExperimentFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StrategyConfig {
    Strategy strategy = Strategy::Proposed;
    int k = 3;
    std::vector<Exemplar> exemplars;
    std::string retrieval_text;
    int max_parallel = 4;
    double fail_threshold = 0.5;
    std::string model_id = "gpt-3.5-turbo-instruct";
    double temperature = 0.0;
    double top_p = 0.5;
    int max_tokens = 512;

    void validate() const;
};

/// Runs completions through an optional response cache and records every
/// cache key it issued. Safe for concurrent use.
class Completer {
  public:
    Completer(Backend& backend, std::optional<std::filesystem::path> cache_dir = std::nullopt)
        : backend_(backend), cache_dir_(std::move(cache_dir)) {}

    CompletionResult run(const CompletionRequest& request);
    std::vector<std::string> keys() const;

  private:
    Backend& backend_;
    std::optional<std::filesystem::path> cache_dir_;
    mutable std::mutex mutex_;
    std::vector<std::string> keys_;
};

/// Transport-level failure for one episode; distinct from Abstain.
struct FailureRecord {
    std::string episode_id;
    std::string error;
};

struct PairParseWarning {
    std::string line;
    std::string reason;
};

struct DescriptionParseFailure {
    ActivityPair pair;
    std::string missing_activity;
};

struct ParsedAnswer {
    std::optional<ActivityLabel> label;  // empty = Abstain
    std::string explanation;
};

struct ExperimentRecord {
    StrategyConfig config;
    std::string dataset_name;
    std::vector<ActivityPair> pairs;
    KnowledgeBase knowledge;
    std::vector<DescriptionParseFailure> knowledge_failures;
    std::vector<PairParseWarning> pair_warnings;
    std::vector<Prediction> predictions;  // sorted by episode id
    std::vector<FailureRecord> failures;  // sorted by episode id
    std::vector<std::string> cache_keys;
};

/// Extracts "activity A and activity B" pairs from a completion, one per
/// line. List markers are stripped; lines whose sides do not resolve to
/// known activities are skipped with a warning.
std::vector<ActivityPair> parse_pair_list(const std::string& text,
                                          const std::vector<ActivityLabel>& activities,
                                          std::vector<PairParseWarning>* warnings = nullptr);

/// Stage 1, prompt 1: ask the backend for k confusable pairs.
std::vector<ActivityPair> discover_confusable_pairs(
    Completer& completer, const Dataset& dataset, const StrategyConfig& config,
    std::vector<PairParseWarning>* warnings = nullptr, std::string* raw_completion = nullptr);

/// Stage 1, prompt 2: describe each pair and assemble the knowledge base.
/// Description blocks start at a line beginning with a known activity name
/// followed by ":"; entries from multiple pairs concatenate.
KnowledgeBase generate_activity_knowledge(
    Completer& completer, const std::vector<ActivityPair>& pairs, const Dataset& dataset,
    const StrategyConfig& config, std::vector<DescriptionParseFailure>* failures = nullptr);

/// Resolves a completion to an activity (or Abstain) plus explanation.
/// Ladder: "Answer:" line; first line; unique activity-name scan.
ParsedAnswer parse_answer(const std::string& text,
                          const std::vector<ActivityLabel>& activities);

Prediction classify_episode(Completer& completer, const Dataset& dataset,
                            const KnowledgeBase& knowledge, const Episode& episode,
                            const StrategyConfig& config);

/// Full experiment: stage 1 (Proposed only) then classification of every
/// episode, at most max_parallel in flight. Predictions and failures are
/// sorted by episode id.
ExperimentRecord run_experiment(Backend& backend, const Dataset& dataset,
                                const StrategyConfig& config,
                                std::optional<std::filesystem::path> cache_dir = std::nullopt,
                                std::optional<KnowledgeBase> preloaded_knowledge = std::nullopt);

// --- artifact files -------------------------------------------------------

void save_knowledge_artifact(const std::filesystem::path& path,
                             const std::vector<ActivityPair>& pairs,
                             const KnowledgeBase& knowledge);
std::pair<std::vector<ActivityPair>, KnowledgeBase> load_knowledge_artifact(
    const std::filesystem::path& path, const Dataset& dataset);

void save_predictions(const std::filesystem::path& path,
                      const std::vector<Prediction>& predictions,
                      const std::vector<FailureRecord>& failures);
std::pair<std::vector<Prediction>, std::vector<FailureRecord>> load_predictions(
    const std::filesystem::path& path);

/// Exemplar files share the episode record shape.
std::vector<Exemplar> load_exemplars(const std::filesystem::path& path,
                                     const Dataset& dataset);

}  // namespace har
