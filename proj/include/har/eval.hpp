#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "har/pipeline.hpp"

namespace har {

struct UnknownEpisode : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DuplicateEpisode : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ClassCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
};

struct MetricsReport {
    double micro_precision = 0.0;
    double micro_recall = 0.0;
    double micro_f1 = 0.0;
    std::map<std::string, ClassCounts> per_class;
    long n_episodes = 0;
    long n_predicted = 0;
    long n_abstained = 0;
    long n_failed = 0;
};

/// Rows are gold classes; columns are predicted classes plus dedicated
/// Abstain and Failed columns at the end.
struct ConfusionMatrix {
    std::vector<ActivityLabel> classes;
    std::vector<std::vector<long>> counts;  // |classes| x (|classes| + 2)

    std::size_t abstain_col() const { return classes.size(); }
    std::size_t failed_col() const { return classes.size() + 1; }
};

/// Micro-averaged precision/recall/F1. Abstain and Failed count against
/// recall only: precision = correct / predicted, recall = correct / total.
MetricsReport score(const std::vector<Prediction>& predictions,
                    const std::vector<FailureRecord>& failures, const Dataset& dataset);

ConfusionMatrix confusion(const std::vector<Prediction>& predictions,
                          const std::vector<FailureRecord>& failures, const Dataset& dataset);

/// Formats a [0,1] fraction as a percentage with two decimals, half-up.
std::string format_percent(double fraction);

void write_metrics_file(const std::filesystem::path& path, const MetricsReport& metrics);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& matrix);

/// One scored (strategy, dataset) cell for the comparison table.
struct ComparisonCell {
    std::string strategy;
    std::string dataset;
    double micro_f1 = 0.0;
};

/// Plain-text table, rows = strategies, columns = datasets. Errors on an
/// empty cell list.
void write_comparison_table(const std::filesystem::path& path,
                            const std::vector<ComparisonCell>& cells);

}  // namespace har
