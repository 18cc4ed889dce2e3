#include "har/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace har {

namespace {

// Maps every episode id to its gold label and checks coverage/duplicates.
std::map<std::string, ActivityLabel> gold_index(const std::vector<Prediction>& predictions,
                                                const std::vector<FailureRecord>& failures,
                                                const Dataset& dataset) {
    std::map<std::string, ActivityLabel> gold;
    for (const auto& ep : dataset.episodes) gold.emplace(ep.id, ep.gold);

    std::set<std::string> seen;
    auto check = [&](const std::string& id) {
        if (!gold.count(id)) throw UnknownEpisode("episode id not in dataset: " + id);
        if (!seen.insert(id).second) throw DuplicateEpisode("episode id scored twice: " + id);
    };
    for (const auto& p : predictions) check(p.episode_id);
    for (const auto& f : failures) check(f.episode_id);
    return gold;
}

}  // namespace

MetricsReport score(const std::vector<Prediction>& predictions,
                    const std::vector<FailureRecord>& failures, const Dataset& dataset) {
    auto gold = gold_index(predictions, failures, dataset);

    MetricsReport report;
    report.n_episodes = static_cast<long>(predictions.size() + failures.size());
    report.n_failed = static_cast<long>(failures.size());
    for (const auto& a : dataset.activities) report.per_class[a.canonical];

    long correct = 0;
    for (const auto& p : predictions) {
        const auto& g = gold.at(p.episode_id);
        if (p.abstained()) {
            ++report.n_abstained;
            ++report.per_class[g.canonical].fn;
            continue;
        }
        ++report.n_predicted;
        if (*p.label == g) {
            ++correct;
            ++report.per_class[g.canonical].tp;
        } else {
            ++report.per_class[g.canonical].fn;
            ++report.per_class[p.label->canonical].fp;
        }
    }
    for (const auto& f : failures) {
        ++report.per_class[gold.at(f.episode_id).canonical].fn;
    }

    report.micro_precision =
        report.n_predicted > 0 ? static_cast<double>(correct) / report.n_predicted : 0.0;
    report.micro_recall =
        report.n_episodes > 0 ? static_cast<double>(correct) / report.n_episodes : 0.0;
    // 2PR/(P+R) simplified to integer counts: exact when P or R alone is exact
    report.micro_f1 =
        correct > 0
            ? 2.0 * static_cast<double>(correct) / (report.n_predicted + report.n_episodes)
            : 0.0;
    return report;
}

ConfusionMatrix confusion(const std::vector<Prediction>& predictions,
                          const std::vector<FailureRecord>& failures, const Dataset& dataset) {
    auto gold = gold_index(predictions, failures, dataset);

    ConfusionMatrix matrix;
    matrix.classes = dataset.activities;
    matrix.counts.assign(matrix.classes.size(),
                         std::vector<long>(matrix.classes.size() + 2, 0));

    auto row_of = [&](const ActivityLabel& label) {
        for (std::size_t i = 0; i < matrix.classes.size(); ++i) {
            if (matrix.classes[i] == label) return i;
        }
        throw UnknownEpisode("label not in dataset: " + label.canonical);
    };

    for (const auto& p : predictions) {
        auto row = row_of(gold.at(p.episode_id));
        if (p.abstained()) {
            ++matrix.counts[row][matrix.abstain_col()];
        } else {
            ++matrix.counts[row][row_of(*p.label)];
        }
    }
    for (const auto& f : failures) {
        ++matrix.counts[row_of(gold.at(f.episode_id))][matrix.failed_col()];
    }
    return matrix;
}

std::string format_percent(double fraction) {
    // half-up at two decimals, Table-style "91.15"
    double scaled = std::floor(fraction * 10000.0 + 0.5) / 100.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", scaled);
    return buf;
}

void write_metrics_file(const std::filesystem::path& path, const MetricsReport& metrics) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "micro_f1_percent = " << format_percent(metrics.micro_f1) << "\n";
    out << "micro_precision_percent = " << format_percent(metrics.micro_precision) << "\n";
    out << "micro_recall_percent = " << format_percent(metrics.micro_recall) << "\n";
    out << "n_episodes = " << metrics.n_episodes << "\n";
    out << "n_predicted = " << metrics.n_predicted << "\n";
    out << "n_abstained = " << metrics.n_abstained << "\n";
    out << "n_failed = " << metrics.n_failed << "\n";
    for (const auto& [name, counts] : metrics.per_class) {
        out << "class." << name << " = tp:" << counts.tp << " fp:" << counts.fp
            << " fn:" << counts.fn << "\n";
    }
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& matrix) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "gold";
    for (const auto& c : matrix.classes) out << "," << c.canonical;
    out << ",Abstain,Failed\n";
    for (std::size_t i = 0; i < matrix.classes.size(); ++i) {
        out << matrix.classes[i].canonical;
        for (auto count : matrix.counts[i]) out << "," << count;
        out << "\n";
    }
}

void write_comparison_table(const std::filesystem::path& path,
                            const std::vector<ComparisonCell>& cells) {
    if (cells.empty()) throw ValidationError("comparison table needs at least one cell");

    std::vector<std::string> strategies;
    std::vector<std::string> datasets;
    for (const auto& c : cells) {
        if (std::find(strategies.begin(), strategies.end(), c.strategy) == strategies.end()) {
            strategies.push_back(c.strategy);
        }
        if (std::find(datasets.begin(), datasets.end(), c.dataset) == datasets.end()) {
            datasets.push_back(c.dataset);
        }
    }

    auto lookup = [&](const std::string& s, const std::string& d) -> std::string {
        for (const auto& c : cells) {
            if (c.strategy == s && c.dataset == d) return format_percent(c.micro_f1);
        }
        return "-";
    };

    std::size_t label_width = std::string("strategy").size();
    for (const auto& s : strategies) label_width = std::max(label_width, s.size());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::left << std::setw(static_cast<int>(label_width + 2)) << "strategy";
    for (const auto& d : datasets) out << std::setw(14) << d;
    out << "\n";
    for (const auto& s : strategies) {
        out << std::left << std::setw(static_cast<int>(label_width + 2)) << s;
        for (const auto& d : datasets) out << std::setw(14) << lookup(s, d);
        out << "\n";
    }
}

}  // namespace har
