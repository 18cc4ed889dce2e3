#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace har {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

/// An activity class exactly as declared in the dataset manifest.
/// Comparisons across the codebase are case-insensitive; the canonical
/// casing is what gets rendered into prompts and reports.
struct ActivityLabel {
    std::string canonical;

    friend bool operator==(const ActivityLabel& a, const ActivityLabel& b) {
        return iequals(a.canonical, b.canonical);
    }
};

/// Time-ordered list of object names. Order is meaningful and never re-sorted.
struct ObjectSequence {
    std::vector<std::string> items;

    bool empty() const { return items.empty(); }
    std::size_t size() const { return items.size(); }
};

struct Episode {
    std::string id;
    ActivityLabel gold;
    ObjectSequence objects;
};

/// Two activities judged hard to distinguish. Identity is unordered:
/// (X,Y) and (Y,X) are the same pair.
struct ActivityPair {
    ActivityLabel first;
    ActivityLabel second;

    // lowercased, lexicographically sorted; used for dedup
    std::pair<std::string, std::string> key() const;

    friend bool operator==(const ActivityPair& a, const ActivityPair& b) {
        return a.key() == b.key();
    }
};

std::vector<ActivityPair> dedup_pairs(const std::vector<ActivityPair>& pairs);

struct Dataset {
    std::string name;
    std::vector<ActivityLabel> activities;
    std::vector<std::string> vocabulary;
    std::vector<Episode> episodes;

    /// Case-insensitive lookup; returns the declared-casing label.
    std::optional<ActivityLabel> find_activity(std::string_view name) const;
};

/// Per-activity discriminative descriptions assembled in stage 1.
/// Keys are canonical labels; provenance records which pairs produced
/// each entry.
struct KnowledgeBase {
    std::map<std::string, std::string> entries;
    std::map<std::string, std::vector<ActivityPair>> provenance;

    bool empty() const { return entries.empty(); }
    const std::string* find(const ActivityLabel& label) const;
    void append(const ActivityLabel& label, const std::string& text,
                const ActivityPair& source);
};

/// Classification outcome for one episode. label is empty on Abstain.
struct Prediction {
    std::string episode_id;
    std::optional<ActivityLabel> label;
    std::string explanation;
    std::string raw;

    bool abstained() const { return !label.has_value(); }
};

/// Maps a free-text candidate onto the activity set.
/// Ladder: exact match; case-insensitive match after trimming whitespace
/// and trailing sentence punctuation (. , ; : !); unique best token-set
/// Jaccard >= 0.5. Returns nullopt when nothing fires or the Jaccard
/// winner is tied.
std::optional<ActivityLabel> normalize_label(
    std::string_view candidate, const std::vector<ActivityLabel>& activities);

struct Violation {
    std::string kind;
    std::string episode_id;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
};

}  // namespace har
