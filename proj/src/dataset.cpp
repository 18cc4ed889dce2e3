#include "har/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace har {

namespace {

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(value);
    while (std::getline(ss, item, ',')) {
        auto trimmed = trim(item);
        if (!trimmed.empty()) out.push_back(trimmed);
    }
    return out;
}

void check_no_duplicates(const std::vector<std::string>& names, const std::string& what) {
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(to_lower(n)).second) {
            throw ValidationError("duplicate " + what + ": " + n);
        }
    }
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest: " + path.string());

    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected 'key = value'");
        }
        auto key = trim(stripped.substr(0, eq));
        auto value = trim(stripped.substr(eq + 1));
        if (key == "name") {
            m.name = value;
        } else if (key == "episodes") {
            m.episodes_path = path.parent_path() / value;
        } else if (key == "activities") {
            m.activities = split_list(value);
        } else if (key == "vocabulary") {
            m.vocabulary = split_list(value);
        } else if (key == "repeat_policy") {
            if (value == "keep_all") {
                m.repeat_policy = RepeatPolicy::KeepAll;
            } else if (value == "collapse_consecutive") {
                m.repeat_policy = RepeatPolicy::CollapseConsecutive;
            } else {
                throw ParseError(path.string() + ":" + std::to_string(lineno) +
                                 ": unknown repeat_policy '" + value + "'");
            }
        }
        // unknown keys ignored
    }
    if (m.activities.empty()) throw ValidationError("manifest declares no activities");
    check_no_duplicates(m.activities, "activity");
    if (m.vocabulary) check_no_duplicates(*m.vocabulary, "vocabulary entry");
    if (!std::filesystem::exists(m.episodes_path)) {
        throw ParseError("episode file not found: " + m.episodes_path.string());
    }
    return m;
}

ObjectSequence apply_repeat_policy(const ObjectSequence& objects, RepeatPolicy policy) {
    if (policy == RepeatPolicy::KeepAll) return objects;
    ObjectSequence out;
    for (const auto& name : objects.items) {
        if (out.items.empty() || out.items.back() != name) out.items.push_back(name);
    }
    return out;
}

Dataset load_dataset(const DatasetManifest& manifest) {
    Dataset ds;
    ds.name = manifest.name;
    for (const auto& a : manifest.activities) ds.activities.push_back(ActivityLabel{a});
    if (ds.activities.size() < 2) {
        throw ValidationError("dataset needs at least 2 activities");
    }

    std::ifstream in(manifest.episodes_path);
    if (!in) throw ParseError("cannot open episode file: " + manifest.episodes_path.string());

    std::set<std::string> seen_ids;
    std::vector<std::string> derived_vocab;
    std::set<std::string> derived_seen;

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(manifest.episodes_path.string() + ":" + std::to_string(lineno) +
                             ": " + e.what());
        }
        if (!rec.is_object() || !rec.contains("episode_id") || !rec.contains("activity") ||
            !rec.contains("objects") || !rec["objects"].is_array()) {
            throw ParseError(manifest.episodes_path.string() + ":" + std::to_string(lineno) +
                             ": record needs episode_id, activity, objects[]");
        }

        Episode ep;
        ep.id = rec["episode_id"].get<std::string>();
        auto gold_name = rec["activity"].get<std::string>();
        auto gold = ds.find_activity(gold_name);
        if (!gold) {
            throw ValidationError("episode " + ep.id + ": gold label '" + gold_name +
                                  "' not in activities");
        }
        ep.gold = *gold;
        for (const auto& obj : rec["objects"]) {
            auto name = trim(obj.get<std::string>());
            if (name.empty()) {
                throw ParseError(manifest.episodes_path.string() + ":" +
                                 std::to_string(lineno) + ": empty object name");
            }
            ep.objects.items.push_back(name);
        }
        if (ep.objects.empty()) {
            throw ValidationError("episode " + ep.id + ": empty object list");
        }
        if (!seen_ids.insert(ep.id).second) {
            throw ValidationError("duplicate episode id: " + ep.id);
        }
        ep.objects = apply_repeat_policy(ep.objects, manifest.repeat_policy);

        for (const auto& name : ep.objects.items) {
            if (derived_seen.insert(to_lower(name)).second) derived_vocab.push_back(name);
        }
        ds.episodes.push_back(std::move(ep));
    }

    ds.vocabulary = manifest.vocabulary ? *manifest.vocabulary : derived_vocab;
    return ds;
}

ValidationReport validate_dataset(const Dataset& dataset) {
    ValidationReport report;
    std::set<std::string> vocab;
    for (const auto& v : dataset.vocabulary) vocab.insert(to_lower(v));

    std::set<std::string> ids;
    for (const auto& ep : dataset.episodes) {
        if (!ids.insert(ep.id).second) {
            report.violations.push_back({"duplicate_id", ep.id, "episode id appears twice"});
        }
        if (!dataset.find_activity(ep.gold.canonical)) {
            report.violations.push_back(
                {"unknown_gold", ep.id, "gold label '" + ep.gold.canonical + "' not in activities"});
        }
        if (ep.objects.empty()) {
            report.violations.push_back({"empty_sequence", ep.id, "no objects"});
        }
        for (const auto& obj : ep.objects.items) {
            if (!vocab.count(to_lower(obj))) {
                report.violations.push_back(
                    {"unknown_object", ep.id, "object '" + obj + "' not in vocabulary"});
            }
        }
    }
    return report;
}

}  // namespace har
