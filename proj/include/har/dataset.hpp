#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "har/core.hpp"

namespace har {

enum class RepeatPolicy { KeepAll, CollapseConsecutive };

/// Human-editable key=value manifest describing one dataset.
struct DatasetManifest {
    std::string name;
    std::vector<std::string> activities;
    std::filesystem::path episodes_path;
    std::optional<std::vector<std::string>> vocabulary;
    RepeatPolicy repeat_policy = RepeatPolicy::CollapseConsecutive;
};

/// Parses a manifest file. Lines are "key = value", '#' starts a comment.
/// Keys: name, episodes, activities, vocabulary, repeat_policy.
/// List values are comma-separated; episodes is resolved relative to the
/// manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Loads the episode file named by the manifest (newline-delimited JSON
/// records with episode_id, activity, objects), applies the repeat policy,
/// and derives the vocabulary when the manifest omits it.
Dataset load_dataset(const DatasetManifest& manifest);

ValidationReport validate_dataset(const Dataset& dataset);

ObjectSequence apply_repeat_policy(const ObjectSequence& objects, RepeatPolicy policy);

}  // namespace har
