#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "har/dataset.hpp"

namespace har::test {

inline std::filesystem::path source_dir() {
    return std::filesystem::path(HAR_SOURCE_DIR);
}

inline std::filesystem::path fixture_dir() {
    return source_dir() / "fixtures" / "opportunity";
}

inline std::filesystem::path golden_dir() {
    return source_dir() / "tests" / "golden";
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline har::Dataset fixture_dataset() {
    return har::load_dataset(har::load_manifest(fixture_dir() / "manifest.cfg"));
}

}  // namespace har::test
