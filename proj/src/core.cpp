#include "har/core.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace har {

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    auto begin = s.find_first_not_of(ws);
    if (begin == std::string_view::npos) return {};
    auto end = s.find_last_not_of(ws);
    return std::string(s.substr(begin, end - begin + 1));
}

bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    return std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
        return std::tolower(x) == std::tolower(y);
    });
}

std::pair<std::string, std::string> ActivityPair::key() const {
    auto a = to_lower(first.canonical);
    auto b = to_lower(second.canonical);
    if (b < a) std::swap(a, b);
    return {a, b};
}

std::vector<ActivityPair> dedup_pairs(const std::vector<ActivityPair>& pairs) {
    std::vector<ActivityPair> out;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& p : pairs) {
        if (seen.insert(p.key()).second) out.push_back(p);
    }
    return out;
}

std::optional<ActivityLabel> Dataset::find_activity(std::string_view name) const {
    for (const auto& a : activities) {
        if (iequals(a.canonical, name)) return a;
    }
    return std::nullopt;
}

const std::string* KnowledgeBase::find(const ActivityLabel& label) const {
    auto it = entries.find(label.canonical);
    return it == entries.end() ? nullptr : &it->second;
}

void KnowledgeBase::append(const ActivityLabel& label, const std::string& text,
                           const ActivityPair& source) {
    auto& entry = entries[label.canonical];
    if (entry.empty()) {
        entry = text;
    } else {
        entry += "\n\n" + text;
    }
    provenance[label.canonical].push_back(source);
}

namespace {

// Strips trailing sentence punctuation and whitespace.
std::string strip_trailing_punct(std::string s) {
    const std::string punct = ".,;:!";
    while (!s.empty()) {
        char c = s.back();
        if (punct.find(c) != std::string::npos || std::isspace(static_cast<unsigned char>(c))) {
            s.pop_back();
        } else {
            break;
        }
    }
    return s;
}

std::set<std::string> token_set(std::string_view text) {
    std::set<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c)) || c == '_') {
            if (!current.empty()) tokens.insert(to_lower(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) tokens.insert(to_lower(current));
    return tokens;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& t : a) inter += b.count(t);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

}  // namespace

std::optional<ActivityLabel> normalize_label(
    std::string_view candidate, const std::vector<ActivityLabel>& activities) {
    // rule 1: exact
    for (const auto& a : activities) {
        if (a.canonical == candidate) return a;
    }
    // rule 2: case-insensitive after trimming whitespace and trailing punctuation
    std::string cleaned = strip_trailing_punct(trim(candidate));
    for (const auto& a : activities) {
        if (iequals(a.canonical, cleaned)) return a;
    }
    // rule 3: unique best token-set Jaccard >= 0.5
    auto cand_tokens = token_set(cleaned);
    if (cand_tokens.empty()) return std::nullopt;
    double best = 0.0;
    const ActivityLabel* winner = nullptr;
    bool tied = false;
    for (const auto& a : activities) {
        double score = jaccard(cand_tokens, token_set(a.canonical));
        if (score > best) {
            best = score;
            winner = &a;
            tied = false;
        } else if (score == best && score > 0.0) {
            tied = true;
        }
    }
    if (winner != nullptr && best >= 0.5 && !tied) return *winner;
    return std::nullopt;
}

}  // namespace har
