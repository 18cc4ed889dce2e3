#include "har/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace har {

void StrategyConfig::validate() const {
    if (k < 1) throw ValidationError("k must be >= 1");
    if (max_parallel < 1) throw ValidationError("max_parallel must be >= 1");
    if (strategy == Strategy::FewShot && exemplars.empty()) {
        throw ValidationError("few-shot strategy requires exemplars");
    }
    if (strategy == Strategy::RetrievalKnowledge && trim(retrieval_text).empty()) {
        throw ValidationError("retrieval strategy requires a knowledge statement");
    }
    if (strategy == Strategy::PairDiscovery || strategy == Strategy::PairDescription) {
        throw ValidationError("stage-1 prompt shapes are not classification strategies");
    }
}

CompletionResult Completer::run(const CompletionRequest& request) {
    auto key = cache_key(backend_.id(), request);
    {
        std::lock_guard lock(mutex_);
        keys_.push_back(key);
    }
    if (cache_dir_) return cached_complete(*cache_dir_, backend_, request);
    return complete(backend_, request);
}

std::vector<std::string> Completer::keys() const {
    std::lock_guard lock(mutex_);
    return keys_;
}

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string line;
    std::stringstream ss(text);
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::string strip_list_marker(const std::string& line) {
    std::size_t i = 0;
    while (i < line.size()) {
        char c = line[i];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == ')' || c == '-' ||
            std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else {
            break;
        }
    }
    return line.substr(i);
}

// Case-insensitive search for the needle within haystack, from position pos.
std::size_t ifind(const std::string& haystack, const std::string& needle, std::size_t pos) {
    auto lower = to_lower(haystack);
    return lower.find(to_lower(needle), pos);
}

CompletionRequest make_request(const StrategyConfig& config, PromptText prompt) {
    CompletionRequest req;
    req.model_id = config.model_id;
    req.prompt = std::move(prompt);
    req.temperature = config.temperature;
    req.top_p = config.top_p;
    req.max_tokens = config.max_tokens;
    return req;
}

}  // namespace

std::vector<ActivityPair> parse_pair_list(const std::string& text,
                                          const std::vector<ActivityLabel>& activities,
                                          std::vector<PairParseWarning>* warnings) {
    std::vector<ActivityPair> pairs;
    for (const auto& raw_line : split_lines(text)) {
        auto line = strip_list_marker(raw_line);
        if (trim(line).empty()) continue;

        bool matched = false;
        std::size_t pos = 0;
        while (true) {
            auto at = ifind(line, " and ", pos);
            if (at == std::string::npos) break;
            auto lhs = normalize_label(line.substr(0, at), activities);
            auto rhs = normalize_label(line.substr(at + 5), activities);
            if (lhs && rhs && !(*lhs == *rhs)) {
                pairs.push_back(ActivityPair{*lhs, *rhs});
                matched = true;
                break;
            }
            pos = at + 1;
        }
        if (!matched && warnings != nullptr) {
            warnings->push_back({raw_line, "no activity pair recognized"});
        }
    }
    return pairs;
}

std::vector<ActivityPair> discover_confusable_pairs(Completer& completer, const Dataset& dataset,
                                                    const StrategyConfig& config,
                                                    std::vector<PairParseWarning>* warnings,
                                                    std::string* raw_completion) {
    auto prompt = render_pair_discovery(dataset.activities, dataset.vocabulary, config.k);
    auto result = completer.run(make_request(config, std::move(prompt)));
    if (raw_completion != nullptr) *raw_completion = result.text;

    auto pairs = dedup_pairs(parse_pair_list(result.text, dataset.activities, warnings));
    if (pairs.size() > static_cast<std::size_t>(config.k)) {
        pairs.resize(static_cast<std::size_t>(config.k));
    }
    if (pairs.empty()) {
        throw NoPairsParsed("no activity pairs parsed from completion:\n" + result.text);
    }
    return pairs;
}

namespace {

// Returns the activity whose name starts the line (followed by ":"), or
// nullopt. Longest names are tried first so "Early Morning Routine" would
// not be claimed by a shorter prefix class.
std::optional<ActivityLabel> block_header(const std::string& line,
                                          const std::vector<ActivityLabel>& activities,
                                          std::size_t* body_offset) {
    auto trimmed = trim(line);
    std::vector<const ActivityLabel*> by_length;
    for (const auto& a : activities) by_length.push_back(&a);
    std::sort(by_length.begin(), by_length.end(), [](const auto* a, const auto* b) {
        return a->canonical.size() > b->canonical.size();
    });
    for (const auto* a : by_length) {
        const auto& name = a->canonical;
        if (trimmed.size() <= name.size()) continue;
        if (!iequals(std::string_view(trimmed).substr(0, name.size()), name)) continue;
        auto rest = std::string_view(trimmed).substr(name.size());
        auto colon = rest.find_first_not_of(" \t");
        if (colon == std::string_view::npos || rest[colon] != ':') continue;
        *body_offset = name.size() + colon + 1;
        return *a;
    }
    return std::nullopt;
}

}  // namespace

KnowledgeBase generate_activity_knowledge(Completer& completer,
                                          const std::vector<ActivityPair>& pairs,
                                          const Dataset& dataset, const StrategyConfig& config,
                                          std::vector<DescriptionParseFailure>* failures) {
    if (pairs.empty()) throw ValidationError("generate_activity_knowledge needs pairs");

    KnowledgeBase kb;
    for (const auto& pair : pairs) {
        auto prompt = render_pair_description(pair, dataset.activities, dataset.vocabulary);
        auto result = completer.run(make_request(config, std::move(prompt)));

        // split into blocks, one per activity heading
        struct Block {
            ActivityLabel activity;
            std::string body;
        };
        std::vector<Block> blocks;
        for (const auto& line : split_lines(result.text)) {
            std::size_t offset = 0;
            if (auto activity = block_header(line, dataset.activities, &offset)) {
                blocks.push_back({*activity, trim(trim(line).substr(offset))});
            } else if (!blocks.empty()) {
                if (!blocks.back().body.empty()) blocks.back().body += "\n";
                blocks.back().body += line;
            }
        }

        std::vector<std::string> covered;
        for (const auto& block : blocks) {
            auto body = trim(block.body);
            if (body.empty()) continue;
            kb.append(block.activity, body, pair);
            covered.push_back(to_lower(block.activity.canonical));
        }
        if (failures != nullptr) {
            for (const auto& member : {pair.first, pair.second}) {
                if (std::find(covered.begin(), covered.end(), to_lower(member.canonical)) ==
                    covered.end()) {
                    failures->push_back({pair, member.canonical});
                }
            }
        }
    }
    return kb;
}

ParsedAnswer parse_answer(const std::string& text,
                          const std::vector<ActivityLabel>& activities) {
    auto lines = split_lines(text);

    // keyword line helper: optional whitespace + keyword + optional ":",
    // returns the remainder after the keyword/colon
    auto match_keyword = [](const std::string& line, const std::string& keyword)
        -> std::optional<std::string> {
        auto trimmed = trim(line);
        if (trimmed.size() < keyword.size()) return std::nullopt;
        if (!iequals(std::string_view(trimmed).substr(0, keyword.size()), keyword)) {
            return std::nullopt;
        }
        auto rest = trimmed.substr(keyword.size());
        if (!rest.empty() && std::isalnum(static_cast<unsigned char>(rest.front()))) {
            return std::nullopt;  // e.g. "Answers" is not an Answer line
        }
        if (!rest.empty() && rest.front() == ':') rest.erase(0, 1);
        return trim(rest);
    };

    ParsedAnswer parsed;

    // explanation: remainder after an Explanation line
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (auto rest = match_keyword(lines[i], "Explanation")) {
            std::string expl = *rest;
            for (std::size_t j = i + 1; j < lines.size(); ++j) {
                expl += "\n" + lines[j];
            }
            parsed.explanation = trim(expl);
            break;
        }
    }

    // rule 1: Answer line
    bool has_answer_line = false;
    for (const auto& line : lines) {
        if (auto rest = match_keyword(line, "Answer")) {
            has_answer_line = true;
            parsed.label = normalize_label(*rest, activities);
            if (parsed.label) return parsed;
            break;
        }
    }

    // rule 2: first nonempty line, only when no Answer line exists
    if (!has_answer_line) {
        for (const auto& line : lines) {
            if (!trim(line).empty()) {
                parsed.label = normalize_label(trim(line), activities);
                break;
            }
        }
        if (parsed.label) return parsed;
    }

    // rule 3: unique activity-name occurrence, longest-name-first
    auto haystack = to_lower(text);
    std::vector<const ActivityLabel*> by_length;
    for (const auto& a : activities) by_length.push_back(&a);
    std::sort(by_length.begin(), by_length.end(), [](const auto* a, const auto* b) {
        return a->canonical.size() > b->canonical.size();
    });
    const ActivityLabel* found = nullptr;
    bool multiple = false;
    for (const auto* a : by_length) {
        auto needle = to_lower(a->canonical);
        bool occurs = false;
        std::size_t pos = 0;
        while ((pos = haystack.find(needle, pos)) != std::string::npos) {
            occurs = true;
            // blank out so shorter names nested inside do not also count
            std::fill(haystack.begin() + pos, haystack.begin() + pos + needle.size(), '\0');
            pos += needle.size();
        }
        if (occurs) {
            if (found != nullptr) multiple = true;
            found = a;
        }
    }
    if (found != nullptr && !multiple) {
        parsed.label = *found;
    } else {
        parsed.label = std::nullopt;
    }
    return parsed;
}

Prediction classify_episode(Completer& completer, const Dataset& dataset,
                            const KnowledgeBase& knowledge, const Episode& episode,
                            const StrategyConfig& config) {
    PromptText prompt = [&] {
        switch (config.strategy) {
            case Strategy::Proposed:
                return render_classification_proposed(dataset, knowledge, episode.objects);
            case Strategy::ZeroShot:
                return render_classification_zero_shot(dataset, episode.objects);
            case Strategy::RetrievalKnowledge:
                return render_classification_retrieval(dataset, config.retrieval_text,
                                                       episode.objects);
            case Strategy::FewShot:
                return render_classification_few_shot(dataset, config.exemplars,
                                                      episode.objects);
            default:
                throw ValidationError("not a classification strategy");
        }
    }();

    auto result = completer.run(make_request(config, std::move(prompt)));
    auto parsed = parse_answer(result.text, dataset.activities);

    Prediction prediction;
    prediction.episode_id = episode.id;
    prediction.label = parsed.label;
    prediction.explanation = parsed.explanation;
    prediction.raw = result.text;
    return prediction;
}

ExperimentRecord run_experiment(Backend& backend, const Dataset& dataset,
                                const StrategyConfig& config,
                                std::optional<std::filesystem::path> cache_dir,
                                std::optional<KnowledgeBase> preloaded_knowledge) {
    config.validate();
    Completer completer(backend, std::move(cache_dir));

    ExperimentRecord record;
    record.config = config;
    record.dataset_name = dataset.name;

    if (config.strategy == Strategy::Proposed) {
        if (preloaded_knowledge) {
            record.knowledge = std::move(*preloaded_knowledge);
        } else {
            try {
                record.pairs = discover_confusable_pairs(completer, dataset, config,
                                                         &record.pair_warnings);
                record.knowledge = generate_activity_knowledge(
                    completer, record.pairs, dataset, config, &record.knowledge_failures);
            } catch (const std::exception& e) {
                throw ExperimentFailed(std::string("knowledge stage failed: ") + e.what());
            }
            if (record.knowledge.empty()) {
                throw ExperimentFailed("knowledge stage produced an empty knowledge base");
            }
        }
    }

    const auto n = dataset.episodes.size();
    std::vector<std::optional<Prediction>> predictions(n);
    std::vector<std::optional<FailureRecord>> failures(n);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            auto i = next.fetch_add(1);
            if (i >= n) break;
            const auto& episode = dataset.episodes[i];
            try {
                predictions[i] =
                    classify_episode(completer, dataset, record.knowledge, episode, config);
            } catch (const std::exception& e) {
                failures[i] = FailureRecord{episode.id, e.what()};
            }
        }
    };

    auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.max_parallel), n);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    for (auto& p : predictions) {
        if (p) record.predictions.push_back(std::move(*p));
    }
    for (auto& f : failures) {
        if (f) record.failures.push_back(std::move(*f));
    }
    auto by_id = [](const auto& a, const auto& b) { return a.episode_id < b.episode_id; };
    std::sort(record.predictions.begin(), record.predictions.end(), by_id);
    std::sort(record.failures.begin(), record.failures.end(), by_id);
    record.cache_keys = completer.keys();
    // worker arrival order is scheduling-dependent; sort so the record is deterministic
    std::sort(record.cache_keys.begin(), record.cache_keys.end());

    if (n > 0 &&
        static_cast<double>(record.failures.size()) > config.fail_threshold * static_cast<double>(n)) {
        throw ExperimentFailed(std::to_string(record.failures.size()) + " of " +
                               std::to_string(n) + " episodes failed");
    }
    return record;
}

// ---------------------------------------------------------------------------
// artifact files

namespace {

nlohmann::ordered_json pair_to_json(const ActivityPair& p) {
    return nlohmann::ordered_json::array({p.first.canonical, p.second.canonical});
}

ActivityPair pair_from_json(const nlohmann::json& j, const Dataset& dataset) {
    auto resolve = [&](const std::string& name) {
        auto label = dataset.find_activity(name);
        if (!label) throw ValidationError("unknown activity in artifact: " + name);
        return *label;
    };
    return ActivityPair{resolve(j.at(0).get<std::string>()), resolve(j.at(1).get<std::string>())};
}

}  // namespace

void save_knowledge_artifact(const std::filesystem::path& path,
                             const std::vector<ActivityPair>& pairs,
                             const KnowledgeBase& knowledge) {
    nlohmann::ordered_json doc;
    doc["pairs"] = nlohmann::ordered_json::array();
    for (const auto& p : pairs) doc["pairs"].push_back(pair_to_json(p));
    doc["entries"] = nlohmann::ordered_json::array();
    for (const auto& [activity, description] : knowledge.entries) {
        nlohmann::ordered_json entry;
        entry["activity"] = activity;
        entry["description"] = description;
        entry["provenance"] = nlohmann::ordered_json::array();
        auto it = knowledge.provenance.find(activity);
        if (it != knowledge.provenance.end()) {
            for (const auto& p : it->second) entry["provenance"].push_back(pair_to_json(p));
        }
        doc["entries"].push_back(std::move(entry));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

std::pair<std::vector<ActivityPair>, KnowledgeBase> load_knowledge_artifact(
    const std::filesystem::path& path, const Dataset& dataset) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open knowledge artifact: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }

    std::vector<ActivityPair> pairs;
    for (const auto& p : doc.at("pairs")) pairs.push_back(pair_from_json(p, dataset));

    KnowledgeBase kb;
    for (const auto& entry : doc.at("entries")) {
        auto name = entry.at("activity").get<std::string>();
        auto label = dataset.find_activity(name);
        if (!label) throw ValidationError("unknown activity in artifact: " + name);
        auto description = entry.at("description").get<std::string>();
        if (trim(description).empty()) {
            throw ValidationError("empty description for activity: " + name);
        }
        kb.entries[label->canonical] = description;
        if (entry.contains("provenance")) {
            for (const auto& p : entry["provenance"]) {
                kb.provenance[label->canonical].push_back(pair_from_json(p, dataset));
            }
        }
    }
    return {pairs, kb};
}

void save_predictions(const std::filesystem::path& path,
                      const std::vector<Prediction>& predictions,
                      const std::vector<FailureRecord>& failures) {
    struct Row {
        std::string id;
        nlohmann::ordered_json record;
    };
    std::vector<Row> rows;
    for (const auto& p : predictions) {
        nlohmann::ordered_json rec;
        rec["episode_id"] = p.episode_id;
        rec["predicted"] = p.label ? p.label->canonical : "ABSTAIN";
        rec["explanation"] = p.explanation;
        rec["raw"] = p.raw;
        rows.push_back({p.episode_id, std::move(rec)});
    }
    for (const auto& f : failures) {
        nlohmann::ordered_json rec;
        rec["episode_id"] = f.episode_id;
        rec["predicted"] = "FAILED";
        rec["explanation"] = f.error;
        rec["raw"] = "";
        rows.push_back({f.episode_id, std::move(rec)});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.id < b.id; });

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& row : rows) out << row.record.dump() << "\n";
}

std::pair<std::vector<Prediction>, std::vector<FailureRecord>> load_predictions(
    const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open predictions file: " + path.string());

    std::vector<Prediction> predictions;
    std::vector<FailureRecord> failures;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        auto id = rec.at("episode_id").get<std::string>();
        auto predicted = rec.at("predicted").get<std::string>();
        if (predicted == "FAILED") {
            failures.push_back({id, rec.value("explanation", "")});
        } else {
            Prediction p;
            p.episode_id = id;
            if (predicted != "ABSTAIN") p.label = ActivityLabel{predicted};
            p.explanation = rec.value("explanation", "");
            p.raw = rec.value("raw", "");
            predictions.push_back(std::move(p));
        }
    }
    return {predictions, failures};
}

std::vector<Exemplar> load_exemplars(const std::filesystem::path& path, const Dataset& dataset) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open exemplar file: " + path.string());

    std::vector<Exemplar> exemplars;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        auto name = rec.at("activity").get<std::string>();
        auto label = dataset.find_activity(name);
        if (!label) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": exemplar activity '" + name + "' not in dataset");
        }
        Exemplar ex;
        ex.label = *label;
        for (const auto& obj : rec.at("objects")) {
            ex.objects.items.push_back(obj.get<std::string>());
        }
        if (ex.objects.empty()) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": exemplar has no objects");
        }
        exemplars.push_back(std::move(ex));
    }
    return exemplars;
}

}  // namespace har
