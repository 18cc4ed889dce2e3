#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "har/dataset.hpp"
#include "har/eval.hpp"
#include "har/llm.hpp"
#include "har/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct Options {
    std::string dataset_manifest;
    std::string strategy = "proposed";
    int k = 3;
    std::string exemplars_path;
    std::string retrieval_text;
    std::string retrieval_file;
    std::string backend_spec = "mock:replay.jsonl";
    std::string model_id = "gpt-3.5-turbo-instruct";
    std::string out_dir = "out";
    std::string knowledge_path;
    std::string predictions_path;
    std::string cache_dir;
    int parallel = 4;
    bool inline_knowledge = false;
};

har::Strategy parse_strategy(const std::string& name) {
    if (name == "proposed") return har::Strategy::Proposed;
    if (name == "zero-shot") return har::Strategy::ZeroShot;
    if (name == "retrieval") return har::Strategy::RetrievalKnowledge;
    if (name == "few-shot") return har::Strategy::FewShot;
    throw CLI::ValidationError("--strategy",
                               "expected proposed|zero-shot|retrieval|few-shot, got " + name);
}

std::unique_ptr<har::Backend> make_backend(const Options& opt) {
    auto spec = opt.backend_spec;
    if (spec.rfind("mock:", 0) == 0) {
        auto path = spec.substr(5);
        return std::make_unique<har::ScriptedMockBackend>(
            har::ScriptedMockBackend::from_replay_file(path));
    }
    if (spec.rfind("http:", 0) == 0) {
        return std::make_unique<har::HttpBackend>(spec.substr(5));
    }
    throw CLI::ValidationError("--backend", "expected mock:<replay-file> or http:<base-url>");
}

std::optional<fs::path> resolve_cache_dir(const Options& opt) {
    if (!opt.cache_dir.empty()) return fs::path(opt.cache_dir);
    if (const char* env = std::getenv("HAR_CACHE_DIR")) return fs::path(env);
    return std::nullopt;
}

har::StrategyConfig build_config(const Options& opt, const har::Dataset& dataset) {
    har::StrategyConfig config;
    config.strategy = parse_strategy(opt.strategy);
    config.k = opt.k;
    config.max_parallel = opt.parallel;
    config.model_id = opt.model_id;
    if (config.strategy == har::Strategy::FewShot) {
        if (opt.exemplars_path.empty()) {
            throw CLI::ValidationError("--exemplars", "required for --strategy few-shot");
        }
        config.exemplars = har::load_exemplars(opt.exemplars_path, dataset);
    }
    if (config.strategy == har::Strategy::RetrievalKnowledge) {
        if (!opt.retrieval_file.empty()) {
            std::ifstream in(opt.retrieval_file, std::ios::binary);
            if (!in) throw har::ParseError("cannot open " + opt.retrieval_file);
            std::stringstream buf;
            buf << in.rdbuf();
            config.retrieval_text = buf.str();
        } else {
            config.retrieval_text = opt.retrieval_text;
        }
        if (har::trim(config.retrieval_text).empty()) {
            throw CLI::ValidationError("--retrieval-text",
                                       "required for --strategy retrieval");
        }
    }
    return config;
}

fs::path make_run_dir(const std::string& out_dir) {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);

    fs::path base = fs::path(out_dir);
    fs::create_directories(base);
    // append-only: never reuse an existing run directory
    for (int n = 0;; ++n) {
        auto candidate =
            base / ("run-" + std::string(stamp) + (n == 0 ? "" : "-" + std::to_string(n)));
        if (!fs::exists(candidate)) {
            fs::create_directories(candidate);
            return candidate;
        }
    }
}

void echo_config(const fs::path& path, const Options& opt) {
    std::ofstream out(path, std::ios::binary);
    out << "dataset = " << opt.dataset_manifest << "\n"
        << "strategy = " << opt.strategy << "\n"
        << "k = " << opt.k << "\n"
        << "exemplars = " << opt.exemplars_path << "\n"
        << "retrieval_text = " << opt.retrieval_text << "\n"
        << "retrieval_file = " << opt.retrieval_file << "\n"
        << "backend = " << opt.backend_spec << "\n"
        << "model = " << opt.model_id << "\n"
        << "out = " << opt.out_dir << "\n"
        << "cache = " << opt.cache_dir << "\n"
        << "parallel = " << opt.parallel << "\n";
}

int cmd_validate(const Options& opt) {
    auto manifest = har::load_manifest(opt.dataset_manifest);
    auto dataset = har::load_dataset(manifest);
    auto report = har::validate_dataset(dataset);
    for (const auto& v : report.violations) {
        std::cout << v.kind << " episode=" << v.episode_id << ": " << v.detail << "\n";
    }
    if (!report.ok()) return kExitDomain;
    std::cout << "ok: " << dataset.episodes.size() << " episodes, "
              << dataset.activities.size() << " activities, " << dataset.vocabulary.size()
              << " objects\n";
    return kExitOk;
}

int cmd_knowledge(const Options& opt) {
    auto dataset = har::load_dataset(har::load_manifest(opt.dataset_manifest));
    auto backend = make_backend(opt);
    auto config = build_config(opt, dataset);
    if (config.strategy != har::Strategy::Proposed) {
        std::cerr << "error: knowledge generation applies to --strategy proposed only\n";
        return kExitUsage;
    }

    har::Completer completer(*backend, resolve_cache_dir(opt));
    std::string raw;
    std::vector<har::ActivityPair> pairs;
    try {
        pairs = har::discover_confusable_pairs(completer, dataset, config, nullptr, &raw);
    } catch (const har::NoPairsParsed& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    }
    std::vector<har::DescriptionParseFailure> failures;
    auto kb = har::generate_activity_knowledge(completer, pairs, dataset, config, &failures);
    if (kb.empty()) {
        std::cerr << "error: knowledge base is empty\n";
        return kExitDomain;
    }

    fs::path out = opt.knowledge_path.empty() ? fs::path(opt.out_dir) / "knowledge.json"
                                              : fs::path(opt.knowledge_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    har::save_knowledge_artifact(out, pairs, kb);
    for (const auto& p : pairs) {
        std::cout << "pair: " << p.first.canonical << " / " << p.second.canonical << "\n";
    }
    for (const auto& f : failures) {
        std::cout << "warning: no description parsed for " << f.missing_activity << " (pair "
                  << f.pair.first.canonical << " / " << f.pair.second.canonical << ")\n";
    }
    std::cout << "knowledge written to " << out.string() << "\n";
    return kExitOk;
}

int cmd_classify(const Options& opt) {
    auto dataset = har::load_dataset(har::load_manifest(opt.dataset_manifest));
    auto backend = make_backend(opt);
    auto config = build_config(opt, dataset);

    std::optional<har::KnowledgeBase> knowledge;
    if (config.strategy == har::Strategy::Proposed && !opt.inline_knowledge) {
        if (opt.knowledge_path.empty()) {
            std::cerr << "error: --strategy proposed needs --knowledge <file> "
                         "(or --inline-knowledge to generate now)\n";
            return kExitUsage;
        }
        knowledge = har::load_knowledge_artifact(opt.knowledge_path, dataset).second;
    }

    auto record = har::run_experiment(*backend, dataset, config, resolve_cache_dir(opt),
                                      std::move(knowledge));
    fs::path out = opt.predictions_path.empty() ? fs::path(opt.out_dir) / "predictions.jsonl"
                                                : fs::path(opt.predictions_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    har::save_predictions(out, record.predictions, record.failures);

    long abstained = 0;
    for (const auto& p : record.predictions) {
        if (p.abstained()) ++abstained;
    }
    std::cout << "predicted: " << (record.predictions.size() - abstained)
              << " abstained: " << abstained << " failed: " << record.failures.size() << "\n";
    std::cout << "predictions written to " << out.string() << "\n";
    return kExitOk;
}

int cmd_eval(const Options& opt) {
    auto dataset = har::load_dataset(har::load_manifest(opt.dataset_manifest));
    auto [predictions, failures] = har::load_predictions(opt.predictions_path);
    auto metrics = har::score(predictions, failures, dataset);
    auto matrix = har::confusion(predictions, failures, dataset);

    fs::create_directories(opt.out_dir);
    har::write_metrics_file(fs::path(opt.out_dir) / "metrics.txt", metrics);
    har::write_confusion_csv(fs::path(opt.out_dir) / "confusion.csv", matrix);
    std::cout << "micro_f1 = " << har::format_percent(metrics.micro_f1) << "\n";
    return kExitOk;
}

int cmd_run(const Options& opt) {
    auto dataset = har::load_dataset(har::load_manifest(opt.dataset_manifest));
    auto report = har::validate_dataset(dataset);
    if (!report.ok()) {
        for (const auto& v : report.violations) {
            std::cerr << "validate: " << v.kind << " episode=" << v.episode_id << ": "
                      << v.detail << "\n";
        }
        return kExitDomain;
    }

    auto backend = make_backend(opt);
    auto config = build_config(opt, dataset);
    auto run_dir = make_run_dir(opt.out_dir);
    echo_config(run_dir / "config.txt", opt);

    har::ExperimentRecord record;
    try {
        record = har::run_experiment(*backend, dataset, config, resolve_cache_dir(opt));
    } catch (const har::ExperimentFailed& e) {
        std::cerr << "run: classify stage: " << e.what() << "\n";
        return kExitDomain;
    }

    if (config.strategy == har::Strategy::Proposed) {
        har::save_knowledge_artifact(run_dir / "knowledge.json", record.pairs,
                                     record.knowledge);
    }
    har::save_predictions(run_dir / "predictions.jsonl", record.predictions, record.failures);

    auto metrics = har::score(record.predictions, record.failures, dataset);
    auto matrix = har::confusion(record.predictions, record.failures, dataset);
    har::write_metrics_file(run_dir / "metrics.txt", metrics);
    har::write_confusion_csv(run_dir / "confusion.csv", matrix);

    std::cout << "run_dir: " << run_dir.string() << "\n";
    std::cout << "micro_f1 = " << har::format_percent(metrics.micro_f1) << "\n";
    std::cout << "predicted: " << metrics.n_predicted << " abstained: " << metrics.n_abstained
              << " failed: " << metrics.n_failed << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised activity recognition from object-use sequences via "
                 "two-stage LLM prompting"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "Read options from an INI file; keys live in a [<subcommand>] section "
                   "and explicit flags take precedence");

    Options opt;
    auto add_common = [&](CLI::App* cmd, bool needs_dataset = true) {
        cmd->fallthrough();
        auto* ds = cmd->add_option("--dataset", opt.dataset_manifest, "Dataset manifest file");
        if (needs_dataset) ds->required();
        cmd->add_option("--strategy", opt.strategy,
                        "proposed|zero-shot|retrieval|few-shot");
        cmd->add_option("--k", opt.k, "Confusable pairs to request in stage 1");
        cmd->add_option("--exemplars", opt.exemplars_path, "Exemplar file for few-shot");
        cmd->add_option("--retrieval-text", opt.retrieval_text,
                        "Knowledge statement for retrieval strategy");
        cmd->add_option("--retrieval-file", opt.retrieval_file,
                        "File holding the retrieval knowledge statement");
        cmd->add_option("--backend", opt.backend_spec,
                        "mock:<replay-file> or http:<base-url>");
        cmd->add_option("--model", opt.model_id, "Model id sent to the backend");
        cmd->add_option("--out", opt.out_dir, "Output directory");
        cmd->add_option("--cache", opt.cache_dir,
                        "Response cache directory (or HAR_CACHE_DIR)");
        cmd->add_option("--parallel", opt.parallel, "Max in-flight classification requests");
    };

    auto* validate = app.add_subcommand("validate", "Load a dataset and report violations");
    add_common(validate);

    auto* knowledge = app.add_subcommand("knowledge", "Run stage 1 and persist the knowledge artifact");
    add_common(knowledge);
    knowledge->add_option("--knowledge", opt.knowledge_path, "Knowledge artifact output path");

    auto* classify = app.add_subcommand("classify", "Classify all episodes and write predictions");
    add_common(classify);
    classify->add_option("--knowledge", opt.knowledge_path, "Knowledge artifact to load");
    classify->add_option("--predictions", opt.predictions_path, "Predictions output path");
    classify->add_flag("--inline-knowledge", opt.inline_knowledge,
                       "Generate knowledge in this invocation instead of loading it");

    auto* eval = app.add_subcommand("eval", "Score a predictions file against a dataset");
    add_common(eval);
    eval->add_option("--predictions", opt.predictions_path, "Predictions file to score")
        ->required();

    auto* run = app.add_subcommand("run", "validate + knowledge + classify + eval in one run directory");
    add_common(run);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (validate->parsed()) return cmd_validate(opt);
        if (knowledge->parsed()) return cmd_knowledge(opt);
        if (classify->parsed()) return cmd_classify(opt);
        if (eval->parsed()) return cmd_eval(opt);
        if (run->parsed()) return cmd_run(opt);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const har::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    }
    return kExitUsage;
}
