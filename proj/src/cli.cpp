#include "reflectqa/cli.hpp"

#include "reflectqa/answer_eval.hpp"
#include "reflectqa/http_backend.hpp"
#include "reflectqa/orchestrator.hpp"
#include "reflectqa/persistence.hpp"
#include "reflectqa/prompts.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>

namespace reflectqa {

using nlohmann::json;

std::string_view to_string(BackendKind kind) {
    switch (kind) {
    case BackendKind::Live: return "live";
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Cached: return "cached";
    }
    return "live";
}

std::optional<BackendKind> parse_backend_kind(std::string_view text) {
    for (auto k : {BackendKind::Live, BackendKind::Scripted, BackendKind::Cached}) {
        if (to_string(k) == text) return k;
    }
    return std::nullopt;
}

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    if (!fallback.empty()) return fallback;
    const char* value = std::getenv(name);
    return value == nullptr ? std::string() : std::string(value);
}

std::string dataset_name(std::span<const QuestionRecord> records, DatasetFormat format) {
    if (!records.empty()) return std::string(to_string(records.front().dataset));
    switch (format) {
    case DatasetFormat::FinQA: return "FinQA";
    case DatasetFormat::ConvFinQA: return "ConvFinQA";
    case DatasetFormat::TATQA: return "TATQA";
    case DatasetFormat::Canonical: break;
    }
    return "unknown";
}

std::string report_dataset_name(const std::string& manifest_dataset) {
    const auto kind = parse_dataset_kind(manifest_dataset);
    return kind ? std::string(display_name(*kind)) : manifest_dataset;
}

std::map<std::string, ModelPrice> load_prices(const std::filesystem::path& path) {
    std::map<std::string, ModelPrice> prices;
    if (path.empty()) return prices;
    const json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw std::runtime_error("price table " + path.string() + " is not a JSON object");
    }
    for (const auto& [model, price] : j.items()) {
        prices[model] = {price.at("prompt_per_1k").get<double>(), price.at("completion_per_1k").get<double>()};
    }
    return prices;
}

std::optional<ModelPrice> price_for(const RunManifest& manifest) {
    if (manifest.agents.empty()) return std::nullopt;
    const auto it = manifest.prices.find(manifest.agents.front().model);
    if (it == manifest.prices.end()) return std::nullopt;
    return it->second;
}

ScoreReport report_for(const RunManifest& manifest, std::span<const EvalRecord> evals) {
    const std::string model = manifest.agents.empty() ? std::string() : manifest.agents.front().model;
    return build_score_report(report_dataset_name(manifest.dataset), model, manifest.setting, manifest.reassess,
                              evals, price_for(manifest));
}

std::string default_run_id(const std::string& dataset, const RunConfig& config) {
    std::string id = dataset + "-" + std::string(to_string(config.setting)) + "-" +
                     std::string(to_string(config.reassess));
    for (auto& c : id) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return id;
}

// The agents a setting actually calls.
std::vector<const AgentSpec*> agents_in_use(const AgentTeam& team, PipelineSetting setting) {
    switch (setting) {
    case PipelineSetting::Single: return {&team.expert};
    case PipelineSetting::TwoAgent: return {&team.expert, &team.critic};
    case PipelineSetting::ThreeAgent: return {&team.expert, &team.critic_extraction, &team.critic_calculation};
    }
    return {&team.expert};
}

}  // namespace

int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err, Backend* backend) {
    try {
        // Configuration checks come first so that nothing is sent on a bad config.
        std::unique_ptr<Backend> base;
        if (backend == nullptr) {
            switch (config.backend) {
            case BackendKind::Live: {
                const std::string endpoint = env_or("REFLECTQA_ENDPOINT", config.endpoint);
                const std::string key = env_or("REFLECTQA_API_KEY", config.api_key);
                if (endpoint.empty()) {
                    err << "error: live backend needs --endpoint or REFLECTQA_ENDPOINT\n";
                    return kExitFatal;
                }
                if (key.empty()) {
                    err << "error: live backend needs a credential in REFLECTQA_API_KEY\n";
                    return kExitFatal;
                }
                base = std::make_unique<HttpBackend>(
                    HttpBackendConfig{endpoint, key, std::chrono::seconds(120), config.requests_per_second});
                break;
            }
            case BackendKind::Scripted:
                if (config.script_path.empty()) {
                    err << "error: scripted backend needs --script\n";
                    return kExitFatal;
                }
                base = ScriptedBackend::from_file(config.script_path);
                break;
            case BackendKind::Cached:
                break;
            }
            backend = base.get();
        }
        if (config.concurrency == 0) {
            err << "error: --concurrency must be at least 1\n";
            return kExitFatal;
        }

        auto records = load_dataset(config.dataset_path, config.format);
        if (config.limit && *config.limit < records.size()) records.resize(*config.limit);

        const PromptRegistry registry = config.prompts_path.empty()
                                            ? PromptRegistry(config.strict_paper_prompts)
                                            : PromptRegistry::load(config.prompts_path, config.strict_paper_prompts);
        const std::string critic_model = config.critic_model.empty() ? config.model : config.critic_model;
        const AgentTeam team =
            AgentTeam::from_registry(registry, config.model, critic_model, config.temperature, config.max_tokens);

        RunManifest manifest;
        manifest.dataset = dataset_name(records, config.format);
        manifest.run_id = config.run_id.empty() ? default_run_id(manifest.dataset, config) : config.run_id;
        manifest.dataset_path = config.dataset_path.string();
        manifest.dataset_hash = dataset_hash(records);
        manifest.setting = config.setting;
        manifest.reassess = config.reassess;
        manifest.strict_scale = config.strict_scale;
        manifest.prompt_hash = registry.prompt_hash();
        for (const AgentSpec* agent : agents_in_use(team, config.setting)) {
            manifest.agents.push_back({agent->name, agent->model, agent->temperature, agent->max_tokens,
                                       registry.prompt_hash(agent->role)});
        }
        manifest.prices = load_prices(config.prices_path);
        manifest.started_at = utc_now_iso8601();

        const RunPaths paths{config.out_dir / manifest.run_id};
        std::vector<QuestionRecord> todo = records;
        if (std::filesystem::exists(paths.manifest())) {
            if (!config.resume) {
                err << "error: run " << paths.dir.string() << " already exists; pass --resume or a new --run-id\n";
                return kExitFatal;
            }
            const RunManifest saved = read_manifest(paths.manifest());
            todo = resume_run(saved, manifest, records, config.retry_failed);
            manifest.completed_ids = saved.completed_ids;
            manifest.failed_ids = saved.failed_ids;
            manifest.started_at = saved.started_at;
            if (config.retry_failed) {
                for (const auto& r : todo) manifest.failed_ids.erase(r.id);
            }
            out << "resuming " << manifest.run_id << ": " << todo.size() << " of " << records.size()
                << " questions to run\n";
        }
        std::filesystem::create_directories(paths.dir);
        write_manifest(manifest, paths.manifest());

        if (config.stop_after && *config.stop_after < todo.size()) todo.resize(*config.stop_after);

        std::unique_ptr<Backend> cache;
        Backend* inner = backend;
        RetryingBackend retrying(inner, RetryPolicy{config.max_attempts, std::chrono::milliseconds(config.base_delay_ms), 2.0});
        Backend* stack = inner != nullptr ? static_cast<Backend*>(&retrying) : nullptr;
        if (config.backend == BackendKind::Cached && base == nullptr && inner == nullptr) {
            cache = std::make_unique<CachingBackend>(nullptr, config.cache_dir, CachingBackend::Mode::ReadOnly);
            stack = cache.get();
        } else if (config.use_cache) {
            cache = std::make_unique<CachingBackend>(stack, config.cache_dir);
            stack = cache.get();
        }

        JsonlAppender transcripts(paths.transcripts());
        JsonlAppender evals(paths.evals());
        const MatchOptions match{config.strict_scale};
        std::map<std::string, const QuestionRecord*> by_id;
        for (const auto& r : records) by_id[r.id] = &r;

        BatchOptions options{config.setting, config.reassess, config.concurrency, match};
        std::size_t done = 0;
        run_batch(*stack, todo, team, options, [&](std::size_t, const PipelineResult& result) {
            transcripts.append(to_json(result));
            std::vector<json> lines;
            for (const auto& e : evaluate_result(result, by_id.at(result.question_id)->gold_answer, match)) {
                lines.push_back(to_json(e));
            }
            evals.append_all(lines);
            if (result.failed()) {
                manifest.failed_ids[result.question_id] = *result.error;
                manifest.completed_ids.erase(result.question_id);
                err << "warning: " << result.question_id << " failed: " << *result.error << "\n";
            } else {
                manifest.completed_ids.insert(result.question_id);
                manifest.failed_ids.erase(result.question_id);
            }
            write_manifest(manifest, paths.manifest());
            ++done;
        });

        if (config.stop_after && manifest.completed_ids.size() + manifest.failed_ids.size() < records.size()) {
            out << "stopped after " << done << " questions; resume with --resume\n";
            return kExitOk;
        }

        std::vector<std::string> order;
        order.reserve(records.size());
        for (const auto& r : records) order.push_back(r.id);
        const auto canonical = canonicalize_evals(read_evals(paths.evals()), order);
        write_evals(canonical, paths.evals());

        const ScoreReport report = report_for(manifest, canonical);
        write_file_atomic(paths.report(), serialize_report(report));
        manifest.finished_at = utc_now_iso8601();
        write_manifest(manifest, paths.manifest());

        out << render_score_table(std::span<const ScoreReport>(&report, 1));
        out << "run directory: " << paths.dir.string() << "\n";
        if (!manifest.failed_ids.empty()) {
            err << manifest.failed_ids.size() << " of " << records.size() << " questions failed\n";
            return kExitPartial;
        }
        return kExitOk;
    } catch (const ConfigMismatch& e) {
        err << "error: cannot resume: " << e.what() << "\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
    }
    return kExitFatal;
}

int cmd_score(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err) {
    try {
        const RunPaths paths{run_dir};
        if (!std::filesystem::exists(paths.evals())) {
            err << "error: " << paths.evals().string() << " not found\n";
            return kExitFatal;
        }
        const RunManifest manifest = read_manifest(paths.manifest());
        const auto evals = read_evals(paths.evals());
        if (evals.empty()) {
            err << "warning: " << paths.evals().string() << " holds no records; scoring 0 questions\n";
        }
        const ScoreReport report = report_for(manifest, evals);
        const std::string text = serialize_report(report);
        write_file_atomic(paths.report(), text);
        out << text;
        return kExitOk;
    } catch (const OverlapViolation& e) {
        err << "error: OverlapViolation: " << e.what() << "\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
    }
    return kExitFatal;
}

int cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& json_path,
               std::ostream& out, std::ostream& err) {
    try {
        std::vector<ScoreReport> reports;
        for (const auto& dir : run_dirs) {
            const RunPaths paths{dir};
            const json j = json::parse(read_file(paths.report()), nullptr, false);
            if (j.is_discarded()) {
                err << "error: " << paths.report().string() << " is not valid JSON\n";
                return kExitFatal;
            }
            reports.push_back(score_report_from_json(j));
        }
        std::set<std::string> models;
        for (const auto& r : reports) models.insert(r.model);
        if (models.size() > 1) {
            err << "warning: reports mix " << models.size() << " models; adding a model column\n";
        }
        const std::string table = render_score_table(reports);
        out << table;
        if (!json_path.empty()) {
            json doc{{"reports", json::array()}, {"table", table}};
            for (const auto& r : reports) doc["reports"].push_back(to_json(r));
            write_file_atomic(json_path, doc.dump(2) + "\n");
        }
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
    }
    return kExitFatal;
}

int cmd_validate_data(const std::filesystem::path& path, DatasetFormat format, std::optional<std::size_t> expected,
                      std::ostream& out, std::ostream& err) {
    try {
        const auto records = load_dataset(path, format);
        const auto violations = validate_records(records);
        out << path.string() << ": " << records.size() << " records, " << violations.size()
            << " invariant violations\n";
        for (const auto& v : violations) err << "  " << v << "\n";
        if (expected && *expected != records.size()) {
            err << "error: expected " << *expected << " records, found " << records.size() << "\n";
            return kExitFatal;
        }
        return violations.empty() ? kExitOk : kExitFatal;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
    }
    return kExitFatal;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-agent financial question answering and evaluation"};
    app.require_subcommand(1);

    const std::map<std::string, DatasetFormat> formats{{"finqa", DatasetFormat::FinQA},
                                                        {"convfinqa", DatasetFormat::ConvFinQA},
                                                        {"tatqa", DatasetFormat::TATQA},
                                                        {"canonical", DatasetFormat::Canonical}};
    const std::map<std::string, PipelineSetting> settings{{"single", PipelineSetting::Single},
                                                           {"two", PipelineSetting::TwoAgent},
                                                           {"three", PipelineSetting::ThreeAgent}};
    const std::map<std::string, ReassessMode> modes{
        {"oracle", ReassessMode::Oracle}, {"all", ReassessMode::All}, {"none", ReassessMode::None}};
    const std::map<std::string, BackendKind> backends{
        {"live", BackendKind::Live}, {"scripted", BackendKind::Scripted}, {"cached", BackendKind::Cached}};

    RunConfig config;
    std::string format_name = "finqa";
    std::string setting_name = "single";
    std::string reassess_name = "oracle";
    std::string backend_name = "live";
    std::size_t limit = 0;
    std::size_t stop_after = 0;
    bool no_cache = false;
    auto* run = app.add_subcommand("run", "Run a pipeline over a dataset");
    run->add_option("dataset", config.dataset_path, "Dataset file")->required()->check(CLI::ExistingFile);
    run->add_option("--format", format_name, "Dataset layout")
        ->check(CLI::IsMember(formats, CLI::ignore_case))
        ->capture_default_str();
    run->add_option("--setting", setting_name, "Pipeline setting")
        ->check(CLI::IsMember(settings, CLI::ignore_case))
        ->capture_default_str();
    run->add_option("--reassess", reassess_name, "Which questions reach the critics")
        ->check(CLI::IsMember(modes, CLI::ignore_case))
        ->capture_default_str();
    run->add_option("--backend", backend_name, "Completion backend")
        ->check(CLI::IsMember(backends, CLI::ignore_case))
        ->capture_default_str();
    run->add_option("--script", config.script_path, "Script file for the scripted backend")->check(CLI::ExistingFile);
    run->add_option("--endpoint", config.endpoint, "Base URL of an OpenAI-compatible endpoint");
    run->add_option("--model", config.model, "Expert model")->capture_default_str();
    run->add_option("--critic-model", config.critic_model, "Critic model (default: --model)");
    run->add_option("--temperature", config.temperature, "Sampling temperature")
        ->check(CLI::Range(0.0, 2.0))
        ->capture_default_str();
    run->add_option("--max-tokens", config.max_tokens, "Completion token limit")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    run->add_option("--rps", config.requests_per_second, "Live requests per second (0: unlimited)");
    run->add_option("--max-attempts", config.max_attempts, "Attempts per request")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    run->add_option("--base-delay-ms", config.base_delay_ms, "First retry delay")->capture_default_str();
    run->add_option("--concurrency", config.concurrency, "Questions in flight")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    run->add_option("--out", config.out_dir, "Directory holding run directories")->capture_default_str();
    run->add_option("--run-id", config.run_id, "Run directory name");
    run->add_flag("--resume", config.resume, "Continue an existing run");
    run->add_flag("--retry-failed", config.retry_failed, "With --resume, re-run failed questions");
    run->add_option("--limit", limit, "Only the first N questions");
    run->add_option("--prompts", config.prompts_path, "Prompt override file")->check(CLI::ExistingFile);
    run->add_flag("--strict-paper-prompts", config.strict_paper_prompts, "Do not append the answer-marker line");
    run->add_flag("--strict-scale", config.strict_scale, "Disable percent and magnitude-word dualities");
    run->add_option("--cache-dir", config.cache_dir, "Response cache directory")->capture_default_str();
    run->add_flag("--no-cache", no_cache, "Do not read or write the response cache");
    run->add_option("--prices", config.prices_path, "Price table: {model: {prompt_per_1k, completion_per_1k}}")
        ->check(CLI::ExistingFile);
    run->add_option("--stop-after", stop_after)->group("");

    std::filesystem::path score_dir;
    auto* score = app.add_subcommand("score", "Recompute report.json from evals.jsonl");
    score->add_option("run_dir", score_dir, "Run directory")->required();

    std::vector<std::filesystem::path> report_dirs;
    std::filesystem::path report_json;
    auto* report = app.add_subcommand("report", "Merge run reports into one table");
    report->add_option("run_dirs", report_dirs, "Run directories")->required();
    report->add_option("--json", report_json, "Also write the merged reports as JSON");

    std::filesystem::path validate_path;
    std::string validate_format = "finqa";
    std::size_t expected = 0;
    auto* validate = app.add_subcommand("validate-data", "Load a dataset and check its records");
    validate->add_option("dataset", validate_path, "Dataset file")->required();
    validate->add_option("--format", validate_format, "Dataset layout")
        ->check(CLI::IsMember(formats, CLI::ignore_case))
        ->capture_default_str();
    auto* expect_option = validate->add_option("--expect", expected, "Expected record count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitFatal;
    }

    const auto lower = [](std::string text) {
        for (auto& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return text;
    };
    if (run->parsed()) {
        config.format = formats.at(lower(format_name));
        config.setting = settings.at(lower(setting_name));
        config.reassess = modes.at(lower(reassess_name));
        config.backend = backends.at(lower(backend_name));
        config.use_cache = !no_cache;
        if (run->count("--limit") > 0) config.limit = limit;
        if (run->count("--stop-after") > 0) config.stop_after = stop_after;
        if (config.retry_failed && !config.resume) {
            err << "error: --retry-failed requires --resume\n";
            return kExitFatal;
        }
        return cmd_run(config, out, err);
    }
    if (score->parsed()) return cmd_score(score_dir, out, err);
    if (report->parsed()) return cmd_report(report_dirs, report_json, out, err);
    if (validate->parsed()) {
        return cmd_validate_data(validate_path, formats.at(lower(validate_format)),
                                 expect_option->count() > 0 ? std::optional<std::size_t>(expected) : std::nullopt, out,
                                 err);
    }
    return kExitFatal;
}

}  // namespace reflectqa
