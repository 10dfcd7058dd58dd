#pragma once

#include "reflectqa/dataset.hpp"
#include "reflectqa/llm_backend.hpp"
#include "reflectqa/setting.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace reflectqa {

enum class BackendKind { Live, Scripted, Cached };

std::string_view to_string(BackendKind kind);
std::optional<BackendKind> parse_backend_kind(std::string_view text);

inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitPartial = 2;

struct RunConfig {
    std::filesystem::path dataset_path;
    DatasetFormat format = DatasetFormat::FinQA;
    PipelineSetting setting = PipelineSetting::Single;
    ReassessMode reassess = ReassessMode::Oracle;

    BackendKind backend = BackendKind::Live;
    std::filesystem::path script_path;
    std::string endpoint;  // falls back to REFLECTQA_ENDPOINT
    std::string api_key;   // falls back to REFLECTQA_API_KEY
    std::string model = "llama3-8b";
    std::string critic_model;  // empty: same as model
    double temperature = kDefaultTemperature;
    int max_tokens = kDefaultMaxTokens;
    double requests_per_second = 0.0;
    int max_attempts = 3;
    int base_delay_ms = 1000;

    std::size_t concurrency = 4;
    std::filesystem::path out_dir = "runs";
    std::string run_id;  // empty: derived from dataset, setting and mode
    bool resume = false;
    bool retry_failed = false;
    std::optional<std::size_t> limit;

    std::filesystem::path prompts_path;
    bool strict_paper_prompts = false;
    bool strict_scale = false;

    std::filesystem::path cache_dir = ".reflectqa-cache";
    bool use_cache = true;
    std::filesystem::path prices_path;

    /// Stop after this many questions, leaving the run unfinished.
    std::optional<std::size_t> stop_after;
};

/// Runs the configured pipeline and writes the run directory. When
/// `backend` is given it replaces the backend named in the config (the
/// cache and retry layers still apply).
int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err, Backend* backend = nullptr);

/// Rescores `run_dir` from its evals.jsonl and rewrites report.json.
int cmd_score(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err);

/// Merges report.json files into one table; writes JSON to `json_path`
/// when given.
int cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& json_path,
               std::ostream& out, std::ostream& err);

int cmd_validate_data(const std::filesystem::path& path, DatasetFormat format, std::optional<std::size_t> expected,
                      std::ostream& out, std::ostream& err);

/// Parses arguments and dispatches to a subcommand.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace reflectqa
