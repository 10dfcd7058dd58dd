#pragma once

#include "reflectqa/answer_eval.hpp"
#include "reflectqa/dataset.hpp"
#include "reflectqa/orchestrator.hpp"
#include "reflectqa/setting.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reflectqa {

/// Files of one run: `{root}/{run_id}/manifest.json`, `transcripts.jsonl`,
/// `evals.jsonl`, `report.json`.
struct RunPaths {
    std::filesystem::path dir;

    [[nodiscard]] std::filesystem::path manifest() const { return dir / "manifest.json"; }
    [[nodiscard]] std::filesystem::path transcripts() const { return dir / "transcripts.jsonl"; }
    [[nodiscard]] std::filesystem::path evals() const { return dir / "evals.jsonl"; }
    [[nodiscard]] std::filesystem::path report() const { return dir / "report.json"; }
};

struct AgentManifest {
    std::string name;
    std::string model;
    double temperature = 0.0;
    int max_tokens = 0;
    std::string prompt_hash;

    friend bool operator==(const AgentManifest&, const AgentManifest&) = default;
};

struct RunManifest {
    std::string run_id;
    std::string dataset;       // "FinQA", "ConvFinQA" or "TATQA"
    std::string dataset_path;
    /// Hash of the loaded records, so a different file under the same path
    /// is noticed on resume.
    std::string dataset_hash;
    PipelineSetting setting = PipelineSetting::Single;
    ReassessMode reassess = ReassessMode::Oracle;
    bool strict_scale = false;
    std::string prompt_hash;
    std::vector<AgentManifest> agents;
    std::set<std::string> completed_ids;
    std::map<std::string, std::string> failed_ids;  // id -> error summary
    std::string started_at;
    std::optional<std::string> finished_at;
    std::map<std::string, ModelPrice> prices;  // model -> price per 1k tokens

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& json);

RunManifest read_manifest(const std::filesystem::path& path);
/// Writes to a temporary file and renames it into place.
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

/// Hash over the canonical form of the records.
std::string dataset_hash(std::span<const QuestionRecord> records);

/// A stored run cannot be continued with the current configuration.
class ConfigMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws ConfigMismatch when `saved` and `current` differ in dataset,
/// setting, reassessment mode, scale strictness, prompts or agent models.
void check_resumable(const RunManifest& saved, const RunManifest& current);

/// Records still to run: those in neither completed_ids nor failed_ids,
/// plus the failed ones when `retry_failed`. Input order is kept.
std::vector<QuestionRecord> resume_run(const RunManifest& manifest, std::span<const QuestionRecord> records,
                                       bool retry_failed = false);
/// As above, after check_resumable(manifest, current).
std::vector<QuestionRecord> resume_run(const RunManifest& manifest, const RunManifest& current,
                                       std::span<const QuestionRecord> records, bool retry_failed = false);

/// Serializes whole-line appends to one JSONL file. A line is either
/// written completely or, on an I/O error, truncated away again.
class JsonlAppender {
public:
    explicit JsonlAppender(std::filesystem::path path);
    ~JsonlAppender();
    JsonlAppender(const JsonlAppender&) = delete;
    JsonlAppender& operator=(const JsonlAppender&) = delete;

    void append(const nlohmann::json& value);
    void append_all(std::span<const nlohmann::json> values);

private:
    void write_locked(const std::string& text);

    std::filesystem::path path_;
    std::FILE* file_ = nullptr;
    std::mutex mutex_;
};

nlohmann::json to_json(const TranscriptStep& step);
TranscriptStep transcript_step_from_json(const nlohmann::json& json);
nlohmann::json to_json(const PipelineResult& result);
PipelineResult pipeline_result_from_json(const nlohmann::json& json);

/// Appends each result as one line; returns the number written.
std::size_t write_transcripts(std::span<const PipelineResult> results, const std::filesystem::path& path);
std::vector<PipelineResult> read_transcripts(const std::filesystem::path& path);

nlohmann::json to_json(const ExtractedAnswer& answer);
ExtractedAnswer extracted_answer_from_json(const nlohmann::json& json);
nlohmann::json to_json(const EvalRecord& record);
EvalRecord eval_record_from_json(const nlohmann::json& json);

/// Throws std::runtime_error naming the line on corrupt input.
std::vector<EvalRecord> read_evals(const std::filesystem::path& path);
void write_evals(std::span<const EvalRecord> records, const std::filesystem::path& path);

/// Keeps the last attempt of each question (an attempt starts at its
/// Single-stage record) and orders questions by `order`; questions absent
/// from `order` follow in first-seen order.
std::vector<EvalRecord> canonicalize_evals(std::span<const EvalRecord> records,
                                           std::span<const std::string> order);

nlohmann::json to_json(const ScoreReport& report);
ScoreReport score_report_from_json(const nlohmann::json& json);
/// Stable text form: two-space indentation, sorted keys, trailing newline.
std::string serialize_report(const ScoreReport& report);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

std::string utc_now_iso8601();

}  // namespace reflectqa
