#pragma once

#include "reflectqa/answer_eval.hpp"
#include "reflectqa/dataset.hpp"
#include "reflectqa/llm_backend.hpp"
#include "reflectqa/prompts.hpp"
#include "reflectqa/setting.hpp"

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reflectqa {

struct TranscriptStep {
    std::string agent_name;
    CompletionRequest request;
    CompletionResult result;

    friend bool operator==(const TranscriptStep&, const TranscriptStep&) = default;
};

struct PipelineResult {
    std::string question_id;
    /// The setting actually executed. Questions that the reassessment mode
    /// kept out of the critic stage are recorded as Single.
    PipelineSetting setting = PipelineSetting::Single;
    std::string initial_answer;
    std::vector<std::string> reflections;  // R, or R1 then R2
    std::optional<std::string> revised_answer;
    std::vector<TranscriptStep> transcript;
    std::uint64_t total_prompt_tokens = 0;
    std::uint64_t total_completion_tokens = 0;
    bool tokens_estimated = false;
    /// Set when the question failed; the other fields hold whatever
    /// completed before the failure.
    std::optional<std::string> error;

    [[nodiscard]] bool failed() const { return error.has_value(); }

    friend bool operator==(const PipelineResult&, const PipelineResult&) = default;
};

/// A backend failure inside a pipeline, tagged with the question it hit.
class PipelineError : public std::runtime_error {
public:
    PipelineError(std::string question_id, const std::string& message, PipelineResult partial)
        : std::runtime_error(question_id + ": " + message),
          question_id_(std::move(question_id)),
          partial_(std::move(partial)) {}

    [[nodiscard]] const std::string& question_id() const { return question_id_; }
    /// Steps completed before the failure.
    [[nodiscard]] const PipelineResult& partial() const { return partial_; }

private:
    std::string question_id_;
    PipelineResult partial_;
};

PipelineResult run_single(Backend& backend, const QuestionRecord& record, const AgentSpec& expert);

PipelineResult run_two_agent(Backend& backend, const QuestionRecord& record, const AgentSpec& expert,
                             const AgentSpec& critic);

PipelineResult run_three_agent(Backend& backend, const QuestionRecord& record, const AgentSpec& expert,
                               const AgentSpec& critic_extraction, const AgentSpec& critic_calculation);

/// Runs the critic stage of `setting` on top of a finished single-agent
/// result, reusing its answer instead of asking the expert again.
PipelineResult reassess(Backend& backend, const QuestionRecord& record, PipelineResult single,
                        PipelineSetting setting, const AgentSpec& expert, const AgentSpec& critic,
                        const AgentSpec& critic_extraction, const AgentSpec& critic_calculation);

struct AgentTeam {
    AgentSpec expert;
    AgentSpec critic;
    AgentSpec critic_extraction;
    AgentSpec critic_calculation;

    /// All four agents from the registry on one model.
    static AgentTeam from_registry(const PromptRegistry& registry, const std::string& expert_model,
                                   const std::string& critic_model, double temperature = kDefaultTemperature,
                                   int max_tokens = kDefaultMaxTokens);
};

struct BatchOptions {
    PipelineSetting setting = PipelineSetting::Single;
    ReassessMode reassess = ReassessMode::Oracle;
    std::size_t concurrency = 4;
    MatchOptions match;
};

/// Called once per finished question, from worker threads but never
/// concurrently. `index` is the position in the input.
using ResultCallback = std::function<void(std::size_t index, const PipelineResult& result)>;

/// Runs every record through the configured setting. Under Oracle, each
/// question gets a single-agent run and only those it answers wrongly go
/// on to the critics. Under All every question runs the full setting;
/// under None only the single agent runs. Failures are recorded in the
/// result rather than thrown. Output order equals input order.
std::vector<PipelineResult> run_batch(Backend& backend, std::span<const QuestionRecord> records, const AgentTeam& team,
                                      const BatchOptions& options, const ResultCallback& on_result = {});

/// Scores a pipeline result: one Single-stage record, plus a Revised-stage
/// record when the critic stage ran or failed partway.
std::vector<EvalRecord> evaluate_result(const PipelineResult& result, const std::string& gold,
                                        const MatchOptions& options = {});

}  // namespace reflectqa
