#pragma once

#include "reflectqa/decimal.hpp"
#include "reflectqa/setting.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace reflectqa {

enum class AnswerKind { Numeric, Text };

/// Magnitude or unit word attached to a number.
enum class Scale { Unit, Percent, Thousand, Million, Billion };

std::string_view to_string(AnswerKind kind);
std::string_view to_string(Scale scale);
std::optional<AnswerKind> parse_answer_kind(std::string_view text);
std::optional<Scale> parse_scale(std::string_view text);

/// Power of ten that converts a value written with `scale` into plain units
/// (Percent → -2, Million → 6).
int scale_exponent(Scale scale);

struct ExtractedAnswer {
    AnswerKind kind = AnswerKind::Text;
    Decimal value;            // meaningful for Numeric only
    Scale scale = Scale::Unit;
    std::string raw_span;     // substring of the text it came from

    friend bool operator==(const ExtractedAnswer&, const ExtractedAnswer&) = default;
};

/// Finds the first number token in `text` ("$ (1,210) million", "-4.4%").
std::optional<ExtractedAnswer> find_first_number(std::string_view text);
/// Finds the last number token in `text`.
std::optional<ExtractedAnswer> find_last_number(std::string_view text);

/// Locates the final answer in free-form agent output.
///
/// Tried in order: the last "Final Answer:" line (markdown emphasis
/// tolerated), the last number in the text, then the last non-empty line as
/// Text. Never fails.
ExtractedAnswer extract_answer(std::string_view text);

/// Parses a gold label. Numeric when the label is a single number token
/// (optionally with currency and scale words), Text otherwise.
ExtractedAnswer parse_gold(std::string_view gold);

/// Canonical string form; parse_gold(render(x)) == x for Numeric x.
std::string render(const ExtractedAnswer& answer);

struct MatchOptions {
    /// Disables percent↔decimal and magnitude-word reconciliation.
    bool strict_scale = false;
};

/// Exact Match with round-to-gold tolerance: a numeric prediction matches
/// when |p - g| <= max(5·10^-(d+1), 1e-6·|g|), d being the gold's decimal
/// places. Text falls back to case-insensitive, punctuation-free equality.
bool exact_match(const ExtractedAnswer& predicted, std::string_view gold, const MatchOptions& options = {});

/// Lowercase, punctuation stripped, whitespace collapsed.
std::string normalize_text(std::string_view text);

enum class EvalStage { Single, Revised };

std::string_view to_string(EvalStage stage);
std::optional<EvalStage> parse_eval_stage(std::string_view text);

struct EvalRecord {
    std::string question_id;
    EvalStage stage = EvalStage::Single;
    ExtractedAnswer predicted;
    std::string gold;
    bool correct = false;
    /// Tokens spent producing this stage's answer.
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    bool tokens_estimated = false;
    /// Set when the question failed; such records are never correct.
    std::optional<std::string> error;

    friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

/// Extracts the answer from `answer_text` and scores it against `gold`.
EvalRecord evaluate(std::string question_id, EvalStage stage, std::string_view answer_text, std::string gold,
                    const MatchOptions& options = {});

/// A revised record references a question the single agent already solved.
class OverlapViolation : public std::runtime_error {
public:
    explicit OverlapViolation(const std::string& question_id)
        : std::runtime_error("revised record for single-correct question " + question_id), question_id_(question_id) {}
    [[nodiscard]] const std::string& question_id() const { return question_id_; }

private:
    std::string question_id_;
};

/// 100·correct/total rounded half-up to two decimals; 0 when total is 0.
double em_percentage(std::size_t correct, std::size_t total);
/// Difference of two percentages at two-decimal precision.
double compute_gain(double multi_em, double single_em);

struct CombinedScore {
    std::size_t total = 0;
    std::size_t single_correct = 0;
    std::size_t recovered = 0;        // wrong at the single stage, right after revision
    std::size_t combined_correct = 0;
    double single_em = 0.0;
    double combined_em = 0.0;
};

/// Single-agent correct answers plus the ones the critic stage recovered,
/// over every question in `single`. With `oracle_gated`, a revised record
/// for a single-correct question raises OverlapViolation.
CombinedScore score_combined(std::span<const EvalRecord> single, std::span<const EvalRecord> revised,
                             bool oracle_gated = true);

struct CostSummary {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    bool estimated = false;
    std::optional<double> spend_usd;  // absent without a price for the model
};

/// Per-run scores: one dataset, one model, one pipeline setting.
struct ScoreReport {
    std::string dataset;
    std::string model;
    PipelineSetting setting = PipelineSetting::Single;
    ReassessMode reassess = ReassessMode::Oracle;
    std::size_t total = 0;
    std::size_t failed = 0;
    std::size_t single_correct = 0;
    std::size_t setting_correct = 0;
    double single_em = 0.0;
    double setting_em = 0.0;
    double gain = 0.0;
    CostSummary cost;
};

struct ModelPrice {
    double prompt_per_1k = 0.0;
    double completion_per_1k = 0.0;

    friend bool operator==(const ModelPrice&, const ModelPrice&) = default;
};

/// Scores one run. Oracle mode combines single and revised stages; All
/// mode scores the final answer of each question; None scores the single
/// stage only. Questions without a single record count as incorrect.
ScoreReport build_score_report(std::string dataset, std::string model, PipelineSetting setting,
                               ReassessMode reassess, std::span<const EvalRecord> evals,
                               std::optional<ModelPrice> price = std::nullopt);

/// Aligned text table: settings as rows, datasets as columns (FinQA,
/// ConvFinQA, TAT-QA order), gain row last, one block per model.
std::string render_score_table(std::span<const ScoreReport> reports);

}  // namespace reflectqa
