#pragma once

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace reflectqa {

enum class DatasetKind { FinQA, ConvFinQA, TATQA };

/// On-disk layouts understood by load_dataset. Canonical is this project's
/// own JSONL form (see write_canonical).
enum class DatasetFormat { FinQA, ConvFinQA, TATQA, Canonical };

std::string_view to_string(DatasetKind kind);    // "FinQA", "ConvFinQA", "TATQA"
std::string_view display_name(DatasetKind kind); // "FinQA", "ConvFinQA", "TAT-QA"
std::optional<DatasetKind> parse_dataset_kind(std::string_view text);
std::optional<DatasetFormat> parse_dataset_format(std::string_view text);

struct Table {
    std::vector<std::vector<std::string>> rows;  // first row is the header

    [[nodiscard]] bool empty() const { return rows.empty(); }
    [[nodiscard]] std::size_t column_count() const;
    /// Pads every row with empty cells up to the widest row.
    void pad();

    friend bool operator==(const Table&, const Table&) = default;
};

struct QuestionRecord {
    std::string id;
    DatasetKind dataset = DatasetKind::FinQA;
    std::vector<std::string> pre_text;
    std::vector<std::string> post_text;
    Table table;
    std::string question;
    std::vector<std::pair<std::string, std::string>> turn_history;  // ConvFinQA only
    std::string gold_answer;

    friend bool operator==(const QuestionRecord&, const QuestionRecord&) = default;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FileNotFound : public DatasetError {
public:
    explicit FileNotFound(const std::filesystem::path& path)
        : DatasetError("dataset file not found: " + path.string()) {}
};

class MalformedRecord : public DatasetError {
public:
    MalformedRecord(std::size_t index, std::string reason)
        : DatasetError("malformed record " + std::to_string(index) + ": " + reason),
          index_(index),
          reason_(std::move(reason)) {}

    [[nodiscard]] std::size_t index() const { return index_; }
    [[nodiscard]] const std::string& reason() const { return reason_; }

private:
    std::size_t index_;
    std::string reason_;
};

/// Loads every question in file order. The file may be a JSON array or
/// JSONL. Any record that cannot be converted or violates a record
/// invariant fails the whole load with MalformedRecord.
std::vector<QuestionRecord> load_dataset(const std::filesystem::path& path, DatasetFormat format);

/// Invariant violations of a record set (empty when valid).
std::vector<std::string> validate_records(std::span<const QuestionRecord> records);

/// Pipe-delimited rendering, one line per row, divider after the header.
/// "|", "\", newlines and carriage returns inside cells are backslash-escaped.
std::string linearize_table(const Table& table);

struct PromptContext {
    std::string context_text;
    std::string question_text;
};

/// Paragraphs before the table, the table, paragraphs after it, and for
/// ConvFinQA the prior turns as "Q: ..." / "A: ..." lines, separated by
/// blank lines. The question is returned separately.
PromptContext build_context(const QuestionRecord& record);

nlohmann::json to_json(const QuestionRecord& record);
QuestionRecord record_from_json(const nlohmann::json& json);

/// One canonical JSON object per line (sorted keys, UTF-8).
void write_canonical(std::span<const QuestionRecord> records, const std::filesystem::path& path);

}  // namespace reflectqa
