#pragma once

// Test-only helpers: temporary directories, synthetic datasets in the
// original source layouts, and synthetic question records.

#include "reflectqa/dataset.hpp"
#include "reflectqa/llm_backend.hpp"

#include <json.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace reflectqa::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& prefix = "reflectqa");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

/// `count` FinQA documents in the original layout (pre_text, post_text,
/// table, qa{question, answer, exe_ans}, id).
nlohmann::json finqa_documents(std::size_t count);
/// `count` ConvFinQA conversations (annotation.dialogue_break/exe_ans_list).
nlohmann::json convfinqa_documents(std::size_t count);
/// TAT-QA documents holding `count` questions in total.
nlohmann::json tatqa_documents(std::size_t count);

/// Records q0..q{n-1}; the gold answer of question i is i + 1.
std::vector<QuestionRecord> synthetic_records(std::size_t count, DatasetKind kind = DatasetKind::FinQA);

/// Which simulated agent a request is addressed to, judged by its system
/// prompt and turn count: "expert", "critic", "critic_extraction",
/// "critic_calculation" or "revision".
std::string agent_of(const CompletionRequest& request);

/// Responder playing every agent for `records`. The expert answers the gold
/// value for ids in `expert_correct` and a wrong value otherwise; critics
/// reply "<agent> feedback for <id>"; the revision answers the gold value for
/// ids in `revision_correct`.
ScriptedBackend::Responder simulated_agents(const std::vector<QuestionRecord>& records,
                                            std::set<std::string> expert_correct,
                                            std::set<std::string> revision_correct);

}  // namespace reflectqa::testing
