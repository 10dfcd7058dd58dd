#pragma once

#include "reflectqa/llm_backend.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace reflectqa {

enum class AgentRole { Expert, CriticGeneral, CriticExtraction, CriticCalculation };

inline constexpr std::array<AgentRole, 4> kAllAgentRoles{AgentRole::Expert, AgentRole::CriticGeneral,
                                                        AgentRole::CriticExtraction, AgentRole::CriticCalculation};

/// Role keys used in prompt override files: "expert", "critic",
/// "critic_extraction", "critic_calculation". These double as agent names
/// in transcripts.
std::string_view to_string(AgentRole role);
std::optional<AgentRole> parse_agent_role(std::string_view text);

struct AgentSpec {
    std::string name;
    AgentRole role = AgentRole::Expert;
    std::string system_prompt;
    std::string model;
    double temperature = kDefaultTemperature;
    int max_tokens = kDefaultMaxTokens;
};

/// Sentence appended to the expert prompt so the final answer can be located.
inline constexpr std::string_view kAnswerMarkerInstruction =
    "End your response with a line of the form: Final Answer: <value>";

class PromptRegistry {
public:
    /// Built-in prompts. Unless `strict_paper_prompts`, the expert prompt
    /// ends with the answer-marker instruction.
    explicit PromptRegistry(bool strict_paper_prompts = false);

    /// Built-in prompts with overrides from a JSON object of role key to
    /// prompt text. Unknown keys and non-string or empty values are errors.
    static PromptRegistry load(const std::filesystem::path& path, bool strict_paper_prompts = false);

    /// The full prompt set as a JSON object of role key to prompt text.
    [[nodiscard]] nlohmann::json to_json() const;
    void save(const std::filesystem::path& path) const;

    [[nodiscard]] const std::string& system_prompt(AgentRole role) const;
    void set_system_prompt(AgentRole role, std::string prompt);

    /// SHA-256 over the JSON form; changes whenever any prompt changes.
    [[nodiscard]] std::string prompt_hash() const;
    /// Hash of a single role's prompt.
    [[nodiscard]] std::string prompt_hash(AgentRole role) const;

    [[nodiscard]] AgentSpec agent(AgentRole role, std::string model, double temperature = kDefaultTemperature,
                                  int max_tokens = kDefaultMaxTokens) const;

    /// The prompts exactly as published, without the marker instruction.
    static std::string_view default_prompt(AgentRole role);

private:
    std::array<std::string, 4> prompts_;
};

std::string render_expert_query(std::string_view context_text, std::string_view question_text);

std::string render_critic_query(std::string_view context_text, std::string_view question_text,
                                std::string_view expert_answer,
                                std::optional<std::string_view> prior_feedback = std::nullopt);

/// Throws std::invalid_argument on an empty list.
std::string render_revision_query(std::span<const std::string> feedback_messages);

}  // namespace reflectqa
