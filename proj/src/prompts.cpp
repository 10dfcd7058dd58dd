#include "reflectqa/prompts.hpp"

#include "reflectqa/hashing.hpp"

#include <fstream>
#include <stdexcept>

namespace reflectqa {

using nlohmann::json;

namespace {

constexpr std::string_view kExpertPrompt =
    "You are a financial analysis agent specializing in interpreting earnings reports and financial statements. "
    "Your task is to answer specific financial questions based on the given context from financial reports.\n"
    "\n"
    "When answering questions:\n"
    "- Carefully read and analyze the provided financial information.\n"
    "- Extract the relevant data points needed to answer the question from the table or text provided.\n"
    "- Perform any necessary calculations.\n"
    "- Remember to be precise in your calculations and clear in your step-by-step explanation. Maintain a "
    "professional and objective tone in your response.\n"
    "- Use only the information provided in the context. Do not introduce external information.\n"
    "- Provide the answer in the unit specified in the question (million, percentage, or billion). If no unit is "
    "specified, use the most appropriate unit based on the context and question.";

constexpr std::string_view kCriticPrompt =
    "You are a reflective AI agent tasked with critically analyzing financial analyses. Your job is to review a "
    "given context, question, and the response provided by another agent. Then, you must reflect on the analysis "
    "and provide a detailed critique.\n"
    "\n"
    "Your tasks are:\n"
    "- Carefully read the provided context, question, and response.\n"
    "- Analyze whether the question was correctly understood and addressed.\n"
    "- Verify if the correct numbers were extracted from tables and text in the context. Double-check these "
    "numbers against the original context.\n"
    "- Check the accuracy of the calculations in each step provided. Recalculate each step to ensure correctness.\n"
    "- Verify if the logic of the steps provided is sound and appropriate for answering the question.\n"
    "- Assess if the final answer calculation is correct. Perform the calculation independently to confirm.";

constexpr std::string_view kExtractionPrompt =
    "You are a meticulous financial analyst and critic. Your task is to review the response provided by another "
    "agent regarding financial calculations and provide feedback on its accuracy and completeness. Pay close "
    "attention to the following aspects:\n"
    "\n"
    "Review the given response for:\n"
    "- Question Comprehension: Does the response correctly understand the original question?\n"
    "- Data Extraction: Are all relevant numbers accurately extracted from the provided text/tables?\n"
    "\n"
    "Focus only on these two aspects. Do not evaluate calculations or provide additional analysis.";

constexpr std::string_view kCalculationPrompt =
    "You are a meticulous financial analyst and critic. Your task is to review the response provided by another "
    "agent regarding financial calculations and provide feedback on its accuracy and completeness. Pay close "
    "attention to the following aspects:\n"
    "- Calculation Steps: Confirm that all calculation steps are correct.\n"
    "- Calculation Accuracy: Verify the accuracy of all calculations, including intermediate and final results.\n"
    "- Unit Consistency: Ensure the final answer's unit matches what the question requires.";

constexpr std::string_view kRevisionInstruction =
    "Revise your previous answer using the feedback below. Correct any errors in your reasoning, data extraction "
    "and calculations, then give your complete revised answer.";

std::size_t index_of(AgentRole role) { return static_cast<std::size_t>(role); }

}  // namespace

std::string_view to_string(AgentRole role) {
    switch (role) {
    case AgentRole::Expert: return "expert";
    case AgentRole::CriticGeneral: return "critic";
    case AgentRole::CriticExtraction: return "critic_extraction";
    case AgentRole::CriticCalculation: return "critic_calculation";
    }
    return "expert";
}

std::optional<AgentRole> parse_agent_role(std::string_view text) {
    for (auto role : kAllAgentRoles) {
        if (to_string(role) == text) return role;
    }
    return std::nullopt;
}

std::string_view PromptRegistry::default_prompt(AgentRole role) {
    switch (role) {
    case AgentRole::Expert: return kExpertPrompt;
    case AgentRole::CriticGeneral: return kCriticPrompt;
    case AgentRole::CriticExtraction: return kExtractionPrompt;
    case AgentRole::CriticCalculation: return kCalculationPrompt;
    }
    return kExpertPrompt;
}

PromptRegistry::PromptRegistry(bool strict_paper_prompts) {
    for (auto role : kAllAgentRoles) {
        prompts_[index_of(role)] = std::string(default_prompt(role));
    }
    if (!strict_paper_prompts) {
        prompts_[index_of(AgentRole::Expert)] += "\n\n" + std::string(kAnswerMarkerInstruction);
    }
}

PromptRegistry PromptRegistry::load(const std::filesystem::path& path, bool strict_paper_prompts) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open prompt file " + path.string());
    }
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw std::runtime_error("prompt file " + path.string() + " is not a JSON object");
    }
    PromptRegistry registry(strict_paper_prompts);
    for (const auto& [key, value] : j.items()) {
        const auto role = parse_agent_role(key);
        if (!role) {
            throw std::runtime_error("prompt file names unknown role '" + key + "'");
        }
        if (!value.is_string() || value.get<std::string>().empty()) {
            throw std::runtime_error("prompt for role '" + key + "' must be a non-empty string");
        }
        registry.set_system_prompt(*role, value.get<std::string>());
    }
    return registry;
}

json PromptRegistry::to_json() const {
    json out = json::object();
    for (auto role : kAllAgentRoles) {
        out[std::string(to_string(role))] = prompts_[index_of(role)];
    }
    return out;
}

void PromptRegistry::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << to_json().dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("cannot write prompt file " + path.string());
    }
}

const std::string& PromptRegistry::system_prompt(AgentRole role) const { return prompts_[index_of(role)]; }

void PromptRegistry::set_system_prompt(AgentRole role, std::string prompt) {
    if (prompt.empty()) {
        throw std::invalid_argument("system prompt must not be empty");
    }
    prompts_[index_of(role)] = std::move(prompt);
}

std::string PromptRegistry::prompt_hash() const { return sha256_hex(to_json().dump()); }

std::string PromptRegistry::prompt_hash(AgentRole role) const { return sha256_hex(system_prompt(role)); }

AgentSpec PromptRegistry::agent(AgentRole role, std::string model, double temperature, int max_tokens) const {
    return AgentSpec{std::string(to_string(role)), role, system_prompt(role), std::move(model), temperature,
                     max_tokens};
}

std::string render_expert_query(std::string_view context_text, std::string_view question_text) {
    std::string out;
    out.reserve(context_text.size() + question_text.size() + 24);
    out += "CONTEXT:\n";
    out += context_text;
    out += "\n\nQUESTION:\n";
    out += question_text;
    return out;
}

std::string render_critic_query(std::string_view context_text, std::string_view question_text,
                                std::string_view expert_answer, std::optional<std::string_view> prior_feedback) {
    std::string out = render_expert_query(context_text, question_text);
    out += "\n\nRESPONSE-UNDER-REVIEW:\n";
    out += expert_answer;
    if (prior_feedback) {
        out += "\n\nPRIOR-FEEDBACK:\n";
        out += *prior_feedback;
    }
    return out;
}

std::string render_revision_query(std::span<const std::string> feedback_messages) {
    if (feedback_messages.empty()) {
        throw std::invalid_argument("revision needs at least one feedback message");
    }
    std::string out(kRevisionInstruction);
    for (std::size_t i = 0; i < feedback_messages.size(); ++i) {
        out += "\n\nFEEDBACK " + std::to_string(i + 1) + ":\n";
        out += feedback_messages[i];
    }
    return out;
}

}  // namespace reflectqa
