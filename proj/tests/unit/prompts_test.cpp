#include "reflectqa/prompts.hpp"

#include "support/fixtures.hpp"

#include <gtest/gtest.h>

using namespace reflectqa;
using reflectqa::testing::TempDir;

TEST(PromptRegistry, DefaultsCarryPublishedText) {
    const PromptRegistry registry;
    EXPECT_EQ(registry.system_prompt(AgentRole::Expert).rfind(
                  "You are a financial analysis agent specializing in interpreting earnings reports", 0),
              0u);
    EXPECT_NE(registry.system_prompt(AgentRole::CriticGeneral).find("You are a reflective AI agent"),
              std::string::npos);
    EXPECT_NE(registry.system_prompt(AgentRole::CriticExtraction)
                  .find("Are all relevant numbers accurately extracted from the provided text/tables?"),
              std::string::npos);
    EXPECT_NE(registry.system_prompt(AgentRole::CriticCalculation)
                  .find("Ensure the final answer's unit matches what the question requires."),
              std::string::npos);
    for (auto role : kAllAgentRoles) EXPECT_FALSE(registry.system_prompt(role).empty());
}

TEST(PromptRegistry, AnswerMarkerIsAppendedUnlessStrict) {
    const PromptRegistry relaxed;
    const PromptRegistry strict(true);
    const std::string expert = relaxed.system_prompt(AgentRole::Expert);
    const std::string suffix = "\n\n" + std::string(kAnswerMarkerInstruction);
    ASSERT_GT(expert.size(), suffix.size());
    EXPECT_EQ(expert.substr(expert.size() - suffix.size()), suffix);
    EXPECT_EQ(expert.substr(0, expert.size() - suffix.size()), PromptRegistry::default_prompt(AgentRole::Expert));
    EXPECT_EQ(strict.system_prompt(AgentRole::Expert), PromptRegistry::default_prompt(AgentRole::Expert));
    EXPECT_EQ(relaxed.system_prompt(AgentRole::CriticGeneral), strict.system_prompt(AgentRole::CriticGeneral));
    EXPECT_NE(relaxed.prompt_hash(), strict.prompt_hash());
}

TEST(PromptRegistry, OverrideRoundTrip) {
    TempDir dir;
    PromptRegistry registry;
    registry.set_system_prompt(AgentRole::CriticGeneral, "Be harsh.\nVery harsh.");
    registry.save(dir / "prompts.json");
    const auto reloaded = PromptRegistry::load(dir / "prompts.json");
    for (auto role : kAllAgentRoles) EXPECT_EQ(reloaded.system_prompt(role), registry.system_prompt(role));
    EXPECT_EQ(reloaded.prompt_hash(), registry.prompt_hash());
    EXPECT_NE(reloaded.prompt_hash(), PromptRegistry().prompt_hash());
}

TEST(PromptRegistry, PartialOverrideAndErrors) {
    TempDir dir;
    reflectqa::testing::write_text(dir / "p.json", R"({"critic_calculation": "Check the math."})");
    const auto registry = PromptRegistry::load(dir / "p.json");
    EXPECT_EQ(registry.system_prompt(AgentRole::CriticCalculation), "Check the math.");
    EXPECT_EQ(registry.system_prompt(AgentRole::CriticGeneral), PromptRegistry().system_prompt(AgentRole::CriticGeneral));

    reflectqa::testing::write_text(dir / "bad.json", R"({"auditor": "x"})");
    EXPECT_THROW(PromptRegistry::load(dir / "bad.json"), std::runtime_error);
    reflectqa::testing::write_text(dir / "empty.json", R"({"expert": ""})");
    EXPECT_THROW(PromptRegistry::load(dir / "empty.json"), std::runtime_error);
}

TEST(PromptRegistry, AgentSpecDefaults) {
    const auto spec = PromptRegistry().agent(AgentRole::CriticExtraction, "llama3-8b");
    EXPECT_EQ(spec.name, "critic_extraction");
    EXPECT_EQ(spec.temperature, 0.1);
    EXPECT_EQ(spec.max_tokens, 1024);
    EXPECT_EQ(parse_agent_role("critic_calculation"), AgentRole::CriticCalculation);
    EXPECT_FALSE(parse_agent_role("judge"));
}

TEST(RenderExpertQuery, ContextBeforeQuestion) {
    const auto text = render_expert_query("ctx", "q");
    EXPECT_LT(text.find("ctx"), text.find("QUESTION:"));
    EXPECT_EQ(text, "CONTEXT:\nctx\n\nQUESTION:\nq");
    EXPECT_EQ(render_expert_query("ctx", "q"), text);
    EXPECT_NE(render_expert_query("", "q").find("QUESTION:\nq"), std::string::npos);
}

TEST(RenderCriticQuery, Sections) {
    const std::string answer = "Step 1: 5 - 3 = 2\nFinal Answer: 2";
    const auto plain = render_critic_query("ctx", "q", answer);
    EXPECT_EQ(plain.find("PRIOR-FEEDBACK"), std::string::npos);
    EXPECT_NE(plain.find(answer), std::string::npos);
    EXPECT_LT(plain.find("QUESTION:"), plain.find("RESPONSE-UNDER-REVIEW:"));

    const auto with_prior = render_critic_query("ctx", "q", answer, std::string_view("f"));
    EXPECT_GT(with_prior.rfind("f"), with_prior.find("RESPONSE-UNDER-REVIEW:"));
    EXPECT_NE(with_prior.find("PRIOR-FEEDBACK:\nf"), std::string::npos);
}

TEST(RenderRevisionQuery, NumberedFeedbackInOrder) {
    const std::vector<std::string> one{"R"};
    const auto a = render_revision_query(one);
    EXPECT_NE(a.find("FEEDBACK 1:\nR"), std::string::npos);
    EXPECT_EQ(a.find("FEEDBACK 2:"), std::string::npos);

    const std::vector<std::string> two{"first critique", "second critique"};
    const auto b = render_revision_query(two);
    EXPECT_LT(b.find("first critique"), b.find("second critique"));
    EXPECT_LT(b.find("FEEDBACK 1:"), b.find("FEEDBACK 2:"));

    EXPECT_THROW(render_revision_query(std::vector<std::string>{}), std::invalid_argument);
}
